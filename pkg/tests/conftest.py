"""Shared fixtures and builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from ampsizer.design_spec import (
    AT_LEAST,
    AT_MOST,
    HARD,
    TARGET,
    DesignSpec,
    SpecItem,
)
from ampsizer.env import EnvConfig, SizingEnv
from ampsizer.netlist import parse_netlist
from ampsizer.simulator import METRIC_KEYS, MetricSet, SimConfig

# a 1.8 V divider whose lower leg is the single search parameter; the log
# box midpoint (a_bar = 0) lands exactly on 1 kOhm, giving MID = 0.9 V
DIVIDER_NETLIST = """\
* resistive divider with one searchable leg
VDD VDD 0 1.8
R1 VDD MID 1k
R2 MID 0 {R2}
.param R2 100 10k log
.order R2
.end
"""

DEFAULT_METRICS = {
    "gain": 2e4,
    "gain_db_ohm": 86.02059991327963,
    "bandwidth": 1e8,
    "peaking": 0.2,
    "power": 2e-3,
    "gate_area": 5e-11,
    "input_noise_density": 1e-12,
}


def make_metrics(**overrides) -> MetricSet:
    fields = dict(DEFAULT_METRICS)
    fields.update(overrides)
    return MetricSet(**fields)


def divider_spec() -> DesignSpec:
    return DesignSpec(
        items=(
            SpecItem("gain", 0.4, AT_LEAST, HARD),
            SpecItem("power", 5e-3, AT_MOST, TARGET),
        )
    )


def divider_env(steps_per_episode: int = 5, **spec_kwargs) -> SizingEnv:
    netlist = parse_netlist(DIVIDER_NETLIST)
    spec = spec_kwargs.pop("spec", None) or divider_spec()
    sim_config = SimConfig(ac_input="VDD", ac_output="MID")
    return SizingEnv(
        netlist, spec, sim_config, EnvConfig(steps_per_episode=steps_per_episode)
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tia2_env_session():
    from ampsizer.benchmarks import get_benchmark

    return get_benchmark("tia2").build_env()


def metric_keys():
    return METRIC_KEYS
