"""Action scaling, observations, rewards, and episode mechanics."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ampsizer.env import (
    LOCAL_FEATURES,
    EnvConfig,
    SizingEnv,
    _Diag,
    normalize_params,
    scale_action,
)
from ampsizer.netlist import ParamDef, parse_netlist
from ampsizer.simulator import SimConfig, SimResult
from tests.conftest import DIVIDER_NETLIST, divider_env, divider_spec

PARAMS = (
    ParamDef("w", 1e-6, 100e-6, "linear"),
    ParamDef("r", 100.0, 10e3, "log"),
)


# -- scale_action / normalize_params -----------------------------------------


def test_scale_action_midpoint():
    x = scale_action([0.0, 0.0], PARAMS)
    assert x[0] == pytest.approx(50.5e-6, rel=1e-12)
    assert x[1] == pytest.approx(1000.0, rel=1e-12)


def test_scale_action_endpoints_exact():
    lo = scale_action([-1.0, -1.0], PARAMS)
    hi = scale_action([1.0, 1.0], PARAMS)
    assert lo[0] == PARAMS[0].pmin and lo[1] == PARAMS[1].pmin
    assert hi[0] == PARAMS[0].pmax and hi[1] == PARAMS[1].pmax


def test_scale_action_clamps_and_counts():
    diag = _Diag()
    x = scale_action([-1.5, 2.0], PARAMS, diag)
    assert diag.clamped == 2
    assert x[0] == PARAMS[0].pmin
    assert x[1] == PARAMS[1].pmax
    scale_action([0.0, 0.0], PARAMS, diag)
    assert diag.clamped == 2
    scale_action([1.0 + 1e-12, 0.0], PARAMS, diag)
    assert diag.clamped == 3


def test_scale_action_shape_check():
    with pytest.raises(ValueError, match="shape"):
        scale_action([0.0], PARAMS)


def test_scale_action_stays_in_box():
    rng = np.random.default_rng(5)
    for _ in range(200):
        x = scale_action(rng.uniform(-1.3, 1.3, 2), PARAMS)
        for xi, p in zip(x, PARAMS):
            assert p.pmin <= xi <= p.pmax


@given(
    a=st.floats(min_value=-1.0, max_value=1.0),
    b=st.floats(min_value=-1.0, max_value=1.0),
)
@settings(deadline=None, max_examples=200)
def test_normalize_inverts_scale(a, b):
    x = scale_action([a, b], PARAMS)
    u = normalize_params(x, PARAMS)
    assert u[0] == pytest.approx((a + 1) / 2, abs=1e-9)
    assert u[1] == pytest.approx((b + 1) / 2, abs=1e-9)
    assert np.all(u >= 0.0) and np.all(u <= 1.0)


# -- construction --------------------------------------------------------------


def test_env_dimensions_and_sequence():
    env = divider_env()
    assert env.n_params == 1
    assert env.n_local_rows == 0
    # 2 nodes + supply current + 2*16 AC features + 5-step one-hot
    assert env.global_dim == 2 + 1 + 32 + 5
    assert env.supply_voltage == 1.8
    assert [s.name for s in env.sequence] == ["R2"]
    assert env.sequence[0].param_indices == (0,)
    assert env.sequence[0].local_row == -1
    assert len(env.obs_frequencies) == 16
    assert env.obs_frequencies[0] == env.sim.frequencies[0]
    assert env.obs_frequencies[-1] == env.sim.frequencies[-1]


def test_tia2_env_structure(tia2_env_session):
    env = tia2_env_session
    assert env.n_params == 7
    assert env.n_local_rows == 2
    mos_slots = [s for s in env.sequence if s.local_row >= 0]
    assert [s.local_row for s in mos_slots] == [0, 1]
    covered = sorted(i for s in env.sequence for i in s.param_indices)
    assert covered == list(range(7))
    assert env.global_dim == len(env.sim.nodes) + 1 + 32 + 5


def test_env_config_validation():
    with pytest.raises(ValueError, match="steps_per_episode"):
        EnvConfig(steps_per_episode=0)
    with pytest.raises(ValueError, match="ac_feature_count"):
        EnvConfig(ac_feature_count=0)
    netlist = parse_netlist(DIVIDER_NETLIST)
    sim_config = SimConfig(ac_input="VDD", ac_output="MID")
    with pytest.raises(ValueError, match="exceeds"):
        SizingEnv(netlist, divider_spec(), sim_config, EnvConfig(ac_feature_count=500))
    dense = SizingEnv(netlist, divider_spec(), sim_config, EnvConfig(ac_feature_count=221))
    assert np.array_equal(dense.obs_frequencies, dense.sim.frequencies)


def test_env_requires_parameters():
    netlist = parse_netlist("VDD VDD 0 1.8\nR1 VDD MID 1k\nR2 MID 0 1k\n")
    with pytest.raises(ValueError, match="no search parameters"):
        SizingEnv(netlist, divider_spec(), SimConfig(ac_input="VDD", ac_output="MID"))


def test_env_rejects_unreachable_parameter():
    text = (
        "VDD VDD 0 1.8\nR1 VDD MID {r}\nR2 MID 0 1k\n"
        ".param r 100 10k log\n.param dead 1 2 linear\n.order R1\n"
    )
    with pytest.raises(ValueError, match="not reachable.*dead"):
        SizingEnv(
            parse_netlist(text), divider_spec(), SimConfig(ac_input="VDD", ac_output="MID")
        )


def test_supply_voltage_override():
    netlist = parse_netlist(DIVIDER_NETLIST)
    env = SizingEnv(
        netlist, divider_spec(), SimConfig(ac_input="VDD", ac_output="MID"),
        EnvConfig(supply_voltage=3.6),
    )
    assert env.supply_voltage == 3.6


# -- observations ---------------------------------------------------------------


def test_reset_returns_zero_observation():
    env = divider_env()
    obs = env.reset()
    assert obs.global_vec.shape == (env.global_dim,)
    assert obs.local_mat.shape == (0, len(LOCAL_FEATURES))
    assert not obs.flat().any()
    again = env.reset()
    assert not again.flat().any()


def test_observation_features_at_midpoint():
    env = divider_env()
    env.reset()
    obs, reward, done = env.step([0.0])
    g = obs.global_vec
    node = {name: i for i, name in enumerate(env.sim.nodes)}
    assert g[node["VDD"]] == pytest.approx(1.0, rel=1e-9)
    assert g[node["MID"]] == pytest.approx(0.5, rel=1e-9)
    assert g[2] == pytest.approx(0.9, rel=1e-9)  # 0.9 mA over the 1 mA scale
    logmag = g[3:19]
    phase = g[19:35]
    assert np.allclose(logmag, math.log10(0.5) / 6.0, atol=1e-9)
    assert np.allclose(phase, 0.0, atol=1e-9)
    one_hot = g[35:40]
    assert list(one_hot) == [1.0, 0.0, 0.0, 0.0, 0.0]
    assert not done


def test_observation_logmag_scaling():
    env = divider_env()
    n = len(env.sim.frequencies)
    result = SimResult(
        node_voltages={"VDD": 1.8, "MID": 0.9},
        supply_current=9e-4,
        transistor_ops=(),
        ac_freqs=env.sim.frequencies,
        ac_response=np.full(n, 1e6 + 0j),
        metrics=None,
    )
    obs = env.observe(result, step_index=2)
    g = obs.global_vec
    assert np.allclose(g[3:19], 1.0, atol=1e-12)  # log10(1e6)/6
    assert list(g[35:40]) == [0.0, 0.0, 1.0, 0.0, 0.0]


def test_observe_rejects_bad_step_index():
    env = divider_env()
    result = env.evaluate([0.0]).result
    with pytest.raises(ValueError, match="step_index"):
        env.observe(result, -1)
    with pytest.raises(ValueError, match="step_index"):
        env.observe(result, 5)


def test_failed_simulation_observes_as_zeros():
    text = (
        "VDD VDD 0 1.8\nR1 VDD MID {r}\nR2 MID 0 1k\nC1 MID FLOAT 1n\n"
        ".param r 100 10k log\n.order R1\n"
    )
    env = SizingEnv(
        parse_netlist(text), divider_spec(), SimConfig(ac_input="VDD", ac_output="MID")
    )
    floor = env.spec.reward.failure_floor
    env.reset()
    obs, r1, done = env.step([0.0])
    assert env.log[-1].result.failure.startswith("dc_singular")
    assert r1 == floor
    g = obs.global_vec
    assert list(g[-5:]) == [1.0, 0.0, 0.0, 0.0, 0.0]
    assert not g[:-5].any()
    obs, r2, done = env.step([0.3])
    assert r2 == 0.0
    assert env.best_d == floor
    assert env.log[-1].q == {}


# -- rewards and episodes ----------------------------------------------------------


def test_reward_is_score_delta():
    env = divider_env()
    env.reset()
    _, r1, _ = env.step([0.0])
    # R2 = 1k: satisfied regime, d = (5e-3) / (1.8 * 0.9e-3)
    d1 = 5e-3 / 1.62e-3
    assert r1 == pytest.approx(d1, rel=1e-9)
    _, r2, _ = env.step([0.0])
    assert r2 == 0.0
    _, r3, _ = env.step([-1.0])
    rec = env.log[-1]
    assert r3 == pytest.approx(rec.d - d1, rel=1e-9)
    assert rec.d < 0  # R2 = 100 violates the gain constraint


def test_rewards_telescope_to_final_score(rng):
    env = divider_env()
    for _ in range(3):
        env.reset()
        total = 0.0
        done = False
        while not done:
            _, reward, done = env.step(rng.uniform(-1, 1, 1))
        total = sum(row.reward for row in env.log[-5:])
        assert total == pytest.approx(env.log[-1].d, abs=1e-12)


def test_episode_bookkeeping():
    env = divider_env(steps_per_episode=3)
    assert env.steps_per_episode == 3
    env.reset()
    flags = []
    for _ in range(3):
        _, _, done = env.step([0.0])
        flags.append(done)
    assert flags == [False, False, True]
    with pytest.raises(RuntimeError, match="step called"):
        env.step([0.0])
    rows = env.log
    assert [row.step_global for row in rows] == [0, 1, 2]
    assert [row.step_in_episode for row in rows] == [0, 1, 2]
    assert {row.episode for row in rows} == {0}
    env.reset()
    env.step([0.0])
    assert env.log[-1].episode == 1
    assert env.log[-1].step_global == 3


def test_step_before_reset_raises():
    env = divider_env()
    with pytest.raises(RuntimeError, match="reset"):
        env.step([0.0])


def test_reward_baseline_resets_each_episode():
    env = divider_env(steps_per_episode=1)
    env.reset()
    _, r_first, _ = env.step([0.0])
    env.reset()
    _, r_second, _ = env.step([0.0])
    assert r_first == r_second  # d_0 = 0 at every reset


def test_evaluate_is_side_effect_free_for_episodes():
    env = divider_env()
    rec = env.evaluate([0.0])
    assert rec.x[0] == pytest.approx(1000.0, rel=1e-12)
    assert rec.satisfied
    assert rec.d == pytest.approx(5e-3 / 1.62e-3, rel=1e-9)
    assert rec.q["gain"] == pytest.approx(0.5 / 0.4, rel=1e-9)
    assert env.log == []  # evaluate does not log; log_record does
    env.reset()
    env.step([0.0])
    assert len(env.log) == 1


def test_evaluate_counts_clamped_actions():
    env = divider_env()
    before = env.diagnostics.clamped
    env.evaluate([1.7])
    assert env.diagnostics.clamped == before + 1
    assert env.evaluate([1.7]).x[0] == 10e3


def test_best_d_tracks_running_maximum(rng):
    env = divider_env()
    env.reset()
    best = -np.inf
    for _ in range(5):
        env.step(rng.uniform(-1, 1, 1))
        best = max(best, env.log[-1].d)
        assert env.best_d == best
