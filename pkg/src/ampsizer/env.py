"""Multi-step sizing environment.

Each episode is a short refinement chain: the agent repeatedly emits a
full normalized parameter vector, the circuit is simulated, and the
reward is the change of the design score, r_i = d_i - d_{i-1} with
d_0 = 0 at reset.  Summed over an episode the rewards telescope to the
final score, so maximizing return = maximizing the end-of-episode design
quality while the per-step differences give dense feedback.

Observations concatenate a global block (DC node voltages, supply
current, AC log-magnitude and phase at F sampled sweep frequencies, and a
one-hot step counter) with one 8-feature row per transistor, ordered by
the netlist ``.order`` directive.  All features are divided by fixed
per-family scale constants.  Failed simulations observe as zeros (one-hot
still set) and score the configured failure floor.

:meth:`SizingEnv.evaluate` is the bare objective (normalized action in,
scored record out, one log row per call); the baseline optimizers consume
exactly this method, so every optimizer sees the identical objective and
produces the identical trace schema.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .design_spec import DesignSpec, q_values, score
from .netlist import Netlist, ParamDef
from .simulator import SimConfig, SimResult, Simulator

__all__ = [
    "LOCAL_FEATURES",
    "LOCAL_FEATURE_SCALES",
    "EnvConfig",
    "Observation",
    "Action",
    "SequenceSlot",
    "TraceRow",
    "EvalRecord",
    "SizingEnv",
    "scale_action",
    "normalize_params",
]

LOCAL_FEATURES = ("vth", "gm", "vdsat", "id", "gds", "cgs", "cgd", "gamma_eff")

LOCAL_FEATURE_SCALES: dict[str, float] = {
    "vth": 1.0,
    "gm": 1e-2,
    "vdsat": 1.0,
    "id": 1e-2,
    "gds": 1e-2,
    "cgs": 1e-12,
    "cgd": 1e-12,
    "gamma_eff": 1.0,
}

_LOGMAG_EPS = 1e-18
_OBS_TRIPWIRE = 100.0


@dataclass(frozen=True)
class EnvConfig:
    """Episode shape and observation normalization constants."""

    steps_per_episode: int = 5
    ac_feature_count: int = 16
    current_scale: float = 1e-3
    logmag_scale: float = 6.0
    local_scales: Mapping[str, float] = field(
        default_factory=lambda: dict(LOCAL_FEATURE_SCALES)
    )
    supply_voltage: Optional[float] = None  # None: largest DC voltage source
    seed: int = 0

    def __post_init__(self):
        if self.steps_per_episode < 1:
            raise ValueError("steps_per_episode must be >= 1")
        if self.ac_feature_count < 1:
            raise ValueError("ac_feature_count must be >= 1")


@dataclass(frozen=True)
class Observation:
    """Global feature vector plus one local feature row per transistor."""

    global_vec: np.ndarray
    local_mat: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.global_vec, self.local_mat.ravel()])


@dataclass(frozen=True)
class Action:
    """A normalized action and its scaled SI-unit parameter vector."""

    normalized: np.ndarray
    scaled: np.ndarray


@dataclass(frozen=True)
class SequenceSlot:
    """One position of the component sequence the actor decodes over."""

    name: str
    kind: str
    local_row: int  # row into Observation.local_mat, or -1 for passives
    param_indices: tuple[int, ...]


@dataclass(frozen=True)
class EvalRecord:
    """One objective evaluation: parameters, simulation, and score."""

    x: np.ndarray
    result: SimResult
    q: dict[str, float]
    d: float
    satisfied: bool


@dataclass(frozen=True)
class TraceRow:
    """One run-log row (one simulate call)."""

    step_global: int
    episode: int
    step_in_episode: int
    x: np.ndarray
    result: SimResult
    q: dict[str, float]
    d: float
    reward: float
    satisfied: bool


class _Diag:
    __slots__ = ("clamped",)

    def __init__(self):
        self.clamped = 0


def scale_action(
    a_bar: Sequence[float],
    params: Sequence[ParamDef],
    diagnostics: Optional[_Diag] = None,
) -> np.ndarray:
    """Map a normalized action in [-1,1]^n into the parameter box.

    Linear parameters interpolate linearly, logarithmic ones geometrically.
    Components outside [-1,1] are clamped (and counted on ``diagnostics``
    when given) rather than rejected, because exploration noise may land
    exactly on or marginally past the bounds.
    """
    a = np.asarray(a_bar, dtype=float)
    if a.shape != (len(params),):
        raise ValueError(f"action has shape {a.shape}, expected ({len(params)},)")
    if diagnostics is not None:
        diagnostics.clamped += int(np.count_nonzero((a < -1.0) | (a > 1.0)))
    u = (np.clip(a, -1.0, 1.0) + 1.0) / 2.0
    out = np.empty(len(params))
    for j, p in enumerate(params):
        if p.scale == "log":
            out[j] = p.pmin * (p.pmax / p.pmin) ** u[j]
        else:
            out[j] = p.pmin + u[j] * (p.pmax - p.pmin)
        # guard against last-ulp excursions so resolve stays strict
        out[j] = min(max(out[j], p.pmin), p.pmax)
    return out


def normalize_params(
    x: Sequence[float], params: Sequence[ParamDef]
) -> np.ndarray:
    """Inverse of :func:`scale_action` onto [0,1]^n (unit cube, not [-1,1])."""
    x = np.asarray(x, dtype=float)
    u = np.empty(len(params))
    for j, p in enumerate(params):
        if p.scale == "log":
            u[j] = np.log(x[j] / p.pmin) / np.log(p.pmax / p.pmin)
        else:
            u[j] = (x[j] - p.pmin) / (p.pmax - p.pmin)
    return np.clip(u, 0.0, 1.0)


class SizingEnv:
    """T-step episodic environment over one netlist and one DesignSpec."""

    def __init__(
        self,
        netlist: Netlist,
        spec: DesignSpec,
        sim_config: SimConfig,
        env_config: EnvConfig = EnvConfig(),
    ):
        spec.validate_keys()
        self.netlist = netlist
        self.spec = spec
        self.config = env_config
        self.sim = Simulator(netlist, sim_config)
        self.params = netlist.params
        self.n_params = len(self.params)
        if self.n_params == 0:
            raise ValueError("netlist declares no search parameters")

        freqs = self.sim.frequencies
        n_f = self.config.ac_feature_count
        if n_f > len(freqs):
            raise ValueError(
                f"ac_feature_count {n_f} exceeds the {len(freqs)}-point sweep"
            )
        idx = np.round(np.linspace(0, len(freqs) - 1, n_f)).astype(int)
        if len(np.unique(idx)) != n_f:
            raise ValueError("ac_feature_count too dense for the sweep grid")
        self._ac_idx = idx
        self.obs_frequencies = freqs[idx]

        self.supply_voltage = self._derive_supply()
        self.sequence = self._build_sequence()
        self.n_local_rows = sum(1 for s in self.sequence if s.local_row >= 0)
        self._op_row = {
            s.name: s.local_row for s in self.sequence if s.local_row >= 0
        }
        self._local_scale_vec = np.array(
            [self.config.local_scales[f] for f in LOCAL_FEATURES]
        )
        self.global_dim = (
            len(self.sim.nodes) + 1 + 2 * n_f + self.config.steps_per_episode
        )

        self.log: list[TraceRow] = []
        self.diagnostics = _Diag()
        self.best_d = -np.inf
        self._step_global = 0
        self._episode = -1
        self._step_index = 0
        self._d_prev = 0.0
        self._episode_open = False

    # -- construction helpers ---------------------------------------------

    def _derive_supply(self) -> float:
        if self.config.supply_voltage is not None:
            return self.config.supply_voltage
        best = 0.0
        for el in self.netlist.elements:
            if el.kind == "vsource" and isinstance(el.values[0], float):
                best = max(best, abs(el.values[0]))
        return best if best > 0 else 1.0

    def _build_sequence(self) -> tuple[SequenceSlot, ...]:
        param_index = {p.name: i for i, p in enumerate(self.params)}
        order = list(self.netlist.signal_order)
        # transistors outside .order still need observation rows
        ordered_names = set(order)
        for el in self.netlist.elements:
            if el.is_mos() and el.name not in ordered_names:
                order.append(el.name)
        slots = []
        assigned: set[str] = set()
        local_row = 0
        for name in order:
            el = self.netlist.element(name)
            indices = []
            for ref in el.placeholders():
                if ref not in assigned:  # shared params belong to first owner
                    assigned.add(ref)
                    indices.append(param_index[ref])
            row = -1
            if el.is_mos():
                row = local_row
                local_row += 1
            slots.append(
                SequenceSlot(
                    name=el.name,
                    kind=el.kind,
                    local_row=row,
                    param_indices=tuple(indices),
                )
            )
        covered = {i for s in slots for i in s.param_indices}
        if covered != set(range(self.n_params)):
            missing = [p.name for i, p in enumerate(self.params) if i not in covered]
            raise ValueError(f"parameters not reachable from .order sequence: {missing}")
        return tuple(slots)

    # -- observations -------------------------------------------------------

    def zero_observation(self) -> Observation:
        return Observation(
            global_vec=np.zeros(self.global_dim),
            local_mat=np.zeros((self.n_local_rows, len(LOCAL_FEATURES))),
        )

    def observe(self, sim_result: SimResult, step_index: int) -> Observation:
        """Build the normalized observation after the step_index-th action."""
        t = self.config.steps_per_episode
        if not 0 <= step_index < t:
            raise ValueError(f"step_index {step_index} outside [0, {t})")
        obs = self.zero_observation()
        g = obs.global_vec
        one_hot_base = self.global_dim - t
        g[one_hot_base + step_index] = 1.0
        if not sim_result.ok:
            return obs
        n_nodes = len(self.sim.nodes)
        for i, node in enumerate(self.sim.nodes):
            g[i] = sim_result.node_voltages[node] / self.supply_voltage
        g[n_nodes] = sim_result.supply_current / self.config.current_scale
        h = sim_result.ac_response[self._ac_idx]
        n_f = self.config.ac_feature_count
        g[n_nodes + 1 : n_nodes + 1 + n_f] = (
            np.log10(np.abs(h) + _LOGMAG_EPS) / self.config.logmag_scale
        )
        g[n_nodes + 1 + n_f : n_nodes + 1 + 2 * n_f] = np.angle(h) / np.pi
        by_name = {op.name: op for op in sim_result.transistor_ops}
        for name, row in self._op_row.items():
            obs.local_mat[row, :] = np.array(by_name[name].features()) / self._local_scale_vec
        flat = obs.flat()
        assert np.all(np.isfinite(flat)) and np.max(np.abs(flat)) <= _OBS_TRIPWIRE, (
            "observation outside the documented range"
        )
        return obs

    # -- objective ----------------------------------------------------------

    def evaluate(self, a_bar: Sequence[float]) -> EvalRecord:
        """Score one normalized action outside episode mechanics."""
        x = scale_action(a_bar, self.params, self.diagnostics)
        result = self.sim.simulate(x)
        d, satisfied = score(self.spec, result.metrics)
        q = q_values(self.spec, result.metrics) if result.metrics is not None else {}
        return EvalRecord(x=x, result=result, q=q, d=d, satisfied=satisfied)

    def log_record(
        self, rec: EvalRecord, episode: int, step_in_episode: int, reward: float
    ) -> TraceRow:
        row = TraceRow(
            step_global=self._step_global,
            episode=episode,
            step_in_episode=step_in_episode,
            x=rec.x,
            result=rec.result,
            q=rec.q,
            d=rec.d,
            reward=reward,
            satisfied=rec.satisfied,
        )
        self.log.append(row)
        self._step_global += 1
        if rec.d > self.best_d:
            self.best_d = rec.d
        return row

    # -- episode interface ----------------------------------------------------

    @property
    def steps_per_episode(self) -> int:
        return self.config.steps_per_episode

    def reset(self) -> Observation:
        self._episode += 1
        self._step_index = 0
        self._d_prev = 0.0
        self._episode_open = True
        return self.zero_observation()

    def step(self, a_bar: Sequence[float]) -> tuple[Observation, float, bool]:
        if not self._episode_open:
            raise RuntimeError("step called before reset or after the episode ended")
        rec = self.evaluate(a_bar)
        reward = rec.d - self._d_prev
        self._d_prev = rec.d
        obs = self.observe(rec.result, self._step_index)
        self.log_record(rec, self._episode, self._step_index, reward)
        self._step_index += 1
        done = self._step_index == self.config.steps_per_episode
        if done:
            self._episode_open = False
        return obs, reward, done
