"""Circuit evaluation: DC operating point, AC sweep, noise, and metrics.

Modified nodal analysis over the netlist dialect of :mod:`ampsizer.netlist`:
node voltages plus one branch-current unknown per voltage source.  MOS
devices follow the level-1 square-law model

* saturation: I_D = 1/2 k' (W/L) (V_gs - V_th)^2 (1 + lambda V_ds)
* triode:     I_D = k' (W/L) ((V_gs - V_th) V_ds - V_ds^2 / 2)
* cutoff:     I_D = 0

with lambda = lambda_per_um / (L in um), cgs = (2/3) W L cox and
cgd = 0.1 W L cox.

The numerical kernels live in :mod:`ampsizer._core` (compiled extension
with NumPy fallback).  :class:`Simulator` caches the packed circuit
structure so repeated evaluation at different parameter vectors only
refills value arrays.

:func:`simulate` never raises on x-dependent numeric trouble; failed
stages are embedded as a failure marker in the result so optimization
loops stay total.  The standalone stage functions (:func:`dc_solve` and
friends) do raise, which is what direct callers want.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from ._core import backend as _backend
from .netlist import Element, Netlist, ResolvedCircuit, resolve

__all__ = [
    "BOLTZMANN",
    "DeviceModel",
    "SimConfig",
    "TransistorOpPoint",
    "MetricSet",
    "DcResult",
    "SimResult",
    "SimulationError",
    "Simulator",
    "default_models",
    "dc_solve",
    "ac_solve",
    "noise_analysis",
    "extract_metrics",
    "simulate",
    "METRIC_KEYS",
]

BOLTZMANN = 1.380649e-23


class SimulationError(RuntimeError):
    """A simulation stage failed; ``marker`` is a short machine-usable tag."""

    def __init__(self, marker: str):
        self.marker = marker
        super().__init__(marker)


@dataclass(frozen=True)
class DeviceModel:
    """Square-law model constants for one device polarity."""

    vth0: float = 0.4
    kprime: float = 200e-6
    lambda_per_um: float = 0.1
    cox: float = 5e-3
    gamma_noise: float = 2.0 / 3.0
    temperature: float = 300.0

    def __post_init__(self):
        for name in ("vth0", "kprime", "lambda_per_um", "cox", "gamma_noise", "temperature"):
            if not getattr(self, name) > 0:
                if name == "lambda_per_um" and self.lambda_per_um == 0.0:
                    continue  # lambda = 0 is the textbook idealization
                raise ValueError(f"DeviceModel.{name} must be positive")


def default_models() -> dict[str, DeviceModel]:
    return {"nmos": DeviceModel(kprime=200e-6), "pmos": DeviceModel(kprime=80e-6)}


ModelArg = Union[DeviceModel, Mapping[str, DeviceModel]]


def _as_models(model: ModelArg) -> dict[str, DeviceModel]:
    if isinstance(model, DeviceModel):
        return {"nmos": model, "pmos": model}
    return dict(model)


@dataclass(frozen=True)
class SimConfig:
    """Sweep, designation, and solver settings for one circuit."""

    f_start: float = 1.0
    f_stop: float = 1e11
    points_per_decade: int = 20
    noise_freq: float | None = None
    ac_input: str | None = None
    ac_output: str | None = None
    models: Mapping[str, DeviceModel] = field(default_factory=default_models)
    newton_tol: float = 1e-9
    newton_max_iter: int = 200
    gmin: float = 1e-12
    source_steps: int = 10

    def frequencies(self) -> np.ndarray:
        """Logarithmic sweep grid including both endpoints."""
        decades = math.log10(self.f_stop / self.f_start)
        n = max(2, int(round(decades * self.points_per_decade)) + 1)
        return np.geomspace(self.f_start, self.f_stop, n)

    def noise_frequency(self) -> float:
        if self.noise_freq is not None:
            return self.noise_freq
        return math.sqrt(self.f_start * self.f_stop)

    def ambient_temperature(self) -> float:
        """Temperature used for resistor thermal noise."""
        models = dict(self.models)
        if "nmos" in models:
            return models["nmos"].temperature
        if models:
            return next(iter(models.values())).temperature
        return 300.0


@dataclass(frozen=True)
class TransistorOpPoint:
    """Operating-point features of one MOS device.

    ``id``, ``gm`` and ``gds`` are channel magnitudes (>= 0 regardless of
    device polarity); ``vdsat`` is the overdrive V_gs - V_th and may be
    negative in cutoff.
    """

    name: str
    vth: float
    gm: float
    vdsat: float
    id: float
    gds: float
    cgs: float
    cgd: float
    gamma_eff: float

    def features(self) -> tuple[float, ...]:
        return (self.vth, self.gm, self.vdsat, self.id, self.gds, self.cgs, self.cgd, self.gamma_eff)


METRIC_KEYS = (
    "gain",
    "gain_db_ohm",
    "bandwidth",
    "peaking",
    "power",
    "gate_area",
    "input_noise_density",
)


@dataclass(frozen=True)
class MetricSet:
    """Performance metrics of one sized circuit (SI units)."""

    gain: float
    gain_db_ohm: float
    bandwidth: float
    peaking: float
    power: float
    gate_area: float
    input_noise_density: float
    bandwidth_out_of_range: bool = False

    def __post_init__(self):
        for key in METRIC_KEYS:
            if not math.isfinite(getattr(self, key)):
                raise ValueError(f"non-finite metric {key}")

    def value(self, key: str) -> float:
        if key not in METRIC_KEYS:
            raise KeyError(f"unknown metric {key!r}; known: {METRIC_KEYS}")
        return getattr(self, key)

    def as_dict(self) -> dict[str, float]:
        return {key: getattr(self, key) for key in METRIC_KEYS}


@dataclass(frozen=True)
class DcResult:
    """DC solution: per-node voltages plus per-source branch bookkeeping."""

    node_voltages: dict[str, float]
    supply_current: float
    transistor_ops: tuple[TransistorOpPoint, ...]
    power: float
    source_currents: dict[str, float]
    v_unknowns: np.ndarray


@dataclass(frozen=True)
class SimResult:
    """Everything one simulate call produced.

    ``failure`` is None on success; otherwise a short marker naming the
    failed stage (and ``metrics`` is None).
    """

    node_voltages: dict[str, float]
    supply_current: float
    transistor_ops: tuple[TransistorOpPoint, ...]
    ac_freqs: np.ndarray
    ac_response: np.ndarray
    metrics: MetricSet | None
    failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.failure is None


def _empty_result(failure: str) -> SimResult:
    return SimResult(
        node_voltages={},
        supply_current=0.0,
        transistor_ops=(),
        ac_freqs=np.empty(0),
        ac_response=np.empty(0, dtype=complex),
        metrics=None,
        failure=failure,
    )


class _Packed:
    """Flat element arrays for the kernels, filled for one parameter vector."""

    __slots__ = (
        "res_a", "res_b", "res_r", "res_g",
        "cap_a", "cap_b", "cap_c",
        "isrc_a", "isrc_b", "isrc_val",
        "vsrc_a", "vsrc_b", "vsrc_val",
        "mos_d", "mos_g", "mos_s",
        "mos_beta", "mos_vth", "mos_lam", "mos_sign",
        "mos_w", "mos_l", "mos_cgs", "mos_cgd", "mos_gamma",
    )


class Simulator:
    """Reusable evaluator for one netlist under one :class:`SimConfig`.

    Building the instance validates structure (node indices, AC
    designations, model availability); :meth:`simulate` then only fills
    value arrays and runs the solver stages.
    """

    def __init__(self, netlist: Union[Netlist, ResolvedCircuit], config: SimConfig):
        self.config = config
        self.netlist = netlist
        if isinstance(netlist, Netlist):
            self.params = netlist.params
        else:
            self.params = ()
        self.nodes = tuple(netlist.nodes)
        self._node_index = {name: i for i, name in enumerate(self.nodes)}
        self.models = _as_models(config.models)

        res, caps, isrcs, vsrcs, moses = [], [], [], [], []
        for el in netlist.elements:
            if el.kind == "resistor":
                res.append(el)
            elif el.kind == "capacitor":
                caps.append(el)
            elif el.kind == "isource":
                isrcs.append(el)
            elif el.kind == "vsource":
                vsrcs.append(el)
            elif el.is_mos():
                if el.kind not in self.models:
                    raise ValueError(
                        f"no device model for {el.kind!r}; configured: {sorted(self.models)}"
                    )
                moses.append(el)
            else:  # pragma: no cover - parser emits only the kinds above
                raise ValueError(f"unsupported element kind {el.kind!r}")
        self._res, self._caps, self._isrcs, self._vsrcs, self._moses = (
            res, caps, isrcs, vsrcs, moses,
        )
        self.mos_names = tuple(el.name for el in moses)
        self.vsource_names = tuple(el.name for el in vsrcs)
        self.n_nodes = len(self.nodes)
        self.n_unknowns = self.n_nodes + len(vsrcs)
        self.unknown_names = self.nodes + tuple(f"I({name})" for name in self.vsource_names)

        self._param_index = {p.name: i for i, p in enumerate(self.params)}
        self._validate_designations()
        self.frequencies = config.frequencies()

    # -- structure helpers ------------------------------------------------

    def _idx(self, node: str) -> int:
        return -1 if node == "0" else self._node_index[node]

    def _validate_designations(self):
        cfg = self.config
        by_name = {el.name: el for el in self.netlist.elements}
        if cfg.ac_input is not None:
            src = by_name.get(cfg.ac_input)
            if src is None or src.kind not in ("isource", "vsource"):
                raise ValueError(
                    f"AC input {cfg.ac_input!r} is not a current or voltage source"
                )
            self._ac_input = src
        else:
            self._ac_input = None
        if cfg.ac_output is not None and cfg.ac_output not in self._node_index:
            raise ValueError(f"AC output node {cfg.ac_output!r} not in circuit")

    def _value(self, raw, x: np.ndarray | None, what: str) -> float:
        from .netlist import Placeholder  # noqa: PLC0415

        if isinstance(raw, Placeholder):
            if x is None:
                raise ValueError(f"{what}: unresolved placeholder {{{raw.param}}} without x")
            return float(x[self._param_index[raw.param]])
        return float(raw)

    def _fill(self, x: np.ndarray | None) -> _Packed:
        p = _Packed()

        def pack_two(elements, what):
            a = np.array([self._idx(el.terminals[0]) for el in elements], dtype=np.int32)
            b = np.array([self._idx(el.terminals[1]) for el in elements], dtype=np.int32)
            vals = np.array(
                [self._value(el.values[0], x, f"{what} {el.name}") for el in elements],
                dtype=float,
            )
            return a, b, vals

        p.res_a, p.res_b, p.res_r = pack_two(self._res, "resistor")
        if np.any(p.res_r <= 0):
            bad = self._res[int(np.argmax(p.res_r <= 0))].name
            raise ValueError(f"resistor {bad} must have a positive value")
        p.res_g = 1.0 / p.res_r
        p.cap_a, p.cap_b, p.cap_c = pack_two(self._caps, "capacitor")
        if np.any(p.cap_c < 0):
            bad = self._caps[int(np.argmax(p.cap_c < 0))].name
            raise ValueError(f"capacitor {bad} must be non-negative")
        p.isrc_a, p.isrc_b, p.isrc_val = pack_two(self._isrcs, "current source")
        p.vsrc_a, p.vsrc_b, p.vsrc_val = pack_two(self._vsrcs, "voltage source")

        n_mos = len(self._moses)
        p.mos_d = np.array([self._idx(el.terminals[0]) for el in self._moses], dtype=np.int32)
        p.mos_g = np.array([self._idx(el.terminals[1]) for el in self._moses], dtype=np.int32)
        p.mos_s = np.array([self._idx(el.terminals[2]) for el in self._moses], dtype=np.int32)
        p.mos_w = np.zeros(n_mos)
        p.mos_l = np.zeros(n_mos)
        p.mos_beta = np.zeros(n_mos)
        p.mos_vth = np.zeros(n_mos)
        p.mos_lam = np.zeros(n_mos)
        p.mos_sign = np.zeros(n_mos)
        p.mos_cgs = np.zeros(n_mos)
        p.mos_cgd = np.zeros(n_mos)
        p.mos_gamma = np.zeros(n_mos)
        for i, el in enumerate(self._moses):
            model = self.models[el.kind]
            w = self._value(el.values[0], x, f"W of {el.name}")
            length = self._value(el.values[1], x, f"L of {el.name}")
            if w <= 0 or length <= 0:
                raise ValueError(f"MOS {el.name} needs positive W and L")
            p.mos_w[i] = w
            p.mos_l[i] = length
            p.mos_beta[i] = model.kprime * (w / length)
            p.mos_vth[i] = model.vth0
            p.mos_lam[i] = model.lambda_per_um / (length * 1e6)
            p.mos_sign[i] = 1.0 if el.kind == "nmos" else -1.0
            p.mos_cgs[i] = (2.0 / 3.0) * w * length * model.cox
            p.mos_cgd[i] = 0.1 * w * length * model.cox
            p.mos_gamma[i] = model.gamma_noise
        return p

    # -- DC ---------------------------------------------------------------

    def _dc_kernel(self, p: _Packed, v0: np.ndarray, scale: float):
        cfg = self.config
        return _backend.dc_newton(
            self.n_unknowns, self.n_nodes,
            p.res_a, p.res_b, p.res_g,
            p.isrc_a, p.isrc_b, p.isrc_val,
            p.vsrc_a, p.vsrc_b, p.vsrc_val,
            p.mos_d, p.mos_g, p.mos_s,
            p.mos_beta, p.mos_vth, p.mos_lam, p.mos_sign,
            v0, scale, cfg.gmin, cfg.newton_tol, cfg.newton_max_iter,
        )

    def dc(self, p: _Packed) -> DcResult:
        """Solve the DC operating point, with source stepping as fallback."""
        v0 = np.zeros(self.n_unknowns)
        v, status, _, resid, bad = self._dc_kernel(p, v0, 1.0)
        if status != 0:
            # ramp the independent sources up from zero
            v = np.zeros(self.n_unknowns)
            for scale in np.linspace(1.0 / self.config.source_steps, 1.0,
                                     self.config.source_steps):
                v, status, _, resid, bad = self._dc_kernel(p, v, float(scale))
                if status != 0:
                    break
        if status == 2:
            name = self.unknown_names[bad] if 0 <= bad < self.n_unknowns else "?"
            raise SimulationError(f"dc_singular: no DC path at {name}")
        if status != 0:
            raise SimulationError(f"dc_no_convergence: residual {resid:.3e} A")
        return self._dc_result(p, v)

    def _dc_result(self, p: _Packed, v: np.ndarray) -> DcResult:
        node_voltages = {name: float(v[i]) for i, name in enumerate(self.nodes)}
        source_currents = {}
        power = 0.0
        net = 0.0
        for k, name in enumerate(self.vsource_names):
            drawn = -float(v[self.n_nodes + k])
            source_currents[name] = drawn
            power += p.vsrc_val[k] * drawn
            net += drawn
        ops = self._ops(p, v)
        return DcResult(
            node_voltages=node_voltages,
            supply_current=abs(net),
            transistor_ops=ops,
            power=power,
            source_currents=source_currents,
            v_unknowns=v,
        )

    def _ops(self, p: _Packed, v: np.ndarray) -> tuple[TransistorOpPoint, ...]:
        if not len(p.mos_d):
            return ()
        _, _, _, _, id_mag, gm, gds, vdsat = _backend.mos_eval(
            v, p.mos_d, p.mos_g, p.mos_s, p.mos_beta, p.mos_vth, p.mos_lam, p.mos_sign
        )
        ops = []
        for i, name in enumerate(self.mos_names):
            ops.append(
                TransistorOpPoint(
                    name=name,
                    vth=float(p.mos_vth[i]),
                    gm=float(gm[i]),
                    vdsat=float(vdsat[i]),
                    id=float(id_mag[i]),
                    gds=float(gds[i]),
                    cgs=float(p.mos_cgs[i]),
                    cgd=float(p.mos_cgd[i]),
                    gamma_eff=float(p.mos_gamma[i]),
                )
            )
        return tuple(ops)

    # -- AC ---------------------------------------------------------------

    def _linear_system(self, p: _Packed, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Small-signal G and C matrices at the operating point ``v``."""
        n = self.n_unknowns
        G = np.zeros((n, n))
        C = np.zeros((n, n))

        def stamp(mat, a, b, val):
            if a >= 0:
                mat[a, a] += val
            if b >= 0:
                mat[b, b] += val
            if a >= 0 and b >= 0:
                mat[a, b] -= val
                mat[b, a] -= val

        for i in range(len(p.res_a)):
            stamp(G, p.res_a[i], p.res_b[i], p.res_g[i])
        for i in range(len(p.cap_a)):
            stamp(C, p.cap_a[i], p.cap_b[i], p.cap_c[i])
        for k in range(len(p.vsrc_a)):
            a, b, row = p.vsrc_a[k], p.vsrc_b[k], self.n_nodes + k
            if a >= 0:
                G[a, row] += 1.0
                G[row, a] += 1.0
            if b >= 0:
                G[b, row] -= 1.0
                G[row, b] -= 1.0
        if len(p.mos_d):
            _, g_dd, g_dg, g_ds, _, _, _, _ = _backend.mos_eval(
                v, p.mos_d, p.mos_g, p.mos_s, p.mos_beta, p.mos_vth, p.mos_lam, p.mos_sign
            )
            for i in range(len(p.mos_d)):
                d, g, s = p.mos_d[i], p.mos_g[i], p.mos_s[i]
                for col, val in ((d, g_dd[i]), (g, g_dg[i]), (s, g_ds[i])):
                    if col < 0:
                        continue
                    if d >= 0:
                        G[d, col] += val
                    if s >= 0:
                        G[s, col] -= val
                stamp(C, g, s, p.mos_cgs[i])
                stamp(C, g, d, p.mos_cgd[i])
        return G, C

    def _input_rhs(self, p: _Packed, magnitude: float) -> np.ndarray:
        src = self._ac_input
        if src is None:
            raise SimulationError("ac_config: missing AC input designation")
        rhs = np.zeros(self.n_unknowns, dtype=complex)
        if src.kind == "isource":
            i = self._isrcs.index(src)
            a, b = p.isrc_a[i], p.isrc_b[i]
            if a >= 0:
                rhs[a] -= magnitude
            if b >= 0:
                rhs[b] += magnitude
        else:
            k = self._vsrcs.index(src)
            rhs[self.n_nodes + k] = magnitude
        return rhs

    def _output_index(self) -> int:
        if self.config.ac_output is None:
            raise SimulationError("ac_config: missing AC output designation")
        return self._node_index[self.config.ac_output]

    def ac(self, p: _Packed, dc: DcResult, freqs: np.ndarray,
           magnitude: float = 1.0) -> np.ndarray:
        G, C = self._linear_system(p, dc.v_unknowns)
        rhs = self._input_rhs(p, magnitude)
        omegas = 2.0 * math.pi * np.asarray(freqs, dtype=float)
        out = self._output_index()
        X, bad = _backend.ac_solve_batch(G, C, omegas, rhs)
        if bad >= 0:
            raise SimulationError(f"ac_singular: f = {freqs[bad]:.6g} Hz")
        return X[:, out]

    # -- noise ------------------------------------------------------------

    def noise(self, p: _Packed, dc: DcResult, freq: float) -> float:
        """Input-referred current noise density (A/sqrt(Hz)) at ``freq``."""
        G, C = self._linear_system(p, dc.v_unknowns)
        n = self.n_unknowns
        t_amb = self.config.ambient_temperature()
        rows = [self._input_rhs(p, 1.0)]
        psds: list[float] = []
        for i in range(len(p.res_a)):
            psd = 4.0 * BOLTZMANN * t_amb / p.res_r[i]
            row = np.zeros(n, dtype=complex)
            if p.res_a[i] >= 0:
                row[p.res_a[i]] -= 1.0
            if p.res_b[i] >= 0:
                row[p.res_b[i]] += 1.0
            rows.append(row)
            psds.append(psd)
        if len(p.mos_d):
            _, _, _, _, _, gm, _, _ = _backend.mos_eval(
                dc.v_unknowns, p.mos_d, p.mos_g, p.mos_s,
                p.mos_beta, p.mos_vth, p.mos_lam, p.mos_sign,
            )
            for i in range(len(p.mos_d)):
                model = self.models[self._moses[i].kind]
                psd = 4.0 * BOLTZMANN * model.temperature * p.mos_gamma[i] * gm[i]
                row = np.zeros(n, dtype=complex)
                if p.mos_d[i] >= 0:
                    row[p.mos_d[i]] -= 1.0
                if p.mos_s[i] >= 0:
                    row[p.mos_s[i]] += 1.0
                rows.append(row)
                psds.append(psd)
        if not psds or not any(w > 0 for w in psds):
            return 0.0
        omega = 2.0 * math.pi * freq
        out = self._output_index()
        X, singular = _backend.solve_block(G, C, omega, np.asarray(rows))
        if singular:
            raise SimulationError(f"noise_singular: f = {freq:.6g} Hz")
        z_ti = abs(X[0, out])
        s_out = 0.0
        for w, xr in zip(psds, X[1:]):
            s_out += w * abs(xr[out]) ** 2
        if s_out == 0.0:
            return 0.0
        if z_ti == 0.0:
            raise SimulationError("noise_zero_transimpedance")
        return math.sqrt(s_out) / z_ti

    # -- metrics ----------------------------------------------------------

    def metrics(self, p: _Packed, dc: DcResult, freqs: np.ndarray,
                ac_response: np.ndarray, noise_density: float) -> MetricSet:
        mag = np.abs(ac_response)
        gain = float(mag[0])
        if gain <= 0.0:
            raise SimulationError("zero_transfer: no output at lowest frequency")
        threshold = gain / math.sqrt(2.0)
        bandwidth, out_of_range = _crossing(np.asarray(freqs, float), mag, threshold)
        peak = float(np.max(mag))
        peaking = max(0.0, 20.0 * math.log10(peak / gain))
        gate_area = float(np.sum(p.mos_w * p.mos_l))
        try:
            return MetricSet(
                gain=gain,
                gain_db_ohm=20.0 * math.log10(gain),
                bandwidth=bandwidth,
                peaking=peaking,
                power=dc.power,
                gate_area=gate_area,
                input_noise_density=noise_density,
                bandwidth_out_of_range=out_of_range,
            )
        except ValueError as exc:
            raise SimulationError(f"nonfinite_metrics: {exc}") from None

    # -- composition --------------------------------------------------------

    def simulate(self, x: Union[Sequence[float], np.ndarray, None] = None) -> SimResult:
        """resolve -> DC -> AC -> noise -> metrics, failures embedded."""
        if x is not None:
            x = np.asarray(x, dtype=float)
            if len(self.params) != x.shape[0]:
                raise ValueError(
                    f"parameter vector length {x.shape[0]} != {len(self.params)}"
                )
            for p_def, xi in zip(self.params, x):
                if not (np.isfinite(xi) and p_def.pmin <= xi <= p_def.pmax):
                    raise ValueError(
                        f"parameter {p_def.name!r} = {xi!r} outside "
                        f"[{p_def.pmin!r}, {p_def.pmax!r}]"
                    )
        elif self.params:
            raise ValueError("netlist declares parameters; simulate needs x")
        try:
            packed = self._fill(x)
        except ValueError as exc:
            return _empty_result(f"bad_values: {exc}")
        freqs = self.frequencies
        try:
            dc = self.dc(packed)
            ac_response = self.ac(packed, dc, freqs)
            noise_density = self.noise(packed, dc, self.config.noise_frequency())
            metric_set = self.metrics(packed, dc, freqs, ac_response, noise_density)
        except SimulationError as exc:
            return _empty_result(exc.marker)
        return SimResult(
            node_voltages=dc.node_voltages,
            supply_current=dc.supply_current,
            transistor_ops=dc.transistor_ops,
            ac_freqs=freqs,
            ac_response=ac_response,
            metrics=metric_set,
        )


def _crossing(freqs: np.ndarray, mag: np.ndarray, threshold: float) -> tuple[float, bool]:
    """First frequency where ``mag`` falls below ``threshold``.

    Log-log interpolation between the bracketing sweep points; returns
    ``(f_stop, True)`` when the response never crosses.
    """
    below = np.nonzero(mag < threshold)[0]
    if len(below) == 0:
        return float(freqs[-1]), True
    i = int(below[0])
    if i == 0:
        return float(freqs[0]), False
    f_lo, f_hi = freqs[i - 1], freqs[i]
    m_lo = max(mag[i - 1], 1e-300)
    m_hi = max(mag[i], 1e-300)
    t = (math.log(threshold) - math.log(m_lo)) / (math.log(m_hi) - math.log(m_lo))
    return float(math.exp(math.log(f_lo) + t * (math.log(f_hi) - math.log(f_lo)))), False


# -- standalone stage functions (single-shot convenience over Simulator) ---


def _sim_for(circuit: ResolvedCircuit, model: ModelArg, **cfg) -> Simulator:
    return Simulator(circuit, SimConfig(models=_as_models(model), **cfg))


def dc_solve(circuit: ResolvedCircuit, model: ModelArg) -> DcResult:
    """DC operating point of a fully resolved circuit.

    Raises :class:`SimulationError` on non-convergence or a singular MNA
    matrix (the marker names the offending node).
    """
    sim = _sim_for(circuit, model)
    return sim.dc(sim._fill(None))


def ac_solve(
    circuit: ResolvedCircuit,
    model: ModelArg,
    dc_result: DcResult,
    freqs: Sequence[float],
    *,
    ac_input: str,
    ac_output: str,
    magnitude: float = 1.0,
) -> np.ndarray:
    """Complex transfer values at ``freqs`` (input scaled by ``magnitude``)."""
    freqs = np.asarray(freqs, dtype=float)
    if len(freqs) == 0 or np.any(freqs <= 0) or np.any(np.diff(freqs) <= 0):
        raise ValueError("freqs must be positive and strictly increasing")
    sim = _sim_for(circuit, model, ac_input=ac_input, ac_output=ac_output)
    return sim.ac(sim._fill(None), dc_result, freqs, magnitude)


def noise_analysis(
    circuit: ResolvedCircuit,
    model: ModelArg,
    dc_result: DcResult,
    freq: float,
    *,
    ac_input: str,
    ac_output: str,
) -> float:
    """Input-referred current noise density at ``freq`` (A/sqrt(Hz))."""
    sim = _sim_for(circuit, model, ac_input=ac_input, ac_output=ac_output)
    return sim.noise(sim._fill(None), dc_result, freq)


def extract_metrics(
    circuit: ResolvedCircuit,
    model: ModelArg,
    freqs: Sequence[float],
    ac_response: np.ndarray,
    dc_result: DcResult,
    noise_density: float,
) -> MetricSet:
    sim = _sim_for(circuit, model)
    return sim.metrics(sim._fill(None), dc_result, np.asarray(freqs, float),
                       np.asarray(ac_response), noise_density)


def simulate(
    netlist: Union[Netlist, ResolvedCircuit],
    x: Union[Sequence[float], np.ndarray, None],
    config: SimConfig,
) -> SimResult:
    """One-shot evaluation; see :meth:`Simulator.simulate`."""
    return Simulator(netlist, config).simulate(x)
