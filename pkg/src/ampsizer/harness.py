"""Experiment orchestration: configs, runs, calibration, summary tables.

A run is described by one JSON document (versioned schema).  Per seed it
builds a fresh environment and optimizer, spends exactly the configured
simulation budget, and writes a trace CSV (one row per simulate call,
identical schema for every optimizer) plus a best-design report.  A
cross-seed summary carries medians; wall-clock timestamps live only in a
metadata sidecar so reruns are byte-identical.

The trace column order is: optimizer, step_global, episode,
step_in_episode, one x_<param> column per parameter, the seven metric
columns, one q_<metric> column per spec item, d, reward, satisfied,
failure.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import __version__
from ._core import backend_name
from .baselines import bo_loop, grid_search, random_search
from .benchmarks import BenchmarkDef, get_benchmark
from .ddpg import ActorLayout, AgentConfig, DDPGAgent, NoiseConfig
from .design_spec import DesignSpec, RewardConfig, SpecItem, q_values, score
from .env import EnvConfig, SizingEnv, TraceRow
from .simulator import METRIC_KEYS, MetricSet
from .util import format_float, substream

__all__ = [
    "SCHEMA_VERSION",
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "run_experiment",
    "make_table",
    "calibrate",
    "selfcheck",
    "default_grid_counts",
    "worker_count",
]

SCHEMA_VERSION = 1
OPTIMIZERS = ("ddpg", "random", "grid", "bo")
NEVER = math.inf  # first-satisfaction sentinel before serialization


class ConfigError(ValueError):
    """Invalid experiment configuration (maps to CLI exit code 2)."""


def worker_count() -> int:
    raw = os.environ.get("AMPSIZER_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"AMPSIZER_WORKERS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("AMPSIZER_WORKERS must be >= 1")
    return n


def default_grid_counts(n_params: int, budget: int) -> list[int]:
    """Per-dimension grid counts whose product is the largest <= budget.

    Counts start at the uniform floor and earlier dimensions are
    incremented greedily while the product still fits.
    """
    if budget < 1:
        raise ConfigError("budget must be >= 1")
    base = max(1, int(budget ** (1.0 / n_params)))
    while (base + 1) ** n_params <= budget:
        base += 1
    counts = [base] * n_params
    product = base**n_params
    for j in range(n_params):
        trial = product // counts[j] * (counts[j] + 1)
        if trial <= budget:
            counts[j] += 1
            product = trial
    return counts


@dataclass
class BoSettings:
    init_count: int = 50
    n_candidates: int = 4096
    hyper_interval: int = 25


@dataclass
class ExperimentConfig:
    """One experiment: a benchmark, an optimizer, budgets, and overrides."""

    benchmark: str
    optimizer: str
    budget: int
    seeds: tuple[int, ...]
    out_dir: str
    env: EnvConfig = field(default_factory=EnvConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    bo: BoSettings = field(default_factory=BoSettings)
    grid_counts: Optional[tuple[int, ...]] = None
    sim_overrides: Mapping[str, float] = field(default_factory=dict)
    reward_overrides: Mapping[str, float] = field(default_factory=dict)

    def validate(self) -> BenchmarkDef:
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(
                f"optimizer must be one of {', '.join(OPTIMIZERS)}; got {self.optimizer!r}"
            )
        if self.budget < 1:
            raise ConfigError("budget must be >= 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        try:
            bench = get_benchmark(self.benchmark)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        n = len(bench.netlist().params)
        if self.optimizer == "ddpg" and self.budget % self.env.steps_per_episode:
            raise ConfigError(
                f"ddpg budget {self.budget} must be divisible by the "
                f"{self.env.steps_per_episode}-step episode length"
            )
        if self.optimizer == "bo" and self.budget <= self.bo.init_count:
            raise ConfigError("bo budget must exceed init_count")
        if self.grid_counts is not None:
            if self.optimizer != "grid":
                raise ConfigError("grid_counts only applies to the grid optimizer")
            if len(self.grid_counts) != n:
                raise ConfigError(
                    f"grid_counts length {len(self.grid_counts)} != {n} parameters"
                )
            product = math.prod(self.grid_counts)
            if product != self.budget:
                raise ConfigError(
                    f"grid budget {self.budget} != product of grid_counts {product}"
                )
        return bench

    def resolved(self) -> "ExperimentConfig":
        """Fill derived fields: grid counts and the noise decay horizon."""
        cfg = self
        bench = cfg.validate()
        if cfg.optimizer == "grid" and cfg.grid_counts is None:
            n = len(bench.netlist().params)
            counts = tuple(default_grid_counts(n, cfg.budget))
            cfg = replace(cfg, grid_counts=counts, budget=math.prod(counts))
        if cfg.optimizer == "ddpg" and cfg.agent.noise.decay_steps == 0:
            noise = replace(cfg.agent.noise, decay_steps=max(1, int(0.3 * cfg.budget)))
            cfg = replace(cfg, agent=replace(cfg.agent, noise=noise))
        return cfg


def _build_section(cls, data: Mapping, name: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown {name} keys: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {name} section: {exc}") from None


def config_from_dict(doc: Mapping) -> ExperimentConfig:
    """Validate a parsed JSON document against the versioned schema."""
    if not isinstance(doc, Mapping):
        raise ConfigError("config must be a JSON object")
    known = {
        "schema_version", "benchmark", "optimizer", "budget", "seeds",
        "out_dir", "env", "agent", "noise", "bo", "grid_counts", "sim", "reward",
    }
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"schema_version must be {SCHEMA_VERSION}, got {version!r}"
        )
    for key in ("benchmark", "optimizer", "budget", "seeds", "out_dir"):
        if key not in doc:
            raise ConfigError(f"missing required config key {key!r}")
    seeds = doc["seeds"]
    if not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("seeds must be a list of integers")
    if not isinstance(doc["budget"], int):
        raise ConfigError("budget must be an integer")

    env = _build_section(EnvConfig, doc.get("env", {}), "env")
    noise_doc = dict(doc.get("noise", {}))
    if "decay_steps" not in noise_doc:
        noise_doc["decay_steps"] = 0  # resolved() derives it from the budget
    noise = _build_section(NoiseConfig, noise_doc, "noise")
    agent_doc = dict(doc.get("agent", {}))
    if "noise" in agent_doc:
        raise ConfigError("noise settings belong in the top-level 'noise' section")
    agent = _build_section(AgentConfig, agent_doc, "agent")
    agent = replace(agent, noise=noise)
    bo = _build_section(BoSettings, doc.get("bo", {}), "bo")

    sim_over = dict(doc.get("sim", {}))
    sim_allowed = {"f_start", "f_stop", "points_per_decade", "noise_freq"}
    if set(sim_over) - sim_allowed:
        raise ConfigError(f"unknown sim keys: {sorted(set(sim_over) - sim_allowed)}")
    reward_over = dict(doc.get("reward", {}))
    reward_allowed = {"alpha", "e0", "e1", "failure_floor"}
    if set(reward_over) - reward_allowed:
        raise ConfigError(
            f"unknown reward keys: {sorted(set(reward_over) - reward_allowed)}"
        )

    grid_counts = doc.get("grid_counts")
    if grid_counts is not None:
        if not isinstance(grid_counts, list) or not all(
            isinstance(g, int) for g in grid_counts
        ):
            raise ConfigError("grid_counts must be a list of integers")
        grid_counts = tuple(grid_counts)

    cfg = ExperimentConfig(
        benchmark=doc["benchmark"],
        optimizer=doc["optimizer"],
        budget=doc["budget"],
        seeds=tuple(seeds),
        out_dir=doc["out_dir"],
        env=env,
        agent=agent,
        bo=bo,
        grid_counts=grid_counts,
        sim_overrides=sim_over,
        reward_overrides=reward_over,
    )
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return config_from_dict(doc)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "benchmark": cfg.benchmark,
        "optimizer": cfg.optimizer,
        "budget": cfg.budget,
        "seeds": list(cfg.seeds),
        "out_dir": cfg.out_dir,
        "env": asdict(cfg.env),
        "agent": asdict(cfg.agent),
        "bo": asdict(cfg.bo),
        "sim": dict(cfg.sim_overrides),
        "reward": dict(cfg.reward_overrides),
    }
    doc["noise"] = doc["agent"].pop("noise")
    if cfg.grid_counts is not None:
        doc["grid_counts"] = list(cfg.grid_counts)
    return doc


# -- environment assembly ----------------------------------------------------


def build_env(cfg: ExperimentConfig) -> SizingEnv:
    bench = get_benchmark(cfg.benchmark)
    sim_config = bench.sim_config
    if cfg.sim_overrides:
        sim_config = replace(sim_config, **cfg.sim_overrides)
    spec = bench.spec
    if cfg.reward_overrides:
        base = spec.reward if spec.reward is not None else RewardConfig.defaults(
            len(spec.hard_items()), len(spec.target_items())
        )
        spec = DesignSpec(items=spec.items, reward=replace(base, **cfg.reward_overrides))
    return SizingEnv(bench.netlist(), spec, sim_config, cfg.env)


# -- optimizer drivers ---------------------------------------------------------


def _logging_objective(env: SizingEnv) -> Callable:
    state = {"episode": 0}

    def objective(a_bar):
        rec = env.evaluate(a_bar)
        env.log_record(rec, episode=state["episode"], step_in_episode=0, reward=rec.d)
        state["episode"] += 1
        return rec

    return objective


def _run_ddpg(env: SizingEnv, cfg: ExperimentConfig, seed: int) -> None:
    layout = ActorLayout.from_env(env)
    agent = DDPGAgent(layout, cfg.agent, seed=seed)
    episodes = cfg.budget // env.steps_per_episode
    for _ in range(episodes):
        obs = env.reset().flat()
        if cfg.agent.noise.param_noise:
            agent.refresh_parameter_noise()
        done = False
        while not done:
            action = agent.act(obs, explore=True)
            next_obs, reward, done = env.step(action)
            next_flat = next_obs.flat()
            agent.observe_transition(obs, action, reward, next_flat, done)
            if agent.ready():
                agent.train_step()
            obs = next_flat


def _run_seed(cfg: ExperimentConfig, seed: int) -> SizingEnv:
    env = build_env(cfg)
    if cfg.optimizer == "ddpg":
        _run_ddpg(env, cfg, seed)
    elif cfg.optimizer == "random":
        random_search(_logging_objective(env), env.n_params, cfg.budget, seed=seed)
    elif cfg.optimizer == "grid":
        grid_search(_logging_objective(env), cfg.grid_counts)
    elif cfg.optimizer == "bo":
        bo_loop(
            _logging_objective(env), env.n_params, cfg.budget,
            init_count=cfg.bo.init_count, seed=seed,
            n_candidates=cfg.bo.n_candidates, hyper_interval=cfg.bo.hyper_interval,
        )
    else:  # pragma: no cover - validate() rejects earlier
        raise ConfigError(f"unknown optimizer {cfg.optimizer!r}")
    if len(env.log) != cfg.budget:
        raise RuntimeError(
            f"budget accounting violated: {len(env.log)} simulate calls "
            f"for a budget of {cfg.budget}"
        )
    return env


# -- trace and report files -----------------------------------------------------


def trace_header(env: SizingEnv) -> list[str]:
    cols = ["optimizer", "step_global", "episode", "step_in_episode"]
    cols += [f"x_{p.name}" for p in env.params]
    cols += list(METRIC_KEYS)
    cols += [f"q_{item.metric_key}" for item in env.spec.items]
    cols += ["d", "reward", "satisfied", "failure"]
    return cols


def _trace_cells(env: SizingEnv, optimizer: str, row: TraceRow) -> list[str]:
    cells = [optimizer, str(row.step_global), str(row.episode), str(row.step_in_episode)]
    cells += [format_float(v) for v in row.x]
    metrics = row.result.metrics
    if metrics is None:
        cells += [""] * len(METRIC_KEYS)
    else:
        md = metrics.as_dict()
        cells += [format_float(md[k]) for k in METRIC_KEYS]
    for item in env.spec.items:
        cells.append(format_float(row.q[item.metric_key]) if row.q else "")
    cells += [
        format_float(row.d),
        format_float(row.reward),
        "1" if row.satisfied else "0",
        row.result.failure or "",
    ]
    return cells


def write_trace(env: SizingEnv, optimizer: str, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(trace_header(env))
        for row in env.log:
            writer.writerow(_trace_cells(env, optimizer, row))


def first_satisfaction(env: SizingEnv) -> float:
    """1-based simulate count of the first satisfying row, inf if never."""
    for i, row in enumerate(env.log):
        if row.satisfied:
            return float(i + 1)
    return NEVER


def best_row(env: SizingEnv) -> TraceRow:
    best = env.log[0]
    for row in env.log[1:]:
        if row.d > best.d:
            best = row
    return best


def _row_report(env: SizingEnv, row: TraceRow) -> dict:
    metrics = row.result.metrics
    return {
        "x": {p.name: row.x[i] for i, p in enumerate(env.params)},
        "metrics": metrics.as_dict() if metrics is not None else None,
        "q": dict(row.q) if row.q else None,
        "d": row.d,
        "satisfied": row.satisfied,
        "step_global": row.step_global,
        "failure": row.result.failure,
    }


def _dump_json(doc, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _agg(values: Sequence[float]) -> dict:
    arr = np.array(values, dtype=float)

    def clean(v: float):
        return v if math.isfinite(v) else None

    return {
        "median": clean(float(np.median(arr))),
        "min": clean(float(np.min(arr))),
        "max": clean(float(np.max(arr))),
    }


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run every seed, write traces/reports/summary, return the summary."""
    cfg = cfg.resolved()
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    t_start = time.time()
    per_seed = []
    seed_times = {}
    workers = worker_count()
    if workers > 1 and len(cfg.seeds) > 1:
        results = _run_seeds_parallel(cfg, workers)
    else:
        results = []
        for seed in cfg.seeds:
            t0 = time.time()
            env = _run_seed(cfg, seed)
            results.append(_seed_artifacts(cfg, seed, env))
            seed_times[seed] = time.time() - t0
    for seed, artifact in zip(cfg.seeds, results):
        trace_path = os.path.join(out, f"trace_seed{seed}.csv")
        with open(trace_path, "w", newline="") as fh:
            fh.write(artifact["trace_text"])
        _dump_json(artifact["best_doc"], os.path.join(out, f"best_seed{seed}.json"))
        per_seed.append(artifact["seed_summary"])

    summary = {
        "schema_version": SCHEMA_VERSION,
        "benchmark": cfg.benchmark,
        "optimizer": cfg.optimizer,
        "budget": cfg.budget,
        "seeds": list(cfg.seeds),
        "config": config_to_dict(cfg),
        "per_seed": per_seed,
        "aggregate": {
            "best_d": _agg([s["best"]["d"] for s in per_seed]),
            "first_satisfaction": _agg(
                [
                    s["first_satisfaction"] if s["first_satisfaction"] is not None else NEVER
                    for s in per_seed
                ]
            ),
        },
    }
    _dump_json(summary, os.path.join(out, "summary.json"))
    meta = {
        "started_unix": t_start,
        "elapsed_seconds": time.time() - t_start,
        "seed_seconds": {str(k): v for k, v in seed_times.items()},
        "backend": backend_name,
        "version": __version__,
    }
    _dump_json(meta, os.path.join(out, "meta.json"))
    return summary


def _seed_artifacts(cfg: ExperimentConfig, seed: int, env: SizingEnv) -> dict:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(trace_header(env))
    for row in env.log:
        writer.writerow(_trace_cells(env, cfg.optimizer, row))
    first = first_satisfaction(env)
    best = best_row(env)
    best_doc = {
        "benchmark": cfg.benchmark,
        "optimizer": cfg.optimizer,
        "seed": seed,
        "budget": cfg.budget,
        "best": _row_report(env, best),
        "first_satisfaction": None if math.isinf(first) else int(first),
        "clamped_actions": env.diagnostics.clamped,
    }
    seed_summary = {
        "seed": seed,
        "best": _row_report(env, best),
        "first_satisfaction": None if math.isinf(first) else int(first),
        "trace_file": f"trace_seed{seed}.csv",
    }
    return {
        "trace_text": buf.getvalue(),
        "best_doc": best_doc,
        "seed_summary": seed_summary,
    }


def _parallel_task(args: tuple[dict, int]) -> dict:
    doc, seed = args
    cfg = config_from_dict(doc).resolved()
    env = _run_seed(cfg, seed)
    return _seed_artifacts(cfg, seed, env)


def _run_seeds_parallel(cfg: ExperimentConfig, workers: int) -> list[dict]:
    from concurrent.futures import ProcessPoolExecutor

    doc = config_to_dict(cfg)
    tasks = [(doc, seed) for seed in cfg.seeds]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(_parallel_task, tasks))


# -- comparison table ---------------------------------------------------------


@dataclass
class TableResult:
    rows: list[dict]
    csv_text: str
    markdown: str


def _reference_q(bench: BenchmarkDef) -> Optional[dict]:
    if bench.reference_metrics is None:
        return None
    metrics = MetricSet(**{k: float(v) for k, v in bench.reference_metrics.items()})
    return q_values(bench.spec, metrics)


def make_table(summaries: Sequence[Mapping]) -> TableResult:
    """Cross-optimizer comparison over one benchmark.

    Each row reports the best design across that summary's seeds, its
    metrics and score, any violated hard constraints, the median best
    score across seeds, and the score relative to the benchmark's
    reference row: the sum over target items of (q - q_reference).
    """
    if not summaries:
        raise ValueError("make_table needs at least one summary")
    benchmarks = {s["benchmark"] for s in summaries}
    if len(benchmarks) != 1:
        raise ValueError(f"summaries mix benchmarks: {sorted(benchmarks)}")
    bench = get_benchmark(benchmarks.pop())
    ref_q = _reference_q(bench)
    hard_keys = [item.metric_key for item in bench.spec.hard_items()]
    target_keys = [item.metric_key for item in bench.spec.target_items()]

    rows = []
    for s in summaries:
        candidates = sorted(s["per_seed"], key=lambda p: (-p["best"]["d"], p["seed"]))
        top = candidates[0]["best"]
        row: dict = {
            "optimizer": s["optimizer"],
            "simulations": s["budget"],
            "seeds": len(s["per_seed"]),
        }
        metrics = top["metrics"] or {}
        for key in METRIC_KEYS:
            row[key] = metrics.get(key)
        row["satisfied"] = bool(top["satisfied"])
        row["d"] = top["d"]
        row["d_median"] = s["aggregate"]["best_d"]["median"]
        row["first_satisfaction_median"] = s["aggregate"]["first_satisfaction"]["median"]
        q = top["q"] or {}
        violated = [k for k in hard_keys if q.get(k, 0.0) < 1.0]
        row["violations"] = ",".join(violated)
        if ref_q is not None and q:
            row["relative_score"] = sum(q[k] - ref_q[k] for k in target_keys)
        else:
            row["relative_score"] = None
        rows.append(row)

    columns = (
        ["optimizer", "simulations", "seeds"]
        + list(METRIC_KEYS)
        + ["satisfied", "d", "d_median", "first_satisfaction_median",
           "violations", "relative_score"]
    )

    def cell(v) -> str:
        if v is None:
            return ""
        if isinstance(v, bool):
            return "1" if v else "0"
        if isinstance(v, float):
            return format_float(v)
        return str(v)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([cell(row[c]) for c in columns])

    md_lines = ["| " + " | ".join(columns) + " |",
                "| " + " | ".join("---" for _ in columns) + " |"]
    for row in rows:
        md_lines.append("| " + " | ".join(cell(row[c]) for c in columns) + " |")
    return TableResult(rows=rows, csv_text=buf.getvalue(), markdown="\n".join(md_lines) + "\n")


# -- threshold calibration -------------------------------------------------------


def _round_sig(value: float, digits: int) -> float:
    if value == 0.0 or not math.isfinite(value):
        return value
    exp = math.floor(math.log10(abs(value)))
    return round(value, digits - 1 - exp)


def calibrate(benchmark: str, n_samples: int = 20_000, seed: int = 0,
              target_low: float = 0.005, target_high: float = 0.02) -> dict:
    """Derive hard-constraint thresholds from uniform random sampling.

    Thresholds are set at a common per-metric quantile, bisected until
    the jointly satisfying fraction of samples lands in
    [target_low, target_high] (failed simulations count as
    unsatisfying), then rounded to two significant digits (three if
    rounding leaves the range).  The target item's threshold is the
    median of its metric over the jointly satisfying samples, and the
    reference row is the sample scoring highest under the calibrated
    spec.
    """
    bench = get_benchmark(benchmark)
    env = bench.build_env()
    rng = substream(seed, f"calibrate.{benchmark}")
    if n_samples < 100:
        raise ConfigError("calibration needs at least 100 samples")

    n = env.n_params
    xs = np.empty((n_samples, n))
    values = {k: np.full(n_samples, np.nan) for k in METRIC_KEYS}
    failures = 0
    for i in range(n_samples):
        a = rng.uniform(-1.0, 1.0, size=n)
        rec = env.evaluate(a)
        xs[i] = rec.x
        if rec.result.metrics is None:
            failures += 1
            continue
        for key, val in rec.result.metrics.as_dict().items():
            values[key][i] = val

    hard_items = bench.spec.hard_items()
    target_items = bench.spec.target_items()
    pinned = {
        item.metric_key: item.threshold
        for item in hard_items
        if item.metric_key in bench.pinned
    }

    def thresholds_at(p: float) -> dict[str, float]:
        out = dict(pinned)
        for item in hard_items:
            if item.metric_key in pinned:
                continue
            vals = values[item.metric_key]
            good = vals[np.isfinite(vals)]
            if item.direction == "at_least":
                out[item.metric_key] = float(np.quantile(good, 1.0 - p))
            else:
                out[item.metric_key] = float(np.quantile(good, p))
        return out

    def joint_mask(thr: Mapping[str, float]) -> np.ndarray:
        mask = np.ones(n_samples, dtype=bool)
        for item in hard_items:
            vals = values[item.metric_key]
            with np.errstate(invalid="ignore"):
                if item.direction == "at_least":
                    ok = vals >= thr[item.metric_key]
                else:
                    ok = vals <= thr[item.metric_key]
            mask &= np.where(np.isfinite(vals), ok, False)
        return mask

    target_mid = math.sqrt(target_low * target_high)
    lo, hi = 1e-4, 0.5
    for _ in range(60):
        mid = math.sqrt(lo * hi)
        frac = joint_mask(thresholds_at(mid)).mean()
        if frac < target_mid:
            lo = mid
        else:
            hi = mid
    p_star = math.sqrt(lo * hi)

    chosen = None
    for digits in (2, 3, None):
        thr = thresholds_at(p_star)
        if digits is not None:
            thr = {
                k: v if k in pinned else _round_sig(v, digits)
                for k, v in thr.items()
            }
        frac = float(joint_mask(thr).mean())
        if target_low <= frac <= target_high:
            chosen = (thr, frac, digits)
            break
    if chosen is None:
        raise RuntimeError(
            f"calibration failed to land in [{target_low}, {target_high}]"
        )
    thr, frac, digits = chosen
    mask = joint_mask(thr)

    target_thresholds = {}
    for item in target_items:
        vals = values[item.metric_key][mask]
        vals = vals[np.isfinite(vals)]
        target_thresholds[item.metric_key] = _round_sig(float(np.median(vals)), 2)

    items = []
    for item in bench.spec.items:
        new_thr = thr.get(item.metric_key, target_thresholds.get(item.metric_key))
        items.append(
            {
                "metric": item.metric_key,
                "threshold": new_thr,
                "direction": item.direction,
                "kind": item.kind,
            }
        )

    spec = DesignSpec(
        items=tuple(
            SpecItem(i["metric"], i["threshold"], i["direction"], i["kind"])
            for i in items
        )
    )
    best_d = -math.inf
    best_i = -1
    for i in range(n_samples):
        if not mask[i]:
            continue
        metrics = MetricSet(**{k: float(values[k][i]) for k in METRIC_KEYS})
        d, _ = score(spec, metrics)
        if d > best_d:
            best_d = d
            best_i = i
    reference = None
    if best_i >= 0:
        reference = {
            "x": {p.name: float(xs[best_i, j]) for j, p in enumerate(env.params)},
            "metrics": {k: float(values[k][best_i]) for k in METRIC_KEYS},
            "d": best_d,
        }

    return {
        "benchmark": benchmark,
        "n_samples": n_samples,
        "seed": seed,
        "failures": failures,
        "quantile": p_star,
        "rounding_digits": digits,
        "joint_fraction": frac,
        "pinned": sorted(pinned),
        "items": items,
        "reference": reference,
    }


# -- registry self-check -----------------------------------------------------------


def selfcheck() -> list[str]:
    """Parse, validate, and midpoint-evaluate every registered benchmark."""
    from .benchmarks import registry

    lines = [f"backend: {backend_name}"]
    for name, bench in sorted(registry().items()):
        env = bench.build_env()
        rec = env.evaluate(np.zeros(env.n_params))
        status = "ok" if rec.result.ok else f"midpoint failed: {rec.result.failure}"
        lines.append(
            f"{name}: {len(env.params)} parameters, "
            f"{len(env.sequence)} sequence slots, d(midpoint) = "
            f"{format_float(rec.d)} ({status})"
        )
    return lines
