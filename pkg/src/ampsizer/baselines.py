"""Comparison optimizers over the scalar design score.

All optimizers consume the same objective callback the learning agent
does: ``objective(a_bar)`` takes a normalized action in [-1, 1]^n and
returns either a record with a ``d`` attribute (the environment's
evaluation record) or a bare float score.  Everything here maximizes d.

The Bayesian optimizer models d on the unit cube [0, 1]^n (the same
linear/log parameter map as actions, shifted from [-1, 1]) with an RBF
Gaussian process, standardized targets, and expected improvement over a
quasi-random candidate set.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist
from scipy.stats import norm, qmc

from .util import substream

__all__ = [
    "BaselineResult",
    "GPModel",
    "random_search",
    "grid_search",
    "gp_fit",
    "expected_improvement",
    "ei_acquire",
    "sobol_candidates",
    "bo_loop",
]

JITTER_FLOOR = 1e-8
JITTER_CEIL = 1e-4
LENGTHSCALE_RANGE = (1e-2, 10.0)
SIGNAL_VAR_RANGE = (1e-2, 1e2)
N_HYPER_CANDIDATES = 200


def _score_of(record) -> float:
    return float(record) if isinstance(record, (int, float)) else float(record.d)


@dataclass
class BaselineResult:
    """Best point found plus the full evaluation trace, in call order."""

    best_a: np.ndarray
    best_x: Optional[np.ndarray]
    best_d: float
    best_index: int
    records: list
    evaluations: int


class _Tracker:
    def __init__(self):
        self.records = []
        self.best_d = -math.inf
        self.best_a = None
        self.best_x = None
        self.best_index = -1

    def add(self, a_bar: np.ndarray, record):
        d = _score_of(record)
        self.records.append(record)
        if d > self.best_d:
            self.best_d = d
            self.best_a = np.array(a_bar)
            self.best_x = getattr(record, "x", None)
            self.best_index = len(self.records) - 1

    def result(self) -> BaselineResult:
        return BaselineResult(
            best_a=self.best_a,
            best_x=self.best_x,
            best_d=self.best_d,
            best_index=self.best_index,
            records=self.records,
            evaluations=len(self.records),
        )


def random_search(objective: Callable, n_params: int, budget: int,
                  seed: int = 0) -> BaselineResult:
    """Uniform sampling of the normalized action cube; returns the argmax."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = substream(seed, "random_search")
    tracker = _Tracker()
    for _ in range(budget):
        a = rng.uniform(-1.0, 1.0, size=n_params)
        tracker.add(a, objective(a))
    return tracker.result()


def grid_search(objective: Callable, grid_counts: Sequence[int]) -> BaselineResult:
    """Full factorial sweep over per-dimension grids.

    Dimension j contributes ``grid_counts[j]`` evenly spaced normalized
    levels (the midpoint 0 when the count is 1); evaluation order is
    lexicographic with dimension 0 varying slowest, exactly
    prod(grid_counts) evaluations.
    """
    axes = []
    for g in grid_counts:
        if g < 1:
            raise ValueError("grid counts must be >= 1")
        axes.append(np.array([0.0]) if g == 1 else np.linspace(-1.0, 1.0, g))
    tracker = _Tracker()
    for combo in itertools.product(*axes):
        a = np.array(combo)
        tracker.add(a, objective(a))
    return tracker.result()


# -- Gaussian process -----------------------------------------------------


def _sq_dists(A: np.ndarray, B: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    return cdist(A / lengthscales, B / lengthscales, "sqeuclidean")


@dataclass
class GPModel:
    """RBF-kernel GP over unit-cube inputs with standardized targets."""

    inputs: np.ndarray
    targets: np.ndarray
    t_mean: float
    t_std: float
    lengthscales: np.ndarray
    signal_var: float
    noise_var: float
    _chol: object = None
    _alpha: Optional[np.ndarray] = None

    def kernel(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        return self.signal_var * np.exp(-0.5 * _sq_dists(A, B, self.lengthscales))

    def posterior_std(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance in standardized-target units."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.signal_var == 0.0 or self._chol is None:
            return np.zeros(len(X)), np.zeros(len(X))
        k_star = self.kernel(X, self.inputs)
        mean = k_star @ self._alpha
        v = cho_solve(self._chol, k_star.T)
        var = self.signal_var - np.einsum("ij,ji->i", k_star, v)
        return mean, np.maximum(var, 0.0)

    def posterior(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance in original d units."""
        mean, var = self.posterior_std(X)
        return self.t_mean + self.t_std * mean, (self.t_std**2) * var


def _log_marginal_likelihood(K: np.ndarray, y: np.ndarray):
    """Returns (lml, cho_factor, alpha) or None when factorization fails."""
    jitter = JITTER_FLOOR
    m = len(y)
    while True:
        try:
            chol = cho_factor(K + jitter * np.eye(m), lower=True)
            break
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > JITTER_CEIL:
                return None
    alpha = cho_solve(chol, y)
    log_det = 2.0 * np.sum(np.log(np.diag(chol[0])))
    lml = -0.5 * (y @ alpha) - 0.5 * log_det - 0.5 * m * math.log(2.0 * math.pi)
    return lml, chol, alpha


def gp_fit(inputs: np.ndarray, targets: np.ndarray, seed: int = 0,
           hypers: Optional[tuple[np.ndarray, float]] = None) -> GPModel:
    """Fit the GP, searching hyperparameters by log marginal likelihood.

    The search draws ``N_HYPER_CANDIDATES`` seeded candidates with
    per-dimension lengthscales log-uniform in [1e-2, 10] and signal
    variance log-uniform in [1e-2, 1e2]; pass ``hypers`` (lengthscales,
    signal variance) to reuse a previous search and only refresh the
    factorization.  All-identical targets degrade to the prior with zero
    signal variance, whose posterior is the constant mean.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    targets = np.asarray(targets, dtype=float)
    m, n = inputs.shape
    if m < 2:
        raise ValueError("gp_fit needs at least 2 points")
    if len(targets) != m:
        raise ValueError("inputs and targets length mismatch")
    if np.min(inputs) < -1e-9 or np.max(inputs) > 1.0 + 1e-9:
        raise ValueError("gp_fit inputs must lie in the unit cube")

    t_mean = float(np.mean(targets))
    t_std = float(np.std(targets))
    if t_std == 0.0:
        return GPModel(
            inputs=inputs, targets=np.zeros(m), t_mean=t_mean, t_std=1.0,
            lengthscales=np.ones(n), signal_var=0.0, noise_var=JITTER_FLOOR,
        )
    y = (targets - t_mean) / t_std

    if hypers is not None:
        candidates = [(np.asarray(hypers[0], dtype=float), float(hypers[1]))]
    else:
        rng = substream(seed, "gp_fit")
        lo_l, hi_l = np.log(LENGTHSCALE_RANGE[0]), np.log(LENGTHSCALE_RANGE[1])
        lo_s, hi_s = np.log(SIGNAL_VAR_RANGE[0]), np.log(SIGNAL_VAR_RANGE[1])
        candidates = [
            (np.exp(rng.uniform(lo_l, hi_l, size=n)), float(np.exp(rng.uniform(lo_s, hi_s))))
            for _ in range(N_HYPER_CANDIDATES)
        ]

    # cache per-dimension squared differences so each candidate is a
    # weighted sum instead of a fresh distance computation
    diffs_sq = (inputs[:, None, :] - inputs[None, :, :]) ** 2
    best = None
    for ls, sv in candidates:
        if np.any(ls <= 0.0) or sv <= 0.0:
            raise ValueError("lengthscales and signal variance must be positive")
        K = sv * np.exp(-0.5 * (diffs_sq @ (1.0 / ls**2)))
        fit = _log_marginal_likelihood(K, y)
        if fit is None:
            continue
        lml, chol, alpha = fit
        if best is None or lml > best[0]:
            best = (lml, ls, sv, chol, alpha)
    if best is None:
        raise RuntimeError("no GP hyperparameter candidate factorized")
    _, ls, sv, chol, alpha = best
    return GPModel(
        inputs=inputs, targets=y, t_mean=t_mean, t_std=t_std,
        lengthscales=ls, signal_var=sv, noise_var=JITTER_FLOOR,
        _chol=chol, _alpha=alpha,
    )


def expected_improvement(mean: np.ndarray, var: np.ndarray,
                         best: float) -> np.ndarray:
    """EI for maximization; exact improvement max(mean-best, 0) at sigma=0."""
    mean = np.asarray(mean, dtype=float)
    sigma = np.sqrt(np.maximum(np.asarray(var, dtype=float), 0.0))
    improve = mean - best
    out = np.maximum(improve, 0.0)
    pos = sigma > 0.0
    if np.any(pos):
        z = improve[pos] / sigma[pos]
        out_pos = improve[pos] * norm.cdf(z) + sigma[pos] * norm.pdf(z)
        out = out.copy()
        out[pos] = out_pos
    return out


def ei_acquire(model: GPModel, best_d: float, candidates: np.ndarray) -> np.ndarray:
    """Candidate (unit-cube row) maximizing expected improvement."""
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    if len(candidates) < 1:
        raise ValueError("ei_acquire needs at least one candidate")
    mean, var = model.posterior(candidates)
    ei = expected_improvement(mean, var, best_d)
    return candidates[int(np.argmax(ei))]


def sobol_candidates(n_params: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` scrambled Sobol points in [0, 1]^n (padded to a power of 2)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    engine = qmc.Sobol(d=n_params, scramble=True, seed=rng)
    m = max(0, math.ceil(math.log2(count)))
    pts = engine.random_base2(m)
    return pts[:count]


def bo_loop(objective: Callable, n_params: int, budget: int,
            init_count: int = 50, seed: int = 0, n_candidates: int = 4096,
            hyper_interval: int = 25) -> BaselineResult:
    """GP/EI Bayesian optimization of the design score.

    ``init_count`` uniform evaluations seed the model, then each round
    refits the GP and evaluates the EI argmax over a fresh quasi-random
    candidate set.  The full hyperparameter search reruns every
    ``hyper_interval`` rounds; between reruns the last hyperparameters
    are reused and only the factorization is refreshed.
    """
    if init_count < 2:
        raise ValueError("init_count must be >= 2")
    if budget <= init_count:
        raise ValueError("budget must exceed init_count")
    init_rng = substream(seed, "bo.init")
    cand_rng = substream(seed, "bo.candidates")
    tracker = _Tracker()
    U = np.empty((budget, n_params))
    y = np.empty(budget)
    for i in range(init_count):
        u = init_rng.uniform(0.0, 1.0, size=n_params)
        record = objective(2.0 * u - 1.0)
        U[i] = u
        y[i] = _score_of(record)
        tracker.add(2.0 * u - 1.0, record)

    hypers = None
    for i in range(init_count, budget):
        rounds_done = i - init_count
        if hypers is None or rounds_done % hyper_interval == 0:
            model = gp_fit(U[:i], y[:i], seed=seed)
            hypers = (model.lengthscales, model.signal_var)
        else:
            model = gp_fit(U[:i], y[:i], hypers=hypers)
        candidates = sobol_candidates(n_params, n_candidates, cand_rng)
        u = ei_acquire(model, float(np.max(y[:i])), candidates)
        record = objective(2.0 * u - 1.0)
        U[i] = u
        y[i] = _score_of(record)
        tracker.add(2.0 * u - 1.0, record)
    return tracker.result()
