"""Random/grid search and the GP expected-improvement optimizer."""

import math
from dataclasses import dataclass

import numpy as np
import pytest

from ampsizer.baselines import (
    GPModel,
    bo_loop,
    ei_acquire,
    expected_improvement,
    gp_fit,
    grid_search,
    random_search,
    sobol_candidates,
)


@dataclass
class FakeRecord:
    d: float
    x: np.ndarray


def sphere(a_bar):
    a = np.asarray(a_bar, dtype=float)
    target = np.array([0.3, -0.4])[: a.size]
    return float(-np.sum((a - target) ** 2))


# -- random search -----------------------------------------------------------------


def test_random_search_budget_one():
    result = random_search(sphere, n_params=2, budget=1, seed=0)
    assert result.evaluations == 1
    assert result.best_index == 0
    assert result.best_d == result.records[0]
    assert result.best_a.shape == (2,)
    assert np.all(np.abs(result.best_a) <= 1.0)


def test_random_search_rejects_empty_budget():
    with pytest.raises(ValueError, match="budget must be >= 1"):
        random_search(sphere, 2, 0)


def test_random_search_tracks_running_max():
    result = random_search(sphere, n_params=2, budget=50, seed=3)
    scores = np.array(result.records, dtype=float)
    assert result.best_d == scores.max()
    assert result.best_index == int(np.argmax(scores))
    assert sphere(result.best_a) == result.best_d


def test_random_search_is_seeded():
    a = random_search(sphere, 2, 20, seed=7)
    b = random_search(sphere, 2, 20, seed=7)
    c = random_search(sphere, 2, 20, seed=8)
    assert a.records == b.records
    assert np.array_equal(a.best_a, b.best_a)
    assert a.records != c.records


def test_random_search_keeps_record_objects():
    def objective(a_bar):
        return FakeRecord(d=sphere(a_bar), x=np.asarray(a_bar) * 2.0)

    result = random_search(objective, 2, 10, seed=1)
    assert isinstance(result.records[0], FakeRecord)
    assert np.array_equal(result.best_x, result.best_a * 2.0)


# -- grid search --------------------------------------------------------------------


def test_grid_search_lexicographic_order():
    seen = []

    def objective(a_bar):
        seen.append(tuple(a_bar))
        return sphere(a_bar)

    result = grid_search(objective, (3, 2))
    assert result.evaluations == 6
    assert seen == [
        (-1.0, -1.0), (-1.0, 1.0),
        (0.0, -1.0), (0.0, 1.0),
        (1.0, -1.0), (1.0, 1.0),
    ]


def test_grid_search_singleton_axis_uses_midpoint():
    seen = []
    grid_search(lambda a: seen.append(tuple(a)) or 0.0, (1, 2))
    assert seen == [(0.0, -1.0), (0.0, 1.0)]


def test_grid_search_rejects_zero_counts():
    with pytest.raises(ValueError, match="grid counts must be >= 1"):
        grid_search(sphere, (3, 0))


def test_grid_search_finds_axis_optimum():
    result = grid_search(sphere, (21, 21))
    # the closest lattice point to (0.3, -0.4) on a 0.1-spaced grid
    assert np.allclose(result.best_a, [0.3, -0.4], atol=1e-12)


# -- Gaussian process ----------------------------------------------------------------


def _training_set(m=12, n=2, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, size=(m, n))
    y = np.sin(3.0 * X[:, 0]) + X[:, 1] ** 2
    return X, y


def test_gp_interpolates_training_points():
    X, y = _training_set()
    model = gp_fit(X, y, seed=0)
    mean, var = model.posterior(X)
    scale = float(np.std(y))
    np.testing.assert_allclose(mean, y, atol=1e-5 * scale)
    assert np.all(var <= 1e-5 * scale**2)
    assert np.all(var >= 0.0)


def test_gp_reverts_to_prior_far_from_data():
    X = np.array([[0.5, 0.5], [0.52, 0.5], [0.5, 0.52]])
    y = np.array([1.0, 2.0, 3.0])
    model = gp_fit(X, y, hypers=(np.array([0.01, 0.01]), 1.0))
    mean, var = model.posterior(np.array([[0.0, 1.0]]))
    assert mean[0] == pytest.approx(np.mean(y), abs=1e-9)
    assert var[0] == pytest.approx(np.var(y), rel=1e-6)


def test_gp_two_point_symmetry():
    X = np.array([[0.0], [1.0]])
    y = np.array([0.0, 1.0])
    model = gp_fit(X, y, seed=0)
    mean, var = model.posterior(np.array([[0.5]]))
    assert mean[0] == pytest.approx(0.5, abs=1e-9)
    assert 0.0 <= var[0]


def test_gp_constant_targets_degrade_to_prior():
    X, _ = _training_set()
    model = gp_fit(X, np.full(len(X), 4.25), seed=0)
    assert model.signal_var == 0.0
    mean, var = model.posterior(np.array([[0.1, 0.9], [0.7, 0.2]]))
    assert np.array_equal(mean, [4.25, 4.25])
    assert np.array_equal(var, [0.0, 0.0])


def test_gp_fit_input_validation():
    with pytest.raises(ValueError, match="at least 2 points"):
        gp_fit(np.array([[0.5]]), np.array([1.0]))
    with pytest.raises(ValueError, match="length mismatch"):
        gp_fit(np.array([[0.1], [0.2]]), np.array([1.0]))
    with pytest.raises(ValueError, match="unit cube"):
        gp_fit(np.array([[0.1], [1.5]]), np.array([1.0, 2.0]))
    with pytest.raises(ValueError, match="must be positive"):
        gp_fit(np.array([[0.1], [0.2]]), np.array([1.0, 2.0]),
               hypers=(np.array([-1.0]), 1.0))


def test_gp_fixed_hypers_skip_search():
    X, y = _training_set(m=8)
    ls = np.array([0.7, 1.3])
    model = gp_fit(X, y, hypers=(ls, 2.5))
    assert np.array_equal(model.lengthscales, ls)
    assert model.signal_var == 2.5


# -- expected improvement ---------------------------------------------------------


def test_ei_zero_variance_is_exact_improvement():
    ei = expected_improvement(np.array([1.3, 0.7]), np.array([0.0, 0.0]), best=1.0)
    assert ei[0] == pytest.approx(0.3, rel=1e-15)
    assert ei[1] == 0.0


def test_ei_at_zero_z_is_standard_normal_density():
    ei = expected_improvement(np.array([2.0]), np.array([1.0]), best=2.0)
    assert ei[0] == pytest.approx(0.3989422804014327, abs=1e-12)


def test_ei_is_nonnegative_and_monotone_in_mean():
    var = np.full(50, 0.4)
    means = np.linspace(-3.0, 3.0, 50)
    ei = expected_improvement(means, var, best=0.0)
    assert np.all(ei >= 0.0)
    assert np.all(np.diff(ei) > 0.0)


def test_ei_acquire_prefers_high_mean():
    X = np.array([[0.1], [0.9]])
    y = np.array([0.0, 5.0])
    model = gp_fit(X, y, hypers=(np.array([0.2]), 1.0))
    # incumbent below both observations: posterior mean decides
    pick = ei_acquire(model, best_d=0.0, candidates=np.array([[0.1], [0.9]]))
    assert pick[0] == 0.9


def test_ei_acquire_breaks_ties_toward_first():
    model = GPModel(
        inputs=np.zeros((2, 1)), targets=np.zeros(2), t_mean=0.0, t_std=1.0,
        lengthscales=np.ones(1), signal_var=0.0, noise_var=1e-8,
    )
    cands = np.array([[0.25], [0.5], [0.75]])
    assert ei_acquire(model, best_d=1.0, candidates=cands)[0] == 0.25
    with pytest.raises(ValueError, match="at least one candidate"):
        ei_acquire(model, 0.0, np.empty((0, 1)))


def test_sobol_candidates_shape_and_determinism():
    a = sobol_candidates(3, 5, np.random.default_rng(5))
    b = sobol_candidates(3, 5, np.random.default_rng(5))
    assert a.shape == (5, 3)
    assert np.array_equal(a, b)
    assert a.min() >= 0.0 and a.max() <= 1.0
    with pytest.raises(ValueError, match="count must be >= 1"):
        sobol_candidates(3, 0, np.random.default_rng(0))


def test_sobol_pads_to_power_of_two():
    # a 5-point request draws 8 points and truncates
    five = sobol_candidates(2, 5, np.random.default_rng(9))
    eight = sobol_candidates(2, 8, np.random.default_rng(9))
    assert np.array_equal(five, eight[:5])


# -- Bayesian optimization loop -----------------------------------------------------


def test_bo_loop_budget_validation():
    with pytest.raises(ValueError, match="init_count must be >= 2"):
        bo_loop(sphere, 2, budget=10, init_count=1)
    with pytest.raises(ValueError, match="budget must exceed init_count"):
        bo_loop(sphere, 2, budget=10, init_count=10)


def test_bo_loop_single_guided_round():
    result = bo_loop(sphere, 2, budget=6, init_count=5, seed=0, n_candidates=64)
    assert result.evaluations == 6
    assert len(result.records) == 6
    assert result.best_d == max(result.records)


def test_bo_loop_is_seeded():
    kwargs = dict(budget=15, init_count=5, seed=4, n_candidates=64)
    a = bo_loop(sphere, 2, **kwargs)
    b = bo_loop(sphere, 2, **kwargs)
    assert a.records == b.records
    assert np.array_equal(a.best_a, b.best_a)


def test_bo_actions_stay_in_bounds():
    seen = []

    def objective(a_bar):
        seen.append(np.array(a_bar))
        return sphere(a_bar)

    bo_loop(objective, 2, budget=12, init_count=5, seed=2, n_candidates=64)
    stacked = np.stack(seen)
    assert stacked.min() >= -1.0 and stacked.max() <= 1.0


def test_bo_beats_random_on_smooth_objective():
    bo_best, rand_best = [], []
    for seed in range(5):
        bo = bo_loop(sphere, 2, budget=60, init_count=20, seed=seed,
                     n_candidates=512)
        rand = random_search(sphere, 2, budget=60, seed=seed)
        bo_best.append(bo.best_d)
        rand_best.append(rand.best_d)
    assert np.median(bo_best) > np.median(rand_best)
    assert np.median(bo_best) > -1e-3
