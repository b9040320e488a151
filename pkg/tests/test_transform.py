"""Tests for conditional-moment pseudo-responses and the two boosting losses.

Expected values come from quadrature or Monte Carlo oracles computed here,
never from the implementation under test.
"""

import numpy as np
import pytest
from scipy.integrate import quad

from icboost.data import INF, IntervalObservation, SurvivorCurve, TimeGrid
from icboost.transform import (
    GTransform,
    conditional_moment,
    cut_loss,
    imp_loss,
    loss_gradient,
    transform_response,
)

IDENT = GTransform("identity")


def _curve_from_survivor(fn, grid_pts):
    vals = np.clip(np.asarray([fn(t) for t in grid_pts]), 0.0, 1.0)
    vals = np.minimum.accumulate(vals)
    return SurvivorCurve(TimeGrid(grid_pts), vals, "smoothed")


def test_uniform_bracket_mean_is_midpoint():
    grid = np.linspace(0.002, 4.0, 2000)
    curve = _curve_from_survivor(lambda t: 1.0 - t / 4.0, grid)
    val = conditional_moment(curve, (1.0, 3.0), IDENT, 1)
    assert abs(val - 2.0) < 5e-3


def test_exponential_bracket_mean_matches_quadrature():
    grid = np.linspace(0.002, 10.0, 5000)
    curve = _curve_from_survivor(lambda t: np.exp(-t), grid)
    num, _ = quad(lambda y: y * np.exp(-y), 1.0, 2.0)
    den = np.exp(-1.0) - np.exp(-2.0)
    oracle = num / den
    assert abs(oracle - 1.4180) < 1e-4
    val = conditional_moment(curve, (1.0, 2.0), IDENT, 1)
    assert abs(val - oracle) < 2e-3


def test_threshold_constant_brackets():
    grid = np.linspace(0.002, 6.0, 3000)
    curve = _curve_from_survivor(lambda t: np.exp(-0.5 * t), grid)
    g = GTransform("threshold", 2.0)
    assert conditional_moment(curve, (3.0, 4.0), g, 1) == 1.0
    assert conditional_moment(curve, (0.5, 1.5), g, 1) == -1.0
    assert conditional_moment(curve, (3.0, 4.0), g, 2) == 1.0


def test_zero_mass_bracket_degenerates_to_endpoint():
    grid = np.linspace(0.01, 4.0, 400)
    curve = _curve_from_survivor(lambda t: max(0.0, 1.0 - t / 3.0), grid)
    val = conditional_moment(curve, (3.5, 3.9), IDENT, 1)
    assert val == 3.9
    obs = IntervalObservation(np.array([0.0]), 3.5, 3.9)
    tr = transform_response(obs, curve, IDENT)
    assert tr.degenerate and tr.bracket_mass < 1e-12
    assert tr.y1 == 3.9 and tr.y2 == 3.9**2


def test_right_censored_tail_mass_sits_at_last_point():
    rng = np.random.default_rng(5)
    grid = np.linspace(0.002, 8.0, 4000)
    curve = _curve_from_survivor(lambda t: np.exp(-t), grid)
    obs = IntervalObservation(np.array([0.0]), 2.0, INF)
    tr = transform_response(obs, curve, IDENT)
    draws = 2.0 + rng.exponential(1.0, size=200_000)
    capped = np.minimum(draws, 8.0)
    se = capped.std() / np.sqrt(capped.size)
    assert abs(tr.y1 - capped.mean()) < 3 * se + 3e-3
    assert abs(tr.bracket_mass - np.exp(-2.0)) < 1e-3


def test_jensen_gap_nonnegative_fuzz():
    rng = np.random.default_rng(13)
    for _ in range(200):
        pts = np.unique(np.sort(rng.uniform(0.05, 5.0, size=rng.integers(3, 40))))
        vals = np.minimum.accumulate(np.sort(rng.uniform(size=pts.size))[::-1])
        curve = SurvivorCurve(TimeGrid(pts), vals, "smoothed")
        a = float(rng.uniform(0.0, 4.0))
        b = INF if rng.uniform() < 0.3 else a + float(rng.uniform(0.1, 3.0))
        g = (IDENT, GTransform("log"), GTransform("threshold", 1.5))[rng.integers(3)]
        obs = IntervalObservation(np.array([0.0]), a, b)
        tr = transform_response(obs, curve, g)
        assert tr.y2 >= tr.y1**2 - 1e-8
        assert tr.bracket_mass >= 0.0


def test_loss_values():
    assert cut_loss(1.0, 3.0, 2.0) == 1.5
    assert imp_loss(1.0, 2.0) == 0.5
    assert loss_gradient("cut", 1.0, 2.0) == 1.0
    assert loss_gradient("imp", 1.0, 2.0) == 1.0


def test_loss_difference_free_of_f():
    rng = np.random.default_rng(3)
    y1 = rng.normal(size=50)
    y2 = y1**2 + rng.uniform(size=50)
    for f in (rng.normal(size=50), np.zeros(50), np.full(50, 7.0)):
        diff = cut_loss(y1, y2, f) - imp_loss(y1, f)
        assert np.allclose(diff, 0.5 * (y2 - y1**2), atol=1e-12)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(29)
    eps = 1e-6
    for _ in range(300):
        y1 = float(rng.normal(scale=2))
        y2 = y1**2 + float(rng.uniform(0, 3))
        f = float(rng.normal(scale=2))
        fd_cut = (cut_loss(y1, y2, f + eps) - cut_loss(y1, y2, f - eps)) / (2 * eps)
        fd_imp = (imp_loss(y1, f + eps) - imp_loss(y1, f - eps)) / (2 * eps)
        assert abs(loss_gradient("cut", y1, f) - fd_cut) < 1e-8
        assert abs(loss_gradient("imp", y1, f) - fd_imp) < 1e-8


def test_gtransform_validation():
    with pytest.raises(ValueError):
        GTransform("exp")
    with pytest.raises(ValueError):
        GTransform("threshold")
    g = GTransform("threshold", 2.0)
    assert np.array_equal(g(np.array([1.0, 2.0, 3.0])), [-1.0, -1.0, 1.0])


def test_conditional_moment_validation():
    grid = np.linspace(0.01, 2.0, 50)
    curve = _curve_from_survivor(lambda t: 1.0 - t / 2.0, grid)
    with pytest.raises(ValueError):
        conditional_moment(curve, (2.0, 1.0), IDENT, 1)
    with pytest.raises(ValueError):
        conditional_moment(curve, (0.5, 1.0), IDENT, 3)
