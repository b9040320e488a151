"""Tests for the natural cubic smoothing-spline smoother.

The penalty construction is checked against quadrature of the interpolant's
squared second derivative, and the boosting operator against explicit
residual-fitting recursions.
"""

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from icboost.splines import (
    apply_smoother,
    boost_operator,
    build_basis,
    evaluate_spline,
    projection_smoother,
    shrink,
    smoother_from_matrix,
    smoother_matrix,
    solve_lambda_for_df,
)


def test_two_knots_give_zero_penalty():
    basis = build_basis([0.0, 1.0])
    assert np.array_equal(basis.penalty_matrix, np.zeros((2, 2)))


def test_three_knots_give_rank_one_penalty():
    basis = build_basis([0.0, 0.5, 1.0])
    assert np.linalg.matrix_rank(basis.penalty_matrix, tol=1e-10) == 1


def test_penalty_psd_with_linear_null_space():
    rng = np.random.default_rng(3)
    x = np.sort(rng.uniform(size=25))
    basis = build_basis(x)
    evals = np.linalg.eigvalsh(basis.penalty_matrix)
    assert evals.min() > -1e-8
    assert np.allclose(basis.penalty_matrix @ np.ones_like(x), 0.0, atol=1e-7)
    assert np.allclose(basis.penalty_matrix @ x, 0.0, atol=1e-7)


def test_penalty_equals_roughness_of_natural_interpolant():
    # theta^T Omega theta must equal the integrated squared second derivative
    # of the natural cubic spline interpolating (knots, theta)
    rng = np.random.default_rng(5)
    knots = np.sort(rng.uniform(0.0, 3.0, size=9))
    basis = build_basis(knots)
    for _ in range(4):
        theta = rng.normal(size=9)
        cs = CubicSpline(knots, theta, bc_type="natural")
        d2 = cs.derivative(2)
        val, _ = quad(lambda s: d2(s) ** 2, knots[0], knots[-1], limit=400)
        assert np.isclose(theta @ basis.penalty_matrix @ theta, val, rtol=1e-7, atol=1e-9)


def test_build_basis_rejects_duplicates():
    with pytest.raises(ValueError):
        build_basis([0.0, 0.5, 0.5, 1.0])


def test_zero_lambda_is_identity():
    basis = build_basis(np.linspace(0, 1, 12))
    psi = smoother_matrix(basis, 0.0)
    assert np.array_equal(psi.matrix, np.eye(12))


def test_smoother_preserves_constant_and_linear():
    x = np.linspace(0, 1, 15)
    basis = build_basis(x)
    psi = smoother_matrix(basis, 2.5)
    assert np.allclose(psi.matrix @ np.ones(15), np.ones(15), atol=1e-9)
    assert np.allclose(psi.matrix @ x, x, atol=1e-9)


def test_unit_eigenvalue_multiplicity_two():
    x = np.linspace(0, 1, 10)
    psi = smoother_matrix(build_basis(x), 1.0)
    eigs = psi.eigenvalues
    assert abs(eigs[0] - 1.0) < 1e-8 and abs(eigs[1] - 1.0) < 1e-8
    assert eigs[2] < 1.0 - 1e-8
    assert eigs.min() >= 0.0 and eigs.max() <= 1.0


def test_trace_monotone_in_lambda():
    basis = build_basis(np.linspace(0, 1, 30))
    traces = [smoother_matrix(basis, lam).df for lam in [0.0, 1e-6, 1e-3, 1e-1, 10.0]]
    assert all(a > b for a, b in zip(traces, traces[1:]))


def test_solve_lambda_hits_df():
    rng = np.random.default_rng(9)
    x = np.sort(rng.uniform(size=400))
    basis = build_basis(x)
    lam = solve_lambda_for_df(basis, 20.0)
    assert abs(smoother_matrix(basis, lam).df - 20.0) < 1e-6


def test_solve_lambda_full_df_is_zero():
    basis = build_basis(np.linspace(0, 1, 25))
    assert solve_lambda_for_df(basis, 25.0) == 0.0


def test_solve_lambda_rejects_out_of_range():
    basis = build_basis(np.linspace(0, 1, 25))
    with pytest.raises(ValueError):
        solve_lambda_for_df(basis, 1.5)
    with pytest.raises(ValueError):
        solve_lambda_for_df(basis, 26.0)


def test_shrink_scales_matrix_and_spectrum():
    basis = build_basis(np.linspace(0, 1, 8))
    psi = smoother_matrix(basis, 0.3)
    psi_u = shrink(psi, 0.01)
    assert np.allclose(psi_u.matrix, 0.01 * psi.matrix)
    assert np.allclose(psi_u.eigenvalues, 0.01 * psi.eigenvalues)
    with pytest.raises(ValueError):
        shrink(psi, 0.0)


def test_boost_operator_t0_is_smoother():
    psi = smoother_matrix(build_basis(np.linspace(0, 1, 9)), 0.7)
    assert np.allclose(boost_operator(psi, 0), psi.matrix, atol=1e-10)


def test_boost_operator_complement_power_identity():
    x = np.linspace(0, 1, 11)
    psi = shrink(smoother_matrix(build_basis(x), 0.2), 0.5)
    t = 7
    lhs = np.eye(11) - boost_operator(psi, t)
    rhs = np.linalg.matrix_power(np.eye(11) - psi.matrix, t + 1)
    assert np.allclose(lhs, rhs, atol=1e-10)


def test_boost_operator_fixed_point_for_projection():
    psi = projection_smoother(np.linspace(0, 1, 14))
    for t in [0, 1, 10, 100]:
        assert np.allclose(boost_operator(psi, t), psi.matrix, atol=1e-10)


def test_iterative_boosting_matches_closed_form():
    # f^(k) = f^(k-1) + Psi_u (y - f^(k-1)), f^(0) = Psi_u y, against B^(t) y
    rng = np.random.default_rng(17)
    x = np.sort(rng.uniform(size=40))
    basis = build_basis(x)
    psi_u = shrink(smoother_matrix(basis, solve_lambda_for_df(basis, 12.0)), 0.05)
    y = np.sin(6 * x) + rng.normal(scale=0.3, size=40)
    f = apply_smoother(psi_u, y)
    for t in range(60):
        closed = boost_operator(psi_u, t) @ y
        assert np.max(np.abs(f - closed)) < 1e-8
        f = f + apply_smoother(psi_u, y - f)


def test_residual_contraction():
    rng = np.random.default_rng(23)
    x = np.sort(rng.uniform(size=30))
    psi_u = shrink(smoother_matrix(build_basis(x), 0.4), 0.3)
    shrinkage = np.eye(30) - psi_u.matrix
    for _ in range(20):
        v = rng.normal(size=30)
        assert np.linalg.norm(shrinkage @ v) <= np.linalg.norm(v) + 1e-12


def test_smoother_from_matrix_clamps():
    mat = np.diag([1.2, 0.5, -0.1])
    psi = smoother_from_matrix(mat)
    assert psi.eigenvalues.max() <= 1.0 and psi.eigenvalues.min() >= 0.0


def test_evaluate_spline_interpolates_knots():
    rng = np.random.default_rng(31)
    knots = np.sort(rng.uniform(size=12))
    basis = build_basis(knots)
    theta = rng.normal(size=12)
    assert np.allclose(evaluate_spline(basis, theta, knots), theta, atol=1e-10)


def test_evaluate_spline_matches_reference_inside_range():
    rng = np.random.default_rng(37)
    knots = np.sort(rng.uniform(0, 2, size=10))
    basis = build_basis(knots)
    theta = rng.normal(size=10)
    xs = np.linspace(knots[0], knots[-1], 200)
    ref = CubicSpline(knots, theta, bc_type="natural")(xs)
    assert np.allclose(evaluate_spline(basis, theta, xs), ref, atol=1e-10)


def test_evaluate_spline_linear_outside_range():
    knots = np.linspace(0, 1, 7)
    basis = build_basis(knots)
    theta = np.sin(3 * knots)
    for side_pts in ([-0.5, -0.3, -0.1], [1.1, 1.4, 1.9]):
        pts = np.asarray(side_pts)
        vals = evaluate_spline(basis, theta, pts)
        slopes = np.diff(vals) / np.diff(pts)
        # collinear: single slope on each side of the knot range
        assert abs(slopes[1] - slopes[0]) < 1e-9


def test_evaluate_spline_two_knots_is_line():
    basis = build_basis([0.0, 1.0])
    vals = evaluate_spline(basis, np.array([1.0, 3.0]), np.array([-1.0, 0.25, 2.0]))
    assert np.allclose(vals, [-1.0, 1.5, 5.0])
