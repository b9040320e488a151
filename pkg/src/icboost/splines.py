"""Natural cubic smoothing splines as linear smoother matrices.

The smoother is built on the distinct sorted knots in value space: the basis
is the cardinal one (basis matrix = identity, coefficients = fitted values at
the knots) and the penalty is the exact integrated squared second derivative
of the natural cubic interpolant, assembled from knot gaps as
Omega = Delta^T W^-1 Delta. The fitted-value operator is then
Psi(lambda) = (I + lambda * Omega)^-1, symmetric with eigenvalues in (0, 1],
and Trace(Psi) is the effective degrees of freedom, strictly decreasing in
lambda from n down to 2 (the constant + linear null space of the penalty).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh, solveh_banded

_BISECT_LO = 1e-12
_BISECT_HI = 1e12
_DF_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class SplineBasis:
    """Cardinal natural-spline basis on distinct sorted knots.

    penalty_eigenvalues/-vectors are the eigendecomposition of penalty_matrix
    (ascending), computed once so that smoother construction and df
    calibration are cheap.
    """

    knots: np.ndarray
    basis_matrix: np.ndarray
    penalty_matrix: np.ndarray
    penalty_eigenvalues: np.ndarray
    penalty_eigenvectors: np.ndarray

    @property
    def n_knots(self) -> int:
        return self.knots.size


@dataclass(frozen=True, eq=False)
class SmootherMatrix:
    """Symmetric linear smoother with its eigendecomposition (descending)."""

    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    lam: float
    shrink: float = 1.0

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def df(self) -> float:
        return float(np.trace(self.matrix))


def build_basis(x) -> SplineBasis:
    """Penalty and cardinal basis for strictly increasing knots."""
    knots = np.asarray(x, dtype=float)
    if knots.ndim != 1 or knots.size < 1:
        raise ValueError("need at least one knot")
    if not np.all(np.isfinite(knots)):
        raise ValueError("knots must be finite")
    if np.any(np.diff(knots) <= 0.0):
        raise ValueError("knots must be strictly increasing and distinct")
    n = knots.size
    if n <= 2:
        omega = np.zeros((n, n))
    else:
        h = np.diff(knots)
        m = n - 2
        delta = np.zeros((m, n))
        rows = np.arange(m)
        delta[rows, rows] = 1.0 / h[:-1]
        delta[rows, rows + 1] = -1.0 / h[:-1] - 1.0 / h[1:]
        delta[rows, rows + 2] = 1.0 / h[1:]
        # W: symmetric tridiagonal Gram matrix of the second-derivative hat basis
        if m == 1:
            z = delta / ((h[0] + h[1]) / 3.0)
        else:
            ab = np.zeros((2, m))
            ab[1] = (h[:-1] + h[1:]) / 3.0
            ab[0, 1:] = h[1:-1] / 6.0
            z = solveh_banded(ab, delta, lower=False)
        omega = delta.T @ z
        omega = 0.5 * (omega + omega.T)
    evals, evecs = eigh(omega)
    return SplineBasis(
        knots=knots,
        basis_matrix=np.eye(n),
        penalty_matrix=omega,
        penalty_eigenvalues=np.clip(evals, 0.0, None),
        penalty_eigenvectors=evecs,
    )


def smoother_matrix(basis: SplineBasis, lam: float) -> SmootherMatrix:
    """Psi(lambda) = (I + lambda * Omega)^-1 with clamped spectrum."""
    if not (lam >= 0.0) or not math.isfinite(lam):
        raise ValueError(f"lambda must be >= 0 and finite, got {lam}")
    n = basis.n_knots
    if lam == 0.0:
        return SmootherMatrix(
            matrix=np.eye(n),
            eigenvalues=np.ones(n),
            eigenvectors=np.eye(n),
            lam=0.0,
        )
    # penalty eigenvalues ascend, so these smoother eigenvalues descend
    s = np.clip(1.0 / (1.0 + lam * basis.penalty_eigenvalues), 0.0, 1.0)
    v = basis.penalty_eigenvectors
    mat = (v * s) @ v.T
    mat = 0.5 * (mat + mat.T)
    return SmootherMatrix(matrix=mat, eigenvalues=s, eigenvectors=v, lam=float(lam))


def smoother_from_matrix(mat: np.ndarray, lam: float = float("nan")) -> SmootherMatrix:
    """Wrap an arbitrary symmetric contraction (e.g. a projection hat matrix)."""
    m = np.asarray(mat, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("smoother must be square")
    m = 0.5 * (m + m.T)
    evals, evecs = eigh(m)
    evals = np.clip(evals, 0.0, 1.0)[::-1]
    evecs = evecs[:, ::-1]
    return SmootherMatrix(
        matrix=(evecs * evals) @ evecs.T,
        eigenvalues=evals,
        eigenvectors=evecs,
        lam=lam,
    )


def projection_smoother(x) -> SmootherMatrix:
    """Hat matrix of least squares on [1, x]: idempotent, eigenvalues {1, 0}."""
    xv = np.asarray(x, dtype=float)
    a = np.column_stack([np.ones_like(xv), xv])
    q, _ = np.linalg.qr(a)
    return smoother_from_matrix(q @ q.T)


def lambda_for_trace(eigenvalues, df: float) -> float:
    """Invert the monotone map lambda -> Sum 1/(1 + lambda*k) by bisection.

    Valid targets lie in (2, n]; df = n returns 0 (identity smoother). The
    returned lambda satisfies |trace - df| < 1e-6.
    """
    k = np.asarray(eigenvalues, dtype=float)
    n = k.size
    if not (2.0 < df <= n + 1e-9):
        raise ValueError(f"df must lie in (2, {n}], got {df}")

    def trace(lam: float) -> float:
        return float(np.sum(1.0 / (1.0 + lam * k)))

    if df >= trace(_BISECT_LO):
        return 0.0
    if df <= trace(_BISECT_HI):
        raise ValueError(f"df = {df} unreachable within lambda <= {_BISECT_HI}")
    lo, hi = _BISECT_LO, _BISECT_HI
    for _ in range(500):
        mid = math.sqrt(lo * hi)
        t = trace(mid)
        if abs(t - df) < _DF_TOL:
            return mid
        if t > df:
            lo = mid
        else:
            hi = mid
    raise RuntimeError(f"df bisection did not reach tolerance {_DF_TOL}")


def solve_lambda_for_df(basis: SplineBasis, df: float) -> float:
    """lambda_for_trace applied to a basis's penalty spectrum."""
    return lambda_for_trace(basis.penalty_eigenvalues, df)


def shrink(psi: SmootherMatrix, u: float) -> SmootherMatrix:
    """Scale the smoother by u in (0, 1]: Psi_u = u * Psi."""
    if not (0.0 < u <= 1.0):
        raise ValueError(f"shrink factor must be in (0, 1], got {u}")
    return SmootherMatrix(
        matrix=u * psi.matrix,
        eigenvalues=u * psi.eigenvalues,
        eigenvectors=psi.eigenvectors,
        lam=psi.lam,
        shrink=psi.shrink * u,
    )


def boost_operator(psi: SmootherMatrix, t: int) -> np.ndarray:
    """Fitted-value operator after t rounds: B^(t) = I - (I - Psi)^(t+1).

    Computed spectrally, so t may be arbitrarily large. t = 0 gives Psi
    itself; an idempotent Psi gives B^(t) = Psi for every t.
    """
    if t < 0 or int(t) != t:
        raise ValueError(f"t must be a nonnegative integer, got {t}")
    b_eigs = 1.0 - (1.0 - psi.eigenvalues) ** (t + 1)
    v = psi.eigenvectors
    mat = (v * b_eigs) @ v.T
    return 0.5 * (mat + mat.T)


def apply_smoother(psi: SmootherMatrix, values: np.ndarray) -> np.ndarray:
    return psi.matrix @ np.asarray(values, dtype=float)


def _natural_second_derivatives(knots: np.ndarray, values: np.ndarray) -> np.ndarray:
    n = knots.size
    m2 = np.zeros(n)
    if n < 3:
        return m2
    h = np.diff(knots)
    rhs = np.diff(values[1:]) / h[1:] - np.diff(values[:-1]) / h[:-1]
    if n == 3:
        m2[1] = rhs[0] / ((h[0] + h[1]) / 3.0)
        return m2
    ab = np.zeros((2, n - 2))
    ab[1] = (h[:-1] + h[1:]) / 3.0
    ab[0, 1:] = h[1:-1] / 6.0
    m2[1:-1] = solveh_banded(ab, rhs, lower=False)
    return m2


def evaluate_spline(basis: SplineBasis, coefficients: np.ndarray, x_new) -> np.ndarray:
    """Natural cubic interpolation of knot values, linear beyond the knot range."""
    theta = np.asarray(coefficients, dtype=float)
    if theta.shape != (basis.n_knots,):
        raise ValueError("coefficients must have one value per knot")
    x = np.asarray(x_new, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    knots = basis.knots
    n = knots.size
    out = np.empty_like(x)
    if n == 1:
        out = np.full_like(x, theta[0])
        return float(out[0]) if scalar else out
    if n == 2:
        slope = (theta[1] - theta[0]) / (knots[1] - knots[0])
        out = theta[0] + (x - knots[0]) * slope
        return float(out[0]) if scalar else out
    m2 = _natural_second_derivatives(knots, theta)
    h = np.diff(knots)
    idx = np.clip(np.searchsorted(knots, x, side="right") - 1, 0, n - 2)
    hi = h[idx]
    a = (knots[idx + 1] - x) / hi
    b = 1.0 - a
    inside = (x >= knots[0]) & (x <= knots[-1])
    cube = (
        a * theta[idx]
        + b * theta[idx + 1]
        + ((a**3 - a) * m2[idx] + (b**3 - b) * m2[idx + 1]) * hi**2 / 6.0
    )
    slope_left = (theta[1] - theta[0]) / h[0] - h[0] * m2[1] / 6.0
    slope_right = (theta[-1] - theta[-2]) / h[-1] + h[-1] * m2[-2] / 6.0
    left = theta[0] + (x - knots[0]) * slope_left
    right = theta[-1] + (x - knots[-1]) * slope_right
    out = np.where(inside, cube, np.where(x < knots[0], left, right))
    return float(out[0]) if scalar else out
