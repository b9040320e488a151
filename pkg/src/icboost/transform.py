"""Censoring-unbiased pseudo-responses from conditional survivor curves.

Given a subject's bracket (a, b] and an estimate of S(y | x) on a finite
grid, the k-th conditional moment of g(Y) given Y in the bracket is a
probability-weighted average over the grid cells inside the bracket, with the
surviving tail mass collapsed onto the last grid point for right-censored
subjects. The first two moments (y1, y2) feed two equivalent boosting losses:

    cut:  L(f) = y2/2 - y1*f + f^2/2
    imp:  L(f) = (y1 - f)^2/2

whose difference (y2 - y1^2)/2 does not involve f, so both have gradient
f - y1 and induce the same fits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import SurvivorCurve

_ZERO_MASS = 1e-12
_G_KINDS = ("identity", "log", "threshold")


@dataclass(frozen=True)
class GTransform:
    """Monotone transform of the time scale: identity, log, or sign threshold."""

    kind: str
    threshold: float = math.nan

    def __post_init__(self):
        if self.kind not in _G_KINDS:
            raise ValueError(f"kind must be one of {_G_KINDS}, got {self.kind!r}")
        if self.kind == "threshold" and not math.isfinite(self.threshold):
            raise ValueError("threshold transform needs a finite threshold")

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "identity":
            return v
        if self.kind == "log":
            return np.log(v)
        return np.where(v > self.threshold, 1.0, -1.0)


@dataclass(frozen=True)
class TransformedResponse:
    """First two conditional moments of g(Y) given the observed bracket."""

    y1: float
    y2: float
    bracket_mass: float
    degenerate: bool = False

    def __post_init__(self):
        if self.bracket_mass < 0.0:
            raise ValueError("bracket mass cannot be negative")


def _moment_weights(curve: SurvivorCurve, a: float, b: float):
    """Grid cell values, weights, and total mass inside (a, b]."""
    w = curve.grid.points
    lam = curve.values
    if w.size < 2 and not math.isinf(b):
        return np.array([]), np.array([]), 0.0
    bp = min(b, float(w[-1])) if w.size else b
    if w.size >= 2:
        prev = np.concatenate(([0.0], w[:-2]))
        include = (prev >= a) & (w[:-1] <= bp)
        masses = (lam[:-1] - lam[1:]) * include
        cell_points = w[:-1]
    else:
        masses = np.array([])
        cell_points = np.array([])
    if math.isinf(b) and w.size and a < w[-1]:
        cell_points = np.concatenate([cell_points, w[-1:]])
        masses = np.concatenate([masses, lam[-1:]])
    return cell_points, masses, float(masses.sum()) if masses.size else 0.0


def conditional_moment(curve: SurvivorCurve, bracket, g: GTransform, k: int) -> float:
    """E[{g(Y)}^k | Y in (a, b], x] against the curve's grid discretization.

    A bracket carrying mass below 1e-12 degenerates to a point estimate:
    {g at the truncated right endpoint}^k.
    """
    a, b = float(bracket[0]), float(bracket[1])
    if not (0.0 <= a < b):
        raise ValueError(f"invalid bracket ({a}, {b})")
    if k not in (1, 2):
        raise ValueError(f"moment order must be 1 or 2, got {k}")
    w = curve.grid.points
    if w.size == 0:
        raise ValueError("curve has an empty grid")
    points, masses, total = _moment_weights(curve, a, b)
    bp = min(b, float(w[-1]))
    if total < _ZERO_MASS:
        return float(np.asarray(g(bp), dtype=float) ** k)
    gk = np.asarray(g(points), dtype=float) ** k
    return float(gk @ masses / total)


def transform_response(observation, curve: SurvivorCurve, g: GTransform) -> TransformedResponse:
    """First two moments for one observation's bracket against its curve."""
    a, b = observation.left, observation.right
    points, masses, total = _moment_weights(curve, float(a), float(b))
    w = curve.grid.points
    bp = min(float(b), float(w[-1])) if w.size else float(b)
    if total < _ZERO_MASS:
        g_end = float(np.asarray(g(bp), dtype=float))
        return TransformedResponse(y1=g_end, y2=g_end**2, bracket_mass=total, degenerate=True)
    gv = np.asarray(g(points), dtype=float)
    weights = masses / total
    y1 = float(gv @ weights)
    y2 = float((gv * gv) @ weights)
    return TransformedResponse(y1=y1, y2=y2, bracket_mass=total)


def cut_loss(y1, y2, f):
    """Censoring-unbiased quadratic loss 0.5*y2 - y1*f + 0.5*f^2 (vectorized)."""
    return 0.5 * np.asarray(y2) - np.asarray(y1) * np.asarray(f) + 0.5 * np.asarray(f) ** 2


def imp_loss(y1, f):
    """Imputation loss 0.5*(y1 - f)^2 (vectorized)."""
    return 0.5 * (np.asarray(y1) - np.asarray(f)) ** 2


def loss_gradient(kind: str, y1, f):
    """d/df of either loss: f - y1 (the two differ by an f-free constant)."""
    if kind not in ("cut", "imp"):
        raise ValueError(f"loss kind must be 'cut' or 'imp', got {kind!r}")
    return np.asarray(f) - np.asarray(y1)
