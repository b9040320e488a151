"""Nonparametric survivor estimation from interval-censored brackets.

The NPMLE places probability mass only on the maximal intersections of the
observed brackets (half-open intervals (q, p] whose interior contains no
bracket endpoint); the masses are found by the self-consistency EM fixed
point. Step curves are smoothed by convolving the jump measure with a
Gaussian kernel, which is what downstream conditional-moment formulas
integrate against.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .data import SurvivorCurve, TimeGrid


@dataclass(frozen=True, eq=False)
class TurnbullResult:
    """Support intervals (q, p], their masses, and the induced step curve."""

    support: tuple[tuple[float, float], ...]
    masses: np.ndarray
    curve: SurvivorCurve
    n_iterations: int
    converged: bool
    loglik_trace: np.ndarray


def _maximal_intersections(lefts: np.ndarray, rights: np.ndarray) -> list[tuple[float, float]]:
    # right endpoints sort before left endpoints at ties so that touching
    # brackets like (0,2] and (2,5] yield two disjoint support intervals
    events = [(l, 1) for l in lefts] + [(r, 0) for r in rights]
    events.sort()
    support: list[tuple[float, float]] = []
    pending_left: float | None = None
    for value, kind in events:
        if kind == 1:
            pending_left = value
        elif pending_left is not None:
            support.append((pending_left, value))
            pending_left = None
    return support


def turnbull_npmle(brackets, tol: float = 1e-8, max_iterations: int = 100000) -> TurnbullResult:
    """Self-consistency NPMLE for brackets (l, r], r possibly +inf.

    Mass is attributed to the right endpoint of each support interval when
    building the step curve; a terminal interval with infinite right endpoint
    leaves the curve at its plateau (no information beyond the last visit).
    """
    lefts = np.array([float(l) for l, _ in brackets])
    rights = np.array([float(r) for _, r in brackets])
    n = lefts.size
    if n == 0:
        raise ValueError("need at least one bracket")
    if np.any(lefts < 0.0) or np.any(rights <= lefts):
        raise ValueError("brackets must satisfy 0 <= left < right")
    support = _maximal_intersections(lefts, rights)
    q = np.array([s[0] for s in support])
    p = np.array([s[1] for s in support])
    alpha = (q[None, :] >= lefts[:, None]) & (p[None, :] <= rights[:, None])
    if not np.all(alpha.any(axis=1)):
        raise RuntimeError("a bracket contains no support interval")
    a = alpha.astype(float)
    j = len(support)
    masses = np.full(j, 1.0 / j)
    logliks: list[float] = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        denom = a @ masses
        logliks.append(float(np.sum(np.log(denom))))
        new = masses * (a.T @ (1.0 / denom)) / n
        delta = float(np.max(np.abs(new - masses)))
        masses = new
        if delta < tol:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"self-consistency EM did not converge in {max_iterations} iterations "
            f"(last mass change {delta:.3e})",
            RuntimeWarning,
        )
    masses = masses / masses.sum()
    finite = np.isfinite(p)
    cum = np.cumsum(masses)
    curve = SurvivorCurve(
        TimeGrid(p[finite]),
        np.clip(1.0 - cum[finite], 0.0, 1.0),
        "step",
    )
    return TurnbullResult(
        support=tuple(support),
        masses=masses,
        curve=curve,
        n_iterations=iterations,
        converged=converged,
        loglik_trace=np.asarray(logliks),
    )


def kernel_smooth(curve: SurvivorCurve, h: float, eval_grid: TimeGrid) -> SurvivorCurve:
    """Gaussian-kernel smoothing of a step survivor curve.

    lambda(y) = 1 + sum_j dS_j [Phi((y - v_j)/h) - Phi((0 - v_j)/h)] over the
    jump points v_j with (negative) jumps dS_j, clamped to [0, 1] and made
    nonincreasing by a cumulative minimum.
    """
    if not (h > 0.0) or not math.isfinite(h):
        raise ValueError(f"bandwidth must be positive and finite, got {h}")
    y = eval_grid.points
    pts = curve.grid.points
    if pts.size == 0:
        return SurvivorCurve(eval_grid, np.ones_like(y), "smoothed")
    drops = np.diff(np.concatenate(([1.0], curve.values)))
    base = norm.cdf(-pts / h)
    lam = 1.0 + (norm.cdf((y[:, None] - pts[None, :]) / h) - base[None, :]) @ drops
    lam = np.minimum.accumulate(np.clip(lam, 0.0, 1.0))
    return SurvivorCurve(eval_grid, lam, "smoothed")


def _crossing_time(curve: SurvivorCurve, level: float) -> float | None:
    below = curve.values <= level
    if not below.any():
        return None
    return float(curve.grid.points[int(np.argmax(below))])


def default_bandwidth(curve: SurvivorCurve, n_min: int = 6) -> float:
    """h = c * n_min^(-1/5) with c the inter-quartile range of the curve.

    Quartiles come from step inversion (first time the curve is <= 0.75 and
    <= 0.25). When the curve never spans the quartiles, c falls back to the
    grid range (flagged with a warning).
    """
    if n_min < 1:
        raise ValueError(f"n_min must be >= 1, got {n_min}")
    q_lo = _crossing_time(curve, 0.75)
    q_hi = _crossing_time(curve, 0.25)
    c = (q_hi - q_lo) if (q_lo is not None and q_hi is not None) else 0.0
    if c <= 0.0:
        pts = curve.grid.points
        c = float(pts[-1] - pts[0]) if pts.size >= 2 else 0.0
        if c <= 0.0:
            c = 1.0
        warnings.warn(
            "degenerate inter-quartile range; falling back to grid range for bandwidth",
            RuntimeWarning,
        )
    return c * float(n_min) ** (-0.2)
