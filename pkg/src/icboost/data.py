"""Core containers for interval-censored observations and survivor curves.

An observation is a covariate vector plus a half-open bracket (L, R] known to
contain the latent event time; R is +inf when the subject was still event-free
at the last monitoring visit. Survivor curves are represented on finite time
grids, either as right-continuous step functions (NPMLE output) or as smoothed
curves evaluated by linear interpolation with the implicit anchor S(0) = 1.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

INF = math.inf

_CURVE_KINDS = ("step", "smoothed")


@dataclass(frozen=True, eq=False)
class IntervalObservation:
    """One subject: covariates and the bracket (left, right] holding the event."""

    features: np.ndarray
    left: float
    right: float
    monitoring_times: tuple[float, ...] | None = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        if feats.ndim != 1:
            raise ValueError("features must be a 1-d vector")
        if not np.all(np.isfinite(feats)):
            raise ValueError("features must be finite")
        object.__setattr__(self, "features", feats)
        if not (self.left >= 0.0):
            raise ValueError(f"left endpoint must be >= 0, got {self.left}")
        if not (self.right > self.left):
            raise ValueError(
                f"degenerate bracket: need left < right, got ({self.left}, {self.right})"
            )


@dataclass(frozen=True, eq=False)
class Dataset:
    """A fixed collection of observations sharing a feature dimension and horizon tau."""

    observations: tuple[IntervalObservation, ...]
    feature_dim: int
    tau: float
    truth_y: np.ndarray | None = field(default=None)
    truth_phi: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if not (self.tau > 0.0) or not math.isfinite(self.tau):
            raise ValueError(f"tau must be positive and finite, got {self.tau}")
        for i, obs in enumerate(self.observations):
            if obs.features.shape[0] != self.feature_dim:
                raise ValueError(
                    f"observation {i} has {obs.features.shape[0]} features, "
                    f"expected {self.feature_dim}"
                )
        for name in ("truth_y", "truth_phi"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=float)
                if arr.shape != (len(self.observations),):
                    raise ValueError(f"{name} must have one entry per observation")
                object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return len(self.observations)

    def feature_matrix(self) -> np.ndarray:
        if self.n == 0:
            return np.empty((0, self.feature_dim))
        return np.vstack([obs.features for obs in self.observations])

    def lefts(self) -> np.ndarray:
        return np.array([obs.left for obs in self.observations])

    def rights(self) -> np.ndarray:
        return np.array([obs.right for obs in self.observations])


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing, finite, nonnegative evaluation times."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1:
            raise ValueError("grid points must be a 1-d vector")
        if pts.size and not np.all(np.isfinite(pts)):
            raise ValueError("grid points must be finite")
        if pts.size and pts[0] < 0.0:
            raise ValueError("grid points must be >= 0")
        if pts.size > 1 and not np.all(np.diff(pts) > 0.0):
            raise ValueError("grid points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.size


@dataclass(frozen=True, eq=False)
class SurvivorCurve:
    """S(t) on a finite grid; step (right-continuous) or smoothed (piecewise linear)."""

    grid: TimeGrid
    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in _CURVE_KINDS:
            raise ValueError(f"kind must be one of {_CURVE_KINDS}, got {self.kind!r}")
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (len(self.grid),):
            raise ValueError("values must match the grid length")
        if vals.size:
            if vals.min() < -1e-12 or vals.max() > 1.0 + 1e-12:
                raise ValueError("survivor values must lie in [0, 1]")
            if np.any(np.diff(vals) > 1e-12):
                raise ValueError("survivor values must be nonincreasing")
        object.__setattr__(self, "values", np.clip(vals, 0.0, 1.0))


def survivor_eval(curve: SurvivorCurve, times) -> np.ndarray:
    """Evaluate S at the given times (scalar or array), honoring S(0) = 1.

    Step curves are right-continuous: the value at a jump point is the value
    after the drop. Smoothed curves interpolate linearly between grid points
    and between the implicit anchor (0, 1) and the first grid point. Beyond
    the grid the last value is held.
    """
    t = np.asarray(times, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    if np.any(t < 0.0):
        raise ValueError("evaluation times must be >= 0")
    pts = curve.grid.points
    if pts.size == 0:
        out = np.ones_like(t)
        return float(out[0]) if scalar else out
    if curve.kind == "step":
        idx = np.searchsorted(pts, t, side="right") - 1
        out = np.where(idx < 0, 1.0, curve.values[np.clip(idx, 0, pts.size - 1)])
    else:
        if pts[0] > 0.0:
            xp = np.concatenate(([0.0], pts))
            fp = np.concatenate(([1.0], curve.values))
        else:
            xp, fp = pts, curve.values
        out = np.interp(t, xp, fp)
    return float(out[0]) if scalar else out


def bracket_from_monitoring(y: float, monitoring_times) -> tuple[float, float]:
    """Bracket (u_{j-1}, u_j] containing y, with u_0 = 0 and (u_m, inf) past the last visit.

    A tie y == u_j lands in (u_{j-1}, u_j].
    """
    if not (y > 0.0):
        raise ValueError(f"event time must be positive, got {y}")
    u = np.asarray(monitoring_times, dtype=float)
    if u.size == 0:
        return (0.0, INF)
    if np.any(u <= 0.0) or not np.all(np.isfinite(u)):
        raise ValueError("monitoring times must be positive and finite")
    if u.size > 1 and np.any(np.diff(u) <= 0.0):
        raise ValueError("monitoring times must be strictly increasing")
    j = int(np.searchsorted(u, y, side="left"))
    if j == u.size:
        return (float(u[-1]), INF)
    left = 0.0 if j == 0 else float(u[j - 1])
    return (left, float(u[j]))


def distinct_endpoint_grid(dataset: Dataset) -> TimeGrid:
    """Sorted distinct finite bracket endpoints, excluding 0 and +inf."""
    vals = []
    for obs in dataset.observations:
        if obs.left > 0.0:
            vals.append(obs.left)
        if math.isfinite(obs.right):
            vals.append(obs.right)
    return TimeGrid(np.unique(np.asarray(vals, dtype=float)))


def _format_float(x: float) -> str:
    if math.isinf(x):
        return "inf"
    return repr(float(x))


def save_dataset(dataset: Dataset, path) -> None:
    """Write id,left,right,x1..xp[,y,phi] rows; right-censored rows carry 'inf'."""
    p = dataset.feature_dim
    header = ["id", "left", "right"] + [f"x{j + 1}" for j in range(p)]
    with_truth = dataset.truth_y is not None and dataset.truth_phi is not None
    if with_truth:
        header += ["y", "phi"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i, obs in enumerate(dataset.observations):
            row = [str(i), _format_float(obs.left), _format_float(obs.right)]
            row += [_format_float(v) for v in obs.features]
            if with_truth:
                row += [_format_float(dataset.truth_y[i]), _format_float(dataset.truth_phi[i])]
            writer.writerow(row)


def load_dataset(path, tau: float | None = None) -> Dataset:
    """Read a dataset written by save_dataset.

    tau defaults to the largest finite time in the file when not given.
    Malformed rows (non-numeric fields, right <= left, wrong arity) raise
    ValueError naming the offending line.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        base = ["id", "left", "right"]
        if header[: len(base)] != base:
            raise ValueError(f"{path}: header must start with {base}, got {header[:3]}")
        rest = header[len(base):]
        has_truth = rest[-2:] == ["y", "phi"]
        x_cols = rest[:-2] if has_truth else rest
        expected_x = [f"x{j + 1}" for j in range(len(x_cols))]
        if x_cols != expected_x:
            raise ValueError(f"{path}: feature columns must be x1..xp, got {x_cols}")
        p = len(x_cols)
        obs_list: list[IntervalObservation] = []
        ys: list[float] = []
        phis: list[float] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                left = float(row[1])
                right = INF if row[2].strip().lower() == "inf" else float(row[2])
                feats = np.array([float(v) for v in row[3 : 3 + p]])
                if has_truth:
                    ys.append(float(row[3 + p]))
                    phis.append(float(row[4 + p]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric field ({exc})") from None
            try:
                obs_list.append(IntervalObservation(feats, left, right))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if tau is None:
        finite = [o.right for o in obs_list if math.isfinite(o.right)]
        finite += [o.left for o in obs_list if o.left > 0.0]
        finite += ys
        if not finite:
            raise ValueError(f"{path}: cannot infer tau, provide it explicitly")
        tau = max(finite)
    return Dataset(
        observations=tuple(obs_list),
        feature_dim=p,
        tau=float(tau),
        truth_y=np.asarray(ys) if has_truth else None,
        truth_phi=np.asarray(phis) if has_truth else None,
    )
