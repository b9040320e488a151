"""Componentwise L2 boosting with smoothing-spline base learners.

The fitter starts from the best unshrunken componentwise spline fit of the
working response, then repeatedly fits the current residual with each
feature's smoother, keeps the feature with the smallest residual sum of
squares, and adds a shrunken copy of that fit. Training stops the first time
consecutive mean losses differ by at most n^(-w); the returned model is the
iterate one step before the stop. Classification mode clamps the fitted
values into [-1, 1] after the initial fit and after every increment, and
prediction replays those clamps in order.

Single-feature regression runs in the smoother's eigenbasis, where the whole
iteration path has a closed form; the dense loop is used whenever clamping
or feature selection makes the path nonlinear.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .splines import SplineBasis, SmootherMatrix, build_basis, evaluate_spline, lambda_for_trace

_TASKS = ("regression", "classification")
_MODES = ("cut", "imp")
_BLOCK = 4096


def clamp(values):
    """sign(v) * min(1, |v|) elementwise, i.e. clipping into [-1, 1]."""
    out = np.clip(np.asarray(values, dtype=float), -1.0, 1.0)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class BoostConfig:
    mode: str = "cut"
    task: str = "regression"
    df: float = 20.0
    shrink_u: float = 0.01
    stop_w: float = 5.0
    max_iterations: int = 100_000
    # complete-data reference fits keep f^(stop) instead of f^(stop-1)
    keep_final_iterate: bool = False

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}")
        if self.task not in _TASKS:
            raise ValueError(f"task must be one of {_TASKS}")
        if not self.df > 2.0:
            raise ValueError("df must exceed 2")
        if not (0.0 < self.shrink_u <= 1.0):
            raise ValueError("shrink_u must be in (0, 1]")
        if self.stop_w < 1.0:
            raise ValueError("stop_w must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(eq=False)
class FeatureSmoother:
    """Penalized cardinal-spline smoother for one feature column.

    Duplicate feature values share a knot; everything runs in the
    count-whitened eigenbasis, where the trace of the induced smoother on
    training rows equals sum(shrinkage), matching the df target.
    """

    feature: int
    basis: SplineBasis
    index: np.ndarray
    counts: np.ndarray
    lam: float
    df: float
    eigenvalues: np.ndarray
    vectors: np.ndarray
    shrinkage: np.ndarray
    sqrt_counts: np.ndarray = field(init=False)

    def __post_init__(self):
        self.sqrt_counts = np.sqrt(self.counts)

    @property
    def n_knots(self) -> int:
        return self.basis.n_knots

    def project(self, values: np.ndarray) -> np.ndarray:
        """Whitened spectral coordinates of the aggregated response."""
        z = np.bincount(self.index, weights=values, minlength=self.n_knots)
        return self.vectors.T @ (z / self.sqrt_counts)

    def knot_values(self, spectral: np.ndarray) -> np.ndarray:
        return (self.vectors @ spectral) / self.sqrt_counts

    def fit_knot_values(self, values: np.ndarray) -> np.ndarray:
        """Unshrunken penalized fit, returned as knot values."""
        return self.knot_values(self.shrinkage * self.project(values))


def build_feature_smoother(feature: int, x_col: np.ndarray, df: float) -> FeatureSmoother:
    vals = np.asarray(x_col, dtype=float)
    knots, index = np.unique(vals, return_inverse=True)
    counts = np.bincount(index).astype(float)
    basis = build_basis(knots)
    q = knots.size
    sq = np.sqrt(counts)
    omega = basis.penalty_matrix / np.outer(sq, sq)
    omega = 0.5 * (omega + omega.T)
    eigs, vecs = np.linalg.eigh(omega)
    eigs = np.clip(eigs, 0.0, None)
    df_eff = min(df, float(q))
    if df_eff >= q - 1e-9 or q <= 2:
        lam = 0.0
    else:
        lam = lambda_for_trace(eigs, df_eff)
    shrinkage = np.clip(1.0 / (1.0 + lam * eigs), 0.0, 1.0)
    return FeatureSmoother(
        feature=feature,
        basis=basis,
        index=index,
        counts=counts,
        lam=lam,
        df=df_eff,
        eigenvalues=eigs,
        vectors=vecs,
        shrinkage=shrinkage,
    )


def componentwise_select(residual: np.ndarray, smoothers) -> tuple[int, np.ndarray]:
    """Pick the feature whose unshrunken spline fit leaves the smallest RSS.

    Returns (feature position, knot values of the fit); ties go to the
    lowest position.
    """
    best_pos, best_rss, best_spec = 0, math.inf, None
    rr = float(residual @ residual)
    for pos, sm in enumerate(smoothers):
        b = sm.project(residual)
        s = sm.shrinkage
        # ||r - C theta||^2 = ||r||^2 - 2 sum(s b^2) + sum(s^2 b^2)
        rss = rr - 2.0 * float(s @ (b * b)) + float((s * s) @ (b * b))
        if rss < best_rss - 0.0:
            best_pos, best_rss, best_spec = pos, rss, s * b
    sm = smoothers[best_pos]
    return best_pos, sm.knot_values(best_spec)


class _SpectralIncrements:
    """Lazy increment sequence for the single-feature regression path.

    Increment t (1-based) has knot values knot_values(s * (1-u*s)^(t-1) *
    rho0), with rho0 the spectral residual left by the initial fit. Only
    O(n_knots) state is stored; items materialize on demand.
    """

    def __init__(self, smoother: FeatureSmoother, rho0: np.ndarray, u: float, length: int):
        self.smoother = smoother
        self.rho0 = rho0
        self.u = u
        self.length = length

    def __len__(self) -> int:
        return self.length

    def _coef(self, t: int) -> np.ndarray:
        s = self.smoother.shrinkage
        decay = (1.0 - self.u * s) ** t
        return self.smoother.knot_values(s * decay * self.rho0)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(self.length))]
        if i < 0:
            i += self.length
        if not (0 <= i < self.length):
            raise IndexError("increment index out of range")
        return self.smoother.feature, self._coef(i)

    def summed(self) -> np.ndarray:
        """Sum of all increment coefficient vectors in closed form."""
        s = self.smoother.shrinkage
        us = self.u * s
        t = float(self.length)
        total = np.where(us > 0.0, (1.0 - (1.0 - us) ** t) / np.maximum(us, 1e-300), t)
        return self.smoother.knot_values(s * total * self.rho0)


@dataclass(eq=False)
class BoostModel:
    config: BoostConfig
    feature_dim: int
    smoothers: list[FeatureSmoother]
    init_feature: int
    init_coef: np.ndarray
    increments: object
    stop_iteration: int
    capped: bool
    risk_trace: np.ndarray
    fitted_train: np.ndarray
    collapsed: dict[int, np.ndarray]

    @property
    def n_increments(self) -> int:
        return len(self.increments)


def _risk(mode, y1, y2, f):
    if mode == "cut":
        return float(np.mean(0.5 * y2 - y1 * f + 0.5 * f * f))
    return float(np.mean(0.5 * (y1 - f) ** 2))


def _collapse(increments, smoothers) -> dict[int, np.ndarray]:
    if isinstance(increments, _SpectralIncrements):
        if len(increments) == 0:
            return {}
        return {increments.smoother.feature: increments.summed()}
    out: dict[int, np.ndarray] = {}
    for feat, coef in increments:
        if feat in out:
            out[feat] = out[feat] + coef
        else:
            out[feat] = coef.copy()
    return out


def _fit_spectral(smoother, y1, const_term, eta, config):
    """Closed-form path for p = 1 regression.

    In whitened spectral coordinates the fit after t rounds is
    b - (1-u*s)^t * rho0, and both mean losses equal
    const_term - ||b||^2/(2n) + B(t)/(2n) with
    B(t) = sum(rho0^2 * (1-u*s)^(2t)), so the whole risk trace and the
    first crossing of eta come from geometric power sums.
    """
    n = y1.size
    u = config.shrink_u
    b = smoother.project(y1)
    s = smoother.shrinkage
    rho0 = (1.0 - s) * b
    base_risk = const_term - float(b @ b) / (2.0 * n)
    decay = (1.0 - u * s) ** 2
    weights = rho0 * rho0

    risks = [base_risk + float(np.sum(weights)) / (2.0 * n)]
    stop = None
    start = 0
    while start < config.max_iterations and stop is None:
        block = min(_BLOCK, config.max_iterations - start)
        powers = np.arange(start + 1, start + block + 1, dtype=float)
        bsums = np.power(decay[None, :], powers[:, None]) @ weights
        block_risks = base_risk + bsums / (2.0 * n)
        diffs = np.abs(np.diff(np.concatenate(([risks[-1]], block_risks))))
        hits = np.nonzero(diffs <= eta)[0]
        if hits.size:
            cut = int(hits[0])
            risks.extend(block_risks[: cut + 1].tolist())
            stop = start + cut + 1
        else:
            risks.extend(block_risks.tolist())
            start += block
    capped = stop is None
    if capped:
        stop = config.max_iterations
    estimator_t = stop if config.keep_final_iterate else stop - 1
    kept = stop if config.keep_final_iterate else stop - 1
    increments = _SpectralIncrements(smoother, rho0, u, kept)
    phi = b - (1.0 - u * s) ** float(estimator_t) * rho0
    fitted = smoother.knot_values(phi)[smoother.index]
    return increments, stop, capped, np.asarray(risks), fitted


def _fit_dense(smoothers, y1, y2, eta, config, f0):
    n = y1.size
    u = config.shrink_u
    mode = config.mode
    task = config.task
    f = f0.copy()
    risks = [_risk(mode, y1, y2, f)]
    incs: list[tuple[int, np.ndarray]] = []
    f_prev = f0.copy()
    stop = None
    for t in range(1, config.max_iterations + 1):
        residual = y1 - f
        if len(smoothers) == 1:
            feat, theta = 0, smoothers[0].fit_knot_values(residual)
        else:
            feat, theta = componentwise_select(residual, smoothers)
        f_prev = f
        f = f + u * theta[smoothers[feat].index]
        if task == "classification":
            f = clamp(f)
        incs.append((feat, theta))
        risks.append(_risk(mode, y1, y2, f))
        if abs(risks[-1] - risks[-2]) <= eta:
            stop = t
            break
    capped = stop is None
    if capped:
        stop = config.max_iterations
    if config.keep_final_iterate:
        fitted = f
    else:
        incs.pop()
        fitted = f_prev
    return incs, stop, capped, np.asarray(risks), fitted


def fit_boost(x_mat, y1, config: BoostConfig, y2=None) -> BoostModel:
    """Componentwise boosting of the transformed response.

    y2 (the second conditional moment) only enters the CUT stopping
    criterion; the gradients are identical for both modes.
    """
    x_mat = np.asarray(x_mat, dtype=float)
    if x_mat.ndim == 1:
        x_mat = x_mat[:, None]
    y1 = np.asarray(y1, dtype=float)
    n, p = x_mat.shape
    if n < 3:
        raise ValueError("need at least 3 observations")
    if y1.shape != (n,) or not np.all(np.isfinite(y1)):
        raise ValueError("y1 must be a finite vector matching x rows")
    if config.mode == "cut":
        if y2 is None:
            raise ValueError("cut mode needs the second-moment vector y2")
        y2 = np.asarray(y2, dtype=float)
        if y2.shape != (n,) or not np.all(np.isfinite(y2)):
            raise ValueError("y2 must be a finite vector matching x rows")
    else:
        y2 = np.zeros(n)

    smoothers = [build_feature_smoother(j, x_mat[:, j], config.df) for j in range(p)]
    init_feature, init_coef = componentwise_select(y1, smoothers)
    f0 = init_coef[smoothers[init_feature].index]
    if config.task == "classification":
        f0 = clamp(f0)
    eta = float(n) ** (-config.stop_w)

    if p == 1 and config.task == "regression":
        const = float(np.mean(0.5 * y2)) if config.mode == "cut" else float(np.mean(0.5 * y1 * y1))
        increments, stop, capped, risks, fitted = _fit_spectral(
            smoothers[0], y1, const, eta, config
        )
    else:
        increments, stop, capped, risks, fitted = _fit_dense(
            smoothers, y1, y2, eta, config, f0
        )
    if capped:
        warnings.warn(
            f"stopping rule not met within {config.max_iterations} iterations",
            RuntimeWarning,
        )
    return BoostModel(
        config=config,
        feature_dim=p,
        smoothers=smoothers,
        init_feature=init_feature,
        init_coef=init_coef,
        increments=increments,
        stop_iteration=stop,
        capped=capped,
        risk_trace=risks,
        fitted_train=fitted,
        collapsed=_collapse(increments, smoothers),
    )


def _eval_matrix(basis: SplineBasis, xs: np.ndarray) -> np.ndarray:
    """Rows j: the spline through unit knot vector e_j evaluated at xs."""
    q = basis.n_knots
    out = np.empty((q, xs.size))
    for j in range(q):
        e = np.zeros(q)
        e[j] = 1.0
        out[j] = evaluate_spline(basis, e, xs)
    return out


def predict_boost(model: BoostModel, x_new) -> np.ndarray:
    """Evaluate the boosted fit at new feature rows.

    Regression sums per-feature collapsed increments (the path is linear);
    classification replays every clamp in training order.
    """
    x = np.asarray(x_new, dtype=float)
    scalar_rows = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.feature_dim:
        raise ValueError(f"expected {model.feature_dim} features, got {x.shape[1]}")
    u = model.config.shrink_u
    init_sm = model.smoothers[model.init_feature]
    f = evaluate_spline(init_sm.basis, model.init_coef, x[:, init_sm.feature])
    f = np.atleast_1d(f)
    if model.config.task == "classification":
        f = clamp(f)
        mats = {}
        for feat, coef in model.increments:
            sm = model.smoothers[feat]
            if feat not in mats:
                mats[feat] = _eval_matrix(sm.basis, x[:, sm.feature])
            f = clamp(f + u * (coef @ mats[feat]))
    else:
        for feat, coef in model.collapsed.items():
            sm = model.smoothers[feat]
            vals = np.atleast_1d(evaluate_spline(sm.basis, coef, x[:, sm.feature]))
            f = f + u * vals
    return f[0] if scalar_rows and f.size == 1 else f


def pure_l2boost_path(psi: SmootherMatrix, y, u: float, t_max: int) -> np.ndarray:
    """Iterates of the plain recursion f^(t+1) = f^(t) + u*Psi(y - f^(t)).

    Starts from f^(0) = u*Psi*y, so row t equals (I - (I - u*Psi)^(t+1)) y
    exactly; returned array has t_max + 1 rows.
    """
    y = np.asarray(y, dtype=float)
    mat = u * psi.matrix
    out = np.empty((t_max + 1, y.size))
    f = mat @ y
    out[0] = f
    for t in range(1, t_max + 1):
        f = f + mat @ (y - f)
        out[t] = f
    return out


def save_model(model: BoostModel, path) -> None:
    """Write the model to an npz file sufficient for bit-exact predict."""
    spectral = isinstance(model.increments, _SpectralIncrements)
    meta = {
        "version": 1,
        "kind": "spectral" if spectral else "dense",
        "mode": model.config.mode,
        "task": model.config.task,
        "df": model.config.df,
        "shrink_u": model.config.shrink_u,
        "stop_w": model.config.stop_w,
        "max_iterations": model.config.max_iterations,
        "keep_final_iterate": model.config.keep_final_iterate,
        "feature_dim": model.feature_dim,
        "init_feature": model.init_feature,
        "stop_iteration": model.stop_iteration,
        "capped": model.capped,
        "n_increments": len(model.increments),
    }
    arrays = {
        "meta": np.array(json.dumps(meta)),
        "init_coef": model.init_coef,
        "risk_trace": model.risk_trace,
        "fitted_train": model.fitted_train,
    }
    for sm in model.smoothers:
        arrays[f"knots_{sm.feature}"] = sm.basis.knots
        arrays[f"index_{sm.feature}"] = sm.index
        arrays[f"counts_{sm.feature}"] = sm.counts
        arrays[f"lam_{sm.feature}"] = np.array(sm.lam)
        arrays[f"eigs_{sm.feature}"] = sm.eigenvalues
        arrays[f"vecs_{sm.feature}"] = sm.vectors
        arrays[f"shrinkage_{sm.feature}"] = sm.shrinkage
    for feat, coef in model.collapsed.items():
        arrays[f"collapsed_{feat}"] = coef
    if spectral:
        arrays["spectral_rho0"] = model.increments.rho0
    else:
        feats = np.array([feat for feat, _ in model.increments], dtype=int)
        arrays["inc_features"] = feats
        for feat in np.unique(feats):
            rows = [coef for fe, coef in model.increments if fe == feat]
            arrays[f"inc_coefs_{feat}"] = np.stack(rows) if rows else np.empty((0,))
    np.savez(path, **arrays)


def load_model(path) -> BoostModel:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        config = BoostConfig(
            mode=meta["mode"],
            task=meta["task"],
            df=meta["df"],
            shrink_u=meta["shrink_u"],
            stop_w=meta["stop_w"],
            max_iterations=meta["max_iterations"],
            keep_final_iterate=meta["keep_final_iterate"],
        )
        smoothers = []
        for feat in range(meta["feature_dim"]):
            smoothers.append(
                FeatureSmoother(
                    feature=feat,
                    basis=build_basis(data[f"knots_{feat}"]),
                    index=data[f"index_{feat}"],
                    counts=data[f"counts_{feat}"],
                    lam=float(data[f"lam_{feat}"]),
                    df=min(meta["df"], data[f"knots_{feat}"].size),
                    eigenvalues=data[f"eigs_{feat}"],
                    vectors=data[f"vecs_{feat}"],
                    shrinkage=data[f"shrinkage_{feat}"],
                )
            )
        collapsed = {
            feat: data[f"collapsed_{feat}"]
            for feat in range(meta["feature_dim"])
            if f"collapsed_{feat}" in data
        }
        if meta["kind"] == "spectral":
            increments = _SpectralIncrements(
                smoothers[meta["init_feature"]],
                data["spectral_rho0"],
                meta["shrink_u"],
                meta["n_increments"],
            )
        else:
            feats = data["inc_features"]
            counters = {int(f): 0 for f in np.unique(feats)}
            increments = []
            for f in feats:
                f = int(f)
                increments.append((f, data[f"inc_coefs_{f}"][counters[f]].copy()))
                counters[f] += 1
        return BoostModel(
            config=config,
            feature_dim=meta["feature_dim"],
            smoothers=smoothers,
            init_feature=meta["init_feature"],
            init_coef=data["init_coef"],
            increments=increments,
            stop_iteration=meta["stop_iteration"],
            capped=meta["capped"],
            risk_trace=data["risk_trace"],
            fitted_train=data["fitted_train"],
            collapsed=collapsed,
        )
