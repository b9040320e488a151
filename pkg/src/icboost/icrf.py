"""Iterated conditional survival forest for interval-censored responses.

Each iteration rebuilds the forest using the previous iteration's per-subject
smoothed survivor curves: subjects get rank-style scores (generalized
Wilcoxon or log-rank) computed from their own current curve, trees split on
standardized two-sample differences of those scores, and terminal nodes
estimate a survivor curve either from the members' raw brackets (quasi-honest
Turnbull) or by averaging the members' previous curves (exploitative; the
first iteration always refits node NPMLEs since there are no per-subject
curves to average yet). The
returned forest is the iteration with the smallest out-of-bag integrated
mean squared error, where the per-subject error integrates (1 - lambda)^2
before the bracket and lambda^2 after it, normalized by the uncensored part
of the horizon.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, SurvivorCurve, TimeGrid, distinct_endpoint_grid, survivor_eval
from .npmle import default_bandwidth, kernel_smooth, turnbull_npmle

_SPLIT_RULES = ("gwrs", "glr")
_TERMINAL_RULES = ("exploitative", "quasi_honest")
_S_FLOOR = 1e-12


@dataclass(frozen=True)
class IcrfParams:
    n_trees: int = 300
    n_iterations: int = 5
    split_rule: str = "gwrs"
    terminal_rule: str = "exploitative"
    min_node_size: int = 6
    mtry: int = 0
    bootstrap_fraction: float = 0.95
    replace_features: bool = False
    seed: int = 0
    max_grid: int = 512

    def __post_init__(self):
        if self.split_rule not in _SPLIT_RULES:
            raise ValueError(f"split_rule must be one of {_SPLIT_RULES}")
        if self.terminal_rule not in _TERMINAL_RULES:
            raise ValueError(f"terminal_rule must be one of {_TERMINAL_RULES}")
        if self.n_trees < 1 or self.n_iterations < 1:
            raise ValueError("n_trees and n_iterations must be >= 1")
        if self.min_node_size < 2:
            raise ValueError("min_node_size must be >= 2")
        if not (0.0 < self.bootstrap_fraction <= 1.0):
            raise ValueError("bootstrap_fraction must be in (0, 1]")


@dataclass(eq=False)
class _Node:
    feature: int = -1
    cutoff: float = 0.0
    left: int = -1
    right: int = -1
    step: np.ndarray | None = None
    smooth: np.ndarray | None = None


@dataclass(eq=False)
class IcrfModel:
    params: IcrfParams
    grid: np.ndarray
    bandwidth: float
    bandwidth_fallback: bool
    trees: list[list[_Node]]
    best_iteration: int
    oob_errors: np.ndarray
    oob_skipped: int
    feature_dim: int = field(default=0)


def build_eval_grid(dataset: Dataset, max_points: int = 512) -> TimeGrid:
    """Distinct bracket endpoints plus tau, thinned uniformly to the cap."""
    pts = np.union1d(distinct_endpoint_grid(dataset).points, [dataset.tau])
    if pts.size > max_points:
        keep = np.unique(np.round(np.linspace(0, pts.size - 1, max_points)).astype(int))
        thinned = pts[keep]
        if dataset.tau not in thinned:
            j = int(np.argmin(np.abs(thinned - dataset.tau)))
            thinned[j] = dataset.tau
            thinned = np.unique(thinned)
        pts = thinned
    return TimeGrid(pts)


def _interp_rows(grid: np.ndarray, rows: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Per-row linear interpolation with anchor S(0)=1 and flat right tail."""
    n = rows.shape[0]
    xp = np.concatenate(([0.0], grid))
    fp = np.column_stack([np.ones(n), rows])
    t = np.minimum(np.asarray(times, dtype=float), xp[-1])
    j = np.clip(np.searchsorted(xp, t, side="right") - 1, 0, xp.size - 2)
    x0, x1 = xp[j], xp[j + 1]
    w = (t - x0) / (x1 - x0)
    rows_idx = np.arange(n)
    return fp[rows_idx, j] * (1.0 - w) + fp[rows_idx, j + 1] * w


def gwrs_score(bracket, curve: SurvivorCurve) -> float:
    """Generalized Wilcoxon score S(L) + S(R) - 1 with S(inf) = 0."""
    left, right = bracket
    sl = survivor_eval(curve, float(left))
    sr = 0.0 if math.isinf(right) else survivor_eval(curve, float(right))
    return float(sl + sr - 1.0)


def glr_score(bracket, curve: SurvivorCurve) -> float:
    """Generalized log-rank score with Lambda = -log S and Lambda(inf)S(inf) = 0."""
    left, right = bracket
    sl = survivor_eval(curve, float(left))
    lam_l = -math.log(max(sl, _S_FLOOR))
    if math.isinf(right):
        term_r, sr = 0.0, 0.0
    else:
        sr = survivor_eval(curve, float(right))
        term_r = -math.log(max(sr, _S_FLOOR)) * sr
    denom = sl - sr
    if denom <= _S_FLOOR:
        return float(lam_l)
    return float((lam_l * sl - term_r) / denom)


def _scores_all(grid, rows, lefts, rights, rule):
    sl = np.where(lefts <= 0.0, 1.0, _interp_rows(grid, rows, np.maximum(lefts, 0.0)))
    finite = np.isfinite(rights)
    sr = np.zeros_like(lefts)
    if finite.any():
        sr[finite] = _interp_rows(grid, rows[finite], rights[finite])
    if rule == "gwrs":
        return sl + sr - 1.0
    lam_l = -np.log(np.maximum(sl, _S_FLOOR))
    term_r = np.where(sr > 0.0, -np.log(np.maximum(sr, _S_FLOOR)) * sr, 0.0)
    denom = sl - sr
    return np.where(denom > _S_FLOOR, (lam_l * sl - term_r) / np.maximum(denom, _S_FLOOR), lam_l)


def best_split(member_idx, x_mat, scores, params: IcrfParams, rng) -> tuple[int, float] | None:
    """Standardized two-sample score split over a random feature subset.

    Returns (feature, cutoff) maximizing |mean_A - mean_B| / sd_node *
    sqrt(n_A n_B / n), or None when no admissible cutoff exists or all node
    scores tie. Ties break toward the lowest feature index, then the
    smallest cutoff.
    """
    m = member_idx.size
    node_scores = scores[member_idx]
    # ptp, not std: summation noise makes std of a constant vector ~1e-16
    if m < 2 * params.min_node_size or float(np.ptp(node_scores)) == 0.0:
        return None
    sd = float(node_scores.std())
    p = x_mat.shape[1]
    mtry = params.mtry if params.mtry > 0 else math.ceil(math.sqrt(p))
    cand = rng.choice(p, size=min(mtry, p) if not params.replace_features else mtry,
                      replace=params.replace_features)
    best = None
    for feat in np.unique(cand):
        xv = x_mat[member_idx, feat]
        order = np.argsort(xv, kind="stable")
        xs = xv[order]
        ss = node_scores[order]
        cums = np.cumsum(ss)
        total = cums[-1]
        k = np.arange(1, m)
        valid = (xs[1:] > xs[:-1]) & (k >= params.min_node_size) & (m - k >= params.min_node_size)
        if not valid.any():
            continue
        kk = k[valid]
        mean_a = cums[kk - 1] / kk
        mean_b = (total - cums[kk - 1]) / (m - kk)
        stat = np.abs(mean_a - mean_b) / sd * np.sqrt(kk * (m - kk) / m)
        j = int(np.argmax(stat))
        if stat[j] <= 0.0:
            continue
        cutoff = 0.5 * (xs[kk[j] - 1] + xs[kk[j]])
        if best is None or stat[j] > best[0] + 1e-15:
            best = (float(stat[j]), int(feat), float(cutoff))
    if best is None:
        return None
    return best[1], best[2]


def terminal_estimate(member_idx, dataset: Dataset, prev_curves, rule: str) -> SurvivorCurve:
    """Terminal survivor curve for a node.

    quasi_honest refits a Turnbull NPMLE on the members' raw brackets;
    exploitative averages the members' previous-iteration curves pointwise
    (a singleton node keeps its member's curve unchanged).
    """
    if rule not in _TERMINAL_RULES:
        raise ValueError(f"rule must be one of {_TERMINAL_RULES}")
    members = np.asarray(member_idx, dtype=int)
    if members.size == 0:
        raise ValueError("terminal node needs at least one member")
    if rule == "quasi_honest":
        brackets = [(dataset.observations[i].left, dataset.observations[i].right) for i in members]
        return turnbull_npmle(brackets).curve
    first = prev_curves[members[0]]
    grid = first.grid
    vals = np.mean([prev_curves[i].values for i in members], axis=0)
    return SurvivorCurve(grid, vals, first.kind)


def _row_interp(grid: np.ndarray, row: np.ndarray, pts: np.ndarray) -> np.ndarray:
    if grid[0] > 0.0:
        xp = np.concatenate(([0.0], grid))
        fp = np.concatenate(([1.0], row))
    else:
        xp, fp = grid, row
    return np.interp(pts, xp, fp)


def _imse_segments(grid, row, left, right, tau):
    l_cap = min(left, tau)
    r_cap = min(right, tau)
    norm = tau - r_cap + l_cap
    if norm <= 0.0:
        return None
    total = 0.0
    if l_cap > 0.0:
        pts = np.concatenate(([0.0], grid[(grid > 0.0) & (grid < l_cap)], [l_cap]))
        lam = _row_interp(grid, row, pts)
        total += float(np.trapezoid((1.0 - lam) ** 2, pts))
    if r_cap < tau:
        pts = np.concatenate(([r_cap], grid[(grid > r_cap) & (grid < tau)], [tau]))
        lam = _row_interp(grid, row, pts)
        total += float(np.trapezoid(lam**2, pts))
    return total / norm


def subject_imse(curve: SurvivorCurve, left: float, right: float, tau: float) -> float | None:
    """OOB integrated squared error for one bracket; None if it covers [0, tau]."""
    return _imse_segments(curve.grid.points, curve.values, left, right, tau)


def _grow_tree(x_mat, lefts, rights, scores, prev_step, prev_smooth,
               grid, bandwidth, params, terminal_rule, rng):
    in_size = math.ceil(params.bootstrap_fraction * x_mat.shape[0])
    perm = rng.permutation(x_mat.shape[0])
    in_bag = np.sort(perm[:in_size])
    oob = np.sort(perm[in_size:])
    nodes: list[_Node] = [_Node()]
    stack = [(0, in_bag)]
    while stack:
        nid, members = stack.pop()
        split = None
        if members.size >= 2 * params.min_node_size:
            split = best_split(members, x_mat, scores, params, rng)
        if split is None:
            node = nodes[nid]
            if terminal_rule == "quasi_honest":
                brackets = [(lefts[i], rights[i]) for i in members]
                tb_curve = turnbull_npmle(brackets).curve
                step_vals = survivor_eval(tb_curve, grid)
                smooth_vals = kernel_smooth(tb_curve, bandwidth, TimeGrid(grid)).values
            else:
                step_vals = prev_step[members].mean(axis=0)
                smooth_vals = prev_smooth[members].mean(axis=0)
            node.step = step_vals
            node.smooth = smooth_vals
            continue
        feat, cutoff = split
        go_left = x_mat[members, feat] <= cutoff
        nodes[nid].feature = feat
        nodes[nid].cutoff = cutoff
        nodes[nid].left = len(nodes)
        nodes.append(_Node())
        nodes[nid].right = len(nodes)
        nodes.append(_Node())
        stack.append((nodes[nid].right, members[~go_left]))
        stack.append((nodes[nid].left, members[go_left]))
    return nodes, oob


def _route(nodes, x_mat) -> np.ndarray:
    out = np.zeros(x_mat.shape[0], dtype=int)
    stack = [(0, np.arange(x_mat.shape[0]))]
    while stack:
        nid, idx = stack.pop()
        node = nodes[nid]
        if node.feature < 0:
            out[idx] = nid
            continue
        go_left = x_mat[idx, node.feature] <= node.cutoff
        stack.append((node.left, idx[go_left]))
        stack.append((node.right, idx[~go_left]))
    return out


def icrf_fit(dataset: Dataset, params: IcrfParams, n_threads: int = 1) -> IcrfModel:
    """Fit the forest; keep the iteration with the smallest mean OOB error.

    Per-tree randomness comes from streams keyed by (seed, iteration, tree),
    so serial and thread-pool builds produce identical forests.
    """
    n = dataset.n
    x_mat = dataset.feature_matrix()
    lefts = dataset.lefts()
    rights = dataset.rights()
    tau = dataset.tau
    grid = build_eval_grid(dataset, params.max_grid).points
    tb = turnbull_npmle([(l, r) for l, r in zip(lefts, rights)])
    fallback = False
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        bandwidth = default_bandwidth(tb.curve, params.min_node_size)
        fallback = any(issubclass(w.category, RuntimeWarning) for w in caught)
    prev_step = np.tile(survivor_eval(tb.curve, grid), (n, 1))
    prev_smooth = np.tile(kernel_smooth(tb.curve, bandwidth, TimeGrid(grid)).values, (n, 1))

    def build_one(iteration, d, scores, rule):
        rng = np.random.default_rng(np.random.SeedSequence(params.seed, spawn_key=(iteration, d)))
        return _grow_tree(x_mat, lefts, rights, scores, prev_step, prev_smooth,
                          grid, bandwidth, params, rule, rng)

    oob_errors = []
    skipped_total = 0
    best = None
    for iteration in range(1, params.n_iterations + 1):
        # the first round has only the unconditional curve behind it, so
        # exploitative averaging would freeze the forest at that curve;
        # seed it with within-node NPMLEs instead
        rule = "quasi_honest" if iteration == 1 else params.terminal_rule
        scores = _scores_all(grid, prev_smooth, lefts, rights, params.split_rule)
        if n_threads > 1:
            with ThreadPoolExecutor(max_workers=n_threads) as pool:
                built = list(pool.map(lambda d: build_one(iteration, d, scores, rule),
                                      range(params.n_trees)))
        else:
            built = [build_one(iteration, d, scores, rule) for d in range(params.n_trees)]
        step_acc = np.zeros((n, grid.size))
        smooth_acc = np.zeros((n, grid.size))
        tree_errs = []
        for nodes, oob in built:
            leaf = _route(nodes, x_mat)
            step_acc += np.stack([nodes[k].step for k in leaf])
            smooth_acc += np.stack([nodes[k].smooth for k in leaf])
            errs = []
            for i in oob:
                e = _imse_segments(grid, nodes[leaf[i]].smooth, lefts[i], rights[i], tau)
                if e is None:
                    skipped_total += 1
                else:
                    errs.append(e)
            tree_errs.append(float(np.mean(errs)) if errs else math.nan)
        finite = [e for e in tree_errs if not math.isnan(e)]
        eps = float(np.mean(finite)) if finite else math.nan
        oob_errors.append(eps)
        if best is None or eps < best[0]:
            best = (eps, iteration, [nodes for nodes, _ in built])
        prev_step = step_acc / params.n_trees
        prev_smooth = smooth_acc / params.n_trees
    return IcrfModel(
        params=params,
        grid=grid,
        bandwidth=bandwidth,
        bandwidth_fallback=fallback,
        trees=best[2],
        best_iteration=best[1],
        oob_errors=np.asarray(oob_errors),
        oob_skipped=skipped_total,
        feature_dim=dataset.feature_dim,
    )


def predict_survivor_matrix(model: IcrfModel, x_mat: np.ndarray) -> np.ndarray:
    """Averaged smoothed curves over trees; rows are per-subject grid values."""
    x_mat = np.atleast_2d(np.asarray(x_mat, dtype=float))
    if x_mat.shape[1] != model.feature_dim:
        raise ValueError(f"expected {model.feature_dim} features, got {x_mat.shape[1]}")
    acc = np.zeros((x_mat.shape[0], model.grid.size))
    for nodes in model.trees:
        leaf = _route(nodes, x_mat)
        acc += np.stack([nodes[k].smooth for k in leaf])
    vals = acc / len(model.trees)
    vals = np.minimum.accumulate(np.clip(vals, 0.0, 1.0), axis=1)
    return vals


def predict_survivor(model: IcrfModel, x) -> SurvivorCurve:
    vals = predict_survivor_matrix(model, np.asarray(x, dtype=float)[None, :])[0]
    return SurvivorCurve(TimeGrid(model.grid), vals, "smoothed")
