"""Command-line front end: simulate, fit, predict, evaluate, verify-theory, benchmark.

Config files are flat key=value text with a closed key registry; unknown keys
are usage errors. Exit codes: 0 success, 1 runtime failure, 2 usage/config
error. Every command writes a JSON manifest next to its outputs so reruns are
reproducible and the benchmark is resumable.
"""

from __future__ import annotations

import os

# pin BLAS pools before numpy loads so numeric output does not depend on the
# host core count; --threads only controls the forest worker pool
for _var in (
    "OPENBLAS_NUM_THREADS",
    "OMP_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
):
    os.environ.setdefault(_var, "1")

import argparse
import csv
import hashlib
import json
import math
import re
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .boosting import (
    BoostConfig,
    fit_boost,
    load_model,
    predict_boost,
    pure_l2boost_path,
    save_model,
)
from .data import load_dataset, save_dataset
from .evalsim import (
    DEFAULT_THRESHOLDS,
    METHODS,
    HeldOutTruth,
    SimConfig,
    baseline_responses,
    classification_metrics,
    first_mse_below_noise,
    gen_aft,
    phi_default,
    pseudo_responses,
    report_rows,
    run_replicate_set,
    skdt,
    smaxae,
    smsqe,
    theoretical_mse,
    verify_improvement_window,
)
from .icrf import IcrfParams, icrf_fit
from .splines import (
    boost_operator,
    build_basis,
    projection_smoother,
    shrink,
    smoother_matrix,
    solve_lambda_for_df,
)
from .transform import GTransform

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

_PSEUDO = ("CUT", "IMP")


class UsageError(Exception):
    """Bad flags, config keys, or input files; maps to exit code 2."""


# ---------------------------------------------------------------------------
# config files


def _parse_int(text: str) -> int:
    return int(text)


def _parse_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("must be finite")
    return value


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError("must be true or false")


def _parse_choice(*options: str):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text

    return parse


def _parse_floats(text: str) -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("needs at least one number")
    return tuple(_parse_float(p) for p in parts)


def _parse_beta(text: str) -> tuple[float, float, float]:
    values = _parse_floats(text)
    if len(values) != 3:
        raise ValueError("needs exactly three numbers")
    return values


def _parse_methods(text: str) -> tuple[str, ...]:
    parts = [p.strip().upper() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("needs at least one method")
    for part in parts:
        if part not in METHODS:
            raise ValueError(f"unknown method {part!r}; choose from {', '.join(METHODS)}")
    if len(set(parts)) != len(parts):
        raise ValueError("methods listed twice")
    return tuple(parts)


# every legal config key with its value parser; commands whitelist subsets
_REGISTRY = {
    "seed": _parse_int,
    # simulation
    "n": _parse_int,
    "p": _parse_int,
    "sigma": _parse_float,
    "tau": _parse_float,
    "m": _parse_int,
    "error_dist": _parse_choice("normal", "logistic"),
    "beta": _parse_beta,
    "split_ratio": _parse_float,
    # boosting
    "df": _parse_float,
    "shrink_u": _parse_float,
    "stop_w": _parse_float,
    "max_iterations": _parse_int,
    "task": _parse_choice("regression", "classification"),
    "threshold": _parse_float,
    # forest
    "n_trees": _parse_int,
    "n_iterations": _parse_int,
    "split_rule": _parse_choice("gwrs", "glr"),
    "terminal_rule": _parse_choice("exploitative", "quasi-honest"),
    "min_node_size": _parse_int,
    "mtry": _parse_int,
    "bootstrap_fraction": _parse_float,
    "max_grid": _parse_int,
    # study layout
    "replicates": _parse_int,
    "methods": _parse_methods,
    "thresholds": _parse_floats,
    # theory checks
    "smoother": _parse_choice("spline", "projection"),
    "m0": _parse_float,
    "tolerance": _parse_float,
    "max_scan": _parse_int,
}

_SIM_KEYS = frozenset(
    ("seed", "n", "p", "sigma", "tau", "m", "error_dist", "beta", "split_ratio")
)
_BOOST_KEYS = frozenset(("df", "shrink_u", "stop_w", "max_iterations"))
_ICRF_KEYS = frozenset(
    (
        "n_trees",
        "n_iterations",
        "split_rule",
        "terminal_rule",
        "min_node_size",
        "mtry",
        "bootstrap_fraction",
        "max_grid",
    )
)

_ALLOWED_KEYS = {
    "simulate": _SIM_KEYS,
    "fit": frozenset(("seed", "tau", "task", "threshold")) | _BOOST_KEYS | _ICRF_KEYS,
    "predict": frozenset(),
    "evaluate": frozenset(("thresholds",)),
    "verify-theory": frozenset(
        ("seed", "n", "df", "sigma", "shrink_u", "smoother", "m0", "tolerance", "max_scan")
    ),
    "benchmark": _SIM_KEYS | _BOOST_KEYS | _ICRF_KEYS | frozenset(("replicates", "methods", "thresholds")),
}


def read_config(path: str | None, command: str) -> dict:
    """Parse a key=value config file against the registry for one command."""
    if path is None:
        return {}
    parsed: dict = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _REGISTRY:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        if key not in _ALLOWED_KEYS[command]:
            raise UsageError(
                f"{path}:{lineno}: config key {key!r} does not apply to {command}"
            )
        if key in parsed:
            raise UsageError(f"{path}:{lineno}: duplicate config key {key!r}")
        try:
            parsed[key] = _REGISTRY[key](value)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return parsed


def _effective_seed(args, config: dict) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    return config.get("seed", 0)


def config_hash(config: dict, seed: int) -> str:
    """Stable digest over the effective configuration, seed included."""
    items = dict(config)
    items["seed"] = seed
    canon = "\n".join(f"{key}={items[key]!r}" for key in sorted(items))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# small shared helpers


def _resolve_threads(args) -> int:
    threads = getattr(args, "threads", 1)
    if threads < 0:
        raise UsageError("--threads must be >= 0")
    if threads == 0:
        return os.cpu_count() or 1
    return threads


def _ensure_outdir(path: str) -> str:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {path}: {exc}") from exc
    return path


def _fmt(value: float) -> str:
    return repr(float(value))


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _versions() -> dict:
    return {
        "icboost": __version__,
        "numpy": np.__version__,
        "python": "%d.%d.%d" % sys.version_info[:3],
    }


def _write_manifest(out_dir: str, command: str, digest: str, seed: int, timings: dict, outputs: list[str]) -> str:
    manifest = {
        "command": command,
        "config_hash": digest,
        "seed": seed,
        "versions": _versions(),
        "timings": {key: float(val) for key, val in timings.items()},
        "outputs": [os.path.basename(p) for p in outputs],
    }
    path = os.path.join(out_dir, f"manifest_{command.replace('-', '_')}.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _read_table(path: str) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = [row for row in reader if row]
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    if header is None:
        raise UsageError(f"{path}: empty file")
    return header, rows


def _read_features(path: str) -> tuple[list[str], np.ndarray, np.ndarray | None]:
    """Feature table reader accepting both dataset and truth CSV layouts.

    Needs columns x1..xp in order; id and phi are picked up when present,
    anything else (brackets, event times) is ignored.
    """
    header, rows = _read_table(path)
    x_cols = [name for name in header if re.fullmatch(r"x\d+", name)]
    if not x_cols or x_cols != [f"x{j + 1}" for j in range(len(x_cols))]:
        raise UsageError(f"{path}: need feature columns x1..xp")
    if not rows:
        raise UsageError(f"{path}: no data rows")
    x_pos = [header.index(name) for name in x_cols]
    id_pos = header.index("id") if "id" in header else None
    phi_pos = header.index("phi") if "phi" in header else None
    ids: list[str] = []
    feats = np.empty((len(rows), len(x_cols)))
    phis = np.empty(len(rows)) if phi_pos is not None else None
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise UsageError(f"{path}: row {i + 1} has {len(row)} fields, header has {len(header)}")
        ids.append(row[id_pos] if id_pos is not None else str(i))
        try:
            feats[i] = [float(row[j]) for j in x_pos]
            if phis is not None:
                phis[i] = float(row[phi_pos])
        except ValueError as exc:
            raise UsageError(f"{path}: row {i + 1}: {exc}") from exc
    return ids, feats, phis


def _save_truth(truth: HeldOutTruth, path: str) -> None:
    header = ["id"] + [f"x{j + 1}" for j in range(truth.features.shape[1])] + ["phi"]
    rows = [
        [str(i)] + [_fmt(v) for v in truth.features[i]] + [_fmt(truth.phi[i])]
        for i in range(truth.n)
    ]
    _write_csv(path, header, rows)


# ---------------------------------------------------------------------------
# builders from typed config


def _sim_config(config: dict, seed: int) -> SimConfig:
    kwargs = {key: config[key] for key in _SIM_KEYS - {"seed"} if key in config}
    try:
        return SimConfig(seed=seed, **kwargs)
    except ValueError as exc:
        raise UsageError(f"bad simulation config: {exc}") from exc


def _boost_config(config: dict) -> BoostConfig:
    kwargs = {key: config[key] for key in _BOOST_KEYS if key in config}
    try:
        return BoostConfig(**kwargs)
    except ValueError as exc:
        raise UsageError(f"bad boosting config: {exc}") from exc


def _icrf_params(config: dict, seed: int) -> IcrfParams:
    kwargs = {key: config[key] for key in _ICRF_KEYS if key in config}
    try:
        return IcrfParams(seed=seed, **kwargs)
    except ValueError as exc:
        raise UsageError(f"bad forest config: {exc}") from exc


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    config = read_config(args.config, "simulate")
    seed = _effective_seed(args, config)
    sim = _sim_config(config, seed)
    out_dir = _ensure_outdir(args.out)
    t_start = time.perf_counter()
    train, test = gen_aft(sim, np.random.default_rng(np.random.SeedSequence(seed)))
    train_path = os.path.join(out_dir, "train.csv")
    test_path = os.path.join(out_dir, "test.csv")
    save_dataset(train, train_path)
    _save_truth(test, test_path)
    _write_manifest(
        out_dir,
        "simulate",
        config_hash(config, seed),
        seed,
        {"time_total": time.perf_counter() - t_start},
        [train_path, test_path],
    )
    print(f"wrote {train.n} training rows and {test.n} test rows to {out_dir}")
    return EXIT_OK


def cmd_fit(args) -> int:
    config = read_config(args.config, "fit")
    seed = _effective_seed(args, config)
    method = args.method
    task = config.get("task", "regression")
    threshold = config.get("threshold")
    if task == "classification" and threshold is None:
        raise UsageError("classification fits need a threshold= config key")
    if task == "regression" and threshold is not None:
        raise UsageError("threshold= only applies to classification fits")
    threads = _resolve_threads(args)
    out_dir = _ensure_outdir(args.out)

    t_start = time.perf_counter()
    stage = "load"
    try:
        dataset = load_dataset(args.data, tau=config.get("tau"))
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot load dataset {args.data}: {exc}") from exc

    g = GTransform("log") if task == "regression" else GTransform("threshold", threshold)
    timings = {"time_icrf": 0.0, "time_transform": 0.0, "time_boost": 0.0}
    try:
        if method in _PSEUDO:
            stage = "icrf"
            tic = time.perf_counter()
            forest = icrf_fit(dataset, _icrf_params(config, seed), threads)
            timings["time_icrf"] = time.perf_counter() - tic
            stage = "transform"
            tic = time.perf_counter()
            resp, resp2 = pseudo_responses(dataset, forest, g)
            if method != "CUT":
                resp2 = None
            timings["time_transform"] = time.perf_counter() - tic
        else:
            stage = "transform"
            tic = time.perf_counter()
            try:
                resp = baseline_responses(dataset, method, g)
            except ValueError as exc:
                raise UsageError(str(exc)) from exc
            resp2 = None
            timings["time_transform"] = time.perf_counter() - tic
        stage = "boost"
        boost_cfg = replace(
            _boost_config(config),
            mode="cut" if method == "CUT" else "imp",
            task=task,
            keep_final_iterate=method not in _PSEUDO,
        )
        tic = time.perf_counter()
        model = fit_boost(dataset.feature_matrix(), resp, boost_cfg, resp2)
        timings["time_boost"] = time.perf_counter() - tic
    except UsageError:
        raise
    except Exception as exc:
        raise RuntimeError(f"{stage} stage failed: {exc}") from exc

    model_path = os.path.join(out_dir, "model.npz")
    save_model(model, model_path)
    timings["time_total"] = time.perf_counter() - t_start
    _write_manifest(out_dir, "fit", config_hash(config, seed), seed, timings, [model_path])
    print(
        f"fitted {method} {task} model on {dataset.n} rows, "
        f"stopped at iteration {model.stop_iteration}, wrote {model_path}"
    )
    return EXIT_OK


def cmd_predict(args) -> int:
    t_start = time.perf_counter()
    try:
        model = load_model(args.model)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load model {args.model}: {exc}") from exc
    ids, feats, _ = _read_features(args.data)
    if feats.shape[1] != model.feature_dim:
        raise UsageError(
            f"model expects {model.feature_dim} feature(s), {args.data} has {feats.shape[1]}"
        )
    preds = predict_boost(model, feats)
    out_dir = _ensure_outdir(args.out)
    pred_path = os.path.join(out_dir, "predictions.csv")
    _write_csv(
        pred_path,
        ["id", "prediction"],
        [[ids[i], _fmt(preds[i])] for i in range(len(ids))],
    )
    _write_manifest(
        out_dir,
        "predict",
        config_hash({}, 0),
        0,
        {"time_total": time.perf_counter() - t_start},
        [pred_path],
    )
    print(f"wrote {len(ids)} predictions to {pred_path}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = read_config(args.config, "evaluate")
    t_start = time.perf_counter()
    header, rows = _read_table(args.pred)
    if header[:2] != ["id", "prediction"]:
        raise UsageError(f"{args.pred}: expected columns id,prediction")
    if not rows:
        raise UsageError(f"{args.pred}: no predictions to evaluate")
    pred_ids = [row[0] for row in rows]
    try:
        preds = np.array([float(row[1]) for row in rows])
    except ValueError as exc:
        raise UsageError(f"{args.pred}: {exc}") from exc

    truth_ids, _, phis = _read_features(args.truth)
    if phis is None:
        raise UsageError(f"{args.truth}: needs a phi column with true signal values")
    if pred_ids != truth_ids:
        raise UsageError("prediction and truth files disagree on row ids")

    metric_rows = [
        ["smaxae", _fmt(smaxae(preds, phis))],
        ["smsqe", _fmt(smsqe(preds, phis))],
    ]
    if len(preds) >= 2:
        metric_rows.append(["skdt", _fmt(skdt(preds, phis))])
    sign = np.where(preds > 0.0, 1.0, -1.0)
    exp_phi = np.exp(phis)
    for s in config.get("thresholds", ()):
        sens, spec = classification_metrics(sign, exp_phi, s)
        if sens is not None:
            metric_rows.append([f"sensitivity_s{s:g}", _fmt(sens)])
        if spec is not None:
            metric_rows.append([f"specificity_s{s:g}", _fmt(spec)])

    out_dir = _ensure_outdir(args.out)
    metrics_path = os.path.join(out_dir, "metrics.csv")
    _write_csv(metrics_path, ["metric", "value"], metric_rows)
    _write_manifest(
        out_dir,
        "evaluate",
        config_hash(config, 0),
        0,
        {"time_total": time.perf_counter() - t_start},
        [metrics_path],
    )
    print(f"wrote {len(metric_rows)} metrics for {len(preds)} predictions to {metrics_path}")
    return EXIT_OK


def _theory_rows(config: dict, seed: int) -> list[tuple[str, str, str]]:
    n = config.get("n", 50)
    df = config.get("df", 20.0)
    sigma = config.get("sigma", 0.5)
    smoother_kind = config.get("smoother", "spline")
    if smoother_kind == "projection" and "shrink_u" in config:
        raise UsageError("shrink_u does not apply to the projection smoother")
    shrink_u = 1.0 if smoother_kind == "projection" else config.get("shrink_u", 0.01)
    m0 = config.get("m0", 4.0)
    tol = config.get("tolerance", 1e-8)
    max_scan = config.get("max_scan", 10**6)
    if n < 10:
        raise UsageError("theory checks need n >= 10")
    if not 2.0 < df < n:
        raise UsageError("df must lie strictly between 2 and n")
    if sigma <= 0.0:
        raise UsageError("sigma must be positive")
    if not 0.0 < shrink_u <= 1.0:
        raise UsageError("shrink_u must be in (0, 1]")
    if m0 < 2.0:
        raise UsageError("m0 must be >= 2")
    if tol < 0.0:
        raise UsageError("tolerance must be >= 0")
    if max_scan < 1:
        raise UsageError("max_scan must be >= 1")

    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(size=n))
    while np.unique(x).size < n:
        x = np.sort(rng.uniform(size=n))
    phi = phi_default(x[:, None])
    y = phi + sigma * rng.standard_normal(n)
    sig2 = sigma**2

    if smoother_kind == "spline":
        basis = build_basis(x)
        base = smoother_matrix(basis, solve_lambda_for_df(basis, df))
        psi = shrink(base, shrink_u)
    else:
        base = projection_smoother(x)
        psi = base
    mu = psi.eigenvectors.T @ phi
    eigs = psi.eigenvalues
    # eigenvalues within eps of 0 or 1 count as exact, so a numerically fuzzy
    # projection spectrum still takes the constant-in-t branch
    eps = 1e-9
    decaying = bool(np.any((eigs > eps) & (eigs < 1.0 - eps)))

    rows: list[tuple[str, str, str]] = []

    def report(check: str, ok: bool, detail: str) -> None:
        rows.append((check, "PASS" if ok else "FAIL", detail))

    # iterative boosting path equals the closed-form operator applied to y
    path = pure_l2boost_path(base, y, shrink_u, 100)
    dev = max(
        float(np.max(np.abs(path[t] - boost_operator(psi, t) @ y))) for t in range(101)
    )
    report(
        "operator_path_identity",
        dev <= tol,
        f"max deviation {dev:.3e} over t<=100 at tolerance {tol:g}",
    )

    # spectral variance + bias^2 formulas against the operator-route mse
    dev = 0.0
    for t in (0, 1, 5, 20, 100):
        op = boost_operator(psi, t)
        direct = (
            float(np.sum((op @ phi - phi) ** 2)) + sig2 * float(np.trace(op @ op))
        ) / n
        dev = max(dev, abs(direct - theoretical_mse(eigs, mu, sig2, t)[2]))
    report(
        "mse_decomposition",
        dev <= tol,
        f"max |operator mse - spectral mse| {dev:.3e} at tolerance {tol:g}",
    )

    # squared bias shrinks and variance grows along a logarithmic grid
    if decaying:
        grid = [0] + [2**k for k in range(11)]
        vals = [theoretical_mse(eigs, mu, sig2, t) for t in grid]
        bias_down = all(vals[i + 1][1] < vals[i][1] for i in range(len(vals) - 1))
        var_up = all(vals[i + 1][0] > vals[i][0] for i in range(len(vals) - 1))
        report(
            "moment_monotonicity",
            bias_down and var_up,
            f"bias strictly decreasing: {bias_down}, variance strictly increasing: {var_up}",
        )
    else:
        rows.append(
            (
                "moment_monotonicity",
                "SKIPPED",
                "eigenvalues all 0 or 1, moments constant in t",
            )
        )

    # long-run mse settles at the noise level once the slowest mode has decayed
    lam_min = float(eigs[-1])
    if lam_min > eps:
        t_star = max(0, math.ceil(math.log(1e-6) / math.log1p(-min(lam_min, 1.0))) - 1)
        mse = theoretical_mse(eigs, mu, sig2, t_star)[2]
        rel = abs(mse - sig2) / sig2
        report(
            "plateau",
            rel <= 1e-5,
            f"relative gap to noise level {rel:.3e} at t={t_star}",
        )
    else:
        rows.append(
            (
                "plateau",
                "SKIPPED",
                "smallest eigenvalue is numerically zero, the long-run level is below the noise variance",
            )
        )

    # idempotent projection smoother: boosting never moves the first fit
    proj = projection_smoother(x)
    fit0 = boost_operator(proj, 0) @ y
    dev = max(
        float(np.max(np.abs(boost_operator(proj, t) @ y - fit0))) for t in (1, 10, 100)
    )
    report(
        "projection_constancy",
        dev <= tol,
        f"max deviation across t in {{0,1,10,100}} is {dev:.3e} at tolerance {tol:g}",
    )

    # constructed spectrum with the weak-learner margin improves for m0 steps
    lam_c = np.array([0.5, 0.3, 0.2])
    bound = 1.0 / (1.0 - lam_c) ** m0 - 1.0
    mu_c = np.sqrt(1.2 * bound)
    try:
        improved = verify_improvement_window(lam_c, mu_c, 1.0, m0)
        report(
            "improvement_window",
            improved,
            f"constructed spectrum improves strictly for t < {m0:g}",
        )
    except ValueError as exc:
        report("improvement_window", False, str(exc))

    # boosting eventually beats the plain noise level on this design
    if decaying:
        t0 = first_mse_below_noise(eigs, mu, sig2, max_t=max_scan)
        report(
            "noise_crossing",
            t0 is not None,
            f"mse drops below the noise level at t={t0}"
            if t0 is not None
            else f"no crossing within {max_scan} iterations",
        )
    else:
        rows.append(
            ("noise_crossing", "SKIPPED", "eigenvalues all 0 or 1, mse constant in t")
        )
    return rows


def cmd_verify_theory(args) -> int:
    config = read_config(args.config, "verify-theory")
    seed = _effective_seed(args, config)
    t_start = time.perf_counter()
    rows = _theory_rows(config, seed)
    out_dir = _ensure_outdir(args.out)
    report_path = os.path.join(out_dir, "theory_report.csv")
    _write_csv(report_path, ["check", "status", "detail"], rows)
    _write_manifest(
        out_dir,
        "verify-theory",
        config_hash(config, seed),
        seed,
        {"time_total": time.perf_counter() - t_start},
        [report_path],
    )
    n_pass = sum(1 for row in rows if row[1] == "PASS")
    n_fail = sum(1 for row in rows if row[1] == "FAIL")
    n_skip = sum(1 for row in rows if row[1] == "SKIPPED")
    print(f"theory checks: {n_pass} PASS, {n_fail} FAIL, {n_skip} SKIPPED -> {report_path}")
    return EXIT_OK if n_fail == 0 else EXIT_RUNTIME


def _load_benchmark_state(
    metrics_path: str, timings_path: str, replicates: int, methods: tuple[str, ...]
) -> tuple[list[list[str]], list[list[str]], set[int]]:
    """Rows already on disk for fully finished replicates, plus their ids."""
    if not os.path.exists(metrics_path):
        return [], [], set()
    header, rows = _read_table(metrics_path)
    if header != ["replicate", "method", "metric", "value"]:
        raise UsageError(f"{metrics_path}: unexpected header {header}")
    present = set()
    for row in rows:
        try:
            present.add((int(row[0]), row[1]))
        except (IndexError, ValueError) as exc:
            raise UsageError(f"{metrics_path}: malformed row {row}") from exc
    done = {
        rep
        for rep in range(replicates)
        if all((rep, method) in present for method in methods)
    }
    metric_rows = [row for row in rows if int(row[0]) in done and row[1] in methods]
    timing_rows: list[list[str]] = []
    if os.path.exists(timings_path):
        t_header, t_rows = _read_table(timings_path)
        if t_header != _TIMING_HEADER:
            raise UsageError(f"{timings_path}: unexpected header {t_header}")
        timing_rows = [
            row for row in t_rows if int(row[0]) in done and row[1] in methods
        ]
    return metric_rows, timing_rows, done


_TIMING_HEADER = [
    "replicate",
    "method",
    "time_icrf",
    "time_transform",
    "time_boost",
    "time_total",
]


def cmd_benchmark(args) -> int:
    config = read_config(args.config, "benchmark")
    seed = _effective_seed(args, config)
    sim = _sim_config(config, seed)
    boost_cfg = _boost_config(config)
    icrf_params = _icrf_params(config, 0)
    replicates = config.get("replicates", 3)
    if replicates < 1:
        raise UsageError("replicates must be >= 1")
    methods = config.get("methods", METHODS)
    thresholds = config.get("thresholds", DEFAULT_THRESHOLDS)
    threads = _resolve_threads(args)
    out_dir = _ensure_outdir(args.out)
    metrics_path = os.path.join(out_dir, "benchmark_metrics.csv")
    timings_path = os.path.join(out_dir, "benchmark_timings.csv")
    digest = config_hash(config, seed)

    manifest_path = os.path.join(out_dir, "manifest_benchmark.json")
    if os.path.exists(metrics_path):
        if not os.path.exists(manifest_path):
            raise UsageError(
                f"{metrics_path} exists without a manifest; use a fresh --out directory"
            )
        with open(manifest_path, encoding="utf-8") as fh:
            previous = json.load(fh)
        if previous.get("config_hash") != digest:
            raise UsageError(
                "existing benchmark output was produced by a different config; "
                "use a fresh --out directory"
            )

    t_start = time.perf_counter()
    metric_rows, timing_rows, done = _load_benchmark_state(
        metrics_path, timings_path, replicates, methods
    )
    if done:
        print(f"resuming: {len(done)} of {replicates} replicates already complete")

    failures: dict[int, str] = {}
    for rep in range(replicates):
        if rep in done:
            continue
        try:
            reports = run_replicate_set(
                sim,
                methods,
                boost_cfg,
                icrf_params,
                rep,
                thresholds=thresholds,
                n_threads=threads,
            )
        except Exception as exc:
            failures[rep] = f"{type(exc).__name__}: {exc}"
            print(f"replicate {rep} failed: {failures[rep]}", file=sys.stderr)
            continue
        for report in reports:
            for r, method, metric, value in report_rows(report):
                if not metric.startswith("time_"):
                    metric_rows.append([str(r), method, metric, _fmt(value)])
            timing_rows.append(
                [str(report.replicate), report.method]
                + [_fmt(report.timings[key]) for key in _TIMING_HEADER[2:]]
            )

    metric_rows.sort(key=lambda row: (int(row[0]), row[1], row[2]))
    timing_rows.sort(key=lambda row: (int(row[0]), row[1]))
    _write_csv(metrics_path, ["replicate", "method", "metric", "value"], metric_rows)
    _write_csv(timings_path, _TIMING_HEADER, timing_rows)
    _write_manifest(
        out_dir,
        "benchmark",
        digest,
        seed,
        {"time_total": time.perf_counter() - t_start},
        [metrics_path, timings_path],
    )
    if failures:
        print(
            f"benchmark incomplete: {len(failures)} replicate(s) failed; "
            "rerun with the same --out to retry",
            file=sys.stderr,
        )
        return EXIT_RUNTIME
    print(
        f"benchmark complete: {replicates} replicate(s) x {len(methods)} method(s) -> {metrics_path}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icboost",
        description="Boosting for interval-censored responses: simulation, fitting, and theory checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, threads=False, seed=True):
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--out", required=True, help="output directory")
        if seed:
            p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        if threads:
            p.add_argument("--threads", type=int, default=1, help="forest workers (0 = auto)")

    p = sub.add_parser("simulate", help="draw a synthetic interval-censored dataset")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one boosted model to a dataset file")
    p.add_argument("--data", required=True, help="training dataset CSV")
    p.add_argument("--method", required=True, choices=METHODS)
    common(p, threads=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="apply a saved model to a feature table")
    p.add_argument("--model", required=True, help="model file from fit")
    p.add_argument("--data", required=True, help="CSV with feature columns x1..xp")
    common(p, seed=False)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against held-out truth")
    p.add_argument("--pred", required=True, help="predictions CSV from predict")
    p.add_argument("--truth", required=True, help="CSV with x1..xp and phi columns")
    common(p, seed=False)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("verify-theory", help="run the boosting theory checks")
    common(p)
    p.set_defaults(func=cmd_verify_theory)

    p = sub.add_parser("benchmark", help="replicated method comparison study")
    common(p, threads=True)
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"error [{args.command}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
