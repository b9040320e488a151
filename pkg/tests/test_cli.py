"""End-to-end tests for the command-line front end.

Every command is invoked in-process through main(argv) so exit codes and
outputs are checked without spawning subprocesses.
"""

import csv
import filecmp
import json
import os

import numpy as np
import pytest

from icboost.boosting import BoostConfig, fit_boost, predict_boost
from icboost.cli import config_hash, main, read_config
from icboost.data import load_dataset
from icboost.evalsim import SimConfig, baseline_responses, gen_aft, pseudo_responses, skdt, smaxae, smsqe
from icboost.icrf import IcrfParams, icrf_fit
from icboost.transform import GTransform


def write_cfg(path, text):
    path.write_text(text)
    return str(path)


def read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader if row]


SIM_CFG = """
# small smoke dataset
n = 80
p = 1
sigma = 0.25
tau = 6.0
m = 3
seed = 7
"""

FIT_CFG = """
tau = 6.0
df = 10
shrink_u = 0.1
stop_w = 3
n_trees = 4
n_iterations = 2
min_node_size = 8
"""


@pytest.fixture()
def sim_dir(tmp_path):
    cfg = write_cfg(tmp_path / "sim.cfg", SIM_CFG)
    out = tmp_path / "data"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    return out


def test_config_registry_errors(tmp_path):
    out = str(tmp_path / "o")
    bad = write_cfg(tmp_path / "a.cfg", "bogus = 1\n")
    assert main(["simulate", "--config", bad, "--out", out]) == 2
    wrong = write_cfg(tmp_path / "b.cfg", "replicates = 3\n")
    assert main(["simulate", "--config", wrong, "--out", out]) == 2
    dup = write_cfg(tmp_path / "c.cfg", "n = 10\nn = 20\n")
    assert main(["simulate", "--config", dup, "--out", out]) == 2
    value = write_cfg(tmp_path / "d.cfg", "n = ten\n")
    assert main(["simulate", "--config", value, "--out", out]) == 2
    shape = write_cfg(tmp_path / "e.cfg", "just a line\n")
    assert main(["simulate", "--config", shape, "--out", out]) == 2
    invalid = write_cfg(tmp_path / "f.cfg", "sigma = -1\n")
    assert main(["simulate", "--config", invalid, "--out", out]) == 2
    missing = str(tmp_path / "absent.cfg")
    assert main(["simulate", "--config", missing, "--out", out]) == 2


def test_config_comments_and_hash(tmp_path):
    cfg = write_cfg(tmp_path / "c.cfg", "\n# full comment\nn = 40  # trailing\n\nsigma = 0.5\n")
    parsed = read_config(cfg, "simulate")
    assert parsed == {"n": 40, "sigma": 0.5}
    assert config_hash(parsed, 1) == config_hash({"sigma": 0.5, "n": 40}, 1)
    assert config_hash(parsed, 1) != config_hash(parsed, 2)


def test_usage_error_on_missing_arguments():
    with pytest.raises(SystemExit) as err:
        main([])
    assert err.value.code == 2
    with pytest.raises(SystemExit) as err:
        main(["simulate"])  # --out is required
    assert err.value.code == 2


def test_simulate_counts_split_and_determinism(tmp_path):
    cfg = write_cfg(tmp_path / "n500.cfg", "n = 500\nseed = 3\n")
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", cfg, "--out", str(out1)]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(out2)]) == 0
    header, rows = read_rows(out1 / "train.csv")
    assert header[:3] == ["id", "left", "right"]
    assert len(rows) == 400
    theader, trows = read_rows(out1 / "test.csv")
    assert theader == ["id", "x1", "phi"]
    assert len(trows) == 100
    assert filecmp.cmp(out1 / "train.csv", out2 / "train.csv", shallow=False)
    assert filecmp.cmp(out1 / "test.csv", out2 / "test.csv", shallow=False)
    manifest = json.loads((out1 / "manifest_simulate.json").read_text())
    assert manifest["command"] == "simulate"
    assert sorted(manifest["outputs"]) == ["test.csv", "train.csv"]
    assert manifest["seed"] == 3


def test_seed_flag_overrides_config(tmp_path):
    cfg = write_cfg(tmp_path / "s.cfg", "n = 30\nseed = 3\n")
    out1, out2, out3 = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["simulate", "--config", cfg, "--out", str(out1)]) == 0
    assert main(["simulate", "--config", cfg, "--seed", "3", "--out", str(out2)]) == 0
    assert main(["simulate", "--config", cfg, "--seed", "4", "--out", str(out3)]) == 0
    assert filecmp.cmp(out1 / "train.csv", out2 / "train.csv", shallow=False)
    assert not filecmp.cmp(out1 / "train.csv", out3 / "train.csv", shallow=False)


def test_fit_predict_evaluate_matches_in_process_baseline(sim_dir, tmp_path):
    fit_cfg = write_cfg(tmp_path / "fit.cfg", FIT_CFG)
    fit_out = tmp_path / "fit"
    rc = main([
        "fit", "--data", str(sim_dir / "train.csv"), "--method", "N",
        "--config", fit_cfg, "--out", str(fit_out),
    ])
    assert rc == 0
    pred_out = tmp_path / "pred"
    rc = main([
        "predict", "--model", str(fit_out / "model.npz"),
        "--data", str(sim_dir / "test.csv"), "--out", str(pred_out),
    ])
    assert rc == 0
    eval_cfg = write_cfg(tmp_path / "eval.cfg", "thresholds = 2, 3\n")
    eval_out = tmp_path / "eval"
    rc = main([
        "evaluate", "--pred", str(pred_out / "predictions.csv"),
        "--truth", str(sim_dir / "test.csv"), "--config", eval_cfg,
        "--out", str(eval_out),
    ])
    assert rc == 0

    # the same pipeline assembled from library calls must agree bit for bit
    train = load_dataset(str(sim_dir / "train.csv"), tau=6.0)
    resp = baseline_responses(train, "N", GTransform("log"))
    cfg = BoostConfig(
        mode="imp", task="regression", df=10.0, shrink_u=0.1, stop_w=3.0,
        keep_final_iterate=True,
    )
    model = fit_boost(train.feature_matrix(), resp, cfg)
    _, trows = read_rows(sim_dir / "test.csv")
    feats = np.array([[float(r[1])] for r in trows])
    phis = np.array([float(r[2]) for r in trows])
    expected = predict_boost(model, feats)

    _, prows = read_rows(pred_out / "predictions.csv")
    got = np.array([float(r[1]) for r in prows])
    assert np.array_equal(got, expected)

    _, mrows = read_rows(eval_out / "metrics.csv")
    metrics = {r[0]: float(r[1]) for r in mrows}
    assert metrics["smaxae"] == smaxae(expected, phis)
    assert metrics["smsqe"] == smsqe(expected, phis)
    assert metrics["skdt"] == skdt(expected, phis)
    assert set(metrics) >= {"sensitivity_s2", "specificity_s2"}


def test_fit_pseudo_matches_in_process_pipeline(sim_dir, tmp_path):
    fit_cfg = write_cfg(tmp_path / "fit.cfg", FIT_CFG)
    fit_out = tmp_path / "fit"
    rc = main([
        "fit", "--data", str(sim_dir / "train.csv"), "--method", "CUT",
        "--config", fit_cfg, "--seed", "5", "--out", str(fit_out),
    ])
    assert rc == 0

    train = load_dataset(str(sim_dir / "train.csv"), tau=6.0)
    forest = icrf_fit(
        train,
        IcrfParams(n_trees=4, n_iterations=2, min_node_size=8, seed=5),
        1,
    )
    y1, y2 = pseudo_responses(train, forest, GTransform("log"))
    cfg = BoostConfig(mode="cut", task="regression", df=10.0, shrink_u=0.1, stop_w=3.0)
    model = fit_boost(train.feature_matrix(), y1, cfg, y2)

    pred_out = tmp_path / "pred"
    rc = main([
        "predict", "--model", str(fit_out / "model.npz"),
        "--data", str(sim_dir / "train.csv"), "--out", str(pred_out),
    ])
    assert rc == 0
    _, prows = read_rows(pred_out / "predictions.csv")
    got = np.array([float(r[1]) for r in prows])
    assert np.array_equal(got, predict_boost(model, train.feature_matrix()))


def test_fit_classification_outputs_bounded(sim_dir, tmp_path):
    fit_cfg = write_cfg(
        tmp_path / "fit.cfg",
        FIT_CFG + "task = classification\nthreshold = 2\nmax_iterations = 500\n",
    )
    fit_out = tmp_path / "fit"
    rc = main([
        "fit", "--data", str(sim_dir / "train.csv"), "--method", "N",
        "--config", fit_cfg, "--out", str(fit_out),
    ])
    assert rc == 0
    pred_out = tmp_path / "pred"
    rc = main([
        "predict", "--model", str(fit_out / "model.npz"),
        "--data", str(sim_dir / "test.csv"), "--out", str(pred_out),
    ])
    assert rc == 0
    _, prows = read_rows(pred_out / "predictions.csv")
    preds = np.array([float(r[1]) for r in prows])
    assert np.all(np.abs(preds) <= 1.0)


def test_fit_task_threshold_validation(sim_dir, tmp_path):
    out = str(tmp_path / "o")
    no_thr = write_cfg(tmp_path / "a.cfg", FIT_CFG + "task = classification\n")
    rc = main(["fit", "--data", str(sim_dir / "train.csv"), "--method", "N",
               "--config", no_thr, "--out", out])
    assert rc == 2
    stray = write_cfg(tmp_path / "b.cfg", FIT_CFG + "threshold = 2\n")
    rc = main(["fit", "--data", str(sim_dir / "train.csv"), "--method", "N",
               "--config", stray, "--out", out])
    assert rc == 2
    rc = main(["fit", "--data", str(tmp_path / "absent.csv"), "--method", "N",
               "--out", out])
    assert rc == 2


def test_predict_feature_dim_mismatch_exits_2(sim_dir, tmp_path):
    fit_cfg = write_cfg(tmp_path / "fit.cfg", FIT_CFG)
    fit_out = tmp_path / "fit"
    assert main([
        "fit", "--data", str(sim_dir / "train.csv"), "--method", "N",
        "--config", fit_cfg, "--out", str(fit_out),
    ]) == 0
    wide = tmp_path / "wide.csv"
    wide.write_text("id,x1,x2\n0,0.5,0.5\n")
    rc = main([
        "predict", "--model", str(fit_out / "model.npz"),
        "--data", str(wide), "--out", str(tmp_path / "p"),
    ])
    assert rc == 2
    empty = tmp_path / "empty.csv"
    empty.write_text("id,x1\n")
    rc = main([
        "predict", "--model", str(fit_out / "model.npz"),
        "--data", str(empty), "--out", str(tmp_path / "p"),
    ])
    assert rc == 2


def test_evaluate_input_validation(sim_dir, tmp_path):
    out = str(tmp_path / "o")
    empty = tmp_path / "empty.csv"
    empty.write_text("id,prediction\n")
    rc = main(["evaluate", "--pred", str(empty),
               "--truth", str(sim_dir / "test.csv"), "--out", out])
    assert rc == 2

    preds = tmp_path / "preds.csv"
    preds.write_text("id,prediction\n99,1.0\n")
    rc = main(["evaluate", "--pred", str(preds),
               "--truth", str(sim_dir / "test.csv"), "--out", out])
    assert rc == 2

    nophi = tmp_path / "nophi.csv"
    nophi.write_text("id,x1\n0,0.5\n")
    one = tmp_path / "one.csv"
    one.write_text("id,prediction\n0,1.0\n")
    rc = main(["evaluate", "--pred", str(one), "--truth", str(nophi), "--out", out])
    assert rc == 2


def test_verify_theory_defaults_pass(tmp_path):
    out = tmp_path / "t"
    assert main(["verify-theory", "--out", str(out)]) == 0
    header, rows = read_rows(out / "theory_report.csv")
    assert header == ["check", "status", "detail"]
    assert [r[0] for r in rows] == [
        "operator_path_identity",
        "mse_decomposition",
        "moment_monotonicity",
        "plateau",
        "projection_constancy",
        "improvement_window",
        "noise_crossing",
    ]
    assert all(r[1] == "PASS" for r in rows)


def test_verify_theory_projection_skips_decay_rows(tmp_path):
    cfg = write_cfg(tmp_path / "p.cfg", "smoother = projection\n")
    out = tmp_path / "t"
    assert main(["verify-theory", "--config", cfg, "--out", str(out)]) == 0
    _, rows = read_rows(out / "theory_report.csv")
    status = {r[0]: r[1] for r in rows}
    assert status["projection_constancy"] == "PASS"
    assert status["operator_path_identity"] == "PASS"
    assert status["moment_monotonicity"] == "SKIPPED"
    assert status["plateau"] == "SKIPPED"
    assert status["noise_crossing"] == "SKIPPED"

    clash = write_cfg(tmp_path / "c.cfg", "smoother = projection\nshrink_u = 0.1\n")
    assert main(["verify-theory", "--config", clash, "--out", str(out)]) == 2


def test_verify_theory_zero_tolerance_negative_control(tmp_path):
    cfg = write_cfg(tmp_path / "z.cfg", "tolerance = 0\n")
    out = tmp_path / "t"
    assert main(["verify-theory", "--config", cfg, "--out", str(out)]) == 1
    _, rows = read_rows(out / "theory_report.csv")
    failed = {r[0] for r in rows if r[1] == "FAIL"}
    assert failed == {"operator_path_identity", "mse_decomposition", "projection_constancy"}


BENCH_CFG = """
n = 60
p = 1
sigma = 0.25
tau = 6.0
m = 2
seed = 11
replicates = 3
thresholds = 2
df = 10
shrink_u = 0.1
stop_w = 3
max_iterations = 2000
n_trees = 4
n_iterations = 2
min_node_size = 8
"""


def test_benchmark_groups_resume_and_thread_invariance(tmp_path):
    cfg = write_cfg(tmp_path / "b.cfg", BENCH_CFG)
    out1 = tmp_path / "b1"
    assert main(["benchmark", "--config", cfg, "--out", str(out1), "--threads", "1"]) == 0

    header, rows = read_rows(out1 / "benchmark_metrics.csv")
    assert header == ["replicate", "method", "metric", "value"]
    groups = {(r[0], r[1]) for r in rows}
    assert len(groups) == 15  # 3 replicates x 5 methods
    per_group = {g: sorted(r[2] for r in rows if (r[0], r[1]) == g) for g in groups}
    assert all(
        names == ["sensitivity_s2", "skdt", "smaxae", "smsqe", "specificity_s2"]
        for names in per_group.values()
    )
    theader, trows = read_rows(out1 / "benchmark_timings.csv")
    assert theader == [
        "replicate", "method", "time_icrf", "time_transform", "time_boost", "time_total",
    ]
    assert len(trows) == 15

    # identical rerun resumes with nothing to do and leaves identical bytes
    before = (out1 / "benchmark_metrics.csv").read_bytes()
    assert main(["benchmark", "--config", cfg, "--out", str(out1), "--threads", "1"]) == 0
    assert (out1 / "benchmark_metrics.csv").read_bytes() == before

    # dropping one replicate and resuming reproduces the fresh file exactly
    for name in ("benchmark_metrics.csv", "benchmark_timings.csv"):
        path = out1 / name
        with open(path, newline="") as fh:
            all_rows = list(csv.reader(fh))
        kept = [all_rows[0]] + [r for r in all_rows[1:] if r[0] != "1"]
        with open(path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(kept)
    assert main(["benchmark", "--config", cfg, "--out", str(out1), "--threads", "1"]) == 0
    assert (out1 / "benchmark_metrics.csv").read_bytes() == before

    # a different thread count must not change the metric bytes
    out2 = tmp_path / "b2"
    assert main(["benchmark", "--config", cfg, "--out", str(out2), "--threads", "8"]) == 0
    assert (out2 / "benchmark_metrics.csv").read_bytes() == before

    # mismatched config into a populated directory is refused
    drift = write_cfg(tmp_path / "drift.cfg", BENCH_CFG.replace("seed = 11", "seed = 12"))
    assert main(["benchmark", "--config", drift, "--out", str(out1)]) == 2

    manifest = json.loads((out1 / "manifest_benchmark.json").read_text())
    assert manifest["outputs"] == ["benchmark_metrics.csv", "benchmark_timings.csv"]


def test_benchmark_metrics_file_without_manifest_refused(tmp_path):
    cfg = write_cfg(tmp_path / "b.cfg", BENCH_CFG)
    out = tmp_path / "b"
    out.mkdir()
    (out / "benchmark_metrics.csv").write_text("replicate,method,metric,value\n")
    assert main(["benchmark", "--config", cfg, "--out", str(out)]) == 2
