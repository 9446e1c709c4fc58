import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from sgt.cli import build_parser, main
from sgt.data import load_dataset, make_blobs, normalize_columns, save_dataset
from sgt.evaluate import derive_seed


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "blobs.csv"
    save_dataset(make_blobs(2, 8, 5, 8.0, 1.0, seed=1), path)
    return path


def run(*args):
    return main([str(a) for a in args])


def test_classify(dataset, tmp_path):
    assert run("classify", "--dataset", dataset, "--out", tmp_path) == 0
    with open(tmp_path / "predictions.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 16
    assert set(rows[0]) == {"sample_index", "true_label", "predicted_label", "max_score", "labeled"}
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["labeled"] + summary["unlabeled"] == 16
    assert 0 <= summary["error_percent"] <= 100


@pytest.mark.parametrize("method", ["src", "gc"])
def test_classify_other_methods(dataset, tmp_path, method):
    assert run("classify", "--dataset", dataset, "--method", method, "--knn-k", 3, "--out", tmp_path) == 0


def test_classify_uses_file_mask(tmp_path):
    ds = make_blobs(2, 5, 4, 8.0, 1.0, seed=0)
    path = tmp_path / "d.csv"
    save_dataset(ds, path)
    lines = path.read_text().splitlines()
    for i in (2, 4, 7):  # blank the label of a few samples
        lines[i] = "," + lines[i].split(",", 1)[1]
    path.write_text("\n".join(lines) + "\n")
    assert run("classify", "--dataset", path, "--out", tmp_path / "o") == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["unlabeled"] == 3 and summary["error_percent"] is None


def test_missing_dataset_names_path(tmp_path, capsys):
    assert run("classify", "--dataset", tmp_path / "nope.csv", "--out", tmp_path) == 1
    assert "nope.csv" in capsys.readouterr().err


def test_negative_lambda_names_field(dataset, tmp_path, capsys):
    assert run("classify", "--dataset", dataset, "--lambda", -1, "--out", tmp_path) == 1
    assert "--lambda" in capsys.readouterr().err


@pytest.mark.parametrize("args", [
    ["classify", "--bogus"],
    ["classify", "--beta", "x"],
    ["nosuch"],
    ["cv", "--method", "svm"],
])
def test_bad_flags_exit_one(args):
    assert main(args) == 1


@pytest.mark.parametrize("args, field", [
    (["--beta", "1.5"], "--beta"),
    (["--folds", "1"], "--folds"),
    (["--noise-levels", "0,2"], "--noise-levels"),
    (["--jobs", "0"], "--jobs"),
])
def test_validation_names_field(dataset, tmp_path, capsys, args, field):
    assert main(["cv", "--dataset", str(dataset), "--out", str(tmp_path), *args]) == 1
    assert field in capsys.readouterr().err


def test_help_lists_every_flag():
    text = build_parser()._subparsers._group_actions[0].choices["noise-sweep"].format_help()
    for flag in ["--dataset", "--format", "--method", "--beta", "--lambda", "--knn-k", "--sigma", "--folds",
                 "--train-folds", "--noise-levels", "--proportions", "--seed", "--jobs", "--out", "--config"]:
        assert flag in text


def test_module_entry_point_help():
    out = subprocess.run([sys.executable, "-m", "sgt", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "param-sweep" in out.stdout


def test_config_precedence(dataset, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"lambda": 5.0, "beta": 0.05, "knn_k": 3}))
    assert run("cv", "--dataset", dataset, "--config", cfg, "--beta", 0.01, "--method", "sgc",
               "--out", tmp_path / "o") == 0
    run_cfg = json.loads((tmp_path / "o" / "cv.json").read_text())["run"]
    assert run_cfg["beta"] == 0.01  # flag beats file
    assert run_cfg["lam"] == 5.0  # file beats default
    assert run_cfg["folds"] == 2  # default


def test_config_unknown_key(dataset, tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"lamda": 5.0}))
    assert run("cv", "--dataset", dataset, "--config", cfg, "--out", tmp_path) == 1
    assert "lamda" in capsys.readouterr().err


def test_solver_failure_exit_two(tmp_path, capsys):
    path = tmp_path / "d.csv"
    path.write_text("label,f0,f1\n0,1.0,0.0\n1,0.0,1.0\n,1e308,1e308\n")
    # the huge sample overflows to inf after squaring inside the sparse coder
    code = run("classify", "--dataset", path, "--no-normalize", "--out", tmp_path / "o")
    assert code == 2
    assert "solver failure" in capsys.readouterr().err


def test_param_sweep_rows(dataset, tmp_path):
    assert run("param-sweep", "--dataset", dataset, "--out", tmp_path) == 0
    rows = (tmp_path / "param_sweep.csv").read_text().splitlines()
    assert len(rows) == 1 + 4 * 7


def test_noise_sweep_shape(dataset, tmp_path):
    assert run("noise-sweep", "--dataset", dataset, "--method", "sgc,gc", "--knn-k", 3, "--out", tmp_path) == 0
    rows = list(csv.DictReader(open(tmp_path / "noise_sweep.csv")))
    assert len(rows) == 10
    assert [r["level"] for r in rows[:5]] == ["0.0", "0.1", "0.2", "0.3", "0.4"]


def test_size_sweep_shape(dataset, tmp_path):
    assert run("size-sweep", "--dataset", dataset, "--method", "gc", "--knn-k", 2,
               "--proportions", "0.25,0.5", "--out", tmp_path) == 0
    assert len((tmp_path / "size_sweep.csv").read_text().splitlines()) == 3


def test_graph_export(dataset, tmp_path):
    assert run("graph", "--dataset", dataset, "--out", tmp_path) == 0
    meta = json.loads((tmp_path / "graph.json").read_text())
    assert meta["kind"] == "sparse" and meta["n"] == 16
    assert run("graph", "--dataset", dataset, "--method", "src", "--out", tmp_path) == 1


@pytest.mark.parametrize("fmt", ["csv", "binary"])
def test_synth_round_trip(tmp_path, fmt):
    path = tmp_path / "s.dat"
    assert run("synth", "--format", fmt, "--classes", 3, "--per-class", 4, "--dim", 5, "--seed", 9,
               "--out", path) == 0
    back = load_dataset(path, fmt)
    ref = make_blobs(3, 4, 5, 8.0, 1.0, derive_seed(9, "synth"))
    np.testing.assert_array_equal(back.features, ref.features)
    np.testing.assert_array_equal(back.labels, ref.labels)


def test_synth_rejects_zero_per_class(tmp_path):
    assert run("synth", "--per-class", 0, "--out", tmp_path / "x.csv") == 1


def test_cv_byte_identical(dataset, tmp_path):
    for d in ("a", "b"):
        assert run("cv", "--dataset", dataset, "--method", "sgc,gc,src", "--knn-k", 3, "--seed", 4,
                   "--out", tmp_path / d) == 0
    for name in ("cv.csv", "cv.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_no_normalize_changes_input(dataset, tmp_path):
    assert run("graph", "--dataset", dataset, "--method", "gc", "--knn-k", 3, "--out", tmp_path / "n") == 0
    assert run("graph", "--dataset", dataset, "--method", "gc", "--knn-k", 3, "--no-normalize",
               "--out", tmp_path / "r") == 0
    a = json.loads((tmp_path / "n" / "graph.json").read_text())
    b = json.loads((tmp_path / "r" / "graph.json").read_text())
    ds = load_dataset(dataset)
    assert b["sigma"] > a["sigma"]
    assert np.isclose(a["sigma"], np.median(np.linalg.norm(
        normalize_columns(ds).features[:, :, None] - normalize_columns(ds).features[:, None, :], axis=0)[
        np.triu_indices(16, 1)]))
