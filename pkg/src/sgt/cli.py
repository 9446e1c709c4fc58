"""Command-line front end.

    sgt synth --out blobs.csv --classes 3 --per-class 30 --dim 10
    sgt classify --dataset blobs.csv --method sgc --out run/
    sgt cv --dataset blobs.csv --method sgc,gc,src --folds 2 --out run/
    sgt noise-sweep --dataset blobs.csv --noise-levels 0,0.1,0.2 --out run/
    sgt size-sweep --dataset blobs.csv --proportions 0.1,0.2,0.5 --out run/
    sgt param-sweep --dataset blobs.csv --beta-grid 1e-3,1e-1 --lambda-grid 1,1e3 --out run/
    sgt graph --dataset blobs.csv --method sgc --out run/

Settings come from built-in defaults, then ``--config FILE`` (JSON), then
command-line flags.  Exit status: 0 success, 1 invalid input, 2 solver failure.
Set ``SGT_LOG`` (e.g. ``INFO``) for log output on stderr.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import SrcModel, src_classify
from .data import DatasetError, load_dataset, make_blobs, normalize_columns, save_dataset
from .evaluate import (
    GC,
    SGC,
    SRC,
    CvSpec,
    cross_validate,
    derive_seed,
    fold_assignment,
    noise_sweep,
    param_sweep,
    size_sweep,
    write_results,
)
from .graph import build_knn_heat_graph, build_sparse_graph, export_graph, normalized_laplacian
from .lasso import LassoConfig, LassoError
from .transduct import StageError, TransductionConfig, TransductionError, classify_with_laplacian

log = logging.getLogger("sgt")

METHODS = ("sgc", "src", "gc")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    dataset: str | None = None
    format: str = "csv"
    method: list = field(default_factory=lambda: ["sgc"])
    beta: float = 1e-3
    lam: float = 1e3
    knn_k: int = 7
    sigma: float | None = None
    tol: float = 1e-7
    max_iters: int = 10_000
    degree_excludes_diagonal: bool = False
    folds: int = 2
    train_folds: int = 1
    stratified: bool = True
    noise_levels: list = field(default_factory=lambda: [0.0, 0.1, 0.2, 0.3, 0.4])
    proportions: list = field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4, 0.5])
    beta_grid: list = field(default_factory=lambda: [1e-4, 1e-3, 1e-2, 1e-1])
    lambda_grid: list = field(default_factory=lambda: [1e-1, 1.0, 1e1, 1e2, 1e3, 1e4, 1e5])
    normalize: bool = True
    seed: int = 0
    jobs: int = 1
    backend: str | None = None
    out: str = "."
    # synth
    classes: int = 3
    per_class: int = 30
    dim: int = 10
    separation: float = 8.0
    blob_sigma: float = 1.0

    def snapshot(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("jobs")  # must not leak into outputs: --jobs 1 and 8 write identical files
        d.pop("out")
        return d


_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}
# config-file / flag spelling -> RunConfig attribute
_ALIASES = {"lambda": "lam"}


def _load_config_file(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise UsageError(f"config file {path}: expected a JSON object")
    out = {}
    for key, value in raw.items():
        name = _ALIASES.get(key, key.replace("-", "_"))
        if name not in _FIELDS:
            raise UsageError(f"config file {path}: unknown key {key!r}")
        out[name] = value
    return out


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _methods(text):
    names = [v.strip() for v in text.split(",") if v.strip()]
    bad = [n for n in names if n not in METHODS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"methods must be from {','.join(METHODS)}, got {text!r}")
    return names


def _common(p):
    g = p.add_argument_group("data")
    g.add_argument("--config", help="JSON file of settings (overridden by flags)")
    g.add_argument("--dataset", help="dataset file")
    g.add_argument("--format", choices=["csv", "binary"], help="dataset file format (default csv)")
    g.add_argument("--no-normalize", dest="normalize", action="store_const", const=False,
                   help="skip unit-norm scaling of samples")
    g = p.add_argument_group("method")
    g.add_argument("--method", type=_methods, help="sgc, src or gc; sweeps accept a comma list")
    g.add_argument("--beta", type=float, help="sparsity trade-off in (0, 1) (default 1e-3)")
    g.add_argument("--lambda", dest="lam", type=float, help="label-fit weight > 0 (default 1e3)")
    g.add_argument("--knn-k", type=int, help="neighbours for the gc graph (default 7)")
    g.add_argument("--sigma", type=float, help="heat-kernel width for gc (default: median distance)")
    g.add_argument("--tol", type=float, help="coordinate descent tolerance (default 1e-7)")
    g.add_argument("--max-iters", type=int, help="coordinate descent sweep limit (default 10000)")
    g.add_argument("--degree-excludes-diagonal", action="store_const", const=True,
                   help="drop self-similarity from the Laplacian degrees")
    g.add_argument("--backend", choices=["numba", "numpy"], help="kernel backend")
    g = p.add_argument_group("protocol")
    g.add_argument("--folds", type=int, help="cross-validation folds (default 2)")
    g.add_argument("--train-folds", type=int, help="labeled folds per rotation (default 1)")
    g.add_argument("--unstratified", dest="stratified", action="store_const", const=False,
                   help="split folds without regard to class")
    g.add_argument("--noise-levels", type=_floats, help="salt-and-pepper proportions")
    g.add_argument("--proportions", type=_floats, help="training proportions for size-sweep")
    g.add_argument("--beta-grid", type=_floats, help="beta values for param-sweep")
    g.add_argument("--lambda-grid", type=_floats, help="lambda values for param-sweep")
    g = p.add_argument_group("run")
    g.add_argument("--seed", type=int, help="root random seed (default 0)")
    g.add_argument("--jobs", type=int, help="worker threads (default 1)")
    g.add_argument("--out", help="output directory (synth: output file)")


def build_parser():
    parser = _Parser(prog="sgt", description="Sparse graph-based transduction toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "classify": "one transductive classification; writes predictions.csv",
        "cv": "cross-validation error; writes cv.csv/json",
        "noise-sweep": "error vs salt-and-pepper level",
        "size-sweep": "error vs training proportion",
        "param-sweep": "sgc error over a beta x lambda grid",
        "graph": "export the affinity graph",
        "synth": "write a synthetic blobs dataset",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        _common(p)
        if name == "synth":
            g = p.add_argument_group("synth")
            g.add_argument("--classes", type=int, help="number of blobs (default 3)")
            g.add_argument("--per-class", type=int, help="samples per blob (default 30)")
            g.add_argument("--dim", type=int, help="feature dimension (default 10)")
            g.add_argument("--separation", type=float, help="minimum center distance (default 8)")
            g.add_argument("--blob-sigma", type=float, help="blob standard deviation (default 1)")
    return parser


def resolve_config(args) -> RunConfig:
    values = {}
    if args.config:
        values.update(_load_config_file(args.config))
    for key, value in vars(args).items():
        if key in _FIELDS and value is not None:
            values[key] = value
    if isinstance(values.get("method"), str):
        values["method"] = _methods(values["method"])
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise UsageError(str(exc)) from None


def _check(label, build):
    try:
        return build()
    except (ValueError, TypeError) as exc:
        raise UsageError(f"{label}: {exc}") from None


def _validate(cfg: RunConfig, command: str):
    _check("--beta", lambda: LassoConfig(beta=cfg.beta))
    _check("--tol/--max-iters", lambda: LassoConfig(beta=cfg.beta, tol=cfg.tol, max_iters=cfg.max_iters))
    _check("--lambda", lambda: TransductionConfig(lam=cfg.lam))
    if cfg.knn_k < 1:
        raise UsageError(f"--knn-k: must be >= 1, got {cfg.knn_k}")
    if cfg.sigma is not None and not cfg.sigma > 0:
        raise UsageError(f"--sigma: must be > 0, got {cfg.sigma}")
    if cfg.jobs < 1:
        raise UsageError(f"--jobs: must be >= 1, got {cfg.jobs}")
    if cfg.seed < 0:
        raise UsageError(f"--seed: must be >= 0, got {cfg.seed}")
    _check("--folds/--train-folds", lambda: CvSpec(cfg.folds, cfg.train_folds, 0, cfg.stratified))
    for lv in cfg.noise_levels:
        if not 0 <= lv <= 1:
            raise UsageError(f"--noise-levels: {lv} is outside [0, 1]")
    for p in cfg.proportions:
        if not 0 < p < 1:
            raise UsageError(f"--proportions: {p} is outside (0, 1)")
    for b in cfg.beta_grid:
        _check("--beta-grid", lambda: LassoConfig(beta=b))
    for lam in cfg.lambda_grid:
        _check("--lambda-grid", lambda: TransductionConfig(lam=lam))
    if command in ("classify", "graph") and len(cfg.method) != 1:
        raise UsageError(f"--method: {command} takes a single method")
    if command == "graph" and cfg.method[0] == "src":
        raise UsageError("--method: src builds no graph; use sgc or gc")
    if command == "synth":
        for name in ("classes", "per_class", "dim"):
            if getattr(cfg, name) < 1:
                raise UsageError(f"--{name.replace('_', '-')}: must be >= 1")
        if not cfg.separation > 0 or cfg.blob_sigma < 0:
            raise UsageError("--separation must be > 0 and --blob-sigma >= 0")
    elif not cfg.dataset:
        raise UsageError("--dataset is required")


# ---------------------------------------------------------------------------
# commands


def _handle(name, cfg: RunConfig, jobs=1):
    if name == "sgc":
        return SGC(cfg.beta, cfg.lam, cfg.tol, cfg.max_iters, cfg.degree_excludes_diagonal,
                   jobs=jobs, backend=cfg.backend)
    if name == "gc":
        return GC(cfg.knn_k, cfg.sigma, cfg.lam)
    return SRC(cfg.beta, cfg.tol, cfg.max_iters, backend=cfg.backend)


def _load(cfg: RunConfig, normalize=None):
    try:
        ds = load_dataset(cfg.dataset, cfg.format)
    except FileNotFoundError:
        raise UsageError(f"--dataset: file not found: {cfg.dataset}") from None
    except DatasetError as exc:
        raise UsageError(f"--dataset: {exc}") from None
    do_norm = cfg.normalize if normalize is None else normalize
    return normalize_columns(ds) if do_norm else ds


def _cv_spec(cfg):
    return CvSpec(cfg.folds, cfg.train_folds, derive_seed(cfg.seed, "folds"), cfg.stratified)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _label_name(ds, y):
    return "" if y < 0 else str(ds.class_names[y])


def cmd_classify(cfg: RunConfig) -> int:
    ds = _load(cfg)
    if ds.labeled_mask.all():
        # fully labeled file: label the first rotation's training folds only
        spec = _cv_spec(cfg)
        fold_of = fold_assignment(ds.labels, spec.folds, spec.seed, spec.stratified)
        ds = ds.with_mask(fold_of < spec.train_fold_count)
    if not ds.labeled_mask.any():
        raise UsageError("--dataset: no labeled samples")
    method = cfg.method[0]
    if method == "src":
        model = SrcModel.from_dataset(ds, LassoConfig(cfg.beta, cfg.max_iters, cfg.tol))
        pred = np.where(ds.labeled_mask, ds.labels, 0)
        score = np.full(ds.n_samples, np.nan)
        for i in np.flatnonzero(~ds.labeled_mask):
            pred[i], res = src_classify(model, ds.features[:, i], backend=cfg.backend)
            score[i] = -res.min()
    else:
        h = _handle(method, cfg, cfg.jobs)
        if method == "sgc":
            lap = h.laplacian(ds)
        else:
            lap = normalized_laplacian(build_knn_heat_graph(ds, cfg.knn_k, cfg.sigma))
        pred, F = classify_with_laplacian(ds, lap, h.t_cfg)
        score = F.values.max(axis=1)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "predictions.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_index", "true_label", "predicted_label", "max_score", "labeled"])
        for i in range(ds.n_samples):
            s = "" if np.isnan(score[i]) else repr(float(score[i]))
            w.writerow([i, _label_name(ds, ds.labels[i]), _label_name(ds, pred[i]), s, int(ds.labeled_mask[i])])
    test = ~ds.labeled_mask & (ds.labels >= 0)
    summary = {
        "config": cfg.snapshot(),
        "n": ds.n_samples,
        "labeled": int(ds.labeled_mask.sum()),
        "unlabeled": int((~ds.labeled_mask).sum()),
        "class_names": [str(c) for c in ds.class_names],
        "error_percent": float(100.0 * np.mean(pred[test] != ds.labels[test])) if test.any() else None,
    }
    _write_json(out / "summary.json", summary)
    return 0


def cmd_cv(cfg: RunConfig) -> int:
    ds = _load(cfg)
    spec = _cv_spec(cfg)
    results = [cross_validate(ds, spec, _handle(m, cfg), jobs=cfg.jobs) for m in cfg.method]
    write_results(results, cfg.out, "cv", run_config=cfg.snapshot())
    return 0


def cmd_noise_sweep(cfg: RunConfig) -> int:
    ds = _load(cfg, normalize=False)
    methods = [_handle(m, cfg) for m in cfg.method]
    grid = noise_sweep(ds, cfg.noise_levels, _cv_spec(cfg), methods, normalize=cfg.normalize, jobs=cfg.jobs)
    write_results([r for row in grid for r in row], cfg.out, "noise_sweep", "noise_level", cfg.snapshot())
    return 0


def cmd_size_sweep(cfg: RunConfig) -> int:
    ds = _load(cfg)
    methods = [_handle(m, cfg) for m in cfg.method]
    grid = size_sweep(ds, cfg.proportions, methods, derive_seed(cfg.seed, "folds"), cfg.stratified, jobs=cfg.jobs)
    write_results([r for row in grid for r in row], cfg.out, "size_sweep", "proportion", cfg.snapshot())
    return 0


def cmd_param_sweep(cfg: RunConfig) -> int:
    ds = _load(cfg)
    grid = param_sweep(ds, cfg.beta_grid, cfg.lambda_grid, _cv_spec(cfg), jobs=cfg.jobs, tol=cfg.tol,
                       max_iters=cfg.max_iters, degree_excludes_diagonal=cfg.degree_excludes_diagonal,
                       backend=cfg.backend)
    write_results([r for row in grid for r in row], cfg.out, "param_sweep", run_config=cfg.snapshot())
    return 0


def cmd_graph(cfg: RunConfig) -> int:
    ds = _load(cfg)
    if cfg.method[0] == "sgc":
        g = build_sparse_graph(ds, LassoConfig(cfg.beta, cfg.max_iters, cfg.tol), jobs=cfg.jobs, backend=cfg.backend)
    else:
        g = build_knn_heat_graph(ds, cfg.knn_k, cfg.sigma)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    export_graph(g, out / "graph.csv", {"dataset": str(cfg.dataset), "normalized": cfg.normalize})
    return 0


def cmd_synth(cfg: RunConfig) -> int:
    ds = make_blobs(cfg.classes, cfg.per_class, cfg.dim, cfg.separation, cfg.blob_sigma,
                    derive_seed(cfg.seed, "synth"))
    out = Path(cfg.out)
    if out.is_dir():
        out = out / f"blobs.{'csv' if cfg.format == 'csv' else 'bin'}"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, out, cfg.format)
    return 0


COMMANDS = {
    "classify": cmd_classify,
    "cv": cmd_cv,
    "noise-sweep": cmd_noise_sweep,
    "size-sweep": cmd_size_sweep,
    "param-sweep": cmd_param_sweep,
    "graph": cmd_graph,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("SGT_LOG", "WARNING").upper(), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
        _validate(cfg, args.command)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"sgt {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (StageError, TransductionError, LassoError, np.linalg.LinAlgError) as exc:
        print(f"sgt {args.command}: solver failure: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, ValueError) as exc:
        print(f"sgt {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
