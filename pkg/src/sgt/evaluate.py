"""Experiment protocols: transductive cross-validation and parameter/noise/size sweeps.

Cross-validation here runs "inverted": of ``folds`` stratified folds, only
``train_fold_count`` are labeled and the classifier must label the rest, so
ten folds means a 10% training proportion.  Every rotation is scored on the
unlabeled samples only.

Classifiers are plain callables ``method(ds) -> labels`` with a ``name``
attribute; :class:`SGC`, :class:`GC` and :class:`SRC` wrap the three
implemented methods.  :class:`SGC` caches its graph Laplacian per feature
matrix, because the sparse graph depends on the samples but not on which of
them are labeled.
"""
from __future__ import annotations

import csv
import hashlib
import json
import threading
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import src_predict
from .data import FeatureDataset, NoiseSpec, inject_salt_pepper, normalize_columns
from .graph import build_knn_heat_graph, build_sparse_graph, normalized_laplacian
from .lasso import LassoConfig
from .transduct import StageError, TransductionConfig, classify_with_laplacian

__all__ = [
    "CvSpec",
    "ExperimentResult",
    "EvalError",
    "SGC",
    "GC",
    "SRC",
    "derive_seed",
    "fold_assignment",
    "cross_validate",
    "noise_sweep",
    "size_sweep",
    "param_sweep",
    "write_results",
]


class EvalError(ValueError):
    pass


def derive_seed(root: int, stage: str) -> int:
    """Independent 32-bit seed for a named stage, derived from one root seed."""
    ss = np.random.SeedSequence(int(root), spawn_key=(zlib.crc32(stage.encode()),))
    return int(ss.generate_state(1)[0])


@dataclass(frozen=True)
class CvSpec:
    folds: int = 2
    train_fold_count: int = 1
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if self.folds < 2:
            raise EvalError(f"folds must be >= 2, got {self.folds}")
        if not 1 <= self.train_fold_count < self.folds:
            raise EvalError(f"train_fold_count must lie in [1, {self.folds - 1}], got {self.train_fold_count}")
        if self.seed < 0:
            raise EvalError("seed must be non-negative")


@dataclass
class ExperimentResult:
    method: str
    per_fold_error: list
    mean: float
    std: float
    wall_time: float = 0.0
    config: dict = field(default_factory=dict)
    folds: list = field(default_factory=list)

    @classmethod
    def from_errors(cls, method, errors, **kw):
        e = np.asarray(errors, dtype=np.float64)
        return cls(method, [float(v) for v in e], float(e.mean()), float(e.std()), **kw)

    def to_dict(self, timing: bool = False) -> dict:
        out = {
            "method": self.method,
            "mean": self.mean,
            "std": self.std,
            "per_fold_error": self.per_fold_error,
            "folds": self.folds,
            "config": self.config,
        }
        if timing:
            out["wall_time"] = self.wall_time
        return out


# ---------------------------------------------------------------------------
# classifier handles


def _fingerprint(X) -> str:
    return hashlib.sha1(np.ascontiguousarray(X).tobytes()).hexdigest()


class _LaplacianCache:
    def __init__(self, size=8):
        self._size = size
        self._items = {}
        self._lock = threading.Lock()

    def get(self, key, build):
        with self._lock:
            if key not in self._items:
                if len(self._items) >= self._size:
                    self._items.pop(next(iter(self._items)))
                self._items[key] = build()
            return self._items[key]


class SGC:
    """Sparse-graph classifier handle."""

    name = "sgc"

    def __init__(self, beta=1e-3, lam=1e3, tol=1e-7, max_iters=10_000, degree_excludes_diagonal=False,
                 jobs=1, backend=None, _cache=None):
        self.lasso_cfg = LassoConfig(beta=beta, tol=tol, max_iters=max_iters)
        self.t_cfg = TransductionConfig(lam=lam)
        self.degree_excludes_diagonal = degree_excludes_diagonal
        self.jobs = jobs
        self.backend = backend
        self._cache = _cache or _LaplacianCache()

    def with_lambda(self, lam) -> "SGC":
        """Same graph settings (and graph cache), different ``lam``."""
        cfg = self.lasso_cfg
        return SGC(cfg.beta, lam, cfg.tol, cfg.max_iters, self.degree_excludes_diagonal,
                   self.jobs, self.backend, _cache=self._cache)

    def config(self) -> dict:
        return {"beta": self.lasso_cfg.beta, "lambda": self.t_cfg.lam, "tol": self.lasso_cfg.tol,
                "max_iters": self.lasso_cfg.max_iters,
                "degree_excludes_diagonal": self.degree_excludes_diagonal}

    def laplacian(self, ds: FeatureDataset):
        key = (_fingerprint(ds.features), self.lasso_cfg, self.degree_excludes_diagonal)

        def build():
            try:
                g = build_sparse_graph(ds, self.lasso_cfg, jobs=self.jobs, backend=self.backend)
            except Exception as exc:
                raise StageError("sparse graph", exc) from exc
            return normalized_laplacian(g, self.degree_excludes_diagonal)

        return self._cache.get(key, build)

    def __call__(self, ds: FeatureDataset) -> np.ndarray:
        return classify_with_laplacian(ds, self.laplacian(ds), self.t_cfg)[0]


class GC:
    """kNN heat-kernel graph classifier handle; ``sigma=None`` means median distance."""

    name = "gc"

    def __init__(self, k=7, sigma=None, lam=1e3):
        self.k = k
        self.sigma = sigma
        self.t_cfg = TransductionConfig(lam=lam)

    def config(self) -> dict:
        return {"k": self.k, "sigma": "median" if self.sigma is None else self.sigma, "lambda": self.t_cfg.lam}

    def __call__(self, ds: FeatureDataset) -> np.ndarray:
        try:
            g = build_knn_heat_graph(ds, self.k, self.sigma)
        except Exception as exc:
            raise StageError("knn graph", exc) from exc
        return classify_with_laplacian(ds, normalized_laplacian(g), self.t_cfg)[0]


class SRC:
    """Sparse-representation residual classifier handle."""

    name = "src"

    def __init__(self, beta=1e-3, tol=1e-7, max_iters=10_000, backend=None):
        self.lasso_cfg = LassoConfig(beta=beta, tol=tol, max_iters=max_iters)
        self.backend = backend

    def config(self) -> dict:
        return {"beta": self.lasso_cfg.beta, "tol": self.lasso_cfg.tol, "max_iters": self.lasso_cfg.max_iters}

    def __call__(self, ds: FeatureDataset) -> np.ndarray:
        return src_predict(ds, self.lasso_cfg, backend=self.backend)


def _method_name(method):
    return getattr(method, "name", getattr(method, "__name__", type(method).__name__))


def _method_config(method):
    cfg = getattr(method, "config", None)
    return cfg() if callable(cfg) else {}


# ---------------------------------------------------------------------------
# protocols


def fold_assignment(labels, folds: int, seed: int, stratified: bool = True) -> np.ndarray:
    """Fold id per sample.

    Stratified: each class is shuffled and dealt round-robin, with each class
    starting where the previous one stopped, so folds differ in size by at most
    one both per class and overall.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    out = np.empty(labels.size, dtype=np.int64)
    if not stratified:
        if labels.size < folds:
            raise EvalError(f"{labels.size} samples cannot fill {folds} folds")
        perm = rng.permutation(labels.size)
        out[perm] = np.arange(labels.size) % folds
        return out
    offset = 0
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < folds:
            raise EvalError(f"class {cls} has {idx.size} samples, fewer than {folds} folds")
        idx = idx[rng.permutation(idx.size)]
        out[idx] = (offset + np.arange(idx.size)) % folds
        offset += idx.size
    return out


def _run_jobs(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def cross_validate(ds: FeatureDataset, spec: CvSpec, method, jobs: int = 1) -> ExperimentResult:
    """Error (%) on the unlabeled folds of every rotation of ``spec``."""
    if np.any(ds.labels < 0):
        raise EvalError("cross-validation needs a true label for every sample")
    t0 = time.perf_counter()
    fold_of = fold_assignment(ds.labels, spec.folds, spec.seed, spec.stratified)

    def rotation(r):
        train = {(r + t) % spec.folds for t in range(spec.train_fold_count)}
        mask = np.isin(fold_of, sorted(train))
        pred = np.asarray(method(ds.with_mask(mask)))
        test = ~mask
        wrong = int(np.sum(pred[test] != ds.labels[test]))
        return {"rotation": r, "labeled": int(mask.sum()), "unlabeled": int(test.sum()), "errors": wrong}

    folds = _run_jobs(rotation, list(range(spec.folds)), jobs)
    errors = [100.0 * f["errors"] / f["unlabeled"] for f in folds]
    config = {"method": _method_config(method), "folds": spec.folds,
              "train_fold_count": spec.train_fold_count, "seed": spec.seed, "stratified": spec.stratified}
    return ExperimentResult.from_errors(_method_name(method), errors, wall_time=time.perf_counter() - t0,
                                       config=config, folds=folds)


def noise_sweep(ds: FeatureDataset, levels, spec: CvSpec, methods, normalize: bool = False, jobs: int = 1):
    """``grid[m][l]``: cross-validation of method ``m`` on data corrupted at ``levels[l]``.

    Noise is injected into the whole dataset before fold splitting, with one
    noise seed (derived from ``spec.seed``) and one fold split for all levels.
    ``normalize`` rescales samples to unit norm after corruption.
    """
    noise_seed = derive_seed(spec.seed, "noise")
    noisy = []
    for level in levels:
        d = inject_salt_pepper(ds, NoiseSpec(float(level), noise_seed))
        noisy.append(normalize_columns(d) if normalize else d)
    cells = [(m, l) for m in range(len(methods)) for l in range(len(levels))]
    flat = _run_jobs(lambda ml: cross_validate(noisy[ml[1]], spec, methods[ml[0]]), cells, jobs)
    grid = [[None] * len(levels) for _ in methods]
    for (m, l), res in zip(cells, flat):
        res.config["noise_level"] = float(levels[l])
        grid[m][l] = res
    return grid


def size_sweep(ds: FeatureDataset, proportions, methods, seed: int = 0, stratified: bool = True, jobs: int = 1):
    """``grid[m][p]``: training proportion ``p`` runs ``round(1/p)``-fold CV with one labeled fold."""
    specs = []
    for p in proportions:
        if not 0 < p < 1:
            raise EvalError(f"training proportion must lie in (0, 1), got {p}")
        specs.append(CvSpec(folds=int(round(1.0 / p)), train_fold_count=1, seed=seed, stratified=stratified))
    cells = [(m, i) for m in range(len(methods)) for i in range(len(specs))]
    flat = _run_jobs(lambda mi: cross_validate(ds, specs[mi[1]], methods[mi[0]]), cells, jobs)
    grid = [[None] * len(specs) for _ in methods]
    for (m, i), res in zip(cells, flat):
        res.config["proportion"] = float(proportions[i])
        grid[m][i] = res
    return grid


def param_sweep(ds: FeatureDataset, beta_grid, lambda_grid, spec: CvSpec, jobs: int = 1, **sgc_kw):
    """``grid[b][l]``: sparse-graph classifier CV at ``(beta_grid[b], lambda_grid[l])``."""
    rows = [SGC(beta=b, lam=lambda_grid[0], **sgc_kw) for b in beta_grid] if lambda_grid else []
    handles = [[h.with_lambda(lam) for lam in lambda_grid] for h in rows]
    # graphs first (one per beta), so lambda cells only re-solve the linear system
    _run_jobs(lambda h: h.laplacian(ds), rows, jobs)
    cells = [(b, l) for b in range(len(beta_grid)) for l in range(len(lambda_grid))]
    flat = _run_jobs(lambda bl: cross_validate(ds, spec, handles[bl[0]][bl[1]]), cells, jobs)
    grid = [[None] * len(lambda_grid) for _ in beta_grid]
    for (b, l), res in zip(cells, flat):
        grid[b][l] = res
    return grid


# ---------------------------------------------------------------------------
# output


def _param_string(cfg: dict) -> str:
    return ";".join(f"{k}={cfg[k]}" for k in sorted(cfg))


def write_results(results, out_dir, stem: str, level_key: str | None = None, run_config: dict | None = None):
    """Write ``<stem>.json`` (full detail) and ``<stem>.csv`` (method,param,level,mean,std).

    ``results`` is a flat list of :class:`ExperimentResult`.  Timing is left
    out so that reruns produce identical files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"run": run_config or {}, "results": [r.to_dict() for r in results]}
    (out_dir / f"{stem}.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    with open(out_dir / f"{stem}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "param", "level", "mean", "std"])
        for r in results:
            level = r.config.get(level_key, "") if level_key else ""
            w.writerow([r.method, _param_string(r.config.get("method", {})), level, repr(r.mean), repr(r.std)])
