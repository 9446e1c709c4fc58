"""Affinity graphs and the normalized graph Laplacian.

Two graph builders share one output type:

* :func:`build_sparse_graph` codes every sample against all the others and
  turns the coefficient magnitudes into symmetric edge weights.
* :func:`build_knn_heat_graph` is the metric baseline: heat-kernel weights on
  a symmetrized k-nearest-neighbour graph.

Both set each vertex's self-similarity to the sum of its other edge weights.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .data import FeatureDataset
from .lasso import LassoConfig, LassoError, check_scale, coordinate_descent

__all__ = [
    "AffinityGraph",
    "GraphError",
    "GraphLaplacian",
    "build_sparse_graph",
    "build_knn_heat_graph",
    "normalized_laplacian",
    "median_pairwise_distance",
    "sparse_codes",
    "export_graph",
]

log = logging.getLogger(__name__)


class GraphError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AffinityGraph:
    """Symmetric nonnegative weight matrix plus construction metadata.

    ``codes`` holds the leave-one-out coefficients for sparse graphs (row
    ``q`` = coefficients of sample ``q`` over every other sample) and is None
    for metric graphs.
    """

    weights: np.ndarray
    codes: np.ndarray | None = None
    unconverged: tuple = ()
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        W = np.array(self.weights, dtype=np.float64)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise GraphError(f"weights must be square, got shape {W.shape}")
        if not np.all(np.isfinite(W)):
            raise GraphError("weights contain non-finite values")
        if not np.array_equal(W, W.T):
            raise GraphError("weights are not symmetric")
        W.setflags(write=False)
        object.__setattr__(self, "weights", W)

    @property
    def n(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True, eq=False)
class GraphLaplacian:
    laplacian: np.ndarray
    degrees: np.ndarray

    @property
    def n(self) -> int:
        return self.laplacian.shape[0]


def _with_self_similarity(W):
    W = np.array(W, dtype=np.float64)
    np.fill_diagonal(W, 0.0)
    np.fill_diagonal(W, W.sum(axis=1))
    return W


def sparse_codes(X, cfg: LassoConfig, jobs: int = 1, backend=None):
    """Leave-one-out codes of every column of ``X`` (d x n) over the rest.

    Returns ``(C, unconverged)`` with ``C[q, t]`` the coefficient of sample
    ``t`` in the code of sample ``q`` and ``C[q, q] == 0``.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[1]
    At = np.ascontiguousarray(X.T)
    bad = np.flatnonzero(~np.all(np.isfinite(X), axis=0))
    if bad.size:
        raise LassoError(f"query {bad[0]}: non-finite feature values")
    check_scale(X, "query")
    C = np.zeros((n, n))
    ok = np.ones(n, dtype=bool)

    def run(q):
        c, _, converged = coordinate_descent(At, At[q], cfg, skip=q, backend=backend)
        C[q] = c
        ok[q] = converged

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(run, range(n)))
    else:
        for q in range(n):
            run(q)
    return C, tuple(int(q) for q in np.flatnonzero(~ok))


def build_sparse_graph(ds: FeatureDataset, cfg: LassoConfig | None = None, jobs: int = 1, backend=None) -> AffinityGraph:
    """Sparse-representation graph: ``w_ij = (|c_i(j)| + |c_j(i)|) / 2``.

    The diagonal is the self-similarity ``w_ii = sum_{t != i} w_it``.
    """
    cfg = cfg or LassoConfig()
    C, unconverged = sparse_codes(ds.features, cfg, jobs=jobs, backend=backend)
    if unconverged:
        log.warning("%d of %d sparse codes hit max_iters (first: sample %d)", len(unconverged), C.shape[0], unconverged[0])
    A = np.abs(C)
    W = _with_self_similarity((A + A.T) / 2.0)
    params = {"kind": "sparse", "beta": cfg.beta, "tol": cfg.tol, "max_iters": cfg.max_iters}
    return AffinityGraph(W, codes=C, unconverged=unconverged, params=params)


def median_pairwise_distance(X) -> float:
    """Median Euclidean distance over distinct column pairs of ``X``."""
    return float(np.median(pdist(np.asarray(X, dtype=np.float64).T)))


def build_knn_heat_graph(ds: FeatureDataset, k: int = 7, sigma: float | None = None) -> AffinityGraph:
    """Heat-kernel weights ``exp(-||x_i - x_j||^2 / (2 sigma^2))`` on a kNN graph.

    An edge exists when either endpoint is among the other's ``k`` nearest
    neighbours (ties broken by lower index).  ``sigma=None`` uses the median
    pairwise distance.
    """
    X = ds.features
    n = X.shape[1]
    if not 1 <= k <= n - 1:
        raise GraphError(f"k must lie in [1, {n - 1}], got {k}")
    if sigma is None:
        sigma = median_pairwise_distance(X)
        if sigma == 0:
            sigma = 1.0
    if not sigma > 0:
        raise GraphError(f"sigma must be > 0, got {sigma}")
    sq = squareform(pdist(X.T, "sqeuclidean"))
    ranked = sq.copy()
    np.fill_diagonal(ranked, np.inf)
    nbrs = np.argsort(ranked, axis=1, kind="stable")[:, :k]
    adj = np.zeros((n, n), dtype=bool)
    adj[np.repeat(np.arange(n), k), nbrs.ravel()] = True
    adj |= adj.T
    W = np.where(adj, np.exp(-sq / (2.0 * sigma**2)), 0.0)
    params = {"kind": "knn_heat", "k": int(k), "sigma": float(sigma)}
    return AffinityGraph(_with_self_similarity(W), params=params)


def normalized_laplacian(g: AffinityGraph, degree_excludes_diagonal: bool = False) -> GraphLaplacian:
    """``L = I - D^{-1/2} W D^{-1/2}`` with ``D_ii = sum_j w_ij``.

    By default the degree sums include the self-similarity on the diagonal of
    ``W``.  With ``degree_excludes_diagonal=True`` the self-loops are dropped
    from both ``D`` and ``W`` (the ordinary loop-free Laplacian).  Vertices of
    zero degree get ``D^{-1/2} = 0`` and hence ``L_ii = 1``.
    """
    W = np.array(g.weights)
    if np.any(W < 0):
        raise GraphError("affinity graph has negative weights")
    if degree_excludes_diagonal:
        np.fill_diagonal(W, 0.0)
    deg = W.sum(axis=1)
    inv_sqrt = np.zeros_like(deg)
    pos = deg > 0
    inv_sqrt[pos] = 1.0 / np.sqrt(deg[pos])
    L = np.eye(W.shape[0]) - inv_sqrt[:, None] * W * inv_sqrt[None, :]
    L = (L + L.T) / 2.0
    return GraphLaplacian(L, deg)


def export_graph(g: AffinityGraph, csv_path, extra: dict | None = None) -> None:
    """Write the upper triangle (``j >= i``) as ``i,j,w`` rows plus a JSON sidecar.

    Only nonzero weights are written.  The sidecar sits next to the CSV with a
    ``.json`` suffix.
    """
    csv_path = Path(csv_path)
    W = g.weights
    iu, ju = np.triu_indices(g.n)
    keep = W[iu, ju] != 0
    with open(csv_path, "w") as fh:
        fh.write("i,j,w\n")
        for i, j, w in zip(iu[keep], ju[keep], W[iu, ju][keep]):
            fh.write(f"{i},{j},{float(w)!r}\n")
    meta = {"n": g.n, "edges": int(keep.sum()), "nonzero_only": True, **g.params, **(extra or {})}
    if g.unconverged:
        meta["unconverged"] = list(g.unconverged)
    csv_path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
