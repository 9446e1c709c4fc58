"""Graph transduction: regularized least squares on a graph Laplacian.

The score matrix minimizes ``tr(F' L F) + lam * ||F - Y||^2``.  Setting the
gradient ``2(L F + lam F - lam Y)`` to zero gives the linear system::

    (L + lam I) F = lam Y

which is symmetric positive definite for any PSD ``L`` and ``lam > 0``.  It
is solved by a Cholesky factorization shared by all class columns, or by
block conjugate gradients for large graphs.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .data import FeatureDataset
from .graph import GraphLaplacian, build_sparse_graph, normalized_laplacian
from .lasso import LassoConfig

__all__ = [
    "TransductionConfig",
    "TransductionError",
    "StageError",
    "ScoreMatrix",
    "build_label_matrix",
    "solve_transduction",
    "conjugate_gradient",
    "predict",
    "transduct_objective",
    "sgc_classify",
    "classify_with_laplacian",
]

log = logging.getLogger(__name__)

PSD_TOL = 1e-6


class TransductionError(ValueError):
    pass


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class TransductionConfig:
    """``lam`` trades label fit against smoothness on the graph.

    ``solver`` is ``"direct"``, ``"conjugate_gradient"`` or ``"auto"`` (direct
    up to ``direct_max_n`` vertices).
    """

    lam: float = 1e3
    solver: str = "auto"
    cg_tol: float = 1e-10
    cg_max_iters: int | None = None
    direct_max_n: int = 2000

    def __post_init__(self):
        if not self.lam > 0:
            raise TransductionError(f"lambda must be > 0, got {self.lam}")
        if self.solver not in ("auto", "direct", "conjugate_gradient"):
            raise TransductionError(f"unknown solver {self.solver!r}")
        if not self.cg_tol > 0:
            raise TransductionError(f"cg_tol must be > 0, got {self.cg_tol}")


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    values: np.ndarray
    solver: str = "direct"
    converged: bool = True
    iterations: int = 0


def build_label_matrix(ds: FeatureDataset) -> np.ndarray:
    """``Y[i, k] = +1`` if labeled sample i is in class k, ``-1`` if labeled otherwise, 0 if unlabeled."""
    mask = ds.labeled_mask
    if not mask.any():
        raise TransductionError("no labeled samples")
    Y = np.zeros((ds.n_samples, ds.class_count))
    Y[mask] = -1.0
    Y[np.flatnonzero(mask), ds.labels[mask]] = 1.0
    return Y


def _check_laplacian(L):
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise TransductionError(f"Laplacian must be square, got {L.shape}")
    if not np.allclose(L, L.T, rtol=0, atol=1e-12 * max(1.0, np.abs(L).max())):
        raise TransductionError("Laplacian is not symmetric")
    # L + tol*I is positive definite exactly when min eig(L) > -tol
    try:
        np.linalg.cholesky(L + PSD_TOL * np.eye(L.shape[0]))
    except np.linalg.LinAlgError:
        lo = np.linalg.eigvalsh(L)[0]
        raise TransductionError(f"Laplacian is not positive semi-definite (min eigenvalue {lo:.3g})") from None


def conjugate_gradient(A, B, tol=1e-10, max_iters=None):
    """Block CG for SPD ``A``: solve ``A X = B`` column by column in lockstep.

    Stops when ``max |A X - B| <= tol``.  Returns ``(X, iterations, converged)``.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    squeeze = B.ndim == 1
    if squeeze:
        B = B[:, None]
    n = A.shape[0]
    max_iters = 10 * n if max_iters is None else max_iters
    X = np.zeros_like(B)
    R = B.copy()
    P = R.copy()
    rs = np.einsum("ij,ij->j", R, R)
    it = 0
    converged = np.abs(R).max(initial=0.0) <= tol
    while not converged and it < max_iters:
        AP = A @ P
        pap = np.einsum("ij,ij->j", P, AP)
        active = pap > 0
        alpha = np.where(active, rs / np.where(active, pap, 1.0), 0.0)
        X += alpha * P
        R -= alpha * AP
        it += 1
        if it % 50 == 0:
            R = B - A @ X  # limit drift of the recurrence residual
        rs_new = np.einsum("ij,ij->j", R, R)
        converged = np.abs(R).max() <= tol
        beta = np.where(rs > 0, rs_new / np.where(rs > 0, rs, 1.0), 0.0)
        P = R + beta * P
        rs = rs_new
    if converged:
        converged = np.abs(B - A @ X).max() <= tol
    return (X[:, 0] if squeeze else X), it, bool(converged)


def solve_transduction(L, Y, cfg: TransductionConfig | None = None) -> ScoreMatrix:
    """Scores ``F = lam (L + lam I)^{-1} Y``; never forms the inverse."""
    cfg = cfg or TransductionConfig()
    L = np.asarray(L.laplacian if isinstance(L, GraphLaplacian) else L, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[0] != L.shape[0]:
        raise TransductionError(f"label matrix shape {Y.shape} does not match Laplacian {L.shape}")
    _check_laplacian(L)
    n = L.shape[0]
    A = L + cfg.lam * np.eye(n)
    rhs = cfg.lam * Y
    solver = cfg.solver
    if solver == "auto":
        solver = "direct" if n <= cfg.direct_max_n else "conjugate_gradient"
    if solver == "direct":
        F = cho_solve(cho_factor(A, lower=True), rhs)
        return ScoreMatrix(F, "direct")
    F, iters, ok = conjugate_gradient(A, rhs, tol=cfg.cg_tol, max_iters=cfg.cg_max_iters)
    if not ok:
        log.warning("conjugate gradient stopped after %d iterations without reaching tol=%g", iters, cfg.cg_tol)
    return ScoreMatrix(F, "conjugate_gradient", ok, iters)


def transduct_objective(L, F, Y, lam) -> float:
    """``tr(F' L F) + lam ||F - Y||_F^2``."""
    L = np.asarray(L.laplacian if isinstance(L, GraphLaplacian) else L)
    return float(np.einsum("ij,ij->", F, L @ F) + lam * np.sum((F - Y) ** 2))


def predict(F) -> np.ndarray:
    """Row-wise argmax; ties go to the smallest class index."""
    F = F.values if isinstance(F, ScoreMatrix) else np.asarray(F)
    return np.argmax(F, axis=1)


def classify_with_laplacian(ds: FeatureDataset, lap: GraphLaplacian, t_cfg: TransductionConfig):
    """Label matrix, solve and argmax on a prebuilt Laplacian; returns ``(labels, F)``."""
    try:
        Y = build_label_matrix(ds)
    except Exception as exc:
        raise StageError("label matrix", exc) from exc
    try:
        F = solve_transduction(lap, Y, t_cfg)
    except Exception as exc:
        raise StageError("transduction", exc) from exc
    return predict(F), F


def sgc_classify(
    ds: FeatureDataset,
    lasso_cfg: LassoConfig | None = None,
    t_cfg: TransductionConfig | None = None,
    jobs: int = 1,
    backend=None,
) -> np.ndarray:
    """Sparse-graph classifier: predicted class for every sample (labeled ones included)."""
    try:
        g = build_sparse_graph(ds, lasso_cfg or LassoConfig(), jobs=jobs, backend=backend)
    except Exception as exc:
        raise StageError("sparse graph", exc) from exc
    try:
        lap = normalized_laplacian(g)
    except Exception as exc:
        raise StageError("laplacian", exc) from exc
    labels, _ = classify_with_laplacian(ds, lap, t_cfg or TransductionConfig())
    return labels
