"""Comparison classifiers: sparse-representation residuals (SRC) and kNN graph transduction (GC)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import FeatureDataset
from .graph import build_knn_heat_graph, normalized_laplacian
from .lasso import LassoConfig, solve_lasso
from .transduct import StageError, TransductionConfig, classify_with_laplacian

__all__ = ["SrcModel", "src_classify", "src_predict", "gc_classify"]


@dataclass(frozen=True, eq=False)
class SrcModel:
    """Training columns used as the dictionary, with their class ids."""

    dictionary: np.ndarray
    dictionary_labels: np.ndarray
    class_count: int
    lasso_cfg: LassoConfig = LassoConfig()

    def __post_init__(self):
        D = np.asarray(self.dictionary, dtype=np.float64)
        labels = np.asarray(self.dictionary_labels, dtype=np.int64)
        if D.ndim != 2 or D.shape[1] < 1:
            raise ValueError("SRC dictionary needs at least one column")
        if labels.shape != (D.shape[1],):
            raise ValueError("one label per dictionary column required")
        if np.any(labels < 0) or np.any(labels >= self.class_count):
            raise ValueError(f"dictionary labels must lie in [0, {self.class_count})")
        object.__setattr__(self, "dictionary", D)
        object.__setattr__(self, "dictionary_labels", labels)

    @classmethod
    def from_dataset(cls, ds: FeatureDataset, lasso_cfg: LassoConfig | None = None) -> "SrcModel":
        mask = ds.labeled_mask
        return cls(ds.features[:, mask], ds.labels[mask], ds.class_count, lasso_cfg or LassoConfig())


def src_classify(model: SrcModel, query, backend=None):
    """Class with the smallest class-restricted reconstruction residual.

    Returns ``(label, residuals)`` where ``residuals[k] = ||x - D delta_k(c)||``
    and ``delta_k`` keeps only the coefficients of class-``k`` atoms.  Ties go
    to the smallest class id.
    """
    x = np.asarray(query, dtype=np.float64)
    code = solve_lasso(model.dictionary, x, model.lasso_cfg, backend=backend)
    c = code.values
    residuals = np.empty(model.class_count)
    for k in range(model.class_count):
        ck = np.where(model.dictionary_labels == k, c, 0.0)
        residuals[k] = np.linalg.norm(x - model.dictionary @ ck)
    return int(np.argmin(residuals)), residuals


def src_predict(ds: FeatureDataset, lasso_cfg: LassoConfig | None = None, backend=None) -> np.ndarray:
    """Transductive wrapper: labeled samples form the dictionary, the rest are queried.

    Labeled samples keep their given class.
    """
    model = SrcModel.from_dataset(ds, lasso_cfg)
    pred = np.where(ds.labeled_mask, ds.labels, 0)
    for i in np.flatnonzero(~ds.labeled_mask):
        pred[i] = src_classify(model, ds.features[:, i], backend=backend)[0]
    return pred


def gc_classify(
    ds: FeatureDataset,
    k: int = 7,
    sigma: float | None = None,
    t_cfg: TransductionConfig | None = None,
) -> np.ndarray:
    """Same transduction as the sparse-graph classifier, on a kNN heat-kernel graph."""
    try:
        g = build_knn_heat_graph(ds, k, sigma)
    except Exception as exc:
        raise StageError("knn graph", exc) from exc
    try:
        lap = normalized_laplacian(g)
    except Exception as exc:
        raise StageError("laplacian", exc) from exc
    return classify_with_laplacian(ds, lap, t_cfg or TransductionConfig())[0]
