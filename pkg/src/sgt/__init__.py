"""Semi-supervised classification on sparse-representation graphs.

Samples are coded as sparse combinations of the other samples, the code
magnitudes become graph weights, and labels spread over that graph by a
regularized least-squares solve on its normalized Laplacian.
"""
from .baselines import SrcModel, gc_classify, src_classify, src_predict
from .data import (
    DatasetError,
    FeatureDataset,
    NoiseSpec,
    inject_salt_pepper,
    load_dataset,
    make_blobs,
    make_subspace_classes,
    normalize_columns,
    save_dataset,
)
from .evaluate import (
    GC,
    SGC,
    SRC,
    CvSpec,
    ExperimentResult,
    cross_validate,
    noise_sweep,
    param_sweep,
    size_sweep,
)
from .graph import (
    AffinityGraph,
    GraphLaplacian,
    build_knn_heat_graph,
    build_sparse_graph,
    normalized_laplacian,
)
from .lasso import LassoConfig, SparseCoefVector, solve_lasso
from .transduct import (
    ScoreMatrix,
    TransductionConfig,
    build_label_matrix,
    predict,
    sgc_classify,
    solve_transduction,
)

__version__ = "0.1.0"
