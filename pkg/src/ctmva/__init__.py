"""Continuous-time multivariate analysis of irregularly sampled time series."""

__version__ = "0.1.0"

from .basis import (
    BasisSystem,
    Interval,
    Partition,
    Region,
    basis_integrals,
    constant_rep_vector,
    eval_basis,
    make_basis,
    penalty_matrix,
    piecewise_poly,
    region_moments,
)
from .ctstats import (
    center,
    ct_cor,
    ct_cov,
    ct_mean,
    ct_summary,
    detrend_common,
    pairwise_ct_cor,
    pairwise_table,
    trend_r2,
)
from .kmeans import assign_regions, cluster_objective, ct_kmeans, silhouette
from .mgp import MGPSpec, SimConfig, run_correlation_experiment, sample_mgp
from .smoothing import AUTO, FDataset, LongSeries, smooth_dataset, smooth_series
from .spectral import ct_cca, ct_lda, ct_pca, scatter_decomposition

__all__ = [
    "AUTO",
    "BasisSystem",
    "FDataset",
    "Interval",
    "LongSeries",
    "MGPSpec",
    "Partition",
    "Region",
    "SimConfig",
    "__version__",
    "assign_regions",
    "basis_integrals",
    "center",
    "cluster_objective",
    "constant_rep_vector",
    "ct_cca",
    "ct_cor",
    "ct_cov",
    "ct_kmeans",
    "ct_lda",
    "ct_mean",
    "ct_pca",
    "ct_summary",
    "detrend_common",
    "eval_basis",
    "make_basis",
    "pairwise_ct_cor",
    "pairwise_table",
    "penalty_matrix",
    "piecewise_poly",
    "region_moments",
    "run_correlation_experiment",
    "sample_mgp",
    "scatter_decomposition",
    "silhouette",
    "smooth_dataset",
    "smooth_series",
    "trend_r2",
]
