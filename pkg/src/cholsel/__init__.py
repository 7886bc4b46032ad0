"""Sparse inverse Cholesky factors of kernel matrices by greedy conditional
selection, with drivers for Gaussian-process regression, conjugate-gradient
preconditioning, and sparse-factor recovery."""

from .exceptions import (
    ConvergenceError,
    NotPositiveDefiniteError,
    NumericalError,
    SingularBlockError,
)
from .kernels import (
    CovarianceSource,
    KernelSource,
    KernelSpec,
    MatrixSource,
    assemble_covariance,
    conditional_oracle,
    kernel_eval,
)
from .ordering import (
    Ordering,
    knn_candidates,
    reverse_maximin,
    rho_ball_candidates,
)
from .selection import (
    OrderedCholesky,
    PartialCholesky,
    select_multi,
    select_multi_prec,
    select_partial,
    select_single,
    select_single_prec,
)
from .factorization import (
    FactorResult,
    SparseFactor,
    SparsityPattern,
    aggregate_supernodes,
    aggregated_entries,
    column_entries,
    entries_for_pattern,
    factorize,
    global_allocate,
    load_factor,
    save_factor,
)
from .gp import (
    RegressionResult,
    posterior_dense,
    prediction_first_ordering,
    regress_directed,
    regress_global,
)
from .metrics import (
    MetricReport,
    coverage,
    iou,
    kl_dense,
    kl_factor,
    norm_quantile,
    rmse,
)
from .pcg import SolveReport, pcg_solve
from .recovery import (
    RecoveryConfig,
    plant_factor,
    recover_pattern,
    recovery_accuracy,
)
from .estimators import SparseGaussianProcessRegressor, SparseInverseCholesky
from .cli import ExperimentConfig, ingest_points, run_experiment

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "CovarianceSource",
    "ExperimentConfig",
    "FactorResult",
    "KernelSource",
    "KernelSpec",
    "MatrixSource",
    "MetricReport",
    "NotPositiveDefiniteError",
    "NumericalError",
    "OrderedCholesky",
    "Ordering",
    "PartialCholesky",
    "RecoveryConfig",
    "RegressionResult",
    "SingularBlockError",
    "SolveReport",
    "SparseFactor",
    "SparseGaussianProcessRegressor",
    "SparseInverseCholesky",
    "SparsityPattern",
    "aggregate_supernodes",
    "aggregated_entries",
    "assemble_covariance",
    "column_entries",
    "conditional_oracle",
    "coverage",
    "entries_for_pattern",
    "factorize",
    "global_allocate",
    "ingest_points",
    "iou",
    "kernel_eval",
    "kl_dense",
    "kl_factor",
    "knn_candidates",
    "load_factor",
    "norm_quantile",
    "pcg_solve",
    "plant_factor",
    "posterior_dense",
    "prediction_first_ordering",
    "recover_pattern",
    "recovery_accuracy",
    "regress_directed",
    "regress_global",
    "reverse_maximin",
    "rho_ball_candidates",
    "rmse",
    "run_experiment",
    "save_factor",
    "select_multi",
    "select_multi_prec",
    "select_partial",
    "select_single",
    "select_single_prec",
]
