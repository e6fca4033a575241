"""Hierarchical graphical models for grouped high-dimensional data.

Joint estimation of a column grouping, per-group latent signals, per-group
noise variances, and a sparse precision matrix for the latent layer, by
alternating conditional minimization.  See ``HierarchicalGraphicalModel``
for the estimator-style entry point and ``solver.fit`` for the functional
one; ``simbench`` holds the synthetic benchmark and ``cli`` the command
line front end.
"""

__version__ = "0.1.0"

from .errors import HgmError
from .model import (
    PHI_FLOOR,
    DataMatrix,
    GroupAssignment,
    HgmState,
    NoiseVariances,
    PrecisionMatrix,
    group_means,
    latent_gradient,
    neg_log_likelihood,
    standardize,
    update_latent,
    update_noise_variances,
)
from .precision import (
    SolverReport,
    glasso,
    kkt_residual,
    lambda_max,
    latent_gram,
    scio,
    symmetrize_and_refit,
)
from .clustering import KmeansResult, coherence_rates, kmeans_init, reassign_groups
from .solver import FitTrace, IterationRecord, SolverConfig, converged, fit, fit_once
from .selection import BicRecord, bic, default_lambda_grid, select_k, select_lambda
from .simbench import (
    EdgeConfusion,
    ExperimentReport,
    GroundTruth,
    RocPoint,
    SimulationSpec,
    block_precision,
    edge_confusion,
    permute_and_rescale,
    roc_path,
    run_experiment,
    sample_dataset,
)
from .io import load_matrix, save_matrix
from .estimator import HierarchicalGraphicalModel

__all__ = [
    "__version__",
    "PHI_FLOOR",
    "HgmError",
    "DataMatrix",
    "GroupAssignment",
    "NoiseVariances",
    "PrecisionMatrix",
    "HgmState",
    "standardize",
    "group_means",
    "neg_log_likelihood",
    "update_latent",
    "update_noise_variances",
    "latent_gradient",
    "latent_gram",
    "glasso",
    "scio",
    "symmetrize_and_refit",
    "kkt_residual",
    "lambda_max",
    "SolverReport",
    "KmeansResult",
    "kmeans_init",
    "reassign_groups",
    "coherence_rates",
    "SolverConfig",
    "IterationRecord",
    "FitTrace",
    "converged",
    "fit_once",
    "fit",
    "BicRecord",
    "bic",
    "default_lambda_grid",
    "select_lambda",
    "select_k",
    "SimulationSpec",
    "GroundTruth",
    "EdgeConfusion",
    "RocPoint",
    "ExperimentReport",
    "block_precision",
    "permute_and_rescale",
    "sample_dataset",
    "edge_confusion",
    "roc_path",
    "run_experiment",
    "load_matrix",
    "save_matrix",
    "HierarchicalGraphicalModel",
]
