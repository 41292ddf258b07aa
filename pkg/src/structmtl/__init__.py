"""Structured multi-task estimation: shared-subspace and clustered models.

The library fits a matrix of task parameter vectors under structural
constraints (low rank, shared cluster centers, bounded nuclear norm) and
measures recovery against planted ground truth.  The ``bench`` subpackage
adds sweep configs, metrics, plots, and a CLI.
"""

from .errors import (
    ConvergenceWarning,
    DegeneracyWarning,
    GenerationError,
    NumericalError,
    ParameterError,
)
from .matrixkit import (
    SvdTriple,
    check_orthonormal,
    dist_F2,
    dist_op2,
    nuclear_norm,
    orthonormalize,
    project_column_norms,
    project_feasible,
    project_nuclear_ball,
    shelling_decomposition,
    top_s_svd,
)
from .optim import PgdResult, ball_least_squares, projected_gradient
from .tasks import (
    TaskDataset,
    bregman,
    empirical_grad,
    empirical_risk,
    logistic_scale_calibration,
    population_risk_mc,
    population_risk_quadratic,
    sample_grad,
    sample_loss,
)
from .worlds import (
    PlantedWorld,
    WorldDiagnostics,
    diagnostics,
    gen_clustered_world,
    gen_lowrank_world,
    load_world,
    population_minimizer,
    sample_datasets,
    save_world,
)
from .estimators import (
    EstimatorReport,
    SolverOptions,
    SubspaceSearchResult,
    extract_representation,
    fit_clustered,
    fit_local,
    fit_lowrank_bm,
    fit_lowrank_iht,
    fit_nuclear,
    fit_subspace_m1,
    is_admissible,
    load_report,
    orthogonal_admissible_exists,
    refit_clusters,
    save_report,
)
from .fewshot import FewShotResult, fewshot_excess_risk, fit_fewshot

__version__ = "0.1.0"

__all__ = [
    "ConvergenceWarning",
    "DegeneracyWarning",
    "GenerationError",
    "NumericalError",
    "ParameterError",
    "SvdTriple",
    "check_orthonormal",
    "dist_F2",
    "dist_op2",
    "nuclear_norm",
    "orthonormalize",
    "project_column_norms",
    "project_feasible",
    "project_nuclear_ball",
    "shelling_decomposition",
    "top_s_svd",
    "PgdResult",
    "ball_least_squares",
    "projected_gradient",
    "TaskDataset",
    "bregman",
    "empirical_grad",
    "empirical_risk",
    "logistic_scale_calibration",
    "population_risk_mc",
    "population_risk_quadratic",
    "sample_grad",
    "sample_loss",
    "PlantedWorld",
    "WorldDiagnostics",
    "diagnostics",
    "gen_clustered_world",
    "gen_lowrank_world",
    "load_world",
    "population_minimizer",
    "sample_datasets",
    "save_world",
    "EstimatorReport",
    "SolverOptions",
    "SubspaceSearchResult",
    "extract_representation",
    "fit_clustered",
    "fit_local",
    "fit_lowrank_bm",
    "fit_lowrank_iht",
    "fit_nuclear",
    "fit_subspace_m1",
    "is_admissible",
    "load_report",
    "orthogonal_admissible_exists",
    "refit_clusters",
    "save_report",
    "FewShotResult",
    "fewshot_excess_risk",
    "fit_fewshot",
    "__version__",
]
