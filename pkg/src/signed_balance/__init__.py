"""Balanced latent space models for signed networks.

Simulate signed networks whose signs follow a latent polar variable, fit the
model by projected gradient descent (separately, jointly, or with a one-step
joint refinement), and test observed networks for structural balance.
"""

from .estimation import (
    FitConfig,
    FitDivergedError,
    FitResult,
    RandomInit,
    WarmInit,
    default_one_step_size,
    fit_joint,
    fit_separate_edges,
    fit_separate_signs,
    init_edges_usvt,
    init_signs_usvt,
    one_step_joint,
    regress_polar,
    select_lambda_cv,
    usvt,
)
from .experiments import ResultTable, SimConfig, fit_slope, make_ground_truth, run_experiment
from .graph import (
    PermutationTestResult,
    SignedAdjacency,
    TriangleCensus,
    from_edge_list,
    sign_permutation_test,
    triangle_census,
)
from .model import (
    Balanced,
    ExplicitPolar,
    FiniteLatentModel,
    LatentParams,
    LinearPolar,
    Violation,
    build_eta,
    build_theta,
    check_f_balance_finite,
    mc_population_balance,
    population_balance_index,
    sample_finite_model,
    sample_network,
)
from .objective import (
    GradientBundle,
    ProjectionBounds,
    grad_edges,
    grad_joint,
    grad_signs,
    nll_edges,
    nll_signs,
    nll_weighted,
    procrustes_distance,
    project,
    relative_errors,
    sign_distance,
)

__version__ = "0.1.0"
