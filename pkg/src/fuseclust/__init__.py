"""Clustering of partially observed data with non-convex fusion penalties.

Modules
-------
model        data sets with observation masks, CSV I/O, cluster statistics
penalties    l1 / lp / h1 penalties and their IRLS weights
solver       IRLS for the constrained and unconstrained relaxations
exact        exhaustive l0 fusion clustering for tiny instances
theory       recovery-probability bounds
experiments  synthetic data, sub-sampling, success curves, PCA tables
cli          the ``fuseclust`` command
"""

from .exact import (
    MAX_EXACT_POINTS,
    CapacityError,
    Partition,
    brute_force_l0,
    compatibility_matrix,
    group_feasible,
    l0_cost,
    restricted_growth_strings,
    solve_l0_exact,
)
from .experiments import (
    CurveRow,
    SuccessCurve,
    SyntheticSpec,
    TrialReport,
    apply_sampling,
    calibrated_centers,
    core_subset,
    evaluate_partition,
    generate_clusters,
    pca2,
    pca_table,
    run_trial,
    standardize,
    success_curve,
)
from .model import (
    ClusterStats,
    DataError,
    DataSet,
    GroundTruth,
    ParseError,
    coherence,
    dataset_stats,
    dump_csv,
    load_csv,
    load_labels,
    load_wine,
    partial_distance,
    partial_distance_matrix,
)
from .penalties import Penalty, penalty_derivative, penalty_value, penalty_weight, saturation_point
from .solver import (
    NumericalError,
    SolveResult,
    SolverConfig,
    extract_partition,
    init_weights,
    relaxed_objective,
    run_irls,
    solve_constrained_subproblem,
    solve_unconstrained_subproblem,
    update_weights,
)
from .theory import (
    BoundInputs,
    BoundReport,
    beta0,
    beta1,
    bound_report,
    delta0,
    eta0,
    eta0_approx,
    eta1,
    gamma0,
    vertex_catalog,
)

__version__ = "0.1.0"
