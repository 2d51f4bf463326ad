"""skyforge: generate skyline datasets from a pool of source tables.

Given source tables, a set of performance measures to minimize, and an
estimator for a model's expected performance, the engine searches the space
of datasets reachable by value-cluster augmentation and reduction for a set
over which the model is expected to be Pareto-optimal, within a configurable
(1+epsilon) factor per measure.
"""

from .errors import (
    ArgumentError,
    BoundViolationError,
    DegenerateStateError,
    EnumerationCapError,
    EstimatorFailure,
    InapplicableOperatorError,
    SchemaConflictError,
    SkyforgeError,
)
from .estimators import LookupEstimator, RidgeEstimator, SubprocessEstimator
from .measures import (
    Bounds,
    MeasureSet,
    MeasureSpec,
    PerfVector,
    TestLog,
    build_correlation_graph,
    estimate_bounds,
    normalize,
    spearman,
    valuate,
)
from .operators import Bitmap, SearchState, StateSpace, Transition
from .oracle import (
    EnumerationReport,
    check_div_bound,
    check_eps_cover,
    enumerate_all,
    naive_exact_pareto,
)
from .search import (
    RunResult,
    RunningGraph,
    SearchConfig,
    back_st,
    can_prune,
    dis_score,
    diversify_level,
    div_score,
    param_eps_dominates,
    run_algorithm,
    run_apx,
    run_bi,
    run_div,
)
from .skyline import (
    GridPosition,
    SkylineGrid,
    dominates,
    eps_dominates,
    exact_pareto,
    grid_pos,
    u_pareto,
)
from .tabular import (
    Literal,
    Relation,
    UniversalTable,
    build_universal,
    compress_rows,
    derive_all_literals,
    derive_literals,
    ingest_csv,
    kmeans_1d,
)

__version__ = "0.1.0"
