"""Distributionally robust local conditional estimation.

Estimates a conditional statistic of Y given X = x0 from samples by
minimizing the worst-case conditional expected loss over all distributions
reachable by moving every sample at most ``rho`` (type-infinity Wasserstein
ball), with the conditioning event widened to a ``gamma``-neighborhood.
"""

from .baselines import epanechnikov_kernel, gaussian_kernel, kernel_regress, knn_mean, robust_knn
from .locality import (
    Dataset,
    GroundMetric,
    InfeasibleRadius,
    InputError,
    LocalScene,
    Query,
    adaptive_gamma,
    build_local_scene,
    check_feasible,
    radius_rule,
)
from .robust_loss import (
    Pinball,
    quantile_loss,
    SquaredScalar,
    SquaredVector,
    balanced_worst_case_distribution,
    select_alpha,
    subgradient,
    worst_case_distribution,
    worst_case_loss,
)
from .solvers import (
    RobustSolution,
    SolverConfig,
    chebyshev_closed_form,
    estimate,
    golden_section,
    solve_scene,
    subgradient_descent,
)

__version__ = "0.1.0"
