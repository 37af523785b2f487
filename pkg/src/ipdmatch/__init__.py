"""Exact covariate matching of two patient-level studies.

Computes per-patient weights that make the weighted covariate means of
two studies *identical* (not merely close) by minimum-norm quadratic
programming, checks whether such weights exist at all, and contrasts the
result with logistic-regression propensity weighting: balance tables,
effective sample sizes, weighted response inference, and a replication
benchmark of all three weighting methods.
"""

__version__ = "0.1.0"

from .data import (  # noqa: F401
    Covariate,
    CovariateSchema,
    CovariateTable,
    DesignMatrix,
    encode,
    observed_means,
    read_csv,
)
from .diagnostics import (  # noqa: F401
    BalanceReport,
    balance_table,
    smd,
    weight_plot_rows,
    weighted_mean,
    weighted_variance,
)
from .inference import (  # noqa: F401
    DistributionSummary,
    ResponseEstimate,
    difference_summary,
    estimate_response,
)
from .lp import FeasibilityResult, LpFeasibilityProblem, is_feasible  # noqa: F401
from .matching import (  # noqa: F401
    CONSTRAINED,
    MATCHED,
    NO_SOLUTION,
    UNCONSTRAINED,
    MatchSpec,
    WeightSolution,
    build_qp,
    ess,
    match,
)
from .propensity import (  # noqa: F401
    LogisticModel,
    PropensityWeights,
    SaturatedCheck,
    fit_logistic,
    pooled_weights,
    saturated_exact_check,
)
from .qp import (  # noqa: F401
    KktReport,
    QpProblem,
    QpSolution,
    check_kkt,
    solve_qp,
)
from .simulation import (  # noqa: F401
    SimulationConfig,
    SimulationSummary,
    generate_pair,
    run_study,
)
