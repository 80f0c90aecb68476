"""ermlab: a numerical laboratory for empirical risk minimization rates.

Function classes with entropy envelopes, localized Rademacher complexity
estimation, critical-radius fixed points, exact and iterative ERM solvers,
nuisance-dependent ERM (weighted, cross-fitted, in-sample), and sweep
harnesses that verify the predicted regret and L2 rates at desk scale.
"""

__version__ = "0.1.0"

from .classes import (
    ClassDescriptor,
    Envelope,
    FunctionHandle,
    Marginal,
    entropy_envelope,
    eval_handle,
    interp_constants,
    l2_distance,
    make_class,
    member_l2_norm,
    sample_member,
)
from .complexity import (
    ComplexityCurve,
    CriticalRadius,
    FiniteClass,
    complexity_curve,
    critical_radius_empirical,
    critical_radius_envelope,
    empirical_local_rademacher,
    exact_rademacher_oracle,
    local_sup,
    rkhs_local_bound,
    transform_envelope,
)
from .estimators import (
    Dataset,
    IsotonicERM,
    KernelRidgeERM,
    L1BallERM,
    LeastSquaresERM,
    LipschitzERM,
    SquaredLoss,
    TikhonovERM,
    empirical_risk,
)
from .oracle import (
    RegretRecord,
    Scenario,
    bernstein_ratio,
    curvature_ratio,
    fluctuation,
    make_data,
    population_risk,
    regret,
)
from .nuisance import (
    NuisanceConfig,
    TransferReport,
    crossfit_erm,
    estimate_weights,
    fit_weighted_erm,
    insample_erm,
    make_pseudo_outcome_loss,
    regret_transfer_rhs,
)
from .harness import (
    RateFit,
    SweepConfig,
    fit_rate,
    histogram_union_experiment,
    pac_coverage,
    run_sweep,
    standard_scenarios,
)
