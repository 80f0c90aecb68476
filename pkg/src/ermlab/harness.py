"""Experiment orchestration: (scenario, n, seed) sweeps, rate fits, PAC
coverage, the histogram union-bound experiment, the uniform-local-concentration
check, and the weighted/nuisance experiment protocols.

Determinism contract: every task seed derives from (master_seed, tag, index),
so sweep outputs are bit-identical for any worker count; records are merged in
(n, seed) order regardless of scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .classes import (
    ClassDescriptor,
    FunctionHandle,
    entropy_envelope,
    eval_handle,
    l2_distance,
    make_class,
    sample_member,
    scale_handle,
)
from .complexity import critical_radius_envelope
from .errors import EmptyBin, InsufficientGrid
from .estimators import ESTIMATORS, empirical_risk
from .nuisance import (
    LogisticPropensity,
    NuisanceConfig,
    TransferReport,
    crossfit_erm,
    fit_weighted_erm,
    insample_erm,
    regret_transfer_rhs,
)
from .oracle import (
    RegretRecord,
    Scenario,
    draw_noise,
    fluctuation,
    make_data,
    population_risk,
    probe_handles,
    regret,
    _loss_diff_moments,
)
from .seeding import derive_seed, rng_for

DEFAULT_N_GRID = tuple(2**k for k in range(7, 14))
DEFAULT_SEEDS_PER_N = 32


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class SweepConfig:
    scenario: Scenario
    estimator_id: str
    estimator_kwargs: dict = field(default_factory=dict)
    n_grid: tuple = DEFAULT_N_GRID
    seeds_per_n: int = DEFAULT_SEEDS_PER_N
    master_seed: int = 0
    eta: float = 0.1
    jobs: int = 1

    def __post_init__(self):
        span = math.log10(max(self.n_grid) / min(self.n_grid))
        if span < 1.5:
            import warnings

            warnings.warn("n_grid spans < 1.5 decades; rate fits will be noisy")


def _sweep_task(scenario: Scenario, estimator_id: str, est_kwargs: dict,
                n: int, seed_index: int, master_seed: int) -> RegretRecord:
    task_seed = derive_seed(master_seed, f"sweep/{scenario.scenario_id}/{n}",
                            seed_index)
    data = make_data(scenario, n, task_seed)
    est = ESTIMATORS[estimator_id](scenario.descriptor, **est_kwargs)
    flags = []
    try:
        est.fit(data.x, data.y)
        handle = est.handle_
        meta = est.solver_meta_
        if meta.get("exact"):
            flags.append("exact")
        if not meta.get("converged", True):
            flags.append("nonconverged")
        if meta.get("constraint_binding"):
            flags.append("binding")
    except Exception as exc:  # record, never abort the sweep
        return RegretRecord(n=n, seed=seed_index, scenario_id=scenario.scenario_id,
                            emp_risk=float("nan"), pop_risk=float("nan"),
                            regret=float("nan"), l2_error=float("nan"),
                            fluctuation=float("nan"),
                            flags=f"error:{type(exc).__name__}")
    loss = scenario.squared_loss()
    emp = empirical_risk(loss, handle, data)
    pop = population_risk(scenario, handle)
    reg = pop - population_risk(scenario, scenario.f0)
    l2 = l2_distance(handle, scenario.f0, scenario.marginal)
    fluct = fluctuation(scenario, data, handle)
    return RegretRecord(n=n, seed=seed_index, scenario_id=scenario.scenario_id,
                        emp_risk=emp, pop_risk=pop, regret=reg, l2_error=l2,
                        fluctuation=fluct, flags="+".join(flags))


def run_sweep(cfg: SweepConfig) -> list[RegretRecord]:
    """One record per (n, seed); bit-identical re-runs for any jobs count."""
    tasks = [(n, s) for n in cfg.n_grid for s in range(cfg.seeds_per_n)]
    if cfg.jobs == 1:
        records = [
            _sweep_task(cfg.scenario, cfg.estimator_id, cfg.estimator_kwargs,
                        n, s, cfg.master_seed)
            for n, s in tasks
        ]
    else:
        records = Parallel(n_jobs=cfg.jobs)(
            delayed(_sweep_task)(cfg.scenario, cfg.estimator_id,
                                 cfg.estimator_kwargs, n, s, cfg.master_seed)
            for n, s in tasks
        )
    return sorted(records, key=lambda r: (r.n, r.seed))


def records_to_csv(records) -> str:
    lines = [RegretRecord.CSV_HEADER]
    lines.extend(r.csv_row() for r in records)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Rate fitting
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    slope_stderr: float
    r_squared: float
    n_points: int


def fit_loglog(xs, ys) -> RateFit:
    """Least-squares line through (log x, log y)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    keep = (xs > 0) & (ys > 0)
    if np.sum(keep) < 4:
        raise InsufficientGrid("need at least 4 positive points for a rate fit")
    lx, ly = np.log(xs[keep]), np.log(ys[keep])
    k = lx.shape[0]
    A = np.column_stack([lx, np.ones(k)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    fitted = A @ coef
    resid = ly - fitted
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    dof = max(k - 2, 1)
    stderr = math.sqrt(ss_res / dof / sxx) if sxx > 0 else float("inf")
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(slope=float(coef[0]), intercept=float(coef[1]),
                   slope_stderr=stderr, r_squared=r2, n_points=k)


def fit_rate(records, response: str = "Regret", aggregate: str = "mean") -> RateFit:
    """Rate fit through (log n, log seed-aggregated response)."""
    attr = {"Regret": "regret", "L2Error": "l2_error"}[response]
    by_n: dict[int, list[float]] = {}
    for r in records:
        val = getattr(r, attr)
        if np.isfinite(val):
            by_n.setdefault(r.n, []).append(val)
    if len(by_n) < 4:
        raise InsufficientGrid("need at least 4 distinct n values")
    ns = sorted(by_n)
    agg = np.mean if aggregate == "mean" else np.median
    ys = [float(agg(by_n[n])) for n in ns]
    return fit_loglog(ns, ys)


# ---------------------------------------------------------------------------
# PAC coverage
# ---------------------------------------------------------------------------
def pac_coverage(records, bound_fn, eta: float) -> float:
    """Fraction of records with regret <= epsilon(n, eta)."""
    ok = [r.regret <= bound_fn(r.n, eta) for r in records if np.isfinite(r.regret)]
    return float(np.mean(ok)) if ok else 1.0


def coverage_curve(records, bound_fn, etas=(0.01, 0.05, 0.1, 0.2, 0.5)):
    return {eta: pac_coverage(records, bound_fn, eta) for eta in etas}


def calibrate_bound(records, desc: ClassDescriptor, eta: float,
                    margin: float = 1.25):
    """Calibrate the constant in epsilon(n, eta) = C (delta_n^2 + M^2 log(1/eta)/n)
    on training records: C is the empirical (1 - eta) quantile of the ratio
    regret/normalizer, inflated by `margin` against quantile noise on fresh
    seeds. Returns (C, bound_fn)."""
    env = entropy_envelope(desc)
    M = max(desc.sup_bound_M, 1.0)
    radii = {}

    def normalizer(n, eta_):
        if n not in radii:
            radii[n] = critical_radius_envelope(env, n).value
        return radii[n] ** 2 + M**2 * math.log(1.0 / eta_) / n

    ratios = [r.regret / normalizer(r.n, eta) for r in records
              if np.isfinite(r.regret)]
    C = float(np.quantile(ratios, 1.0 - eta)) * margin

    def bound_fn(n, eta_):
        return C * normalizer(n, eta_)

    return C, bound_fn


# ---------------------------------------------------------------------------
# Histogram union-bound experiment
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class HistogramRecord:
    n: int
    seed: int
    n_bins: int
    max_sq_error: float
    per_bin_bound: float
    simultaneous: bool
    resampled: bool

    CSV_HEADER = "n,seed,K,max_sq_error,per_bin_bound,simultaneous,resampled"

    def csv_row(self) -> str:
        return (f"{self.n},{self.seed},{self.n_bins},{self.max_sq_error!r},"
                f"{self.per_bin_bound!r},{int(self.simultaneous)},"
                f"{int(self.resampled)}")


def histogram_union_experiment(k_rule, n_grid, seeds: int, master_seed: int = 0,
                               eta: float = 0.1, noise_sigma: float = 0.5,
                               max_resample: int = 8) -> list[HistogramRecord]:
    """Max squared error over K(n) within-bin means of y = x + noise on
    equal-probability bins of Uniform[0,1] covariates.

    The per-bin PAC bound is Hoeffding with failure probability eta/K, so the
    union bound controls all bins simultaneously at level eta. Empty bins are
    redrawn with a derived sub-seed and flagged."""
    from scipy import stats as _stats

    records = []
    trunc = 4.0
    width = 1.0 + 2 * trunc * noise_sigma  # range of y = x + truncated noise
    for n in n_grid:
        K = int(k_rule(n))
        if K > n // 4:
            raise EmptyBin(f"K(n)={K} exceeds n/4={n // 4}")
        for seed in range(seeds):
            resampled = False
            for attempt in range(max_resample):
                rng = rng_for(master_seed, f"hist/{n}/{seed}", attempt)
                x = rng.uniform(size=n)
                y = x + draw_noise(rng, noise_sigma, n)
                bins = np.minimum((x * K).astype(int), K - 1)
                counts = np.bincount(bins, minlength=K)
                if counts.min() > 0:
                    break
                resampled = True
            else:
                raise EmptyBin(f"bin stayed empty after {max_resample} redraws")
            sums = np.bincount(bins, weights=y, minlength=K)
            means = sums / counts
            truth = (np.arange(K) + 0.5) / K
            sq_err = (means - truth) ** 2
            bound_per_bin = width**2 * np.log(2 * K / eta) / (2 * counts)
            records.append(HistogramRecord(
                n=n, seed=seed, n_bins=K,
                max_sq_error=float(np.max(sq_err)),
                per_bin_bound=float(np.max(bound_per_bin)),
                simultaneous=bool(np.all(sq_err <= bound_per_bin)),
                resampled=resampled,
            ))
    return records


# ---------------------------------------------------------------------------
# Uniform local concentration check
# ---------------------------------------------------------------------------
def uniform_concentration_check(scenario: Scenario, n_values, n_seeds: int,
                                probe_count: int = 8, master_seed: int = 0,
                                percentile: float = 99.0) -> dict:
    """For each n, the given percentile over seeds of
    max_f (P_n - P){l(., f0) - l(., f)} / (sigma_f delta_n + delta_n^2)
    over a fixed probe set. Stability of this percentile across n says the
    normalizer has the right shape."""
    probes = probe_handles(scenario, probe_count, derive_seed(master_seed, "probes"))
    rng = rng_for(master_seed, "sigma-mc")
    sigmas = []
    regrets = []
    for fh in probes:
        var, _, _ = _loss_diff_moments(scenario, fh, 200_000, rng)
        sigmas.append(math.sqrt(max(var, 0.0)))
        regrets.append(regret(scenario, fh))
    env = entropy_envelope(scenario.descriptor)
    loss = scenario.squared_loss()
    out = {}
    for n in n_values:
        delta_n = critical_radius_envelope(env, n).value
        stats_n = np.empty(n_seeds)
        for seed in range(n_seeds):
            data = make_data(scenario, n, derive_seed(master_seed, f"ulc/{n}", seed))
            emp0 = empirical_risk(loss, scenario.f0, data)
            best = -np.inf
            for fh, sig, reg in zip(probes, sigmas, regrets):
                num = emp0 - empirical_risk(loss, fh, data) + reg
                best = max(best, num / (sig * delta_n + delta_n**2))
            stats_n[seed] = best
        out[n] = float(np.percentile(stats_n, percentile))
    return out


# ---------------------------------------------------------------------------
# Standard scenario catalogue
# ---------------------------------------------------------------------------
def _monotone_truth(desc: ClassDescriptor) -> FunctionHandle:
    knots = np.linspace(0.0, 1.0, 257)
    values = 0.8 * np.tanh(2.5 * (knots - 0.5)) / math.tanh(1.25)
    return FunctionHandle(desc, "mesh", knots=knots, values=values)


def _lipschitz_truth(desc: ClassDescriptor) -> FunctionHandle:
    knots = np.linspace(0.0, 1.0, 513)
    values = 0.6 * np.sin(2 * np.pi * knots)
    return FunctionHandle(desc, "mesh", knots=knots, values=values)


def _rkhs_truth(desc: ClassDescriptor, hnorm_frac: float = 0.7) -> FunctionHandle:
    j = np.arange(1, 13, dtype=float)
    raw = j ** (-2.0)
    beta = desc.rkhs_decay_beta
    scale = hnorm_frac * desc.rkhs_R / math.sqrt(float(np.sum(raw**2 * j**(2 * beta))))
    return FunctionHandle(desc, "coeffs", coeffs=raw * scale)


def standard_scenarios(noise_sigma: float = 0.5) -> dict:
    """Shipped scenarios: id -> (Scenario, estimator_id, estimator_kwargs)."""
    out = {}

    lin = make_class(ClassDescriptor(kind="LinearSpan", dim_d=5, ambient_p=5,
                                     radius_B=1.0, sup_bound_M=math.sqrt(5)))
    theta0 = 0.5 * np.array([1.0, -1.0, 1.0, -1.0, 1.0]) / math.sqrt(5)
    f0 = FunctionHandle(lin, "theta", theta=theta0)
    out["linear_p5"] = (
        Scenario("linear_p5", lin, f0, noise_sigma=noise_sigma),
        "least_squares", {},
    )

    mono = make_class(ClassDescriptor(kind="Monotone", dim_d=1, radius_B=1.0,
                                      sup_bound_M=1.0))
    out["monotone_d1"] = (
        Scenario("monotone_d1", mono, _monotone_truth(mono),
                 noise_sigma=noise_sigma),
        "isotonic", {},
    )

    lip = make_class(ClassDescriptor(kind="LipschitzMesh", dim_d=1, radius_B=1.0,
                                     sup_bound_M=1.0, lipschitz_L=5.0))
    out["lipschitz_d1"] = (
        Scenario("lipschitz_d1", lip, _lipschitz_truth(lip),
                 noise_sigma=noise_sigma),
        "lipschitz", {},
    )

    rkhs = make_class(ClassDescriptor(kind="RkhsBall", dim_d=1, radius_B=1.0,
                                      sup_bound_M=2.0, rkhs_decay_beta=1.0,
                                      rkhs_R=1.0))
    out["rkhs_b1"] = (
        Scenario("rkhs_b1", rkhs, _rkhs_truth(rkhs), noise_sigma=noise_sigma),
        "kernel_ridge", {"ball_mode": True},
    )

    l1 = make_class(ClassDescriptor(kind="L1Ball", dim_d=10, ambient_p=10,
                                    radius_B=1.0, sup_bound_M=1.0))
    f0_l1 = scale_handle(sample_member(l1, 11), 0.9)
    out["l1ball_p10"] = (
        Scenario("l1ball_p10", l1, f0_l1, noise_sigma=noise_sigma),
        "frank_wolfe", {},
    )
    return out


#: Table of predicted regret-rate exponents per shipped scenario (log factors
#: ignored; the L2-error exponent is half of these).
PREDICTED_REGRET_SLOPES = {
    "linear_p5": -1.0,
    "monotone_d1": -2.0 / 3.0,
    "lipschitz_d1": -2.0 / 3.0,
    "rkhs_b1": -2.0 / 3.0,
}


def critical_radius_exponent(kind: str, *, smoothness_s: float | None = None,
                             dim_d: int = 1,
                             rkhs_decay_beta: float | None = None) -> float:
    """Catalogue of critical-radius rate exponents (delta_n ~ n^exponent, log
    factors ignored). BoundedHKVariation is catalogue-only: no fitter or
    sup-solver ships for it."""
    if kind in ("LinearSpan", "L1Ball", "SparseLinear"):
        return -0.5
    if kind == "Monotone":
        return -1.0 / 3.0
    if kind == "BoundedHKVariation":
        return -1.0 / 3.0
    if kind == "LipschitzMesh":
        return -1.0 / (2.0 + dim_d)
    if kind == "HolderMesh":
        s = smoothness_s
        return -s / (2.0 * s + dim_d)
    if kind == "RkhsBall":
        b = rkhs_decay_beta
        return -b / (2.0 * b + 1.0)
    raise KeyError(kind)


# ---------------------------------------------------------------------------
# Weighted-ERM transfer experiment (misspecified linear design)
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class TransferDesign:
    """Missing-data weighted regression: F linear, f* quadratic (misspecified
    so the weighted population minimizer moves with the weights), logistic
    propensity, weights w(x) = 1/pi(x)."""

    descriptor: ClassDescriptor
    fstar: FunctionHandle
    pi0: LogisticPropensity
    noise_sigma: float = 0.25

    @property
    def scenario(self) -> Scenario:
        return Scenario("transfer_d1", self.descriptor, self.fstar,
                        fstar=self.fstar, noise_sigma=self.noise_sigma,
                        propensity=lambda x: self.pi0(x))


def make_transfer_design() -> TransferDesign:
    desc = make_class(ClassDescriptor(kind="LinearSpan", dim_d=1, ambient_p=1,
                                      radius_B=2.0, sup_bound_M=2.0))
    fstar = FunctionHandle(desc, "poly", coeffs=np.array([0.0, 0.0, 0.9]))
    return TransferDesign(descriptor=desc, fstar=fstar,
                          pi0=LogisticPropensity(0.3, 1.2))


def _quad_mean(func, lo=-1.0, hi=1.0, panels=64):
    t, w = np.polynomial.legendre.leggauss(16)
    edges = np.linspace(lo, hi, panels + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        xs = (a + b) / 2.0 + (b - a) / 2.0 * t
        total += float(np.sum(w * func(xs))) * (b - a) / 2.0
    return total / (hi - lo)


def weighted_risk(design: TransferDesign, theta: float, weight_fn) -> float:
    """R(f_theta; w) = E[pi0(X) w(X) ((f*(X) - theta X)^2 + sigma_e^2)]."""
    sc = design.scenario
    sig2 = sc.noise_var
    fs = design.fstar

    def integrand(xs):
        fx = eval_handle(fs, xs)
        return design.pi0(xs) * weight_fn(xs) * ((fx - theta * xs) ** 2 + sig2)

    return _quad_mean(integrand)


def weighted_minimizer(design: TransferDesign, weight_fn) -> float:
    """Population weighted least-squares slope argmin_theta R(f_theta; w)."""
    fs = design.fstar
    a = _quad_mean(lambda xs: design.pi0(xs) * weight_fn(xs) * xs * xs)
    b = _quad_mean(lambda xs: design.pi0(xs) * weight_fn(xs) * xs * eval_handle(fs, xs))
    return b / a


def weighted_regret(design: TransferDesign, theta: float, weight_fn) -> float:
    theta0 = weighted_minimizer(design, weight_fn)
    return weighted_risk(design, theta, weight_fn) - weighted_risk(design, theta0, weight_fn)


def weighted_bernstein_constant(design: TransferDesign, probe_count: int = 24,
                                seed: int = 0) -> float:
    """max over probe slopes of Var(w0(Z) Delta_l)/Reg(.; w0), by quadrature.

    With w0 = 1/pi0, moments of d w0 (A + 2 e D) reduce to covariate
    integrals: mean = E[A], second = E[w0 (A^2 + 4 sigma^2 D^2)]."""
    sc = design.scenario
    sig2 = sc.noise_var
    fs = design.fstar
    theta0 = weighted_minimizer(design, lambda xs: 1.0 / design.pi0(xs))
    rng = rng_for(seed, "transfer-probes")
    best = 0.0
    for _ in range(probe_count):
        theta = theta0 + rng.uniform(-1.0, 1.0)
        reg = weighted_regret(design, theta, lambda xs: 1.0 / design.pi0(xs))
        if reg < 1e-10:
            continue

        def a_vals(xs):
            d = theta0 * xs - theta * xs
            g = eval_handle(fs, xs) - theta0 * xs
            return d * d + 2.0 * g * d, d

        def mean_int(xs):
            a, _ = a_vals(xs)
            return a

        def second_int(xs):
            a, d = a_vals(xs)
            return (a * a + 4.0 * sig2 * d * d) / design.pi0(xs)

        mean = _quad_mean(mean_int)
        second = _quad_mean(second_int)
        var = second - mean**2
        best = max(best, var / reg)
    return best


def run_transfer_experiment(design: TransferDesign, n: int, chi2_values,
                            seeds_per_level: int, master_seed: int = 0,
                            c_hat: float | None = None) -> list[TransferReport]:
    """Weighted ERM with multiplicatively perturbed weights
    w_hat = w0 (1 + t psi), psi(x) = sqrt(3) x, so that
    chi2 = ||1 - w_hat/w0||^2 = t^2 exactly under the uniform marginal.
    One TransferReport per (chi2 level, seed)."""
    sc = design.scenario
    if c_hat is None:
        c_hat = weighted_bernstein_constant(design)
    w0_fn = lambda xs: 1.0 / design.pi0(xs)
    sqrt3 = math.sqrt(3.0)
    reports = []
    for chi2 in chi2_values:
        t = math.sqrt(chi2)
        if t * sqrt3 >= 1.0:
            raise ValueError("chi2 level leaves nonpositive weights")
        w_hat_fn = lambda xs, t=t: (1.0 + t * sqrt3 * xs) / design.pi0(xs)
        for seed in range(seeds_per_level):
            task_seed = derive_seed(master_seed, f"transfer/{chi2!r}", seed)
            data = make_data(sc, n, task_seed)
            weights = w_hat_fn(data.x[:, 0])
            handle = fit_weighted_erm(data, weights, design.descriptor)
            theta = float(handle.theta[0])
            reg_true = weighted_regret(design, theta, w0_fn)
            reg_est = weighted_regret(design, theta, w_hat_fn)
            rhs = regret_transfer_rhs(reg_est, chi2, c_hat)
            reports.append(TransferReport(
                scenario_id=sc.scenario_id, seed=seed, n=n,
                reg_true=reg_true, reg_estimated=reg_est, chi2=chi2,
                c_hat=c_hat, bound_rhs=rhs,
            ))
    return reports


def transfer_reports_to_csv(reports) -> str:
    lines = [TransferReport.CSV_HEADER]
    lines.extend(r.csv_row() for r in reports)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# In-sample nuisance experiment (DR pseudo-outcome regression)
# ---------------------------------------------------------------------------
def make_insample_scenario(noise_sigma: float = 0.5) -> Scenario:
    # truth is monotone and lies in the span of the first cosine features,
    # so the small parametric nuisance regression is well specified
    desc = make_class(ClassDescriptor(kind="Monotone", dim_d=1, radius_B=1.0,
                                      sup_bound_M=1.0))
    knots = np.linspace(0.0, 1.0, 513)
    values = -0.55 * math.sqrt(2.0) * np.cos(np.pi * knots)
    f0 = FunctionHandle(desc, "mesh", knots=knots, values=values)
    return Scenario("insample_dr", desc, f0, noise_sigma=noise_sigma,
                    propensity=LogisticPropensity(-0.2, 1.2))


def run_insample_experiment(scenario: Scenario, mode: str, n_grid, seeds: int,
                            master_seed: int = 0, feature_count: int = 3,
                            rich_fraction: float = 0.25) -> list[RegretRecord]:
    """DR pseudo-outcome ERM with the outcome nuisance fit per `mode`:
    'oracle' (true nuisance), 'insample' (fixed Donsker feature count),
    'rich' (feature_count = rich_fraction * n, in-sample), or 'crossfit'.
    Records carry the L2 error to the true target."""
    records = []
    for n in n_grid:
        for seed in range(seeds):
            # seed tag excludes the mode so the arms see paired datasets
            task_seed = derive_seed(master_seed, f"insample/{n}", seed)
            data = make_data(scenario, n, task_seed)
            if mode == "oracle":
                cfg = NuisanceConfig(fit_mode="OracleTruth")
                res = insample_erm(data, cfg, scenario.descriptor, scenario)
            elif mode == "insample":
                cfg = NuisanceConfig(fit_mode="InSample",
                                     feature_count=feature_count)
                res = insample_erm(data, cfg, scenario.descriptor, scenario)
            elif mode == "rich":
                cfg = NuisanceConfig(fit_mode="InSample",
                                     feature_count=max(2, int(rich_fraction * n)))
                res = insample_erm(data, cfg, scenario.descriptor, scenario)
            elif mode == "crossfit":
                cfg = NuisanceConfig(fit_mode="CrossFit", n_folds=2,
                                     feature_count=feature_count)
                res = crossfit_erm(data, 2, cfg, scenario.descriptor, scenario,
                                   task_seed)
            else:
                raise InsufficientGrid(f"unknown mode {mode!r}")
            l2 = l2_distance(res.handle, scenario.f0, scenario.marginal)
            records.append(RegretRecord(
                n=n, seed=seed, scenario_id=f"{scenario.scenario_id}/{mode}",
                emp_risk=float("nan"), pop_risk=float("nan"),
                regret=l2**2, l2_error=l2, fluctuation=float("nan"),
                flags=mode,
            ))
    return records
