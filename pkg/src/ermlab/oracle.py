"""Population-side computations: scenarios, data generation, risks, regret,
the basic-inequality fluctuation, and the Bernstein/curvature condition
ratios.

Scenarios are well-specified (f0 = fstar in the class) unless fstar is given
explicitly. Noise is Gaussian truncated at +-4 sigma so losses stay uniformly
bounded; population risks use the exact truncated-normal variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from .classes import (
    ClassDescriptor,
    FunctionHandle,
    Marginal,
    eval_handle,
    l2_distance,
    sample_member,
)
from .errors import DegenerateProbe, QuadratureUnsupportedDimension
from .estimators import Dataset, SquaredLoss, empirical_risk
from .seeding import derive_seed, rng_for

NOISE_TRUNCATION = 4.0


# ---------------------------------------------------------------------------
# Scenario and data generation
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Scenario:
    """A simulation design: class, true function, marginal, noise level."""

    scenario_id: str
    descriptor: ClassDescriptor
    f0: FunctionHandle
    noise_sigma: float = 0.0
    fstar: FunctionHandle | None = None
    marginal: Marginal = Marginal()
    propensity: object | None = None  # callable x -> P(observed | x)

    @property
    def target(self) -> FunctionHandle:
        return self.fstar if self.fstar is not None else self.f0

    @property
    def noise_var(self) -> float:
        """Variance of the +-4 sigma truncated Gaussian noise."""
        if self.noise_sigma == 0:
            return 0.0
        return float(stats.truncnorm.var(-NOISE_TRUNCATION, NOISE_TRUNCATION,
                                         scale=self.noise_sigma))

    def loss_bound(self) -> float:
        """Uniform bound on the squared loss over the class."""
        M = self.descriptor.sup_bound_M
        ymax = M + NOISE_TRUNCATION * self.noise_sigma
        return (M + ymax) ** 2

    def squared_loss(self) -> SquaredLoss:
        return SquaredLoss(clip_M=self.loss_bound())


def draw_noise(rng: np.random.Generator, sigma: float, n: int) -> np.ndarray:
    if sigma == 0:
        return np.zeros(n)
    u = rng.uniform(size=n)
    return stats.truncnorm.ppf(u, -NOISE_TRUNCATION, NOISE_TRUNCATION, scale=sigma)


def make_data(scenario: Scenario, n: int, seed: int) -> Dataset:
    """Draw an i.i.d. sample; deterministic in (scenario, n, seed)."""
    rng = rng_for(seed, "data", n)
    x = scenario.marginal.sample(scenario.descriptor, rng, n)
    y = eval_handle(scenario.target, x) + draw_noise(rng, scenario.noise_sigma, n)
    obs = None
    if scenario.propensity is not None:
        pi = np.clip(scenario.propensity(x[:, 0] if x.shape[1] == 1 else x), 0.0, 1.0)
        obs = (rng.uniform(size=n) < pi).astype(np.int8)
    return Dataset(x=x, y=y, obs_indicator=obs)


# ---------------------------------------------------------------------------
# Population quantities
# ---------------------------------------------------------------------------
def population_risk(scenario: Scenario, fh: FunctionHandle) -> float:
    """R(f) = E Var(Y|X) + ||fstar - f||^2 for the squared loss, with the
    distance in closed form / exact quadrature; Monte Carlo fallback for
    unsupported marginal/representation combinations (flagged by exception
    type upstream)."""
    try:
        dist = l2_distance(scenario.target, fh, scenario.marginal)
    except QuadratureUnsupportedDimension:
        dist = math.sqrt(mc_population_risk(scenario, fh, 10**6, seed=0)[0]
                         - scenario.noise_var)
    return scenario.noise_var + dist**2


def mc_population_risk(scenario: Scenario, fh: FunctionHandle, draws: int,
                       seed: int = 0) -> tuple[float, float]:
    """Monte Carlo population risk with standard error (independent check)."""
    rng = rng_for(seed, "mc-risk", draws)
    x = scenario.marginal.sample(scenario.descriptor, rng, draws)
    y = eval_handle(scenario.target, x) + draw_noise(rng, scenario.noise_sigma, draws)
    vals = (y - eval_handle(fh, x)) ** 2
    return float(np.mean(vals)), float(np.std(vals, ddof=1) / math.sqrt(draws))


def regret(scenario: Scenario, fh: FunctionHandle) -> float:
    """R(f) - R(f0)."""
    return population_risk(scenario, fh) - population_risk(scenario, scenario.f0)


def fluctuation(scenario: Scenario, data: Dataset, fh: FunctionHandle) -> float:
    """(P_n - P){l(., f0) - l(., f)}: the basic-inequality right-hand side."""
    loss = scenario.squared_loss()
    emp = empirical_risk(loss, scenario.f0, data) - empirical_risk(loss, fh, data)
    return emp + regret(scenario, fh)


# ---------------------------------------------------------------------------
# Probe construction and condition ratios
# ---------------------------------------------------------------------------
def blend_handles(f0: FunctionHandle, f1: FunctionHandle, t: float) -> FunctionHandle:
    """(1-t) f0 + t f1, staying inside a convex class for t in [0, 1]."""
    r0, r1 = f0.representation, f1.representation
    if r0 == r1 == "theta":
        return replace(f0, theta=(1 - t) * f0.theta + t * f1.theta)
    if r0 == r1 == "mesh":
        grid = np.union1d(f0.knots, f1.knots)
        vals = (1 - t) * eval_handle(f0, grid) + t * eval_handle(f1, grid)
        return replace(f0, knots=grid, values=vals)
    if r0 == r1 == "coeffs":
        n = max(f0.coeffs.shape[0], f1.coeffs.shape[0])
        a = np.zeros(n)
        b = np.zeros(n)
        a[: f0.coeffs.shape[0]] = f0.coeffs
        b[: f1.coeffs.shape[0]] = f1.coeffs
        return replace(f0, coeffs=(1 - t) * a + t * b)
    raise QuadratureUnsupportedDimension(
        f"cannot blend representations {r0!r} and {r1!r}"
    )


PROBE_RADII = (1e-2, 1e-1, 1.0)


def probe_handles(scenario: Scenario, probe_count: int, seed: int) -> list[FunctionHandle]:
    """Random members plus radial interpolants toward f0 at radii
    {1e-2, 1e-1, 1} * M, covering the local regime of the conditions."""
    desc = scenario.descriptor
    M = desc.sup_bound_M
    probes = []
    for i in range(probe_count):
        fh = sample_member(desc, derive_seed(seed, "probe", i))
        dist = l2_distance(fh, scenario.f0, scenario.marginal)
        probes.append(fh)
        if dist <= 1e-12:
            continue
        for r in PROBE_RADII:
            t = min(1.0, r * M / dist)
            probes.append(blend_handles(scenario.f0, fh, t))
    return probes


def _loss_diff_moments(scenario: Scenario, fh: FunctionHandle, draws: int,
                       rng: np.random.Generator) -> tuple[float, float, float]:
    """(Var, E[D^2], ||l_f - l_f0||^2) for the squared-loss difference,
    where D = f0 - f. Uses X-draws only: l(z,f)-l(z,f0) = A + 2 e D with
    A = D^2 + 2 g D, g = fstar - f0, and noise e independent of X."""
    x = scenario.marginal.sample(scenario.descriptor, rng, draws)
    d_vals = eval_handle(scenario.f0, x) - eval_handle(fh, x)
    g_vals = eval_handle(scenario.target, x) - eval_handle(scenario.f0, x)
    a_vals = d_vals**2 + 2.0 * g_vals * d_vals
    sig2 = scenario.noise_var
    ed2 = float(np.mean(d_vals**2))
    var = float(np.var(a_vals)) + 4.0 * sig2 * ed2
    second = float(np.mean(a_vals**2)) + 4.0 * sig2 * ed2
    return var, ed2, second


def bernstein_ratio(scenario: Scenario, probe_count: int, seed: int,
                    draws: int = 100_000) -> float:
    """Empirical c_Bern: max over probes of Var(l_f - l_f0) / regret(f)."""
    rng = rng_for(seed, "bernstein-mc")
    best = None
    for fh in probe_handles(scenario, probe_count, seed):
        reg = regret(scenario, fh)
        if reg < 1e-12:
            continue
        var, _, _ = _loss_diff_moments(scenario, fh, draws, rng)
        ratio = var / reg
        best = ratio if best is None else max(best, ratio)
    if best is None:
        raise DegenerateProbe("all probes had regret below 1e-12")
    return float(best)


def curvature_ratio(scenario: Scenario, probe_count: int, seed: int,
                    draws: int = 100_000) -> tuple[float, float]:
    """(kappa_hat, L_hat): min regret/||f-f0||^2 and max ||l_f - l_f0||/||f-f0||."""
    rng = rng_for(seed, "curvature-mc")
    kappa = None
    lip = None
    for fh in probe_handles(scenario, probe_count, seed):
        dist = l2_distance(fh, scenario.f0, scenario.marginal)
        if dist**2 < 1e-12:
            continue
        reg = regret(scenario, fh)
        _, _, second = _loss_diff_moments(scenario, fh, draws, rng)
        k = reg / dist**2
        l_norm = math.sqrt(max(second, 0.0)) / dist
        kappa = k if kappa is None else min(kappa, k)
        lip = l_norm if lip is None else max(lip, l_norm)
    if kappa is None:
        raise DegenerateProbe("all probes were degenerate")
    return float(kappa), float(lip)


def loss_difference_class(scenario: Scenario, probes, data: Dataset,
                          centered: bool = False):
    """Materialize {l(., f0) - l(., f) : f in probes} as a finite class of
    values on the sample, for localized-complexity estimation.

    The uncentered variant is the default; the centered one subtracts the
    known population mean (the probe's regret), which is available in
    simulation. Norms are the population L2 norms of the loss differences.
    """
    from .complexity import FiniteClass

    loss = scenario.squared_loss()
    pred0 = eval_handle(scenario.f0, data.x)
    base = loss.pointwise(data.y, pred0)
    cols = []
    norms = []
    rng = rng_for(0, "loss-diff-norms")
    for fh in probes:
        vals = base - loss.pointwise(data.y, eval_handle(fh, data.x))
        reg = regret(scenario, fh)
        if centered:
            vals = vals + reg  # mean of l(f0) - l(f) is -regret(f)
        var, _, second = _loss_diff_moments(scenario, fh, 50_000, rng)
        norms.append(math.sqrt(max(var if centered else second, 0.0)))
        cols.append(vals)
    return FiniteClass(values=np.column_stack(cols) if cols else np.zeros((data.n, 0)),
                       norms=np.asarray(norms))


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class RegretRecord:
    """One experiment outcome for a (scenario, n, seed) cell."""

    n: int
    seed: int
    scenario_id: str
    emp_risk: float
    pop_risk: float
    regret: float
    l2_error: float
    fluctuation: float
    flags: str = ""

    CSV_HEADER = "n,seed,scenario,emp_risk,pop_risk,regret,l2_error,fluctuation,flags"

    def csv_row(self) -> str:
        return (
            f"{self.n},{self.seed},{self.scenario_id},{self.emp_risk!r},"
            f"{self.pop_risk!r},{self.regret!r},{self.l2_error!r},"
            f"{self.fluctuation!r},{self.flags}"
        )
