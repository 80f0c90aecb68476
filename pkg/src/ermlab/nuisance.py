"""Nuisance-dependent ERM: propensity/weight estimation, weighted ERM, the
regret-transfer bound, DR-style pseudo-outcomes, K-fold cross-fitting and
in-sample plug-in ERM.

Missing-data convention: the weighted loss is l_w(z, f) = w(x) d (y - f(x))^2
with weight functions w(x) = 1/pi(x) defined on the covariate, so the weight
ratio w_hat/w_0 = pi_0/pi_hat is well defined everywhere and
chi2 = ||1 - w_hat/w_0||^2 is the covariate chi-squared divergence.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._validation import as_vector
from .classes import ClassDescriptor, FunctionHandle, eval_handle
from .errors import (
    ClipSaturation,
    FoldTooSmall,
    MissingNuisanceValue,
    NonPositiveWeight,
    WeightErrorTooLarge,
)
from .estimators import (
    Dataset,
    PlugInProductLoss,
    default_estimator,
)
from .oracle import Scenario
from .seeding import rng_for

DEFAULT_EPS_CLIP = 0.05


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class NuisanceConfig:
    """How the nuisance component is estimated.

    fit_mode: SampleSplit(frac) | CrossFit(K) | InSample | OracleTruth.
    target: Weight | Propensity | PseudoOutcome.
    feature_count: size of the cosine-basis regression used for outcome
    nuisances (intercept + feature_count-1 cosines).
    """

    fit_mode: str = "OracleTruth"
    target: str = "PseudoOutcome"
    split_frac: float = 0.5
    n_folds: int = 2
    feature_count: int = 3

    def __post_init__(self):
        if self.fit_mode == "CrossFit" and self.n_folds < 2:
            raise FoldTooSmall("CrossFit requires K >= 2")
        if self.fit_mode == "SampleSplit" and not 0.0 < self.split_frac < 1.0:
            raise FoldTooSmall("SampleSplit requires frac in (0, 1)")


# ---------------------------------------------------------------------------
# Propensities and weights
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class LogisticPropensity:
    """pi(x) = expit(a + b x) on univariate covariates."""

    intercept: float
    slope: float

    def __call__(self, x) -> np.ndarray:
        z = self.intercept + self.slope * np.asarray(x, dtype=float)
        return 1.0 / (1.0 + np.exp(-z))


def fit_logistic_propensity(x: np.ndarray, d: np.ndarray,
                            max_iters: int = 50) -> LogisticPropensity:
    """Newton/IRLS maximum likelihood for pi(x) = expit(a + b x)."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    feats = np.column_stack([np.ones_like(x), x])
    beta = np.zeros(2)
    for _ in range(max_iters):
        p = 1.0 / (1.0 + np.exp(-(feats @ beta)))
        wdiag = np.maximum(p * (1 - p), 1e-12)
        grad = feats.T @ (d - p)
        hess = feats.T @ (feats * wdiag[:, None])
        step = np.linalg.solve(hess, grad)
        beta = beta + step
        if np.max(np.abs(step)) < 1e-12:
            break
    return LogisticPropensity(intercept=float(beta[0]), slope=float(beta[1]))


@dataclass(frozen=True)
class WeightModel:
    """Inverse-propensity weight function w(x) = clip(1/pi_hat(x))."""

    propensity: object
    eps_clip: float = DEFAULT_EPS_CLIP

    def weight_values(self, x) -> np.ndarray:
        raw = 1.0 / np.asarray(self.propensity(x), dtype=float)
        clipped = np.clip(raw, self.eps_clip, 1.0 / self.eps_clip)
        frac = float(np.mean(clipped != raw))
        if frac > 0.01:
            warnings.warn(
                f"{frac:.1%} of weights clipped to [{self.eps_clip}, "
                f"{1 / self.eps_clip}]", ClipSaturation)
        return clipped


def chi2_weight_error(pi_hat, pi_0, domain: tuple[float, float],
                      nodes: int = 2048) -> float:
    """Oracle chi2 = E_X[(1 - pi_0(X)/pi_hat(X))^2] for a uniform marginal
    on the given interval (Gauss-Legendre panels)."""
    lo, hi = domain
    t, w = np.polynomial.legendre.leggauss(64)
    edges = np.linspace(lo, hi, nodes // 64 + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        xs = (a + b) / 2.0 + (b - a) / 2.0 * t
        vals = (1.0 - np.asarray(pi_0(xs)) / np.asarray(pi_hat(xs))) ** 2
        total += float(np.sum(w * vals)) * (b - a) / 2.0
    return total / (hi - lo)


def estimate_weights(aux_data: Dataset, scenario: Scenario,
                     eps_clip: float = DEFAULT_EPS_CLIP) -> tuple[WeightModel, float]:
    """Fit a logistic propensity on auxiliary data and return the clipped
    inverse-propensity weight model together with the oracle-computed chi2
    (the simulation knows pi_0)."""
    if aux_data.obs_indicator is None:
        raise MissingNuisanceValue("auxiliary data carries no observation indicator")
    model = fit_logistic_propensity(aux_data.x[:, 0], aux_data.obs_indicator)
    wm = WeightModel(propensity=model, eps_clip=eps_clip)

    def pi_hat_clipped(xs):
        return 1.0 / wm.weight_values(xs)

    chi2 = chi2_weight_error(pi_hat_clipped, scenario.propensity,
                             scenario.descriptor.domain)
    return wm, chi2


# ---------------------------------------------------------------------------
# Weighted ERM and the transfer bound
# ---------------------------------------------------------------------------
def fit_weighted_erm(data: Dataset, weights, desc: ClassDescriptor,
                     estimator=None) -> FunctionHandle:
    """Minimize the weighted empirical risk sum_i w_i l(Z_i, f) over the class.

    Rows with a zero observation indicator do not enter the weighted loss and
    are dropped; the remaining weights must be positive and finite."""
    w = as_vector(np.asarray(weights, dtype=float), n=data.n, name="weights")
    keep = np.ones(data.n, dtype=bool)
    if data.obs_indicator is not None:
        keep = data.obs_indicator.astype(bool)
    w_used = w[keep]
    if not np.all(np.isfinite(w_used)) or np.any(w_used <= 0):
        raise NonPositiveWeight("weights must be positive and finite")
    est = estimator if estimator is not None else default_estimator(desc)
    est.fit(data.x[keep], data.y[keep], sample_weight=w_used)
    return est.handle_


def regret_transfer_rhs(reg_estimated: float, chi2: float, c: float,
                        strict: bool = False) -> float:
    """Reg(f; w_hat) + 4 c^2 chi2, the regret-transfer upper bound; requires
    chi2 < 1/4 (i.e. ||1 - w_hat/w_0|| < 1/2) for the guarantee to apply."""
    if chi2 >= 0.25 and strict:
        raise WeightErrorTooLarge(f"chi2={chi2} is outside the theorem range")
    return reg_estimated + 4.0 * c**2 * chi2


@dataclass(frozen=True)
class TransferReport:
    """One weighted-ERM run compared against the transfer bound."""

    scenario_id: str
    seed: int
    n: int
    reg_true: float
    reg_estimated: float
    chi2: float
    c_hat: float
    bound_rhs: float

    CSV_HEADER = "scenario,seed,n,reg_true,reg_est,chi2,c_hat,bound_rhs,holds"

    @property
    def holds(self) -> bool:
        return self.reg_true <= self.bound_rhs + 1e-12

    @property
    def chi2_in_range(self) -> bool:
        return self.chi2 < 0.25

    def csv_row(self) -> str:
        return (
            f"{self.scenario_id},{self.seed},{self.n},{self.reg_true!r},"
            f"{self.reg_estimated!r},{self.chi2!r},{self.c_hat!r},"
            f"{self.bound_rhs!r},{int(self.holds)}"
        )


# ---------------------------------------------------------------------------
# Pseudo-outcomes (DR) and nuisance regressions
# ---------------------------------------------------------------------------
def dr_pseudo_outcomes(data: Dataset, m_values: np.ndarray,
                       pi_values: np.ndarray) -> np.ndarray:
    """g(z) = m(x) + d/pi(x) (y - m(x)): doubly-robust pseudo-outcome values."""
    if data.obs_indicator is None:
        raise MissingNuisanceValue("DR pseudo-outcomes need an observation indicator")
    m = as_vector(m_values, n=data.n, name="m_values")
    pi = as_vector(pi_values, n=data.n, name="pi_values")
    if np.any(~np.isfinite(m)) or np.any(~np.isfinite(pi)):
        raise MissingNuisanceValue("nuisance values must be finite")
    d = data.obs_indicator.astype(float)
    return m + d / pi * (data.y - m)


def make_pseudo_outcome_loss(data: Dataset, pseudo: np.ndarray,
                             clip_M: float) -> PlugInProductLoss:
    """Squared loss against pseudo-outcomes with its product decomposition
    (m1, m2, r1, r2) recorded on the loss object."""
    g = as_vector(pseudo, n=data.n, name="pseudo")
    if np.any(~np.isfinite(g)):
        raise MissingNuisanceValue("pseudo-outcomes must be finite")
    return PlugInProductLoss(pseudo_outcomes=g, clip_M=clip_M)


def cosine_features(x: np.ndarray, count: int) -> np.ndarray:
    """[1, sqrt(2) cos(pi k x)]_{k < count}: the nuisance regression basis."""
    cols = [np.ones_like(x)]
    for k in range(1, count):
        cols.append(math.sqrt(2.0) * np.cos(np.pi * k * x))
    return np.column_stack(cols)


def fit_outcome_regression(x: np.ndarray, y: np.ndarray, d: np.ndarray,
                           feature_count: int) -> np.ndarray:
    """Min-norm least squares of y on cosine features over observed rows;
    returns the coefficient vector (deterministic in the inputs). Wide
    designs use normal equations with a numerically negligible jitter."""
    obs = d.astype(bool)
    feats = cosine_features(x[obs], feature_count)
    if feature_count <= 64:
        coef, *_ = np.linalg.lstsq(feats, y[obs], rcond=None)
        return coef
    gram = feats.T @ feats
    jitter = 1e-12 * max(float(np.trace(gram)) / feature_count, 1.0)
    return np.linalg.solve(gram + jitter * np.eye(feature_count), feats.T @ y[obs])


def predict_outcome_regression(coef: np.ndarray, x: np.ndarray) -> np.ndarray:
    return cosine_features(x, coef.shape[0]) @ coef


# ---------------------------------------------------------------------------
# Cross-fitting and in-sample plug-in ERM
# ---------------------------------------------------------------------------
def assign_folds(n: int, K: int, seed: int) -> np.ndarray:
    """Deterministic fold labels with sizes differing by at most one."""
    perm = rng_for(seed, "folds", n).permutation(n)
    fold = np.empty(n, dtype=np.int64)
    fold[perm] = np.arange(n) % K
    return fold


@dataclass(frozen=True)
class CrossFitResult:
    handle: FunctionHandle
    fold_id: np.ndarray
    nuisance_coefs: tuple  # per-fold coefficient vectors (None for oracle)
    pseudo_outcomes: np.ndarray
    nuisance_l2_errors: tuple


def _nuisance_for_rows(data: Dataset, rows: np.ndarray, cfg: NuisanceConfig,
                       scenario: Scenario):
    """Outcome-regression nuisance fit using only the given rows (or the truth)."""
    if cfg.fit_mode == "OracleTruth":
        return None
    return fit_outcome_regression(
        data.x[rows, 0], data.y[rows], data.obs_indicator[rows],
        cfg.feature_count,
    )


def _nuisance_values(coef, data: Dataset, scenario: Scenario) -> np.ndarray:
    if coef is None:
        return eval_handle(scenario.target, data.x)
    return predict_outcome_regression(coef, data.x[:, 0])


def nuisance_l2_error(coef, scenario: Scenario, nodes: int = 4096) -> float:
    """||m_hat - m_0|| under the uniform marginal (oracle bookkeeping for the
    PAC-nuisance condition)."""
    if coef is None:
        return 0.0
    lo, hi = scenario.descriptor.domain
    xs = (np.arange(nodes) + 0.5) / nodes * (hi - lo) + lo
    diff = predict_outcome_regression(coef, xs) - eval_handle(scenario.target, xs)
    return math.sqrt(float(np.mean(diff**2)) * 1.0)


def crossfit_erm(data: Dataset, K: int, cfg: NuisanceConfig, desc: ClassDescriptor,
                 scenario: Scenario, seed: int, estimator=None) -> CrossFitResult:
    """K-fold cross-fitted plug-in ERM.

    Fold k's pseudo-outcomes come from the nuisance fit on the other folds
    only; the ERM minimizes (1/K) sum_k |I_k|^{-1} sum_{i in I_k} l_{g^(-k)},
    realized as a weighted fit with row weights n/(K |I_k|)."""
    n = data.n
    if n < 2 * K:
        raise FoldTooSmall(f"n={n} is too small for K={K} folds")
    fold = data.fold_id if data.fold_id is not None else assign_folds(n, K, seed)
    pi_vals = np.asarray(scenario.propensity(data.x[:, 0]), dtype=float)
    pseudo = np.empty(n)
    coefs = []
    errs = []
    for k in range(K):
        rows_out = np.nonzero(fold != k)[0]
        rows_in = np.nonzero(fold == k)[0]
        coef = _nuisance_for_rows(data, rows_out, cfg, scenario)
        coefs.append(coef)
        errs.append(nuisance_l2_error(coef, scenario))
        sub = Dataset(x=data.x[rows_in], y=data.y[rows_in],
                      obs_indicator=data.obs_indicator[rows_in])
        m_in = _nuisance_values(coef, sub, scenario)
        pseudo[rows_in] = dr_pseudo_outcomes(sub, m_in, pi_vals[rows_in])
    sizes = np.bincount(fold, minlength=K).astype(float)
    weights = n / (K * sizes[fold])
    est = estimator if estimator is not None else default_estimator(desc)
    est.fit(data.x, pseudo, sample_weight=weights)
    return CrossFitResult(handle=est.handle_, fold_id=fold,
                          nuisance_coefs=tuple(coefs), pseudo_outcomes=pseudo,
                          nuisance_l2_errors=tuple(errs))


@dataclass(frozen=True)
class InSampleResult:
    handle: FunctionHandle
    nuisance_coef: object
    pseudo_outcomes: np.ndarray
    nuisance_l2_error: float


def insample_erm(data: Dataset, cfg: NuisanceConfig, desc: ClassDescriptor,
                 scenario: Scenario, estimator=None) -> InSampleResult:
    """Plug-in ERM with the nuisance fit on the same rows (no splitting)."""
    rows = np.arange(data.n)
    coef = _nuisance_for_rows(data, rows, cfg, scenario)
    pi_vals = np.asarray(scenario.propensity(data.x[:, 0]), dtype=float)
    m_vals = _nuisance_values(coef, data, scenario)
    pseudo = dr_pseudo_outcomes(data, m_vals, pi_vals)
    est = estimator if estimator is not None else default_estimator(desc)
    est.fit(data.x, pseudo)
    return InSampleResult(handle=est.handle_, nuisance_coef=coef,
                          pseudo_outcomes=pseudo,
                          nuisance_l2_error=nuisance_l2_error(coef, scenario))


def sample_split_erm(data: Dataset, cfg: NuisanceConfig, desc: ClassDescriptor,
                     scenario: Scenario, seed: int, estimator=None) -> InSampleResult:
    """Two-way sample splitting: nuisance on the first fraction, ERM on the rest."""
    n = data.n
    n_nuis = int(cfg.split_frac * n)
    if n_nuis < 1 or n - n_nuis < 1:
        raise FoldTooSmall("split leaves an empty part")
    perm = rng_for(seed, "split", n).permutation(n)
    nuis_rows, fit_rows = perm[:n_nuis], perm[n_nuis:]
    coef = _nuisance_for_rows(data, nuis_rows, cfg, scenario)
    sub = Dataset(x=data.x[fit_rows], y=data.y[fit_rows],
                  obs_indicator=data.obs_indicator[fit_rows])
    pi_vals = np.asarray(scenario.propensity(sub.x[:, 0]), dtype=float)
    m_vals = _nuisance_values(coef, sub, scenario)
    pseudo = dr_pseudo_outcomes(sub, m_vals, pi_vals)
    est = estimator if estimator is not None else default_estimator(desc)
    est.fit(sub.x, pseudo)
    return InSampleResult(handle=est.handle_, nuisance_coef=coef,
                          pseudo_outcomes=pseudo,
                          nuisance_l2_error=nuisance_l2_error(coef, scenario))
