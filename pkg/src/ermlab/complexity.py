"""Localized Rademacher complexity: Monte Carlo estimation, exact enumeration
oracles, closed-form bounds, envelope transforms and critical-radius solvers.

Localization norms: ``PopulationL2`` uses the known simulation marginal
(closed-form second moments for linear kinds, the exact piecewise-linear
quadratic form for mesh kinds); ``EmpiricalL2`` uses ||f||_n on the sample.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from ._pava import pava, pava_box
from .classes import (
    Envelope,
    Marginal,
    SumEnvelope,
    make_class,
)
from .errors import (
    NoCrossing,
    NoCrossingInRange,
    SolverNonConvergence,
    TooLargeForEnumeration,
    UnsupportedClassKind,
)
from .seeding import rng_for

POPULATION_L2 = "PopulationL2"
EMPIRICAL_L2 = "EmpiricalL2"

DEFAULT_REPS = 512
DEFAULT_GRID_SIZE = 24


# ---------------------------------------------------------------------------
# Finite classes (explicit member values), used by the enumeration oracle
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class FiniteClass:
    """A finite function class given by its values on the sample.

    values: (n, m) array of f_j(Z_i); norms: length-m member norms in the
    localization metric. With star=True the class is replaced by its star
    hull {t f_j : t in [0, 1]}.
    """

    values: np.ndarray
    norms: np.ndarray
    star: bool = False

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "norms", np.asarray(self.norms, dtype=float))


def _n_points(points) -> int:
    arr = np.asarray(points)
    return arr.shape[0]


def _finite_sup(fc: FiniteClass, signs: np.ndarray, delta: float) -> float:
    corr = signs @ fc.values / signs.shape[0]
    if fc.star:
        with np.errstate(divide="ignore"):
            t_max = np.minimum(1.0, delta / fc.norms)
        return float(np.max(np.maximum(t_max * corr, 0.0), initial=0.0))
    ok = fc.norms <= delta * (1 + 1e-12)
    if not np.any(ok):
        return 0.0
    return float(np.max(corr[ok]))


# ---------------------------------------------------------------------------
# Localized suprema
# ---------------------------------------------------------------------------
def local_sup(cls, points, signs, delta: float,
              norm_mode: str = POPULATION_L2,
              marginal: Marginal | None = None,
              tol: float = 1e-8, max_iters: int = 10_000) -> float:
    """sup over class members with ||f|| <= delta of (1/n) sum_i eps_i f(Z_i).

    Closed form for LinearSpan (dual norm of the sign-covariate average under
    the localization metric, intersected with the parameter ball) and L1Ball
    (scaled-vertex formula); Lagrangian bisection on the norm constraint with
    an exact PAVA projection (Monotone) or a box-constrained quadratic solve
    (LipschitzMesh) otherwise.
    """
    if isinstance(cls, FiniteClass):
        return _finite_sup(cls, np.asarray(signs, dtype=float), delta)
    desc = cls if cls.validated else make_class(cls)
    signs = np.asarray(signs, dtype=float)
    if delta <= 0:
        return 0.0
    if desc.kind == "LinearSpan":
        return _linear_local_sup(desc, points, signs, delta, norm_mode, marginal)
    if desc.kind == "L1Ball":
        return _l1_local_sup(desc, points, signs, delta, norm_mode, marginal)
    if desc.kind in ("Monotone", "LipschitzMesh"):
        return _mesh_local_sup(desc, points, signs, delta, norm_mode, tol, max_iters)
    raise UnsupportedClassKind(f"local_sup not implemented for {desc.kind}")


def _linear_local_sup(desc, points, signs, delta, norm_mode, marginal) -> float:
    x = np.atleast_2d(np.asarray(points, dtype=float))
    n = x.shape[0]
    v = signs @ x / n
    B = desc.radius_B
    if norm_mode == POPULATION_L2:
        diag = (marginal or Marginal()).second_moment_diag(desc)
        evals, vt = diag, v
    else:
        gram = x.T @ x / n
        w, U = np.linalg.eigh(gram)
        evals, vt = np.maximum(w, 0.0), U.T @ v
    if np.allclose(evals, evals[0], rtol=1e-12, atol=0):
        # isotropic: both constraints are balls, the tighter radius wins
        sig = math.sqrt(max(evals[0], 0.0))
        r = B if sig == 0 else min(B, delta / sig)
        return float(r * np.linalg.norm(vt))

    # Lagrangian dual of max <v,theta> s.t. theta'Sigma theta <= delta^2,
    # ||theta||^2 <= B^2 (convex QCQP, Slater holds). Along rays
    # (a, b) = (t c, (1-t) c), minimizing over c > 0 gives
    # g(t) = sqrt((t delta^2 + (1-t) B^2) * sum v_j^2/(t s_j + (1-t))),
    # and the exact sup is min over t in [0, 1].
    v2 = vt**2

    def g(t):
        denom = t * evals + (1.0 - t)
        if np.any(denom <= 0):
            return np.inf
        return math.sqrt((t * delta**2 + (1.0 - t) * B**2)
                         * float(np.sum(v2 / denom)))

    ts = np.linspace(0.0, 1.0, 65)
    vals = np.array([g(t) for t in ts])
    k = int(np.argmin(vals))
    lo = ts[max(k - 1, 0)]
    hi = ts[min(k + 1, len(ts) - 1)]
    from scipy.optimize import minimize_scalar

    res = minimize_scalar(g, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-14})
    return float(min(res.fun, vals[k]))


def _l1_local_sup(desc, points, signs, delta, norm_mode, marginal) -> float:
    x = np.atleast_2d(np.asarray(points, dtype=float))
    n = x.shape[0]
    v = np.abs(signs @ x / n)
    if norm_mode == EMPIRICAL_L2:
        col = np.sqrt(np.mean(x**2, axis=0))
    else:
        col = np.sqrt((marginal or Marginal()).second_moment_diag(desc))
    with np.errstate(divide="ignore"):
        radius = np.where(col > 0, np.minimum(desc.radius_B, delta / col),
                          desc.radius_B)
    return float(np.max(v * radius, initial=0.0))


def _mesh_quadratic_form(points: np.ndarray) -> np.ndarray:
    """Tridiagonal Q with ||interp(v)||^2_{L2[0,1]} = v'Qv for values v at the
    sorted sample points (piecewise linear, flat extrapolation)."""
    t = points
    n = t.shape[0]
    Q = np.zeros((n, n))
    Q[0, 0] += t[0]
    Q[-1, -1] += 1.0 - t[-1]
    h = np.diff(t)
    i = np.arange(n - 1)
    Q[i, i] += h / 3.0
    Q[i + 1, i + 1] += h / 3.0
    Q[i, i + 1] += h / 6.0
    Q[i + 1, i] += h / 6.0
    return Q


def _mesh_local_sup(desc, points, signs, delta, norm_mode, tol, max_iters) -> float:
    x = np.asarray(points, dtype=float).reshape(-1)
    order = np.argsort(x, kind="stable")
    xs, g = x[order], signs[order]
    n = xs.shape[0]
    g = g / n
    M = desc.radius_B
    lipschitz = desc.kind == "LipschitzMesh"
    caps = desc.lipschitz_L * np.diff(xs) if lipschitz else None

    if norm_mode == EMPIRICAL_L2:
        Q = None

        def norm_of(v):
            return math.sqrt(float(np.mean(v**2)))

        def argmax_penalized(mu):
            # max <g,v> - (mu/n)||v||^2 = l2 projection of n g/(2 mu)
            target = n * g / (2.0 * mu)
            if lipschitz:
                return _lipschitz_project(target, caps, M, np.full(n, 1.0 / n))
            return pava_box(target, -M, M)
    else:
        Q = _mesh_quadratic_form(xs)
        lam_max = float(np.max(np.linalg.eigvalsh(Q)))

        def norm_of(v):
            return math.sqrt(max(float(v @ Q @ v), 0.0))

        def argmax_penalized(mu):
            if lipschitz:
                return _lipschitz_quad_max(g, mu * Q, caps, M)
            return _pg_quad_max(g, mu, Q, lam_max, M, tol, max_iters)

    # unconstrained-in-norm maximizer of <g, v> over the class
    v_free = _mesh_linear_max(g, M, caps, lipschitz, np.full(n, 1.0 / n)
                              if norm_mode == EMPIRICAL_L2 else None)
    if norm_of(v_free) <= delta * (1 + 1e-12):
        return float(g @ v_free)

    # bisection on the norm-constraint multiplier; norm(mu) is nonincreasing
    mu_lo, mu_hi = 1e-12, 1.0
    while norm_of(argmax_penalized(mu_hi)) > delta and mu_hi < 1e12:
        mu_hi *= 4.0
    for _ in range(200):
        mu = math.sqrt(mu_lo * mu_hi)
        v = argmax_penalized(mu)
        nv = norm_of(v)
        if abs(nv - delta) <= tol * max(delta, 1e-12):
            break
        if nv > delta:
            mu_lo = mu
        else:
            mu_hi = mu
    v = argmax_penalized(mu_hi)  # feasible side: norm <= delta
    scale = min(1.0, delta / max(norm_of(v), 1e-300))
    return float(g @ (v * scale))


def _mesh_linear_max(g, M, caps, lipschitz, weights):
    """max <g, v> over the class-with-box alone (no norm constraint)."""
    n = g.shape[0]
    if not lipschitz:
        # extreme points are -M -> +M step functions; scan the switch point
        suffix = np.concatenate([np.cumsum(g[::-1])[::-1], [0.0]])
        total = suffix[0]
        k = int(np.argmax(2.0 * suffix - total))
        v = np.full(n, -M)
        v[k:] = M
        return v
    return _lipschitz_quad_max(g, np.zeros((n, n)), caps, M)


def _pg_quad_max(g, mu, Q, lam_max, M, tol, max_iters):
    """max <g,v> - mu v'Qv over {monotone} intersect [-M, M]^n by projected
    gradient with step 1/(2 mu lam_max) (linear convergence; projection is
    exact clipped PAVA)."""
    n = g.shape[0]
    step = 1.0 / (2.0 * mu * lam_max)
    v = np.zeros(n)
    prev = -np.inf
    for _ in range(max_iters):
        grad = g - 2.0 * mu * (Q @ v)
        v = pava_box(v + step * grad, -M, M)
        obj = float(g @ v - mu * v @ Q @ v)
        if abs(obj - prev) <= tol * max(1.0, abs(obj)):
            return v
        prev = obj
    raise SolverNonConvergence("projected-gradient localized sup did not converge")


def _lipschitz_quad_max(g, A, caps, M):
    """max <g,v> - v'Av over {|v_{i+1}-v_i| <= caps_i, |v_i| <= M} via L-BFGS-B
    in increment space (v = v_1 + cumsum(d))."""
    from scipy.optimize import minimize as _min

    n = g.shape[0]

    def unpack(u):
        return u[0] + np.concatenate([[0.0], np.cumsum(u[1:])])

    def negobj(u):
        v = unpack(u)
        av = A @ v
        f = -(g @ v - v @ av)
        grad_v = -(g - 2.0 * av)
        # chain rule through the cumulative sum
        rev = np.cumsum(grad_v[::-1])[::-1]
        grad_u = np.concatenate([[rev[0]], rev[1:]])
        return f, grad_u

    bounds = [(-M, M)] + [(-c, c) for c in caps]
    res = _min(negobj, np.zeros(n), jac=True, method="L-BFGS-B", bounds=bounds,
               options={"maxiter": 2000, "ftol": 1e-14, "gtol": 1e-12})
    return np.clip(unpack(res.x), -M, M)


def _lipschitz_project(target, caps, M, weights):
    """Weighted l2 projection onto the Lipschitz-with-box set."""
    n = target.shape[0]
    A = np.diag(weights)

    # projection = argmax of <2 w target, v> - v' diag(w) v
    return _lipschitz_quad_max(2.0 * weights * target, A, caps, M)


# ---------------------------------------------------------------------------
# Monte Carlo estimation and the exact enumeration oracle
# ---------------------------------------------------------------------------
def empirical_local_rademacher(cls, points, delta: float, reps: int = DEFAULT_REPS,
                               seed: int = 0, norm_mode: str = POPULATION_L2,
                               marginal: Marginal | None = None) -> tuple[float, float]:
    """Monte Carlo mean and standard error of local_sup over independent
    Rademacher sign vectors; per-replication seeds derive from (seed, rep)."""
    if reps < 2:
        raise SolverNonConvergence("reps must be at least 2 for a standard error")
    if isinstance(cls, FiniteClass):
        n = cls.values.shape[0]
    else:
        n = _n_points(points)
    vals = np.empty(reps)
    for r in range(reps):
        signs = rng_for(seed, "rademacher-signs", r).choice((-1.0, 1.0), size=n)
        vals[r] = local_sup(cls, points, signs, delta, norm_mode, marginal)
    stderr = float(np.std(vals, ddof=1) / math.sqrt(reps))
    return float(np.mean(vals)), stderr


def exact_rademacher_oracle(member_values, delta: float, member_norms,
                            star: bool = False) -> float:
    """Exact localized Rademacher complexity of a finite class by enumerating
    all 2^n sign patterns (n <= 20)."""
    fc = FiniteClass(values=member_values, norms=member_norms, star=star)
    n = fc.values.shape[0]
    if n > 20:
        raise TooLargeForEnumeration(f"n={n} exceeds the 2^n enumeration limit")
    total = 0.0
    patterns = 1 << n
    bits = (np.arange(patterns)[:, None] >> np.arange(n)[None, :]) & 1
    all_signs = 2.0 * bits - 1.0
    corr = all_signs @ fc.values / n
    if fc.star:
        with np.errstate(divide="ignore"):
            t_max = np.minimum(1.0, delta / fc.norms)
        sup = np.max(np.maximum(corr * t_max, 0.0), axis=1, initial=0.0)
    else:
        ok = fc.norms <= delta * (1 + 1e-12)
        if not np.any(ok):
            return 0.0
        sup = np.max(corr[:, ok], axis=1)
    total = float(np.mean(sup))
    return total


# ---------------------------------------------------------------------------
# Complexity curves
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ComplexityCurve:
    """Grid of localized-complexity estimates. ``estimates`` are isotonically
    smoothed in delta (monotone by the scaling property); raw values kept."""

    delta_grid: np.ndarray
    estimates: np.ndarray
    stderrs: np.ndarray
    n: int
    reps: int
    norm_mode: str
    raw_estimates: np.ndarray | None = None

    def __post_init__(self):
        for name in ("delta_grid", "estimates", "stderrs", "raw_estimates"):
            arr = getattr(self, name)
            if arr is not None:
                object.__setattr__(self, name, np.asarray(arr, dtype=float))
        if not np.all(np.diff(self.delta_grid) > 0):
            raise NoCrossing("delta_grid must be strictly increasing")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("delta,estimate,stderr,n,reps,norm_mode\n")
        for d, e, s in zip(self.delta_grid, self.estimates, self.stderrs):
            buf.write(f"{d!r},{e!r},{s!r},{self.n},{self.reps},{self.norm_mode}\n")
        return buf.getvalue()


def default_delta_grid(cls, size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    if isinstance(cls, FiniteClass):
        scale = max(float(np.max(cls.norms, initial=0.0)), 1e-6)
    else:
        scale = cls.sup_bound_M
    return np.geomspace(1e-3 * scale, 2.0 * scale, size)


def complexity_curve(cls, points, delta_grid=None, reps: int = DEFAULT_REPS,
                     seed: int = 0, norm_mode: str = POPULATION_L2,
                     marginal: Marginal | None = None) -> ComplexityCurve:
    """Monte Carlo complexity curve over a delta grid.

    Sign vectors are shared across the grid (common random numbers), so the
    star-hull scaling inequality holds replication-by-replication.
    """
    if delta_grid is None:
        delta_grid = default_delta_grid(cls)
    delta_grid = np.asarray(delta_grid, dtype=float)
    if isinstance(cls, FiniteClass):
        n = cls.values.shape[0]
    else:
        n = _n_points(points)
    vals = np.empty((reps, delta_grid.shape[0]))
    for r in range(reps):
        signs = rng_for(seed, "rademacher-signs", r).choice((-1.0, 1.0), size=n)
        for k, delta in enumerate(delta_grid):
            vals[r, k] = local_sup(cls, points, signs, float(delta), norm_mode, marginal)
    raw = vals.mean(axis=0)
    stderrs = vals.std(axis=0, ddof=1) / math.sqrt(reps)
    return ComplexityCurve(
        delta_grid=delta_grid, estimates=pava(raw), stderrs=stderrs,
        n=n, reps=reps, norm_mode=norm_mode, raw_estimates=raw,
    )


# ---------------------------------------------------------------------------
# Closed-form bounds and envelope transforms
# ---------------------------------------------------------------------------
def rkhs_local_bound(eigenvalues, R: float, delta: float, n: int) -> float:
    """sqrt((1/n) sum_j min(delta^2, R^2 lambda_j)): the kernel local
    complexity bound in terms of eigenvalue decay."""
    lam = np.asarray(eigenvalues, dtype=float)
    if np.any(np.diff(lam) > 0) or np.any(lam <= 0):
        raise UnsupportedClassKind("eigenvalues must be positive nonincreasing")
    return math.sqrt(float(np.sum(np.minimum(delta**2, R**2 * lam))) / n)


def transform_envelope(env, transform: str, *, L: float | None = None,
                       M: float | None = None, other=None):
    """Envelope algebra: LipschitzScale (phi(delta/L) stays in family),
    StarHull (adds delta sqrt(log(1+M/delta))), Sum (pointwise)."""
    from dataclasses import replace as _replace

    if transform == "LipschitzScale":
        if isinstance(env, SumEnvelope):
            return SumEnvelope(tuple(
                transform_envelope(p, "LipschitzScale", L=L) for p in env.parts))
        return _replace(env, arg_scale=env.arg_scale * L,
                        additive_scale=env.additive_scale * L)
    if transform == "StarHull":
        if isinstance(env, SumEnvelope):
            parts = env.parts + (Envelope(coeff_c=0.0, exponent_gamma=1.0,
                                          additive_log_term=True, log_term_M=M),)
            return SumEnvelope(parts)
        return _replace(env, additive_log_term=True, log_term_M=M,
                        additive_scale=1.0)
    if transform == "Sum":
        parts = []
        for e in (env, other):
            parts.extend(e.parts if isinstance(e, SumEnvelope) else (e,))
        return SumEnvelope(tuple(parts))
    raise UnsupportedClassKind(f"unknown envelope transform {transform!r}")


# ---------------------------------------------------------------------------
# Critical radii
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class CriticalRadius:
    value: float
    method: str  # EmpiricalCurve | EnvelopeFixedPoint | ClosedForm
    n: int
    envelope_ref: object | None = None


def critical_radius_envelope(env, n: int, lo: float = 1e-12, hi: float = 1.0,
                             rel_tol: float = 1e-10) -> CriticalRadius:
    """Solve phi(delta) = sqrt(n) delta^2.

    Pure power laws phi = c delta^gamma have the closed form
    (c/sqrt(n))^(1/(2-gamma)); otherwise bisect g(delta) = phi - sqrt(n) delta^2,
    unique crossing since phi/delta is nonincreasing while sqrt(n) delta grows.
    """
    if n < 1:
        raise NoCrossingInRange("n must be at least 1")
    sqn = math.sqrt(n)
    if getattr(env, "is_pure_power_law", False):
        c = env.power_law_coeff
        gamma = env.exponent_gamma
        if c == 0.0:
            return CriticalRadius(lo, "ClosedForm", n, env)
        value = (c / sqn) ** (1.0 / (2.0 - gamma))
        return CriticalRadius(float(value), "ClosedForm", n, env)

    def g(delta):
        return float(env(delta)) - sqn * delta * delta

    if g(lo) <= 0.0:
        return CriticalRadius(lo, "EnvelopeFixedPoint", n, env)
    if g(hi) > 0.0:
        raise NoCrossingInRange(
            f"phi(delta) stays above sqrt(n) delta^2 on [{lo}, {hi}]"
        )
    a, b = lo, hi
    while (b - a) > rel_tol * b:
        mid = math.sqrt(a * b)
        if g(mid) > 0.0:
            a = mid
        else:
            b = mid
    return CriticalRadius(b, "EnvelopeFixedPoint", n, env)


def critical_radius_empirical(curve: ComplexityCurve) -> CriticalRadius:
    """Smallest grid delta with estimate <= delta^2, refined by linear
    interpolation of the estimate between the bracketing grid points."""
    d = curve.delta_grid
    est = curve.estimates
    below = est <= d**2
    if not np.any(below):
        raise NoCrossing("complexity curve stays above delta^2 on the grid")
    k = int(np.argmax(below))
    if k == 0:
        return CriticalRadius(float(d[0]), "EmpiricalCurve", curve.n)
    a, b = d[k - 1], d[k]
    ea, eb = est[k - 1], est[k]

    def h(delta):
        t = (delta - a) / (b - a)
        return (1 - t) * ea + t * eb - delta**2

    lo_, hi_ = float(a), float(b)
    for _ in range(100):
        mid = 0.5 * (lo_ + hi_)
        if h(mid) > 0:
            lo_ = mid
        else:
            hi_ = mid
    return CriticalRadius(hi_, "EmpiricalCurve", curve.n)
