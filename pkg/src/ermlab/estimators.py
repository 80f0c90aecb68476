"""ERM fitters as sklearn-style estimators, plus the loss catalogue.

Every estimator takes a validated ``ClassDescriptor`` as a constructor
parameter, supports ``fit(X, y, sample_weight=None)`` / ``predict(X)`` /
``get_params``, and exposes the fitted member as ``handle_`` together with
``solver_meta_`` ({"iters", "gap", "exact", "converged"}). Exact solvers
(closed-form least squares, PAVA) set ``exact=True``; iterative ones report
their certificate and never raise on slow convergence unless asked.

Tie-breaking among empirical minimizers is min-norm (``np.linalg.lstsq``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from ._pava import pava_box
from ._validation import check_sample_weight, check_xy, check_fitted
from .classes import (
    ClassDescriptor,
    FunctionHandle,
    make_class,
    rkhs_kernel,
)
from .errors import (
    RankDeficient,
    ShapeMismatch,
    SingularSystem,
    SolverNonConvergence,
    UnsupportedClassKind,
)


# ---------------------------------------------------------------------------
# Datasets and losses
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Dataset:
    """Sample (x, y) with optional missingness indicator and fold labels."""

    x: np.ndarray
    y: np.ndarray
    obs_indicator: np.ndarray | None = None
    fold_id: np.ndarray | None = None

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        y = np.asarray(self.y, dtype=float)
        if x.shape[0] != y.shape[0]:
            raise ShapeMismatch("x and y lengths differ")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        for name in ("obs_indicator", "fold_id"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr)
                if arr.shape[0] != y.shape[0]:
                    raise ShapeMismatch(f"{name} length differs from y")
                object.__setattr__(self, name, arr)
        if self.fold_id is not None:
            counts = np.bincount(self.fold_id)
            if counts.size and counts.max() - counts.min() > 1:
                raise ShapeMismatch("fold sizes must differ by at most 1")

    @property
    def n(self) -> int:
        return self.y.shape[0]


@dataclass(frozen=True)
class SquaredLoss:
    """l(z, f) = (y - f(x))^2, bounded by clip_M on the admissible range."""

    clip_M: float

    def pointwise(self, y: np.ndarray, pred: np.ndarray) -> np.ndarray:
        return (y - pred) ** 2


@dataclass(frozen=True)
class LogisticLoss:
    """l(z, f) = log(1 + exp(f(x))) - y f(x) for y in {0, 1}."""

    clip_M: float

    def pointwise(self, y: np.ndarray, pred: np.ndarray) -> np.ndarray:
        return np.logaddexp(0.0, pred) - y * pred


@dataclass(frozen=True)
class WeightedLoss:
    """l'(z, f) = w_hat(z) * base(z, f); weights fixed per data row."""

    base: object
    weights: np.ndarray

    @property
    def clip_M(self) -> float:
        return float(np.max(self.weights)) * self.base.clip_M

    def pointwise(self, y: np.ndarray, pred: np.ndarray) -> np.ndarray:
        return self.weights * self.base.pointwise(y, pred)


@dataclass(frozen=True)
class PlugInProductLoss:
    """Pseudo-outcome squared loss l_g(z, f) = (g(z) - f(z))^2 with its
    product decomposition m1 m2 + r1 + r2 recorded:
    m1(z,f) = f(z), m2(z,g) = -2 g(z), r1(z,f) = f(z)^2, r2(z,g) = g(z)^2.
    """

    pseudo_outcomes: np.ndarray
    clip_M: float

    def pointwise(self, y: np.ndarray, pred: np.ndarray) -> np.ndarray:
        g = self.pseudo_outcomes
        return self.m1(pred) * self.m2(g) + self.r1(pred) + self.r2(g)

    @staticmethod
    def m1(pred):
        return pred

    @staticmethod
    def m2(g):
        return -2.0 * g

    @staticmethod
    def r1(pred):
        return pred**2

    @staticmethod
    def r2(g):
        return g**2


def empirical_risk(loss, fh: FunctionHandle, data: Dataset) -> float:
    """R_n(f) = (1/n) sum_i l(Z_i, f) (weights included for WeightedLoss)."""
    pred = fh(data.x)
    if isinstance(loss, PlugInProductLoss) and \
            loss.pseudo_outcomes.shape[0] != data.n:
        raise ShapeMismatch("pseudo-outcome count differs from data size")
    return float(np.mean(loss.pointwise(data.y, pred)))


# ---------------------------------------------------------------------------
# Shared linear-algebra helpers
# ---------------------------------------------------------------------------
def _solve_constrained_ls(A: np.ndarray, b: np.ndarray, B: float,
                          rel_tol: float = 1e-12) -> tuple[np.ndarray, bool]:
    """Minimize theta'A theta - 2 b'theta subject to ||theta||_2 <= B.

    Interior: min-norm solve. Boundary: trust-region-style spectral bisection
    on the ridge multiplier, exact to rel_tol. Returns (theta, binding)."""
    theta, *_ = np.linalg.lstsq(A, b, rcond=None)
    if np.linalg.norm(theta) <= B * (1 + 1e-12):
        return theta, False
    w, U = np.linalg.eigh(A)
    w = np.maximum(w, 0.0)
    z = U.T @ b

    def norm_at(lam):
        return math.sqrt(float(np.sum((z / (w + lam)) ** 2)))

    lo, hi = 1e-14 * max(w.max(), 1.0), max(w.max(), 1.0)
    while norm_at(hi) > B:
        hi *= 4.0
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if norm_at(mid) > B:
            lo = mid
        else:
            hi = mid
        if (hi - lo) <= rel_tol * hi:
            break
    theta = U @ (z / (w + hi))
    return theta, True


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------
class BaseERM(BaseEstimator, RegressorMixin):
    """Common surface: descriptor validation, prediction, fit metadata."""

    def __init__(self, descriptor: ClassDescriptor):
        self.descriptor = descriptor

    def _desc(self) -> ClassDescriptor:
        d = self.descriptor
        return d if getattr(d, "validated", False) else make_class(d)

    def predict(self, X) -> np.ndarray:
        check_fitted(self)
        return self.handle_(np.atleast_2d(np.asarray(X, dtype=float)))

    def fit_meta(self) -> dict:
        check_fitted(self)
        return {
            "class": self.handle_.descriptor.kind,
            "representation": self.handle_.representation,
            "solver_meta": {k: self.solver_meta_.get(k) for k in ("iters", "gap")},
        }


class LeastSquaresERM(BaseERM):
    """Least squares over a LinearSpan, exact (normal equations / min-norm);
    the parameter ball ||theta||_2 <= B is enforced by a spectral
    trust-region solve when it binds."""

    def __init__(self, descriptor, ridge_fallback: bool = True):
        super().__init__(descriptor)
        self.ridge_fallback = ridge_fallback

    def fit(self, X, y, sample_weight=None):
        desc = self._desc()
        if desc.kind != "LinearSpan":
            raise UnsupportedClassKind("LeastSquaresERM requires LinearSpan")
        X, y = check_xy(X, y, dim=desc.dim_d)
        w = check_sample_weight(sample_weight, X.shape[0])
        A = X.T @ (X if w is None else X * w[:, None])
        b = X.T @ (y if w is None else w * y)
        rank = np.linalg.matrix_rank(A)
        if rank < desc.dim_d and not self.ridge_fallback:
            raise RankDeficient(
                f"design rank {rank} < p={desc.dim_d} and ridge fallback disabled"
            )
        theta, binding = _solve_constrained_ls(A, b, desc.radius_B)
        self.coef_ = theta
        self.handle_ = FunctionHandle(desc, "theta", theta=theta)
        self.solver_meta_ = {
            "iters": 0, "gap": 0.0, "exact": True, "converged": True,
            "constraint_binding": binding, "rank": int(rank),
        }
        return self


class TikhonovERM(BaseERM):
    """Minimizer of P_n l + (lam/2) ||f||_n^2 over a LinearSpan; for squared
    loss this is the generalized ridge solve theta = 2/(2+lam) * OLS on
    full-rank designs."""

    def __init__(self, descriptor, lam: float = 0.0):
        super().__init__(descriptor)
        self.lam = lam

    def fit(self, X, y, sample_weight=None):
        desc = self._desc()
        if desc.kind != "LinearSpan":
            raise UnsupportedClassKind("TikhonovERM is wired for LinearSpan")
        if self.lam < 0:
            raise SolverNonConvergence("lam must be nonnegative")
        X, y = check_xy(X, y, dim=desc.dim_d)
        w = check_sample_weight(sample_weight, X.shape[0])
        Xw = X if w is None else X * w[:, None]
        A = (1.0 + self.lam / 2.0) * (X.T @ Xw)
        b = X.T @ (y if w is None else w * y)
        theta, binding = _solve_constrained_ls(A, b, desc.radius_B)
        self.coef_ = theta
        self.handle_ = FunctionHandle(desc, "theta", theta=theta)
        self.solver_meta_ = {"iters": 0, "gap": 0.0, "exact": True,
                             "converged": True, "constraint_binding": binding}
        return self


class L1BallERM(BaseERM):
    """Frank-Wolfe for least squares over the l1 ball of radius B.

    Exact line search; stops when the duality gap <= tol. Non-convergence is
    reported through solver_meta_ (best iterate returned), matching the
    contract that sweeps never abort."""

    def __init__(self, descriptor, max_iters: int = 20_000, tol: float = 1e-8):
        super().__init__(descriptor)
        self.max_iters = max_iters
        self.tol = tol

    def fit(self, X, y, sample_weight=None):
        desc = self._desc()
        if desc.kind not in ("L1Ball", "SparseLinear"):
            raise UnsupportedClassKind("L1BallERM requires an l1-constrained kind")
        X, y = check_xy(X, y, dim=desc.dim_d)
        n = X.shape[0]
        w = check_sample_weight(sample_weight, n)
        wv = np.ones(n) / n if w is None else w / n
        B = desc.radius_B
        theta = np.zeros(desc.dim_d)
        gap = np.inf
        iters = 0
        if B > 0:
            resid = y - X @ theta
            for iters in range(1, self.max_iters + 1):
                grad = -2.0 * (X.T @ (wv * resid))
                j = int(np.argmax(np.abs(grad)))
                s = np.zeros_like(theta)
                s[j] = -B * np.sign(grad[j])
                direction = s - theta
                gap = float(-grad @ direction)
                if gap <= self.tol:
                    break
                xd = X @ direction
                curvature = float(np.sum(wv * xd * xd))
                if curvature <= 0:
                    break
                eta = min(1.0, max(0.0, gap / (2.0 * curvature)))
                theta = theta + eta * direction
                resid = resid - eta * xd
        converged = gap <= self.tol
        self.coef_ = theta
        self.handle_ = FunctionHandle(desc, "theta", theta=theta)
        self.solver_meta_ = {"iters": iters, "gap": float(max(gap, 0.0)),
                             "exact": False, "converged": bool(converged)}
        return self


class IsotonicERM(BaseERM):
    """Pool-adjacent-violators least squares over nondecreasing functions,
    clipped to [-M, M] (exact for box constraints). Ties in x are pre-averaged
    with their weights pooled."""

    def __init__(self, descriptor):
        super().__init__(descriptor)

    def fit(self, X, y, sample_weight=None):
        desc = self._desc()
        if desc.kind != "Monotone":
            raise UnsupportedClassKind("IsotonicERM requires Monotone")
        X, y = check_xy(X, y, dim=1)
        x = X[:, 0]
        w = check_sample_weight(sample_weight, x.shape[0])
        w = np.ones_like(x) if w is None else w
        order = np.argsort(x, kind="stable")
        xs, ys, ws = x[order], y[order], w[order]
        knots, start = np.unique(xs, return_index=True)
        if knots.shape[0] != xs.shape[0]:
            agg_w = np.add.reduceat(ws, start)
            agg_y = np.add.reduceat(ws * ys, start) / agg_w
        else:
            agg_w, agg_y = ws, ys
        M = desc.radius_B
        values = pava_box(agg_y, -M, M, weights=agg_w)
        self.x_knots_ = knots
        self.values_ = values
        self.handle_ = FunctionHandle(desc, "mesh", knots=knots, values=values)
        self.solver_meta_ = {"iters": 0, "gap": 0.0, "exact": True,
                             "converged": True}
        return self


class LipschitzERM(BaseERM):
    """Least squares over L-Lipschitz functions on [0,1] with |f| <= M:
    box-constrained quadratic in increment space (L-BFGS-B), values clipped
    to [-M, M] afterwards (clipping preserves the Lipschitz constant)."""

    def __init__(self, descriptor, max_iters: int = 3000, tol: float = 1e-12):
        super().__init__(descriptor)
        self.max_iters = max_iters
        self.tol = tol

    def fit(self, X, y, sample_weight=None):
        from scipy.optimize import minimize

        desc = self._desc()
        if desc.kind != "LipschitzMesh":
            raise UnsupportedClassKind("LipschitzERM requires LipschitzMesh")
        X, y = check_xy(X, y, dim=1)
        x = X[:, 0]
        w = check_sample_weight(sample_weight, x.shape[0])
        w = np.ones_like(x) if w is None else w
        order = np.argsort(x, kind="stable")
        xs, ys, ws = x[order], y[order], w[order]
        knots, start = np.unique(xs, return_index=True)
        if knots.shape[0] != xs.shape[0]:
            agg_w = np.add.reduceat(ws, start)
            agg_y = np.add.reduceat(ws * ys, start) / agg_w
        else:
            agg_w, agg_y = ws, ys
        m = knots.shape[0]
        L, M = desc.lipschitz_L, desc.radius_B
        caps = L * np.diff(knots)
        wn = agg_w / np.sum(agg_w)

        def unpack(u):
            return u[0] + np.concatenate([[0.0], np.cumsum(u[1:])])

        def negobj(u):
            v = unpack(u)
            r = v - agg_y
            grad_v = 2.0 * wn * r
            rev = np.cumsum(grad_v[::-1])[::-1]
            return float(np.sum(wn * r * r)), np.concatenate([[rev[0]], rev[1:]])

        bounds = [(-M, M)] + [(-c, c) for c in caps]
        res = minimize(negobj, np.zeros(m), jac=True, method="L-BFGS-B",
                       bounds=bounds,
                       options={"maxiter": self.max_iters, "ftol": self.tol,
                                "gtol": 1e-12})
        values = np.clip(unpack(res.x), -M, M)
        self.x_knots_ = knots
        self.values_ = values
        self.handle_ = FunctionHandle(desc, "mesh", knots=knots, values=values)
        self.solver_meta_ = {"iters": int(res.nit), "gap": float(res.fun),
                             "exact": False, "converged": bool(res.success)}
        return self


class KernelRidgeERM(BaseERM):
    """Kernel ridge over the RKHS ball.

    Small samples solve the dual system (K + n lam I) a = y exactly. Large
    samples use the equivalent primal solve on the leading ``n_basis``
    eigenfunctions (the working regularization suppresses the tail; agreement
    with the dual path is unit-tested). ``ball_mode`` bisects lam until the
    RKHS norm hits R from below (+-1e-4 relative), or keeps the interior
    solution when the ball does not bind."""

    def __init__(self, descriptor, ridge_lambda: float | None = None,
                 ball_mode: bool = False, n_basis: int = 512,
                 dual_threshold: int = 1500):
        super().__init__(descriptor)
        self.ridge_lambda = ridge_lambda
        self.ball_mode = ball_mode
        self.n_basis = n_basis
        self.dual_threshold = dual_threshold

    def fit(self, X, y, sample_weight=None):
        desc = self._desc()
        if desc.kind != "RkhsBall":
            raise UnsupportedClassKind("KernelRidgeERM requires RkhsBall")
        X, y = check_xy(X, y, dim=1)
        x = X[:, 0]
        n = x.shape[0]
        w = check_sample_weight(sample_weight, n)
        if n <= self.dual_threshold:
            self._fit_dual(desc, x, y, w)
        else:
            self._fit_primal(desc, x, y, w)
        return self

    # -- dual path -----------------------------------------------------
    def _fit_dual(self, desc, x, y, w):
        n = x.shape[0]
        K = rkhs_kernel(desc, x, x)
        W = np.ones(n) if w is None else w

        if w is None:
            # symmetric system: eigendecompose once, O(n) per lambda after
            evals, U = np.linalg.eigh(K)
            uy = U.T @ y

            def solve(lam):
                denom = evals + n * lam
                if np.any(np.abs(denom) < 1e-300):
                    raise SingularSystem("lam=0 with numerically singular Gram")
                return U @ (uy / denom)
        else:
            def solve(lam):
                A = W[:, None] * K + n * lam * np.eye(n)
                try:
                    a = np.linalg.solve(A, W * y)
                except np.linalg.LinAlgError as exc:
                    raise SingularSystem(str(exc)) from None
                return a

        def norm_of(a):
            return math.sqrt(max(float(a @ K @ a), 0.0))

        if self.ball_mode:
            lam, a, iters = self._ball_bisect(solve, norm_of, desc.rkhs_R)
        else:
            lam = self.ridge_lambda if self.ridge_lambda is not None else 0.0
            if lam == 0.0 and np.linalg.cond(K) > 1e14:
                raise SingularSystem("lam=0 with numerically singular Gram")
            a, iters = solve(lam), 0
        self.dual_coef_ = a
        self.lambda_ = lam
        self.handle_ = FunctionHandle(desc, "dual", anchors=x, dual_coefs=a)
        self.rkhs_norm_ = norm_of(a)
        self.solver_meta_ = {"iters": iters, "gap": 0.0, "exact": False,
                             "converged": True, "path": "dual"}

    # -- primal path ----------------------------------------------------
    def _fit_primal(self, desc, x, y, w):
        n = x.shape[0]
        J = self.n_basis
        j = np.arange(1, J + 1)
        lam_j = j.astype(float) ** (-2.0 * desc.rkhs_decay_beta)
        Phi = math.sqrt(2.0) * np.cos(np.pi * np.outer(x, j))
        W = np.ones(n) if w is None else w
        root = np.sqrt(lam_j)
        G = root[:, None] * (Phi.T @ (W[:, None] * Phi)) * root[None, :]
        bvec = root * (Phi.T @ (W * y))
        evals, V = np.linalg.eigh(G)
        evals = np.maximum(evals, 0.0)
        zb = V.T @ bvec

        def solve(lam):
            u = V @ (zb / (evals + n * lam))
            return root * u

        def norm_of(theta):
            return math.sqrt(float(np.sum(theta**2 / lam_j)))

        if self.ball_mode:
            lam, theta, iters = self._ball_bisect(solve, norm_of, desc.rkhs_R)
        else:
            lam = self.ridge_lambda if self.ridge_lambda is not None else 0.0
            if lam == 0.0:
                raise SingularSystem("lam=0 is only supported on the dual path")
            theta, iters = solve(lam), 0
        self.coef_ = theta
        self.lambda_ = lam
        self.handle_ = FunctionHandle(desc, "coeffs", coeffs=theta)
        self.rkhs_norm_ = norm_of(theta)
        self.solver_meta_ = {"iters": iters, "gap": 0.0, "exact": False,
                             "converged": True, "path": "primal"}

    @staticmethod
    def _ball_bisect(solve, norm_of, R, rel_tol=1e-4):
        lam_lo, lam_hi = 1e-10, 1e10
        sol = solve(lam_lo)
        if norm_of(sol) <= R:
            return lam_lo, sol, 1
        iters = 0
        for iters in range(1, 200):
            lam = math.sqrt(lam_lo * lam_hi)
            sol = solve(lam)
            nm = norm_of(sol)
            if abs(nm - R) <= rel_tol * R and nm <= R:
                return lam, sol, iters
            if nm > R:
                lam_lo = lam
            else:
                lam_hi = lam
        sol = solve(lam_hi)
        return lam_hi, sol, iters


#: registry used by the sweep harness and the CLI
ESTIMATORS = {
    "least_squares": LeastSquaresERM,
    "frank_wolfe": L1BallERM,
    "isotonic": IsotonicERM,
    "lipschitz": LipschitzERM,
    "kernel_ridge": KernelRidgeERM,
    "tikhonov": TikhonovERM,
}


def default_estimator(desc: ClassDescriptor, **kwargs) -> BaseERM:
    """The natural fitter for a class kind."""
    kind_map = {
        "LinearSpan": "least_squares",
        "L1Ball": "frank_wolfe",
        "SparseLinear": "frank_wolfe",
        "Monotone": "isotonic",
        "LipschitzMesh": "lipschitz",
        "RkhsBall": "kernel_ridge",
    }
    if desc.kind not in kind_map:
        raise UnsupportedClassKind(desc.kind)
    if desc.kind == "RkhsBall" and not kwargs:
        kwargs = {"ball_mode": True}
    return ESTIMATORS[kind_map[desc.kind]](desc, **kwargs)


# ---------------------------------------------------------------------------
# Functional wrappers
# ---------------------------------------------------------------------------
def fit_least_squares(data: Dataset, desc: ClassDescriptor,
                      sample_weight=None, **kw) -> FunctionHandle:
    return LeastSquaresERM(desc, **kw).fit(data.x, data.y, sample_weight).handle_


def fit_l1_ball(data: Dataset, desc: ClassDescriptor, sample_weight=None,
                **kw) -> FunctionHandle:
    return L1BallERM(desc, **kw).fit(data.x, data.y, sample_weight).handle_


def fit_isotonic(data: Dataset, desc: ClassDescriptor,
                 sample_weight=None) -> FunctionHandle:
    return IsotonicERM(desc).fit(data.x, data.y, sample_weight).handle_


def fit_kernel_ridge(data: Dataset, desc: ClassDescriptor, sample_weight=None,
                     **kw) -> FunctionHandle:
    return KernelRidgeERM(desc, **kw).fit(data.x, data.y, sample_weight).handle_


def fit_tikhonov(data: Dataset, desc: ClassDescriptor, lam: float,
                 sample_weight=None) -> FunctionHandle:
    return TikhonovERM(desc, lam=lam).fit(data.x, data.y, sample_weight).handle_
