"""Function-class catalogue: descriptors, member handles, entropy envelopes.

Supported kinds and their simulation geometry:

* ``LinearSpan`` / ``L1Ball`` / ``SparseLinear`` -- f(x) = <theta, x> on the
  cube [-1, 1]^d with an l2 / l1 / (l0 + l2) parameter constraint of radius B.
* ``Monotone`` -- nondecreasing functions on [0, 1] with |f| <= M, represented
  by values at sorted knots, piecewise-linear in between, constant outside.
* ``LipschitzMesh`` -- L-Lipschitz functions on [0, 1], |f| <= M, same mesh
  representation.
* ``HolderMesh`` -- smoothness-s functions on [0, 1] realized as a cosine-basis
  ellipsoid {sum_j theta_j phi_j : sum_j theta_j^2 j^(2s) <= B^2} with
  phi_j(x) = sqrt(2) cos(pi j x); requires d < 2s.
* ``RkhsBall`` -- RKHS ball of radius R for the kernel with eigenbasis phi_j
  and eigenvalues lambda_j = j^(-2 beta), beta > 1/2.

The mesh and basis kinds are univariate; the linear kinds accept any d.
Descriptors and handles are immutable after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats
from scipy.special import zeta

from .errors import (
    DimensionMismatch,
    MissingField,
    NonPositiveParameter,
    SparsityExceedsAmbient,
    SupBoundViolated,
    UnsupportedNormModeForClass,
)

LINEAR_KINDS = ("LinearSpan", "L1Ball", "SparseLinear")
MESH_KINDS = ("Monotone", "LipschitzMesh")
BASIS_KINDS = ("HolderMesh", "RkhsBall")
ALL_KINDS = LINEAR_KINDS + MESH_KINDS + BASIS_KINDS

#: number of basis coefficients used when *sampling* members of the basis
#: kinds; a truncated series is itself a member of the class, so this is a
#: parameterization choice, not an approximation.
SAMPLE_BASIS_TERMS = 128

#: default knot grid size for sampled mesh-kind members
SAMPLE_MESH_KNOTS = 65


# ---------------------------------------------------------------------------
# Descriptors
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ClassDescriptor:
    """A parameterized function class plus its entropy-envelope metadata."""

    kind: str
    dim_d: int
    sup_bound_M: float
    radius_B: float | None = None
    ambient_p: int | None = None
    sparsity_s: int | None = None
    smoothness_s: float | None = None
    lipschitz_L: float | None = None
    rkhs_decay_beta: float | None = None
    rkhs_R: float | None = None
    envelope_coeff: float = 1.0
    validated: bool = field(default=False, compare=False)

    @property
    def domain(self) -> tuple[float, float]:
        """Per-coordinate evaluation domain."""
        return (-1.0, 1.0) if self.kind in LINEAR_KINDS else (0.0, 1.0)

    def rkhs_eigenvalues(self, count: int) -> np.ndarray:
        if self.kind != "RkhsBall":
            raise DimensionMismatch("eigenvalues only defined for RkhsBall")
        j = np.arange(1, count + 1, dtype=float)
        return j ** (-2.0 * self.rkhs_decay_beta)


def _require(value, name: str):
    if value is None:
        raise MissingField(f"field '{name}' is required for this kind")
    return value


def _positive(value: float, name: str) -> float:
    if not np.isfinite(value) or value <= 0:
        raise NonPositiveParameter(f"field '{name}' must be positive, got {value!r}")
    return float(value)


def implied_sup_bound(desc: ClassDescriptor) -> float:
    """Tightest sup-norm bound implied by the class constraint on its domain."""
    B = desc.radius_B
    if desc.kind == "LinearSpan":
        return B * math.sqrt(desc.dim_d)
    if desc.kind == "L1Ball":
        return B
    if desc.kind == "SparseLinear":
        return B * math.sqrt(desc.sparsity_s)
    if desc.kind in MESH_KINDS:
        return min(B, desc.sup_bound_M)
    if desc.kind == "HolderMesh":
        return math.sqrt(2.0 * zeta(2.0 * desc.smoothness_s)) * B
    if desc.kind == "RkhsBall":
        return math.sqrt(2.0 * zeta(2.0 * desc.rkhs_decay_beta)) * desc.rkhs_R
    raise UnsupportedNormModeForClass(desc.kind)


def make_class(spec: ClassDescriptor | dict) -> ClassDescriptor:
    """Validate a descriptor (or a JSON-style dict) and attach derived metadata."""
    if isinstance(spec, dict):
        spec = descriptor_from_json(spec)
    if spec.kind not in ALL_KINDS:
        raise MissingField(f"unknown class kind {spec.kind!r}")

    kind = spec.kind
    _positive(spec.sup_bound_M, "sup_bound_M")
    dim = spec.dim_d
    if dim is None or int(dim) < 1:
        raise NonPositiveParameter(f"dim_d must be a positive integer, got {dim!r}")
    if spec.radius_B is None:
        if kind in MESH_KINDS:
            spec = replace(spec, radius_B=spec.sup_bound_M)
        elif kind == "RkhsBall" and spec.rkhs_R is not None:
            spec = replace(spec, radius_B=spec.rkhs_R)
        else:
            raise MissingField("field 'radius_B' is required for this kind")

    if kind in LINEAR_KINDS:
        p = int(_require(spec.ambient_p, "ambient_p"))
        if p < 1:
            raise NonPositiveParameter("ambient_p must be a positive integer")
        if p != dim:
            raise DimensionMismatch(
                "linear kinds use the coordinates as features; ambient_p must "
                f"equal dim_d (got p={p}, d={dim})"
            )
        _positive(spec.radius_B, "radius_B")
        if kind == "SparseLinear":
            s = int(_require(spec.sparsity_s, "sparsity_s"))
            if s < 1:
                raise NonPositiveParameter("sparsity_s must be a positive integer")
            if s > p:
                raise SparsityExceedsAmbient(f"sparsity_s={s} exceeds ambient_p={p}")
    elif kind == "Monotone":
        spec = replace(spec, radius_B=min(spec.radius_B, spec.sup_bound_M))
    elif kind == "LipschitzMesh":
        _positive(_require(spec.lipschitz_L, "lipschitz_L"), "lipschitz_L")
        spec = replace(spec, radius_B=min(spec.radius_B, spec.sup_bound_M))
    elif kind == "HolderMesh":
        s = _positive(_require(spec.smoothness_s, "smoothness_s"), "smoothness_s")
        if dim != 1:
            raise DimensionMismatch("HolderMesh members are univariate in this lab")
        if not dim < 2 * s:
            raise NonPositiveParameter(
                f"HolderMesh requires d < 2s, got d={dim}, s={s}"
            )
        _positive(spec.radius_B, "radius_B")
    elif kind == "RkhsBall":
        beta = _require(spec.rkhs_decay_beta, "rkhs_decay_beta")
        if not beta > 0.5:
            raise NonPositiveParameter(
                f"rkhs_decay_beta must exceed 1/2 for summable eigenvalues, got {beta}"
            )
        R = _positive(_require(spec.rkhs_R, "rkhs_R"), "rkhs_R")
        if dim != 1:
            raise DimensionMismatch("RkhsBall members are univariate in this lab")
        spec = replace(spec, radius_B=R)

    bound = implied_sup_bound(spec)
    if bound > spec.sup_bound_M * (1 + 1e-12):
        raise SupBoundViolated(
            f"class constraint allows sup norm {bound:.6g} > sup_bound_M="
            f"{spec.sup_bound_M:.6g}; raise sup_bound_M or shrink radius"
        )
    return replace(spec, validated=True)


_JSON_FIELDS = (
    "kind",
    "dim_d",
    "sup_bound_M",
    "radius_B",
    "ambient_p",
    "sparsity_s",
    "smoothness_s",
    "lipschitz_L",
    "rkhs_decay_beta",
    "rkhs_R",
    "envelope_coeff",
)


def descriptor_from_json(obj: dict) -> ClassDescriptor:
    """Build a descriptor from the JSON object form ``{"kind": ..., params...}``."""
    unknown = set(obj) - set(_JSON_FIELDS)
    if unknown:
        raise MissingField(f"unknown class-spec fields: {sorted(unknown)}")
    if "kind" not in obj:
        raise MissingField("class spec needs a 'kind'")
    kwargs = dict(obj)
    kind = kwargs.pop("kind")
    if "dim_d" not in kwargs:
        if kind in LINEAR_KINDS and "ambient_p" in kwargs:
            kwargs["dim_d"] = kwargs["ambient_p"]
        elif kind not in LINEAR_KINDS:
            kwargs["dim_d"] = 1
        else:
            raise MissingField("class spec needs 'dim_d' or 'ambient_p'")
    if kind in LINEAR_KINDS and "ambient_p" not in kwargs:
        kwargs["ambient_p"] = kwargs["dim_d"]
    if "sup_bound_M" not in kwargs:
        raise MissingField("class spec needs 'sup_bound_M'")
    if "radius_B" not in kwargs:
        if kind == "RkhsBall" and "rkhs_R" in kwargs:
            kwargs["radius_B"] = kwargs["rkhs_R"]
        elif kind in MESH_KINDS:
            kwargs["radius_B"] = kwargs["sup_bound_M"]
        else:
            raise MissingField("class spec needs 'radius_B'")
    return ClassDescriptor(kind=kind, **kwargs)


def descriptor_to_json(desc: ClassDescriptor) -> dict:
    out = {}
    for name in _JSON_FIELDS:
        value = getattr(desc, name)
        if value is not None:
            out[name] = value
    return out


# ---------------------------------------------------------------------------
# Marginals
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Marginal:
    """Covariate distribution. UniformCube is uniform on the class domain;
    Gaussian(diag) is a componentwise normal truncated at the domain cube
    (linear kinds only), so all class members stay uniformly bounded."""

    kind: str = "UniformCube"
    sigmas: tuple[float, ...] | None = None

    def sample(self, desc: ClassDescriptor, rng: np.random.Generator, n: int) -> np.ndarray:
        lo, hi = desc.domain
        d = desc.dim_d
        if self.kind == "UniformCube":
            return rng.uniform(lo, hi, size=(n, d))
        if self.kind == "Gaussian":
            if desc.kind not in LINEAR_KINDS:
                raise UnsupportedNormModeForClass(
                    "Gaussian marginal is only supported for linear kinds"
                )
            sig = np.asarray(self.sigmas if self.sigmas is not None else (1.0,) * d)
            if sig.shape != (d,):
                raise DimensionMismatch("sigmas must have one entry per coordinate")
            cols = [
                stats.truncnorm.ppf(rng.uniform(size=n), lo / s, hi / s, scale=s)
                for s in sig
            ]
            return np.column_stack(cols)
        raise UnsupportedNormModeForClass(f"unknown marginal kind {self.kind!r}")

    def second_moment_diag(self, desc: ClassDescriptor) -> np.ndarray:
        """Per-coordinate E[X_j^2]; coordinates are independent and mean-zero
        (uniform case on [0,1] is handled separately by the mesh norms)."""
        lo, hi = desc.domain
        d = desc.dim_d
        if self.kind == "UniformCube":
            # E[X^2] for Uniform(lo, hi); centered cube gives span^2 / 12 + mean^2
            m = (lo + hi) / 2.0
            return np.full(d, (hi - lo) ** 2 / 12.0 + m * m)
        if self.kind == "Gaussian":
            sig = np.asarray(self.sigmas if self.sigmas is not None else (1.0,) * d)
            return np.array(
                [stats.truncnorm.var(lo / s, hi / s, scale=s) for s in sig]
            )
        raise UnsupportedNormModeForClass(f"unknown marginal kind {self.kind!r}")


# ---------------------------------------------------------------------------
# Handles
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class FunctionHandle:
    """An evaluable member function bound to a validated class.

    Representations:
      * ``theta``  -- parameter vector, f(x) = <theta, x>
      * ``mesh``   -- sorted knots + values, piecewise linear, flat outside
      * ``coeffs`` -- cosine-basis coefficients theta_j on sqrt(2) cos(pi j x)
      * ``dual``   -- kernel expansion f(x) = sum_i a_i K(anchor_i, x)
    """

    descriptor: ClassDescriptor
    representation: str
    theta: np.ndarray | None = None
    knots: np.ndarray | None = None
    values: np.ndarray | None = None
    coeffs: np.ndarray | None = None
    anchors: np.ndarray | None = None
    dual_coefs: np.ndarray | None = None

    def __post_init__(self):
        for name in ("theta", "knots", "values", "coeffs", "anchors", "dual_coefs"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr, dtype=float)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)

    def __call__(self, points) -> np.ndarray:
        return eval_handle(self, points)


def _as_x1d(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 2:
        if pts.shape[1] != 1:
            raise DimensionMismatch("mesh/basis kinds are univariate")
        pts = pts[:, 0]
    return pts


def eval_handle(fh: FunctionHandle, points) -> np.ndarray:
    """Evaluate a handle at an array of d-vectors (or scalars for d=1).

    Evaluation is deterministic; raises SupBoundViolated if the representation
    cannot guarantee the class sup bound at the queried points (this can only
    happen for parametric handles queried outside the class domain).
    """
    desc = fh.descriptor
    if fh.representation == "theta":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[None, :] if pts.shape[0] == desc.dim_d else pts[:, None]
        if pts.shape[1] != desc.dim_d:
            raise DimensionMismatch(
                f"points have dimension {pts.shape[1]}, class expects {desc.dim_d}"
            )
        out = pts @ fh.theta
    elif fh.representation == "mesh":
        out = np.interp(_as_x1d(points), fh.knots, fh.values)
    elif fh.representation == "coeffs":
        x = _as_x1d(points)
        j = np.arange(1, fh.coeffs.shape[0] + 1)
        out = math.sqrt(2.0) * np.cos(np.pi * np.outer(x, j)) @ fh.coeffs
    elif fh.representation == "dual":
        x = _as_x1d(points)
        out = rkhs_kernel(desc, x, fh.anchors) @ fh.dual_coefs
    elif fh.representation == "poly":
        # univariate monomial coefficients, lowest order first
        out = np.polynomial.polynomial.polyval(_as_x1d(points), fh.coeffs)
    else:
        raise UnsupportedNormModeForClass(f"unknown representation {fh.representation!r}")

    M = desc.sup_bound_M
    limit = M * (1 + 1e-9) + 1e-12
    if np.any(np.abs(out) > limit):
        raise SupBoundViolated(
            f"evaluation exceeded sup bound M={M:.6g} "
            f"(max |f| = {float(np.max(np.abs(out))):.6g})"
        )
    return out


def zero_handle(desc: ClassDescriptor) -> FunctionHandle:
    if desc.kind in LINEAR_KINDS:
        return FunctionHandle(desc, "theta", theta=np.zeros(desc.dim_d))
    if desc.kind in MESH_KINDS:
        return FunctionHandle(desc, "mesh", knots=np.array([0.0, 1.0]),
                              values=np.zeros(2))
    return FunctionHandle(desc, "coeffs", coeffs=np.zeros(1))


# ---------------------------------------------------------------------------
# RKHS kernel (cosine eigenbasis, eigenvalues j^(-2 beta))
# ---------------------------------------------------------------------------
def _clausen_even(t: np.ndarray, m: int) -> np.ndarray:
    """sum_{j>=1} cos(j t) / j^(2m) in closed form (Bernoulli polynomials),
    valid for t in [0, 2 pi]."""
    if m == 1:
        return np.pi**2 / 6.0 - np.pi * t / 2.0 + t**2 / 4.0
    if m == 2:
        return np.pi**4 / 90.0 - np.pi**2 * t**2 / 12.0 + np.pi * t**3 / 12.0 - t**4 / 48.0
    raise NonPositiveParameter(f"no closed form wired for decay exponent 2m={2*m}")


def rkhs_kernel(desc: ClassDescriptor, x1, x2) -> np.ndarray:
    """Gram block K(x1_i, x2_j) = sum_j lambda_j phi_j(x1) phi_j(x2).

    Integer beta uses the exact series closed form; other beta values fall
    back to a truncated sum with lambda_{J+1} < 1e-10 (small inputs only).
    """
    beta = desc.rkhs_decay_beta
    a = np.asarray(x1, dtype=float).reshape(-1, 1)
    b = np.asarray(x2, dtype=float).reshape(1, -1)
    if float(beta).is_integer() and int(beta) in (1, 2):
        m = int(beta)
        return _clausen_even(np.pi * np.abs(a - b), m) + _clausen_even(np.pi * (a + b), m)
    n_terms = int(math.ceil(10 ** (5.0 / beta)))
    if a.size * b.size * n_terms > 5e8:
        raise NonPositiveParameter(
            "truncated kernel for non-integer beta is limited to small inputs"
        )
    out = np.zeros((a.shape[0], b.shape[1]))
    j = np.arange(1, n_terms + 1, dtype=float)
    lam = j ** (-2.0 * beta)
    for start in range(0, n_terms, 2048):
        jj = j[start:start + 2048]
        ll = lam[start:start + 2048]
        pa = math.sqrt(2.0) * np.cos(np.pi * a * jj)
        pb = math.sqrt(2.0) * np.cos(np.pi * b.T * jj)
        out += (pa * ll) @ pb.T
    return out


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------
def mesh_l2_sq(knots: np.ndarray, values: np.ndarray) -> float:
    """Exact integral of the squared piecewise-linear interpolant over [0,1]
    (constant extrapolation outside the knot range)."""
    k = np.asarray(knots, dtype=float)
    v = np.asarray(values, dtype=float)
    total = k[0] * v[0] ** 2 + (1.0 - k[-1]) * v[-1] ** 2
    h = np.diff(k)
    a, b = v[:-1], v[1:]
    total += float(np.sum(h * (a * a + a * b + b * b) / 3.0))
    return total


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def quad_unit_interval(func, panels: int = 256) -> float:
    """Composite 8-point Gauss-Legendre integral of func over [0,1]."""
    edges = np.linspace(0.0, 1.0, panels + 1)
    lo, hi = edges[:-1], edges[1:]
    half = (hi - lo) / 2.0
    nodes = (lo[:, None] + hi[:, None]) / 2.0 + half[:, None] * _GL_NODES[None, :]
    vals = func(nodes.ravel()).reshape(panels, -1)
    return float(np.sum(half[:, None] * _GL_WEIGHTS[None, :] * vals))


def _quad_uniform_domain(fh_domain: tuple[float, float], func) -> float:
    """E[func(X)] for X uniform on the interval, via the [0,1] transform."""
    lo, hi = fh_domain
    return quad_unit_interval(lambda u: func(lo + (hi - lo) * u))


def member_l2_norm(fh: FunctionHandle, marginal: Marginal | None = None) -> float:
    """Population L2 norm under the simulation marginal (default UniformCube)."""
    marginal = marginal or Marginal()
    desc = fh.descriptor
    if fh.representation == "theta":
        diag = marginal.second_moment_diag(desc)
        return float(np.sqrt(fh.theta @ (diag * fh.theta)))
    if marginal.kind != "UniformCube":
        raise UnsupportedNormModeForClass(
            "non-uniform marginals are only wired for linear kinds"
        )
    if fh.representation == "mesh":
        return math.sqrt(mesh_l2_sq(fh.knots, fh.values))
    if fh.representation == "coeffs":
        return float(np.linalg.norm(fh.coeffs))
    val = _quad_uniform_domain(desc.domain, lambda x: eval_handle(fh, x) ** 2)
    return math.sqrt(max(val, 0.0))


def l2_distance(f1: FunctionHandle, f2: FunctionHandle,
                marginal: Marginal | None = None) -> float:
    """Population L2 distance ||f1 - f2|| under the simulation marginal."""
    marginal = marginal or Marginal()
    r1, r2 = f1.representation, f2.representation
    if r1 == r2 == "theta":
        diag = marginal.second_moment_diag(f1.descriptor)
        d = f1.theta - f2.theta
        return float(np.sqrt(d @ (diag * d)))
    if marginal.kind != "UniformCube":
        raise UnsupportedNormModeForClass(
            "non-uniform marginals are only wired for linear kinds"
        )
    if r1 == r2 == "mesh":
        grid = np.union1d(f1.knots, f2.knots)
        vals = eval_handle(f1, grid) - eval_handle(f2, grid)
        return math.sqrt(mesh_l2_sq(grid, vals))
    if r1 == r2 == "coeffs":
        n = max(f1.coeffs.shape[0], f2.coeffs.shape[0])
        a = np.zeros(n)
        b = np.zeros(n)
        a[: f1.coeffs.shape[0]] = f1.coeffs
        b[: f2.coeffs.shape[0]] = f2.coeffs
        return float(np.linalg.norm(a - b))
    diff_sq = lambda x: (eval_handle(f1, x) - eval_handle(f2, x)) ** 2
    val = _quad_uniform_domain(f1.descriptor.domain, diff_sq)
    return math.sqrt(max(val, 0.0))


def rkhs_norm(fh: FunctionHandle) -> float:
    """RKHS norm surrogate for RkhsBall handles."""
    desc = fh.descriptor
    if fh.representation == "coeffs":
        j = np.arange(1, fh.coeffs.shape[0] + 1, dtype=float)
        return float(np.sqrt(np.sum(fh.coeffs**2 * j ** (2.0 * desc.rkhs_decay_beta))))
    if fh.representation == "dual":
        gram = rkhs_kernel(desc, fh.anchors, fh.anchors)
        return float(np.sqrt(max(fh.dual_coefs @ gram @ fh.dual_coefs, 0.0)))
    raise UnsupportedNormModeForClass("not an RKHS handle")


# ---------------------------------------------------------------------------
# Envelopes
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Envelope:
    """phi(delta) = coeff_c * (delta/arg_scale)^gamma * log(log_base*arg_scale/delta)^q
    plus an optional star-hull term (delta/a) * sqrt(log(1 + log_term_M * a/delta))
    with a = additive_scale.

    arg_scale/additive_scale keep Lipschitz rescaling phi(delta/L) inside the
    family. Log arguments are floored at e so phi is nondecreasing and
    phi/delta is nonincreasing on (0, 1] (a constants-level normalization;
    exponents are what the laboratory verifies).
    """

    coeff_c: float
    exponent_gamma: float
    log_power_q: float = 0.0
    log_base: float = math.e
    arg_scale: float = 1.0
    additive_log_term: bool = False
    log_term_M: float = 0.0
    additive_scale: float = 1.0

    def __call__(self, delta) -> np.ndarray:
        d = np.asarray(delta, dtype=float)
        u = d / self.arg_scale
        out = self.coeff_c * np.power(u, self.exponent_gamma)
        if self.log_power_q:
            logs = np.maximum(np.log(self.log_base * self.arg_scale / d), 1.0)
            out = out * np.power(logs, self.log_power_q)
        if self.additive_log_term:
            a = self.additive_scale
            out = out + (d / a) * np.sqrt(np.log1p(self.log_term_M * a / d))
        return out

    @property
    def is_pure_power_law(self) -> bool:
        return self.log_power_q == 0.0 and not self.additive_log_term

    @property
    def power_law_coeff(self) -> float:
        """Effective c in phi(delta) = c * delta^gamma for pure power laws."""
        return self.coeff_c * self.arg_scale ** (-self.exponent_gamma)


@dataclass(frozen=True)
class SumEnvelope:
    """Pointwise sum of envelopes (the power-law family is not closed under +)."""

    parts: tuple

    def __call__(self, delta):
        return sum(part(delta) for part in self.parts)

    @property
    def is_pure_power_law(self) -> bool:
        return False


def envelope_is_valid(env, grid: np.ndarray | None = None, slack: float = 1e-12) -> bool:
    """Check phi nondecreasing and phi/delta nonincreasing on a log grid."""
    if grid is None:
        grid = np.logspace(-4, 0, 200)
    vals = env(grid)
    ratios = vals / grid
    return bool(
        np.all(np.diff(vals) >= -slack) and np.all(np.diff(ratios) <= slack)
    )


def entropy_envelope(desc: ClassDescriptor, norm_mode: str = "UniformL2") -> Envelope:
    """Entropy-integral envelope phi(delta) for the class, up to the configured
    coefficient (descriptor.envelope_coeff, default 1)."""
    if not desc.validated:
        desc = make_class(desc)
    if norm_mode not in ("UniformL2", "SupNorm"):
        raise UnsupportedNormModeForClass(f"unknown norm mode {norm_mode!r}")
    if norm_mode == "SupNorm" and desc.kind not in ("HolderMesh", "LipschitzMesh", "RkhsBall"):
        raise UnsupportedNormModeForClass(
            f"SupNorm envelopes are not available for {desc.kind}"
        )
    c = desc.envelope_coeff
    if desc.kind == "Monotone":
        return Envelope(coeff_c=c, exponent_gamma=0.5)
    if desc.kind == "LipschitzMesh":
        return Envelope(coeff_c=c, exponent_gamma=1.0 - desc.dim_d / 2.0)
    if desc.kind == "HolderMesh":
        gamma = 1.0 - desc.dim_d / (2.0 * desc.smoothness_s)
        return Envelope(coeff_c=c, exponent_gamma=gamma)
    if desc.kind == "RkhsBall":
        gamma = 1.0 - 1.0 / (2.0 * desc.rkhs_decay_beta)
        return Envelope(coeff_c=c, exponent_gamma=gamma)
    if desc.kind == "SparseLinear":
        s, p = desc.sparsity_s, desc.ambient_p
        return Envelope(
            coeff_c=c * math.sqrt(s), exponent_gamma=1.0, log_power_q=0.5,
            log_base=math.e * p / s,
        )
    # LinearSpan and L1Ball: VC-subgraph bound with V <= p + 2
    V = desc.ambient_p + 2
    return Envelope(coeff_c=c * math.sqrt(V), exponent_gamma=1.0, log_power_q=0.5)


def vc_dimension(desc: ClassDescriptor) -> int:
    """VC-subgraph dimension bound for linear kinds (V <= p + 2)."""
    if desc.kind not in LINEAR_KINDS:
        raise UnsupportedNormModeForClass("VC dimension wired for linear kinds only")
    return desc.ambient_p + 2


# ---------------------------------------------------------------------------
# Interpolation constants
# ---------------------------------------------------------------------------
BETA_CAP = 1.0e6


def interp_constants(desc: ClassDescriptor,
                     marginal: Marginal | None = None) -> tuple[float, float]:
    """(c_inf, beta) with ||f - f'||_inf <= c_inf ||f - f'||^(1 - 1/(2 beta))
    for every pair in the class under the simulation marginal.

    The fallback (2M, 1/2) is always valid; specific kinds return sharper
    analytic constants. beta for linear classes is capped at BETA_CAP with the
    cap absorbed into c_inf.
    """
    if not desc.validated:
        desc = make_class(desc)
    marginal = marginal or Marginal()
    M = desc.sup_bound_M
    fallback = (2.0 * M, 0.5)
    if desc.kind in LINEAR_KINDS:
        diag = marginal.second_moment_diag(desc)
        # ||f||_inf <= ||theta||_1 <= sqrt(p) ||theta||_2 <= sqrt(p/min_j E X_j^2) ||f||
        c = math.sqrt(desc.dim_d / float(np.min(diag)))
        # cap correction: ||d||^(1/(2 beta)) <= (2M)^(1/(2 beta)) for ||d|| >= 1
        c *= max(1.0, 2.0 * M) ** (1.0 / (2.0 * BETA_CAP))
        return (c * (1 + 1e-9), BETA_CAP)
    if desc.kind == "HolderMesh":
        beta = desc.smoothness_s / desc.dim_d
        c = _ellipsoid_interp_constant(2.0 * desc.radius_B, desc.smoothness_s)
        return (c, beta)
    if desc.kind == "RkhsBall":
        beta = desc.rkhs_decay_beta
        c = _ellipsoid_interp_constant(2.0 * desc.rkhs_R, beta)
        return (c, beta)
    if desc.kind == "LipschitzMesh":
        # window argument: |g(x0)| = a implies |g| >= a/2 on a window of
        # length >= min(a/(8L), 1/2) inside [0,1], with a <= 2M
        L = desc.lipschitz_L
        c = max((64.0 * L * M) ** 0.25, 4.0 * math.sqrt(M)) * 1.25
        return (c, 1.0)
    return fallback


def _ellipsoid_interp_constant(rho: float, s: float) -> float:
    """Constant in ||g||_inf <= c ||g||^(1-1/(2s)) for the cosine ellipsoid
    {sum a_k^2 k^(2s) <= rho^2} (split-sum bound, integer-split safety 2)."""
    return 2.0 * (1.0 + 1.0 / math.sqrt(2.0 * s - 1.0)) * rho ** (1.0 / (2.0 * s))


# ---------------------------------------------------------------------------
# Member sampling
# ---------------------------------------------------------------------------
def sample_member(desc: ClassDescriptor, rng_seed: int | np.random.Generator) -> FunctionHandle:
    """Draw a member uniformly over a documented parameterization of the class.

    Parameterizations: volume-uniform ball draws for the linear kinds;
    Dirichlet increments between uniform endpoints for Monotone; a clipped
    random walk with steps bounded by L*h for LipschitzMesh; coefficient draws
    uniform on the defining ellipsoid (first SAMPLE_BASIS_TERMS coordinates)
    for the basis kinds. Deterministic in the seed.
    """
    if not desc.validated:
        desc = make_class(desc)
    rng = (rng_seed if isinstance(rng_seed, np.random.Generator)
           else np.random.default_rng(rng_seed))
    kind = desc.kind
    if kind == "LinearSpan":
        theta = _ball_point(rng, desc.dim_d, desc.radius_B, ord=2)
        return FunctionHandle(desc, "theta", theta=theta)
    if kind == "L1Ball":
        theta = _ball_point(rng, desc.dim_d, desc.radius_B, ord=1)
        return FunctionHandle(desc, "theta", theta=theta)
    if kind == "SparseLinear":
        support = rng.choice(desc.ambient_p, size=desc.sparsity_s, replace=False)
        theta = np.zeros(desc.ambient_p)
        theta[np.sort(support)] = _ball_point(rng, desc.sparsity_s, desc.radius_B, ord=2)
        return FunctionHandle(desc, "theta", theta=theta)
    if kind == "Monotone":
        knots = np.linspace(0.0, 1.0, SAMPLE_MESH_KNOTS)
        M = desc.radius_B
        lo = rng.uniform(-M, M)
        hi = rng.uniform(lo, M)
        incr = rng.dirichlet(np.ones(SAMPLE_MESH_KNOTS - 1)) * (hi - lo)
        values = lo + np.concatenate([[0.0], np.cumsum(incr)])
        return FunctionHandle(desc, "mesh", knots=knots, values=np.minimum(values, M))
    if kind == "LipschitzMesh":
        knots = np.linspace(0.0, 1.0, SAMPLE_MESH_KNOTS)
        h = knots[1] - knots[0]
        L, M = desc.lipschitz_L, desc.radius_B
        steps = np.clip(rng.normal(0.0, L * h / 2.0, size=SAMPLE_MESH_KNOTS - 1),
                        -L * h, L * h)
        values = rng.uniform(-M / 2, M / 2) + np.concatenate([[0.0], np.cumsum(steps)])
        return FunctionHandle(desc, "mesh", knots=knots,
                              values=np.clip(values, -M, M))
    if kind in BASIS_KINDS:
        s = desc.smoothness_s if kind == "HolderMesh" else desc.rkhs_decay_beta
        radius = desc.radius_B
        j = np.arange(1, SAMPLE_BASIS_TERMS + 1, dtype=float)
        weights = j ** (2.0 * s)
        g = rng.normal(size=SAMPLE_BASIS_TERMS)
        g_norm = math.sqrt(float(np.sum(g * g * weights)))
        r = radius * rng.uniform() ** (1.0 / SAMPLE_BASIS_TERMS)
        return FunctionHandle(desc, "coeffs", coeffs=g * (r / g_norm))
    raise UnsupportedNormModeForClass(kind)


def scale_handle(fh: FunctionHandle, scale: float) -> FunctionHandle:
    """t * f for t in [0, 1]; stays in the class (all kinds are star-shaped)."""
    if not 0.0 <= scale <= 1.0:
        raise NonPositiveParameter("scale must lie in [0, 1] to stay in the class")
    if fh.representation == "theta":
        return replace(fh, theta=scale * fh.theta)
    if fh.representation == "mesh":
        return replace(fh, values=scale * fh.values)
    if fh.representation in ("coeffs", "poly"):
        return replace(fh, coeffs=scale * fh.coeffs)
    return replace(fh, dual_coefs=scale * fh.dual_coefs)


def _ball_point(rng: np.random.Generator, p: int, radius: float, ord: int) -> np.ndarray:
    """Volume-uniform draw from the l_ord ball of the given radius."""
    r = radius * rng.uniform() ** (1.0 / p)
    if ord == 2:
        g = rng.normal(size=p)
        return g * (r / np.linalg.norm(g))
    e = rng.exponential(size=p)
    signs = rng.choice([-1.0, 1.0], size=p)
    return signs * e * (r / np.sum(e))


def constraint_violation(fh: FunctionHandle) -> float:
    """How far the handle sits outside its class constraint (0 when feasible)."""
    desc = fh.descriptor
    kind = desc.kind
    if kind == "LinearSpan":
        return max(0.0, float(np.linalg.norm(fh.theta)) - desc.radius_B)
    if kind == "L1Ball":
        return max(0.0, float(np.sum(np.abs(fh.theta))) - desc.radius_B)
    if kind == "SparseLinear":
        extra = max(0, int(np.count_nonzero(fh.theta)) - desc.sparsity_s)
        return extra + max(0.0, float(np.linalg.norm(fh.theta)) - desc.radius_B)
    if kind == "Monotone":
        mono = max(0.0, float(np.max(-np.diff(fh.values), initial=0.0)))
        amp = max(0.0, float(np.max(np.abs(fh.values))) - desc.radius_B)
        return mono + amp
    if kind == "LipschitzMesh":
        slopes = np.abs(np.diff(fh.values)) / np.diff(fh.knots)
        lip = max(0.0, float(np.max(slopes, initial=0.0)) - desc.lipschitz_L)
        amp = max(0.0, float(np.max(np.abs(fh.values))) - desc.radius_B)
        return lip + amp
    if kind == "HolderMesh":
        j = np.arange(1, fh.coeffs.shape[0] + 1, dtype=float)
        norm = math.sqrt(float(np.sum(fh.coeffs**2 * j ** (2 * desc.smoothness_s))))
        return max(0.0, norm - desc.radius_B)
    if kind == "RkhsBall":
        return max(0.0, rkhs_norm(fh) - desc.rkhs_R)
    raise UnsupportedNormModeForClass(kind)
