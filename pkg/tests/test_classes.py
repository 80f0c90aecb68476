import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ermlab import classes as C
from ermlab.errors import (
    DimensionMismatch,
    MissingField,
    NonPositiveParameter,
    SparsityExceedsAmbient,
    SupBoundViolated,
    UnsupportedNormModeForClass,
)
from ermlab.seeding import derive_seed

LIN3 = C.make_class(C.ClassDescriptor(kind="LinearSpan", dim_d=3, ambient_p=3,
                                      radius_B=1.0, sup_bound_M=math.sqrt(3)))
MONO = C.make_class(C.ClassDescriptor(kind="Monotone", dim_d=1, sup_bound_M=1.0))

ALL_DESCRIPTORS = [
    LIN3,
    C.make_class(C.ClassDescriptor(kind="L1Ball", dim_d=4, ambient_p=4,
                                   radius_B=1.0, sup_bound_M=1.0)),
    C.make_class(C.ClassDescriptor(kind="SparseLinear", dim_d=6, ambient_p=6,
                                   sparsity_s=2, radius_B=1.0,
                                   sup_bound_M=math.sqrt(2))),
    MONO,
    C.make_class(C.ClassDescriptor(kind="LipschitzMesh", dim_d=1,
                                   sup_bound_M=1.0, lipschitz_L=3.0)),
    C.make_class(C.ClassDescriptor(kind="HolderMesh", dim_d=1, smoothness_s=2.0,
                                   radius_B=1.0, sup_bound_M=2.0)),
    C.make_class(C.ClassDescriptor(kind="RkhsBall", dim_d=1,
                                   rkhs_decay_beta=1.0, rkhs_R=1.0,
                                   sup_bound_M=2.0)),
]


# ---------------------------------------------------------------------------
# make_class
# ---------------------------------------------------------------------------
class TestMakeClass:
    def test_smallest_wellformed_linear(self):
        desc = C.make_class({"kind": "LinearSpan", "ambient_p": 3,
                             "radius_B": 1.0, "sup_bound_M": 2.0})
        assert desc.validated and desc.dim_d == 3

    def test_sparsity_exceeds_ambient(self):
        with pytest.raises(SparsityExceedsAmbient):
            C.make_class(C.ClassDescriptor(kind="SparseLinear", dim_d=3,
                                           ambient_p=3, sparsity_s=5,
                                           radius_B=1.0, sup_bound_M=5.0))

    def test_rkhs_beta_must_exceed_half(self):
        with pytest.raises(NonPositiveParameter):
            C.make_class(C.ClassDescriptor(kind="RkhsBall", dim_d=1,
                                           rkhs_decay_beta=0.4, rkhs_R=1.0,
                                           sup_bound_M=10.0))

    def test_missing_field(self):
        with pytest.raises(MissingField):
            C.make_class(C.ClassDescriptor(kind="LinearSpan", dim_d=3,
                                           radius_B=1.0, sup_bound_M=2.0))

    def test_nonpositive_rejected(self):
        with pytest.raises(NonPositiveParameter):
            C.make_class(C.ClassDescriptor(kind="LinearSpan", dim_d=2,
                                           ambient_p=2, radius_B=-1.0,
                                           sup_bound_M=2.0))

    def test_holder_validity_region(self):
        with pytest.raises(NonPositiveParameter):
            C.make_class(C.ClassDescriptor(kind="HolderMesh", dim_d=1,
                                           smoothness_s=0.4, radius_B=1.0,
                                           sup_bound_M=5.0))

    def test_sup_bound_must_cover_constraint(self):
        with pytest.raises(SupBoundViolated):
            C.make_class(C.ClassDescriptor(kind="LinearSpan", dim_d=4,
                                           ambient_p=4, radius_B=1.0,
                                           sup_bound_M=1.0))

    def test_rkhs_eigenvalues_decreasing_summable(self):
        desc = ALL_DESCRIPTORS[-1]
        lam = desc.rkhs_eigenvalues(1000)
        assert np.all(np.diff(lam) < 0) and lam.sum() < np.inf

    def test_json_round_trip(self):
        for desc in ALL_DESCRIPTORS:
            back = C.make_class(C.descriptor_from_json(C.descriptor_to_json(desc)))
            assert back == desc

    def test_json_unknown_field_rejected(self):
        with pytest.raises(MissingField):
            C.descriptor_from_json({"kind": "Monotone", "sup_bound_M": 1.0,
                                    "bogus": 1})


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------
class TestEval:
    def test_zero_handle_everywhere_zero(self):
        for desc in ALL_DESCRIPTORS:
            fh = C.zero_handle(desc)
            pts = np.full((5, desc.dim_d), 0.3)
            assert np.all(C.eval_handle(fh, pts) == 0.0)

    def test_linear_inner_product(self):
        desc = C.make_class(C.ClassDescriptor(kind="LinearSpan", dim_d=2,
                                              ambient_p=2, radius_B=8.0,
                                              sup_bound_M=100.0))
        fh = C.FunctionHandle(desc, "theta", theta=np.array([1.0, 0.0]))
        assert C.eval_handle(fh, np.array([[0.5, 7.0]]))[0] == 0.5

    def test_monotone_interpolation_stays_in_range(self):
        fh = C.FunctionHandle(MONO, "mesh", knots=np.array([0.0, 1.0]),
                              values=np.array([0.0, 1.0]))
        val = C.eval_handle(fh, np.array([0.5]))[0]
        assert 0.0 <= val <= 1.0 and val == 0.5  # linear interpolation rule

    def test_dimension_mismatch(self):
        fh = C.FunctionHandle(LIN3, "theta", theta=np.zeros(3))
        with pytest.raises(DimensionMismatch):
            C.eval_handle(fh, np.zeros((4, 2)))

    def test_sup_bound_violation_raises(self):
        fh = C.FunctionHandle(LIN3, "theta", theta=np.array([1.0, 1.0, 1.0]))
        with pytest.raises(SupBoundViolated):
            C.eval_handle(fh, np.full((1, 3), 5.0))  # outside the domain

    def test_eval_deterministic(self):
        fh = C.sample_member(ALL_DESCRIPTORS[-1], 3)
        pts = np.linspace(0, 1, 17)
        a = C.eval_handle(fh, pts)
        b = C.eval_handle(fh, pts)
        assert np.array_equal(a, b)


# ---------------------------------------------------------------------------
# entropy envelopes
# ---------------------------------------------------------------------------
class TestEnvelope:
    def test_monotone_exponent(self):
        env = C.entropy_envelope(MONO)
        assert env.exponent_gamma == 0.5 and env.log_power_q == 0.0

    def test_holder_exponent(self):
        desc = C.make_class(C.ClassDescriptor(kind="HolderMesh", dim_d=1,
                                              smoothness_s=2.0, radius_B=1.0,
                                              sup_bound_M=2.0))
        assert C.entropy_envelope(desc).exponent_gamma == 0.75

    def test_linear_vc_envelope(self):
        desc = C.make_class(C.ClassDescriptor(kind="LinearSpan", dim_d=1,
                                              ambient_p=1, radius_B=1.0,
                                              sup_bound_M=1.0))
        env = C.entropy_envelope(desc)
        assert env.exponent_gamma == 1.0
        assert env.log_power_q == 0.5
        assert C.vc_dimension(desc) == 3
        assert env.coeff_c == pytest.approx(math.sqrt(3))

    def test_sparse_envelope(self):
        desc = C.make_class(C.ClassDescriptor(kind="SparseLinear", dim_d=8,
                                              ambient_p=8, sparsity_s=2,
                                              radius_B=1.0,
                                              sup_bound_M=math.sqrt(2)))
        env = C.entropy_envelope(desc)
        assert env.exponent_gamma == 1.0 and env.log_power_q == 0.5
        assert env.log_base == pytest.approx(math.e * 8 / 2)

    def test_sup_norm_mode_restricted(self):
        with pytest.raises(UnsupportedNormModeForClass):
            C.entropy_envelope(MONO, "SupNorm")
        C.entropy_envelope(ALL_DESCRIPTORS[-1], "SupNorm")  # RkhsBall ok

    @pytest.mark.parametrize("desc", ALL_DESCRIPTORS, ids=lambda d: d.kind)
    def test_envelope_laws(self, desc):
        # phi nondecreasing, phi/delta nonincreasing on a log grid
        env = C.entropy_envelope(desc)
        assert C.envelope_is_valid(env, np.logspace(-4, 0, 400))


# ---------------------------------------------------------------------------
# interpolation constants
# ---------------------------------------------------------------------------
class TestInterpConstants:
    def test_fallback_always_valid(self):
        c_inf, beta = C.interp_constants(MONO)
        assert (c_inf, beta) == (2.0 * MONO.sup_bound_M, 0.5)

    def test_linear_sqrt_p_scaling(self):
        c_inf, beta = C.interp_constants(LIN3)
        assert beta == C.BETA_CAP
        assert c_inf == pytest.approx(math.sqrt(3 * 3), rel=1e-6)

    def test_holder_beta_is_s_over_d(self):
        desc = C.make_class(C.ClassDescriptor(kind="HolderMesh", dim_d=1,
                                              smoothness_s=2.0, radius_B=1.0,
                                              sup_bound_M=2.0))
        _, beta = C.interp_constants(desc)
        assert beta == 2.0

    @pytest.mark.parametrize("desc", ALL_DESCRIPTORS, ids=lambda d: d.kind)
    def test_interp_inequality_on_random_pairs(self, desc):
        c_inf, beta = C.interp_constants(desc)
        expo = 1.0 - 1.0 / (2.0 * beta)
        lo, hi = desc.domain
        n_pairs = 1000
        rng = np.random.default_rng(0)
        for i in range(n_pairs):
            f = C.sample_member(desc, derive_seed(10, "f", i))
            g = C.sample_member(desc, derive_seed(20, "g", i))
            if desc.kind in C.LINEAR_KINDS:
                pts = rng.uniform(lo, hi, (1000, desc.dim_d))
            else:
                pts = np.linspace(lo, hi, 1000)
            sup = float(np.max(np.abs(C.eval_handle(f, pts) - C.eval_handle(g, pts))))
            dist = C.l2_distance(f, g)
            assert sup <= c_inf * dist**expo + 1e-9


# ---------------------------------------------------------------------------
# sample_member
# ---------------------------------------------------------------------------
class TestSampleMember:
    @pytest.mark.parametrize("desc", ALL_DESCRIPTORS, ids=lambda d: d.kind)
    def test_deterministic_in_seed(self, desc):
        a = C.sample_member(desc, 123)
        b = C.sample_member(desc, 123)
        for name in ("theta", "values", "coeffs"):
            va, vb = getattr(a, name), getattr(b, name)
            assert (va is None) == (vb is None)
            if va is not None:
                assert np.array_equal(va, vb)

    def test_l1_ball_constraint(self):
        desc = ALL_DESCRIPTORS[1]
        for i in range(200):
            fh = C.sample_member(desc, i)
            assert np.sum(np.abs(fh.theta)) <= desc.radius_B + 1e-12

    def test_monotone_nondecreasing_10k(self):
        for i in range(10_000):
            fh = C.sample_member(MONO, i)
            assert np.all(np.diff(fh.values) >= 0)

    @pytest.mark.parametrize("desc", ALL_DESCRIPTORS, ids=lambda d: d.kind)
    def test_constraint_preserved_exactly(self, desc):
        for i in range(300):
            assert C.constraint_violation(C.sample_member(desc, i)) <= 1e-8


# ---------------------------------------------------------------------------
# norms, blending, scaling
# ---------------------------------------------------------------------------
class TestNorms:
    def test_mesh_norm_matches_quadrature(self):
        fh = C.sample_member(MONO, 5)
        exact = C.member_l2_norm(fh)
        grid = np.linspace(0, 1, 200001)
        riemann = math.sqrt(np.mean(C.eval_handle(fh, grid) ** 2))
        assert exact == pytest.approx(riemann, abs=1e-5)

    def test_linear_norm_closed_form(self):
        fh = C.FunctionHandle(LIN3, "theta", theta=np.array([0.3, -0.2, 0.1]))
        # E X_j^2 = 1/3 on [-1, 1]
        want = math.sqrt((0.09 + 0.04 + 0.01) / 3.0)
        assert C.member_l2_norm(fh) == pytest.approx(want, rel=1e-12)

    def test_scale_handle_scales_norm(self):
        fh = C.sample_member(ALL_DESCRIPTORS[-1], 8)
        assert C.member_l2_norm(C.scale_handle(fh, 0.5)) == pytest.approx(
            0.5 * C.member_l2_norm(fh), rel=1e-12)

    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_rkhs_sample_within_ball(self, seed):
        desc = ALL_DESCRIPTORS[-1]
        fh = C.sample_member(desc, seed)
        assert C.rkhs_norm(fh) <= desc.rkhs_R + 1e-10

    def test_kernel_gram_psd(self):
        desc = ALL_DESCRIPTORS[-1]
        x = np.random.default_rng(2).uniform(0, 1, 40)
        K = C.rkhs_kernel(desc, x, x)
        evals = np.linalg.eigvalsh(K)
        assert evals.min() > -1e-10

    def test_gaussian_marginal_norm_matches_monte_carlo(self):
        marg = C.Marginal(kind="Gaussian", sigmas=(0.5, 1.0, 2.0))
        fh = C.FunctionHandle(LIN3, "theta", theta=np.array([0.4, -0.2, 0.1]))
        exact = C.member_l2_norm(fh, marg)
        rng = np.random.default_rng(3)
        draws = marg.sample(LIN3, rng, 400_000)
        assert np.all(np.abs(draws) <= 1.0)  # truncated at the domain cube
        mc = math.sqrt(np.mean(C.eval_handle(fh, draws) ** 2))
        assert exact == pytest.approx(mc, rel=5e-3)

    def test_gaussian_marginal_rejected_for_mesh_kinds(self):
        marg = C.Marginal(kind="Gaussian", sigmas=(1.0,))
        with pytest.raises(UnsupportedNormModeForClass):
            marg.sample(MONO, np.random.default_rng(0), 8)
