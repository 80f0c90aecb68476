import itertools
import math

import numpy as np
import pytest
from sklearn.base import clone

from ermlab import classes as C
from ermlab import estimators as E
from ermlab.errors import (
    NonPositiveWeight,
    RankDeficient,
    ShapeMismatch,
    SingularSystem,
    UnsupportedClassKind,
)

LIN3 = C.make_class(C.ClassDescriptor(kind="LinearSpan", dim_d=3, ambient_p=3,
                                      radius_B=4.0, sup_bound_M=16.0))
LIN1 = C.make_class(C.ClassDescriptor(kind="LinearSpan", dim_d=1, ambient_p=1,
                                      radius_B=16.0, sup_bound_M=16.0))
L1B = C.make_class(C.ClassDescriptor(kind="L1Ball", dim_d=10, ambient_p=10,
                                     radius_B=1.0, sup_bound_M=1.0))
MONO = C.make_class(C.ClassDescriptor(kind="Monotone", dim_d=1, sup_bound_M=8.0))
RKHS = C.make_class(C.ClassDescriptor(kind="RkhsBall", dim_d=1,
                                      rkhs_decay_beta=1.0, rkhs_R=1.0,
                                      sup_bound_M=2.0))


def brute_force_isotonic(y, lo=-np.inf, hi=np.inf):
    """Exact monotone LS by enumerating all consecutive partitions; optimal
    block values are the (clipped) block means."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    best, best_obj = None, np.inf
    for cuts in itertools.product([0, 1], repeat=n - 1):
        bounds = [0] + [i + 1 for i, c in enumerate(cuts) if c] + [n]
        vals = np.empty(n)
        ok = True
        prev = -np.inf
        for a, b in zip(bounds[:-1], bounds[1:]):
            m = float(np.clip(np.mean(y[a:b]), lo, hi))
            if m < prev - 1e-12:
                ok = False
                break
            vals[a:b] = m
            prev = m
        if ok:
            obj = float(np.sum((y - vals) ** 2))
            if obj < best_obj - 1e-15:
                best_obj, best = obj, vals
    return best, best_obj


class TestLeastSquares:
    def test_zero_y_gives_zero_coef(self):
        X = np.random.default_rng(0).uniform(-1, 1, (20, 3))
        est = E.LeastSquaresERM(LIN3).fit(X, np.zeros(20))
        assert np.allclose(est.coef_, 0.0)

    def test_two_point_mean(self):
        est = E.LeastSquaresERM(LIN1).fit(np.array([[1.0], [1.0]]),
                                          np.array([1.0, 3.0]))
        assert est.coef_[0] == pytest.approx(2.0, rel=1e-12)

    def test_matches_normal_equations_oracle(self):
        rng = np.random.default_rng(5)
        X = rng.uniform(-1, 1, (50, 3))
        y = rng.standard_normal(50)
        est = E.LeastSquaresERM(LIN3).fit(X, y)
        oracle = np.linalg.solve(X.T @ X, X.T @ y)
        assert np.max(np.abs(est.coef_ - oracle)) <= 1e-8

    def test_residual_orthogonality(self):
        rng = np.random.default_rng(6)
        X = rng.uniform(-1, 1, (200, 3))
        y = rng.standard_normal(200)
        est = E.LeastSquaresERM(LIN3).fit(X, y)
        r = y - X @ est.coef_
        scale = float(np.std(y))
        assert np.max(np.abs(X.T @ r)) <= 1e-8 * 200 * scale

    def test_rank_deficient_raises_when_fallback_disabled(self):
        X = np.ones((10, 3))
        with pytest.raises(RankDeficient):
            E.LeastSquaresERM(LIN3, ridge_fallback=False).fit(
                X, np.ones(10))

    def test_rank_deficient_min_norm_with_fallback(self):
        X = np.zeros((10, 3))
        X[:, 0] = 1.0
        est = E.LeastSquaresERM(LIN3).fit(X, np.full(10, 2.0))
        assert np.allclose(est.coef_, [2.0, 0.0, 0.0])

    def test_ball_constraint_is_exact(self):
        # force the parameter ball to bind; solution must sit on the sphere
        desc = C.make_class(C.ClassDescriptor(kind="LinearSpan", dim_d=2,
                                              ambient_p=2, radius_B=0.1,
                                              sup_bound_M=1.0))
        rng = np.random.default_rng(1)
        X = rng.uniform(-1, 1, (30, 2))
        y = X @ np.array([3.0, -2.0])
        est = E.LeastSquaresERM(desc).fit(X, y)
        assert np.linalg.norm(est.coef_) == pytest.approx(0.1, rel=1e-9)
        assert est.solver_meta_["constraint_binding"]
        # no feasible point does better (check on a sphere sample)
        angles = np.linspace(0, 2 * np.pi, 720)
        cand = 0.1 * np.column_stack([np.cos(angles), np.sin(angles)])
        objs = ((y[:, None] - X @ cand.T) ** 2).mean(axis=0)
        ours = float(np.mean((y - X @ est.coef_) ** 2))
        assert ours <= objs.min() + 1e-10

    def test_weighted_matches_weighted_normal_equations(self):
        rng = np.random.default_rng(8)
        X = rng.uniform(-1, 1, (20, 3))
        y = rng.standard_normal(20)
        w = rng.uniform(0.5, 2.0, 20)
        est = E.LeastSquaresERM(LIN3).fit(X, y, sample_weight=w)
        oracle = np.linalg.solve(X.T @ (X * w[:, None]), X.T @ (w * y))
        assert np.max(np.abs(est.coef_ - oracle)) <= 1e-8

    def test_nonpositive_weight_rejected(self):
        X = np.ones((4, 3))
        with pytest.raises(NonPositiveWeight):
            E.LeastSquaresERM(LIN3).fit(X, np.ones(4),
                                        sample_weight=np.array([1, 1, 0, 1.0]))

    def test_sklearn_params_and_clone(self):
        est = E.LeastSquaresERM(LIN3, ridge_fallback=False)
        params = est.get_params()
        assert params["ridge_fallback"] is False
        cloned = clone(est)
        assert cloned.get_params()["descriptor"] == LIN3


class TestFrankWolfe:
    def test_zero_radius_gives_zero(self):
        desc = C.make_class(C.ClassDescriptor(kind="L1Ball", dim_d=4,
                                              ambient_p=4, radius_B=1e-12,
                                              sup_bound_M=1.0))
        rng = np.random.default_rng(0)
        est = E.L1BallERM(desc).fit(rng.uniform(-1, 1, (10, 4)),
                                    rng.standard_normal(10))
        assert np.allclose(est.coef_, 0.0, atol=1e-10)

    def test_inactive_constraint_matches_ols(self):
        desc = C.make_class(C.ClassDescriptor(kind="L1Ball", dim_d=1,
                                              ambient_p=1, radius_B=5.0,
                                              sup_bound_M=5.0))
        rng = np.random.default_rng(2)
        X = rng.uniform(-1, 1, (40, 1))
        y = 0.3 * X[:, 0] + 0.01 * rng.standard_normal(40)
        fw = E.L1BallERM(desc, tol=1e-12).fit(X, y)
        ols = np.linalg.lstsq(X, y, rcond=None)[0]
        assert fw.coef_[0] == pytest.approx(ols[0], abs=1e-5)

    def test_l1_constraint_exact(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(-1, 1, (30, 10))
        y = rng.standard_normal(30)
        fw = E.L1BallERM(L1B).fit(X, y)
        assert np.sum(np.abs(fw.coef_)) <= L1B.radius_B + 1e-12

    def test_matches_cd_oracle_within_gap(self, request):
        from conftest import cd_lasso_constrained

        rng = np.random.default_rng(4)
        X = rng.uniform(-1, 1, (30, 10))
        y = X @ (np.arange(10) / 10.0 - 0.4) + 0.1 * rng.standard_normal(30)
        fw = E.L1BallERM(L1B, tol=1e-9).fit(X, y)
        oracle = cd_lasso_constrained(X, y, L1B.radius_B)
        obj = lambda t: float(np.mean((y - X @ t) ** 2))
        assert obj(fw.coef_) <= obj(oracle) + fw.solver_meta_["gap"] + 1e-9

    def test_gap_certificate_bounds_suboptimality(self):
        from conftest import cd_lasso_constrained

        rng = np.random.default_rng(9)
        for trial in range(5):
            X = rng.uniform(-1, 1, (25, 10))
            y = rng.standard_normal(25)
            fw = E.L1BallERM(L1B, max_iters=200, tol=1e-14).fit(X, y)
            oracle = cd_lasso_constrained(X, y, L1B.radius_B)
            obj = lambda t: float(np.mean((y - X @ t) ** 2))
            assert obj(fw.coef_) - obj(oracle) <= fw.solver_meta_["gap"] + 1e-10

    def test_nonconvergence_flagged_not_raised(self):
        rng = np.random.default_rng(10)
        X = rng.uniform(-1, 1, (30, 10))
        y = rng.standard_normal(30)
        fw = E.L1BallERM(L1B, max_iters=2, tol=1e-16).fit(X, y)
        assert not fw.solver_meta_["converged"]
        assert np.isfinite(fw.solver_meta_["gap"])


class TestIsotonic:
    def test_already_monotone_is_fixed_point(self):
        x = np.linspace(0, 1, 6)
        y = np.array([0.0, 0.5, 1.0, 1.5, 2.0, 2.5])
        est = E.IsotonicERM(MONO).fit(x, y)
        assert np.allclose(est.values_, y)

    def test_spec_examples(self):
        x = np.array([0.1, 0.5, 0.9])
        est = E.IsotonicERM(MONO).fit(x, np.array([3.0, 1.0, 2.0]))
        assert np.allclose(est.values_, [2.0, 2.0, 2.0])
        est = E.IsotonicERM(MONO).fit(x, np.array([1.0, 3.0, 2.0]))
        assert np.allclose(est.values_, [1.0, 2.5, 2.5])

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(0)
        for trial in range(50):
            n = int(rng.integers(2, 9))
            y = rng.integers(-3, 4, n).astype(float)
            x = np.sort(rng.uniform(0, 1, n))
            est = E.IsotonicERM(MONO).fit(x, y)
            _, best_obj = brute_force_isotonic(y, -MONO.radius_B, MONO.radius_B)
            ours = float(np.sum((y - est.values_) ** 2))
            assert ours <= best_obj + 1e-10

    def test_ties_preaveraged(self):
        x = np.array([0.2, 0.2, 0.8])
        y = np.array([1.0, 3.0, 5.0])
        est = E.IsotonicERM(MONO).fit(x, y)
        assert np.allclose(est.x_knots_, [0.2, 0.8])
        assert np.allclose(est.values_, [2.0, 5.0])

    def test_clipped_to_amplitude(self):
        desc = C.make_class(C.ClassDescriptor(kind="Monotone", dim_d=1,
                                              sup_bound_M=1.0))
        est = E.IsotonicERM(desc).fit(np.array([0.1, 0.9]),
                                      np.array([-5.0, 5.0]))
        assert np.allclose(est.values_, [-1.0, 1.0])

    def test_unsupported_kind(self):
        with pytest.raises(UnsupportedClassKind):
            E.IsotonicERM(LIN3).fit(np.ones((3, 1)), np.ones(3))


class TestLipschitz:
    def test_fits_lipschitz_constraint(self):
        desc = C.make_class(C.ClassDescriptor(kind="LipschitzMesh", dim_d=1,
                                              sup_bound_M=2.0, lipschitz_L=2.0))
        rng = np.random.default_rng(0)
        x = np.sort(rng.uniform(0, 1, 60))
        y = np.sign(x - 0.5) * 1.5  # a step: unattainable with L=2
        est = E.LipschitzERM(desc).fit(x, y)
        slopes = np.abs(np.diff(est.values_)) / np.diff(est.x_knots_)
        assert np.max(slopes) <= desc.lipschitz_L * (1 + 1e-6)
        assert np.max(np.abs(est.values_)) <= desc.sup_bound_M + 1e-12

    def test_interpolates_feasible_data(self):
        desc = C.make_class(C.ClassDescriptor(kind="LipschitzMesh", dim_d=1,
                                              sup_bound_M=2.0, lipschitz_L=3.0))
        x = np.linspace(0, 1, 30)
        y = 0.4 * np.sin(2 * np.pi * x)  # max slope 0.8 pi < 3: feasible
        est = E.LipschitzERM(desc).fit(x, y)
        assert np.max(np.abs(est.values_ - y)) <= 1e-4


class TestKernelRidge:
    def test_scalar_solve(self):
        # n=1, K11=1, y=1, lam=1 -> a = 1/(K + n lam) = 1/2
        x = np.array([0.0])
        K11 = float(C.rkhs_kernel(RKHS, x, x)[0, 0])
        est = E.KernelRidgeERM(RKHS, ridge_lambda=1.0).fit(x, np.array([1.0]))
        assert est.dual_coef_[0] == pytest.approx(1.0 / (K11 + 1.0), rel=1e-12)

    def test_huge_lambda_shrinks_to_zero(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(0, 1, 30)
        y = rng.standard_normal(30)
        est = E.KernelRidgeERM(RKHS, ridge_lambda=1e8).fit(x, y)
        assert est.rkhs_norm_ <= 1e-6

    def test_matches_dense_solve_oracle(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(0, 1, 20)
        y = rng.standard_normal(20)
        lam = 0.05
        est = E.KernelRidgeERM(RKHS, ridge_lambda=lam).fit(x, y)
        K = C.rkhs_kernel(RKHS, x, x)
        oracle = np.linalg.solve(K + 20 * lam * np.eye(20), y)
        assert np.max(np.abs(est.dual_coef_ - oracle)) <= 1e-8

    def test_ball_mode_hits_radius_from_inside(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(0, 1, 100)
        y = np.sin(2 * np.pi * x) + 0.5 * rng.standard_normal(100)
        est = E.KernelRidgeERM(RKHS, ball_mode=True).fit(x, y)
        R = RKHS.rkhs_R
        assert est.rkhs_norm_ <= R + 1e-10
        assert est.rkhs_norm_ >= R * (1 - 2e-4)

    def test_primal_path_matches_dual(self):
        # at regularization scales the ball mode actually selects, the
        # truncated primal solve agrees with the exact dual solve
        rng = np.random.default_rng(4)
        x = rng.uniform(0, 1, 400)
        y = np.sin(2 * np.pi * x) + 0.3 * rng.standard_normal(400)
        lam = 0.02
        dual = E.KernelRidgeERM(RKHS, ridge_lambda=lam).fit(x, y)
        primal = E.KernelRidgeERM(RKHS, ridge_lambda=lam,
                                  dual_threshold=0).fit(x, y)
        grid = np.linspace(0, 1, 200)
        assert np.max(np.abs(dual.predict(grid[:, None]) -
                             primal.predict(grid[:, None]))) <= 1e-3
        assert abs(dual.rkhs_norm_ - primal.rkhs_norm_) <= 1e-3

    def test_singular_system(self):
        x = np.array([0.3, 0.3])  # duplicated anchor: singular Gram
        with pytest.raises(SingularSystem):
            E.KernelRidgeERM(RKHS, ridge_lambda=0.0).fit(x, np.array([1.0, 2.0]))


class TestTikhonov:
    def test_lambda_zero_matches_ols(self):
        rng = np.random.default_rng(5)
        X = rng.uniform(-1, 1, (40, 3))
        y = rng.standard_normal(40)
        tik = E.TikhonovERM(LIN3, lam=0.0).fit(X, y)
        ols = E.LeastSquaresERM(LIN3).fit(X, y)
        assert np.allclose(tik.coef_, ols.coef_)

    def test_orthonormal_design_shrinkage(self):
        # minimizing P_n(y-f)^2 + (lam/2)||f||_n^2 over an orthonormal design
        # shrinks OLS by 1/(1 + lam/2)
        rng = np.random.default_rng(6)
        n = 32
        Q, _ = np.linalg.qr(rng.standard_normal((n, 3)))
        X = Q * math.sqrt(n)
        y = rng.standard_normal(n)
        ols = E.LeastSquaresERM(LIN3).fit(X, y).coef_
        for lam in (0.1, 1.0, 4.0):
            tik = E.TikhonovERM(LIN3, lam=lam).fit(X, y).coef_
            assert np.allclose(tik, ols / (1.0 + lam / 2.0), rtol=1e-10)


class TestLossesAndRisk:
    def test_interpolating_fit_zero_risk(self):
        data = E.Dataset(x=np.array([[0.1], [0.9]]), y=np.array([0.2, 0.8]))
        fh = C.FunctionHandle(MONO, "mesh", knots=np.array([0.1, 0.9]),
                              values=np.array([0.2, 0.8]))
        assert E.empirical_risk(E.SquaredLoss(clip_M=100.0), fh, data) == 0.0

    def test_constant_fit_on_constant_y(self):
        lin = C.make_class(C.ClassDescriptor(kind="LinearSpan", dim_d=1,
                                             ambient_p=1, radius_B=3.0,
                                             sup_bound_M=3.0))
        data = E.Dataset(x=np.ones((5, 1)), y=np.full(5, 2.0))
        fh = C.FunctionHandle(lin, "theta", theta=np.array([2.0]))
        assert E.empirical_risk(E.SquaredLoss(clip_M=100.0), fh, data) == 0.0

    def test_weighted_risk_is_linear_in_weights(self):
        rng = np.random.default_rng(7)
        data = E.Dataset(x=rng.uniform(-1, 1, (10, 3)), y=rng.standard_normal(10))
        fh = C.FunctionHandle(LIN3, "theta", theta=np.array([0.1, 0.2, -0.1]))
        base = E.SquaredLoss(clip_M=100.0)
        doubled = E.WeightedLoss(base=base, weights=np.full(10, 2.0))
        assert E.empirical_risk(doubled, fh, data) == pytest.approx(
            2.0 * E.empirical_risk(base, fh, data), rel=1e-12)

    def test_squared_loss_bounded_on_probe_grid(self):
        loss = E.SquaredLoss(clip_M=(1.0 + 3.0) ** 2)
        ys = np.linspace(-1, 1, 21)
        preds = np.linspace(-3, 3, 21)
        vals = loss.pointwise(ys[:, None], preds[None, :])
        assert np.max(vals) <= loss.clip_M

    def test_logistic_loss_values(self):
        loss = E.LogisticLoss(clip_M=10.0)
        assert loss.pointwise(np.array([0.0]), np.array([0.0]))[0] == \
            pytest.approx(math.log(2.0))
        assert loss.pointwise(np.array([1.0]), np.array([0.0]))[0] == \
            pytest.approx(math.log(2.0))

    def test_dataset_shape_checks(self):
        with pytest.raises(ShapeMismatch):
            E.Dataset(x=np.ones((3, 1)), y=np.ones(4))
        with pytest.raises(ShapeMismatch):
            E.Dataset(x=np.ones((4, 1)), y=np.ones(4),
                      fold_id=np.array([0, 0, 0, 1]))

    def test_fit_meta_schema(self):
        rng = np.random.default_rng(8)
        X = rng.uniform(-1, 1, (20, 3))
        est = E.LeastSquaresERM(LIN3).fit(X, rng.standard_normal(20))
        meta = est.fit_meta()
        assert set(meta) == {"class", "representation", "solver_meta"}
        assert set(meta["solver_meta"]) == {"iters", "gap"}


class TestIdempotence:
    def test_refit_on_zero_residual_returns_zero(self):
        # fitting the all-zero response must return the zero function
        rng = np.random.default_rng(11)
        X = rng.uniform(-1, 1, (15, 3))
        assert np.allclose(E.LeastSquaresERM(LIN3).fit(X, np.zeros(15)).coef_, 0)
        x1 = np.sort(rng.uniform(0, 1, 15))
        assert np.allclose(E.IsotonicERM(MONO).fit(x1, np.zeros(15)).values_, 0)
        assert np.allclose(
            E.L1BallERM(L1B).fit(rng.uniform(-1, 1, (15, 10)), np.zeros(15)).coef_, 0)
        assert E.KernelRidgeERM(RKHS, ridge_lambda=0.1).fit(
            x1, np.zeros(15)).rkhs_norm_ == 0.0
