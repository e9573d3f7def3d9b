"""Recursive prediction: interpolation, invariances, and a direct one-level
universal-kriging oracle."""

import numpy as np
import pytest
from scipy.linalg import cho_factor, cho_solve

from mfcokrig import (
    BasisSpec,
    KernelSpec,
    LevelData,
    PriorSpec,
    fit,
    predict_batch,
    predict_simple,
    predict_universal,
)
from mfcokrig.design import DesignRequest, nest
from mfcokrig.errors import (
    DegeneratePosteriorError,
    InsufficientDataError,
    NestingError,
    ShapeError,
)
from mfcokrig.kernels import correlation_matrix, cross_correlation

from conftest import UNIT, fixed_kernels, make_levels


def _fit_fixed(seed, s=2, d=1, **kw):
    levels = make_levels(seed, s=s, d=d, **kw)
    return fit(levels, kernels=fixed_kernels(s, d)), levels


class TestFitValidation:
    def test_point_missing_from_coarser_design(self):
        levels = make_levels(0, s=2)
        bad = LevelData(
            levels[1].design + 0.25, levels[1].observations,
            f_basis=levels[1].f_basis, g_basis=levels[1].g_basis,
            lower_observations=levels[1].lower_observations,
        )
        with pytest.raises(NestingError, match="does not appear"):
            fit([levels[0], bad], kernels=fixed_kernels(2, 1))

    def test_duplicate_match_rejected(self):
        levels = make_levels(1, s=2)
        D1 = np.vstack([levels[0].design, levels[1].design[:1]])
        z1 = np.append(levels[0].observations, levels[1].lower_observations[0])
        dup = LevelData(D1, z1, f_basis=levels[0].f_basis)
        with pytest.raises(NestingError, match="matches 2 points"):
            fit([dup, levels[1]], kernels=fixed_kernels(2, 1))

    def test_non_injective_nesting(self):
        levels = make_levels(2, s=2)
        D2 = levels[1].design.copy()
        D2[1] = D2[0]
        z2 = levels[1].observations.copy()
        z2[1] = z2[0]
        zl = levels[1].lower_observations.copy()
        zl[1] = zl[0]
        bad = LevelData(D2, z2, f_basis=levels[1].f_basis,
                        g_basis=levels[1].g_basis, lower_observations=zl)
        with pytest.raises(NestingError, match="not injective"):
            fit([levels[0], bad], kernels=fixed_kernels(2, 1))

    def test_linked_observations_must_agree(self):
        levels = make_levels(3, s=2)
        bad = LevelData(
            levels[1].design, levels[1].observations,
            f_basis=levels[1].f_basis, g_basis=levels[1].g_basis,
            lower_observations=levels[1].lower_observations + 1.0,
        )
        with pytest.raises(NestingError, match="disagree"):
            fit([levels[0], bad], kernels=fixed_kernels(2, 1))

    def test_structural_checks(self):
        levels = make_levels(4, s=2)
        with pytest.raises(ShapeError, match="at least one level"):
            fit([])
        with pytest.raises(ShapeError, match="adjustment basis"):
            fit([levels[0], LevelData(levels[1].design, levels[1].observations,
                                      f_basis=levels[1].f_basis)])
        coarse_with_g = LevelData(
            levels[0].design, levels[0].observations, f_basis=levels[0].f_basis,
            g_basis=BasisSpec.constant(), lower_observations=levels[0].observations,
        )
        with pytest.raises(ShapeError, match="coarsest level"):
            fit([coarse_with_g])
        with pytest.raises(ShapeError, match="expected 2 priors"):
            fit(levels, priors=[PriorSpec.noninformative()])

    def test_level_errors_are_tagged(self):
        levels = make_levels(5, s=2)
        tiny = LevelData(
            levels[1].design[:2], levels[1].observations[:2],
            f_basis=BasisSpec(("1", "x0")), g_basis=BasisSpec.constant(),
            lower_observations=levels[1].lower_observations[:2],
        )
        with pytest.raises(InsufficientDataError, match="^level 2:"):
            fit([levels[0], tiny], kernels=fixed_kernels(2, 1))

    def test_fixed_kernels_are_kept(self):
        levels = make_levels(6, s=2)
        spec = KernelSpec(theta=np.array([0.7]))
        model = fit(levels, kernels=[spec, None], restarts=2, seed=0)
        assert model.fits[0].kernel.theta[0] == 0.7
        assert model.fits[1].kernel.theta[0] != 0.7


class TestInterpolation:
    @pytest.mark.parametrize("s,d", [(1, 1), (2, 1), (3, 1), (2, 2)])
    def test_mean_passes_through_data(self, s, d):
        model, levels = _fit_fixed(seed=10 + s, s=s, d=d)
        pred = predict_simple(model, levels[-1].design)
        np.testing.assert_allclose(pred.top_mean, levels[-1].observations,
                                   rtol=0.0, atol=1e-6)

    def test_simple_variance_collapses_at_data(self):
        model, levels = _fit_fixed(seed=20, s=2)
        pred = predict_simple(model, levels[1].design)
        sig = sum(fl.sigma2_eml for fl in model.fits)
        assert np.all(pred.top_variance <= 10.0 * 1e-10 * max(sig, 1.0) + 1e-12)


class TestExactLinkage:
    def test_doubled_lower_level_is_recovered(self):
        """z_fine = 2 z_coarse exactly: the adjustment coefficient must come
        out as 2 and the correction as 0."""
        designs = nest(DesignRequest(sizes=(7, 14), bounds=UNIT(1), seed=3))
        rng = np.random.default_rng(3)
        z1 = np.sin(3.0 * designs[0][:, 0]) + 0.2 * rng.normal(size=14)
        sub = z1[-7:]  # nested block sits at the tail of the coarse design
        levels = [
            LevelData(designs[0], z1, f_basis=BasisSpec.constant()),
            LevelData(designs[1], 2.0 * sub, f_basis=BasisSpec.constant(),
                      g_basis=BasisSpec.constant(), lower_observations=sub),
        ]
        model = fit(levels, kernels=fixed_kernels(2, 1))
        np.testing.assert_allclose(model.fits[1].trend_mean, [2.0, 0.0], atol=1e-7)
        assert model.fits[1].Q < 1e-12
        X = np.linspace(0.05, 0.95, 9)[:, None]
        pred = predict_simple(model, X)
        np.testing.assert_allclose(pred.mean[1], 2.0 * pred.mean[0], rtol=1e-7)
        np.testing.assert_allclose(pred.rho_hat[0], 2.0, atol=1e-7)

    def test_affine_linkage_is_recovered(self):
        designs = nest(DesignRequest(sizes=(8, 16), bounds=UNIT(1), seed=4))
        rng = np.random.default_rng(4)
        z1 = np.cos(2.0 * designs[0][:, 0]) + 0.2 * rng.normal(size=16)
        sub = z1[-8:]
        x2 = designs[1][:, 0]
        levels = [
            LevelData(designs[0], z1, f_basis=BasisSpec.constant()),
            LevelData(designs[1], (1.0 + 0.5 * x2) * sub + 2.0,
                      f_basis=BasisSpec.constant(),
                      g_basis=BasisSpec(("1", "x0")), lower_observations=sub),
        ]
        model = fit(levels, kernels=fixed_kernels(2, 1))
        np.testing.assert_allclose(model.fits[1].trend_mean, [1.0, 0.5, 2.0], atol=1e-6)


class TestInvariances:
    def test_coarse_row_order_does_not_matter(self):
        levels = make_levels(30, s=2)
        X = np.linspace(0.0, 1.0, 11)[:, None]
        base = fit(levels, kernels=fixed_kernels(2, 1))
        ref = predict_simple(base, X)
        for seed in range(4):
            perm = np.random.default_rng(seed).permutation(levels[0].n)
            shuffled = LevelData(levels[0].design[perm], levels[0].observations[perm],
                                 f_basis=levels[0].f_basis)
            model = fit([shuffled, levels[1]], kernels=fixed_kernels(2, 1))
            pred = predict_simple(model, X)
            np.testing.assert_allclose(pred.mean, ref.mean, rtol=1e-9, atol=1e-12)
            np.testing.assert_allclose(pred.variance, ref.variance, rtol=1e-8, atol=1e-13)

    @pytest.mark.parametrize("mode", ["simple", "universal"])
    def test_coarse_rescaling_cancels(self, mode):
        """Scaling the coarse observations by c rescales the adjustment by
        1/c, leaving every finer-level prediction unchanged."""
        levels = make_levels(31, s=2)
        X = np.linspace(0.0, 1.0, 11)[:, None]
        ref = predict_batch(fit(levels, kernels=fixed_kernels(2, 1)), X, mode=mode)
        for c in (3.0, 0.2):
            scaled = [
                LevelData(levels[0].design, c * levels[0].observations,
                          f_basis=levels[0].f_basis),
                LevelData(levels[1].design, levels[1].observations,
                          f_basis=levels[1].f_basis, g_basis=levels[1].g_basis,
                          lower_observations=c * levels[1].lower_observations),
            ]
            pred = predict_batch(fit(scaled, kernels=fixed_kernels(2, 1)), X, mode=mode)
            np.testing.assert_allclose(pred.mean[1], ref.mean[1], rtol=1e-8)
            np.testing.assert_allclose(pred.variance[1], ref.variance[1], rtol=1e-7)
            np.testing.assert_allclose(pred.rho_hat[0], ref.rho_hat[0] / c, rtol=1e-8)

    def test_batch_equals_pointwise(self):
        model, _ = _fit_fixed(seed=32, s=3, d=1, sizes=(24, 12, 8))
        X = np.random.default_rng(0).uniform(size=(7, 1))
        whole = predict_batch(model, X, mode="universal")
        for j in range(7):
            single = predict_universal(model, X[j])
            np.testing.assert_allclose(single.mean[:, 0], whole.mean[:, j], rtol=1e-13)
            # variances near data sites are tiny differences of O(1) terms, so
            # solver rounding shows up relative to them
            np.testing.assert_allclose(single.variance[:, 0], whole.variance[:, j],
                                       rtol=1e-13, atol=1e-15)

    def test_universal_dominates_simple_at_matched_variance(self):
        model, _ = _fit_fixed(seed=33, s=2)
        X = np.random.default_rng(1).uniform(size=(40, 1))
        sigma2 = [fl.sigma2_mean for fl in model.fits]
        simple = predict_simple(model, X, sigma2=sigma2)
        universal = predict_universal(model, X)
        assert np.all(universal.variance >= simple.variance - 1e-12)


class TestSingleLevelUniversalOracle:
    def test_matches_direct_formulas(self):
        """One level, universal mode, against textbook matrix expressions
        written out with explicit inverses."""
        for seed in range(5):
            [ld] = make_levels(40 + seed, s=1, d=1, sizes=(14,),
                               f_terms=[("1", "x0")])
            spec = fixed_kernels(1, 1)[0]
            model = fit([ld], kernels=[spec])
            X = np.random.default_rng(seed).uniform(size=(15, 1))
            pred = predict_universal(model, X)

            R = correlation_matrix(ld.design, spec).matrix
            Rfac = cho_factor(R, lower=True)
            H = ld.f_basis.evaluate(ld.design)
            RinvH = cho_solve(Rfac, H)
            A = H.T @ RinvH
            lam = np.linalg.solve(A, RinvH.T @ ld.observations)
            resid = ld.observations - H @ lam
            n, m = ld.n, H.shape[1]
            sigma2 = (resid @ cho_solve(Rfac, resid)) / (n - m - 2.0)
            r = cross_correlation(ld.design, X, spec)
            f = ld.f_basis.evaluate(X)
            Rinv_r = cho_solve(Rfac, r)
            mean = f @ lam + r.T @ cho_solve(Rfac, resid)
            u = f.T - H.T @ Rinv_r
            var = sigma2 * (
                1.0 - np.einsum("nm,nm->m", r, Rinv_r)
                + np.einsum("im,ij,jm->m", u, np.linalg.inv(A), u)
            )
            np.testing.assert_allclose(pred.top_mean, mean, rtol=1e-10)
            np.testing.assert_allclose(pred.top_variance, var, rtol=1e-10, atol=1e-13)


class TestUniversalGuards:
    def test_degenerate_shape_is_an_error(self):
        # n = 4 with two experience columns leaves a = 1 exactly.
        levels = make_levels(50, s=2, sizes=(24, 4),
                             f_terms=[("1",), ("1",)], g_terms=[("1",)])
        model = fit(levels, kernels=fixed_kernels(2, 1))
        assert model.fits[1].a == 1.0
        with pytest.raises(DegeneratePosteriorError, match="level 2"):
            predict_universal(model, np.array([[0.5]]))

    def test_low_shape_warns(self):
        # informative prior with n = 2 and alpha = 0.4 puts a at 1.4.
        levels = make_levels(51, s=2, sizes=(24, 2),
                             f_terms=[("1",), ("1",)], g_terms=[("1",)])
        prior = PriorSpec.informative(b=np.zeros(2), V=np.eye(2), alpha=0.4, gamma=1.0)
        model = fit(levels, priors=[PriorSpec.noninformative(), prior],
                    kernels=fixed_kernels(2, 1))
        assert model.fits[1].a == 1.4
        with pytest.warns(UserWarning, match="unstable"):
            predict_universal(model, np.array([[0.5]]))


class TestPredictValidation:
    def test_query_shape(self):
        model, _ = _fit_fixed(seed=60, s=2)
        single = predict_simple(model, np.array([0.5]))
        assert single.mean.shape == (2, 1)
        with pytest.raises(ShapeError, match="columns"):
            predict_simple(model, np.zeros((3, 2)))

    def test_sigma2_validation(self):
        model, _ = _fit_fixed(seed=61, s=2)
        x = np.array([[0.5]])
        with pytest.raises(ShapeError):
            predict_simple(model, x, sigma2=[1.0])
        with pytest.raises(ShapeError):
            predict_simple(model, x, sigma2=[1.0, -1.0])

    def test_batch_mode_validation(self):
        model, _ = _fit_fixed(seed=62, s=2)
        x = np.array([[0.5]])
        with pytest.raises(ShapeError, match="unknown mode"):
            predict_batch(model, x, mode="plain")
        with pytest.raises(ShapeError, match="derives its variances"):
            predict_batch(model, x, mode="universal", sigma2=[1.0, 1.0])

    def test_rho_hat_shape(self):
        model, _ = _fit_fixed(seed=63, s=3, d=1, sizes=(24, 12, 8))
        pred = predict_simple(model, np.zeros((4, 1)))
        assert pred.rho_hat.shape == (2, 4)
        assert pred.mean.shape == (3, 4)
