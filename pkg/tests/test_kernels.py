"""Kernel values, tensorization, and the nugget escalation ladder."""

import math

import numpy as np
import pytest

from mfcokrig.errors import (
    IllConditionedError,
    InvalidHyperparameterError,
    ShapeError,
)
from mfcokrig.kernels import (
    DEFAULT_NUGGET,
    NUGGET_CEILING,
    KernelSpec,
    correlation,
    correlation_matrix,
    cross_correlation,
    matern52_1d,
    sqexp_1d,
)


class TestMatern52:
    def test_value_at_one_length_scale(self):
        """Independently computed closed form at |h| = theta."""
        a = math.sqrt(5.0)
        expected = (1.0 + a + a * a / 3.0) * math.exp(-a)
        assert abs(matern52_1d(0.7, 0.7) - expected) < 1e-15
        assert abs(expected - 0.5239941088318203) < 1e-15

    def test_unit_at_zero_and_even(self):
        assert matern52_1d(0.0, 1.3) == 1.0
        np.testing.assert_allclose(matern52_1d(-0.4, 0.9), matern52_1d(0.4, 0.9))

    def test_monotone_decreasing(self):
        h = np.linspace(0.0, 5.0, 60)
        vals = matern52_1d(h, 0.8)
        assert np.all(np.diff(vals) < 0.0)
        assert np.all(vals > 0.0) and np.all(vals <= 1.0)

    def test_rejects_bad_length_scale(self):
        for theta in (0.0, -1.0, np.nan, np.inf):
            with pytest.raises(InvalidHyperparameterError):
                matern52_1d(0.5, theta)


class TestSqexp:
    def test_closed_form(self):
        assert abs(sqexp_1d(1.0, 1.0) - math.exp(-0.5)) < 1e-15
        assert sqexp_1d(0.0, 2.0) == 1.0

    def test_faster_decay_than_matern_far_out(self):
        assert sqexp_1d(4.0, 1.0) < matern52_1d(4.0, 1.0)


class TestKernelSpec:
    def test_validation(self):
        with pytest.raises(InvalidHyperparameterError):
            KernelSpec(theta=np.array([0.5, -0.1]))
        with pytest.raises(InvalidHyperparameterError):
            KernelSpec(theta=np.array([0.5]), family="cubic")
        with pytest.raises(InvalidHyperparameterError):
            KernelSpec(theta=np.array([0.5]), nugget=2 * NUGGET_CEILING)
        with pytest.raises(ShapeError):
            KernelSpec(theta=np.array([[0.5, 0.2]]))

    def test_theta_frozen(self):
        spec = KernelSpec(theta=np.array([0.5, 0.7]))
        assert spec.ndim == 2
        with pytest.raises(ValueError):
            spec.theta[0] = 1.0


class TestCrossCorrelation:
    def test_tensor_product_over_dimensions(self):
        spec = KernelSpec(theta=np.array([0.5, 1.5]))
        x = np.array([[0.1, 0.9]])
        y = np.array([[0.6, 0.2]])
        expected = matern52_1d(0.5, 0.5) * matern52_1d(0.7, 1.5)
        np.testing.assert_allclose(cross_correlation(x, y, spec)[0, 0], expected, rtol=1e-14)

    def test_no_nugget_on_coincident_points(self):
        spec = KernelSpec(theta=np.array([0.5]))
        assert correlation([0.3], [0.3], spec) == 1.0

    def test_symmetry_and_shape(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(size=(7, 3))
        Y = rng.uniform(size=(4, 3))
        spec = KernelSpec(theta=np.array([0.4, 0.6, 1.0]), family="sqexp")
        K = cross_correlation(X, Y, spec)
        assert K.shape == (7, 4)
        np.testing.assert_allclose(K, cross_correlation(Y, X, spec).T, rtol=1e-15)

    def test_dimension_mismatch(self):
        spec = KernelSpec(theta=np.array([0.5]))
        with pytest.raises(ShapeError):
            cross_correlation(np.zeros((3, 2)), np.zeros((3, 2)), spec)


class TestCorrelationMatrix:
    def test_factor_reproduces_matrix(self):
        rng = np.random.default_rng(1)
        D = rng.uniform(size=(15, 2))
        spec = KernelSpec(theta=np.array([0.5, 0.5]))
        fc = correlation_matrix(D, spec)
        np.testing.assert_allclose(fc.cholesky @ fc.cholesky.T, fc.matrix, atol=1e-12)
        np.testing.assert_allclose(np.diag(fc.matrix), 1.0 + DEFAULT_NUGGET, rtol=1e-15)
        assert fc.nugget == DEFAULT_NUGGET

    def test_duplicates_factor_at_floor_nugget(self):
        """Exact duplicates stay factorizable: the trailing pivot is 2x the
        nugget, so the ladder never needs to climb for merely singular data."""
        D = np.array([[0.2], [0.2], [0.8]])
        spec = KernelSpec(theta=np.array([0.5]))
        fc = correlation_matrix(D, spec)
        assert fc.nugget == DEFAULT_NUGGET

    def test_zero_nugget_disables_escalation(self):
        D = np.array([[0.2], [0.2], [0.8]])
        spec = KernelSpec(theta=np.array([0.5]), nugget=0.0)
        with pytest.raises(IllConditionedError) as info:
            correlation_matrix(D, spec)
        assert info.value.nugget == 0.0

    def test_zero_nugget_works_when_well_conditioned(self):
        D = np.linspace(0.0, 1.0, 6)[:, None]
        spec = KernelSpec(theta=np.array([0.2]), nugget=0.0)
        fc = correlation_matrix(D, spec)
        assert fc.nugget == 0.0
        np.testing.assert_allclose(np.diag(fc.matrix), 1.0)

    def test_ladder_climbs_by_tens_until_success(self, monkeypatch):
        """Factorization refusals below 1e-8 must walk the nugget up in
        factors of ten and return the first level that works."""
        import scipy.linalg

        import mfcokrig.kernels as kernels

        tried = []
        real = scipy.linalg.cholesky

        def picky(A, lower=False):
            nugget = float(A[0, 0]) - 1.0
            tried.append(nugget)
            if nugget < 0.5e-8:
                raise scipy.linalg.LinAlgError("refused")
            return real(A, lower=lower)

        monkeypatch.setattr(kernels.scipy.linalg, "cholesky", picky)
        D = np.linspace(0.0, 1.0, 5)[:, None]
        fc = correlation_matrix(D, KernelSpec(theta=np.array([0.4])))
        assert fc.nugget == pytest.approx(1e-8)
        np.testing.assert_allclose(tried, [1e-10, 1e-9, 1e-8], rtol=1e-6)

    def test_ladder_gives_up_at_ceiling(self, monkeypatch):
        import scipy.linalg

        import mfcokrig.kernels as kernels

        def hopeless(A, lower=False):
            raise scipy.linalg.LinAlgError("no")

        monkeypatch.setattr(kernels.scipy.linalg, "cholesky", hopeless)
        D = np.linspace(0.0, 1.0, 5)[:, None]
        with pytest.raises(IllConditionedError) as info:
            correlation_matrix(D, KernelSpec(theta=np.array([0.4])))
        assert info.value.nugget == pytest.approx(NUGGET_CEILING)
