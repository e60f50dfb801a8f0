"""Geometry primitives: validation, moments, factorization, ellipsoids."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thames.errors import InvalidInput, NotPositiveDefinite
from thames.geometry import (
    Ellipsoid,
    as_draw_matrix,
    as_log_density_vector,
    cholesky_factor,
    log_volume,
    mahalanobis_sq,
    sample_covariance,
    sample_mean,
    standardize,
)

RNG = np.random.default_rng(12345)


class TestValidators:
    def test_vector_promoted_to_column(self):
        a = as_draw_matrix([1.0, 2.0, 3.0])
        assert a.shape == (3, 1)

    def test_rejects_nonfinite_draws(self):
        with pytest.raises(InvalidInput):
            as_draw_matrix([[1.0], [np.nan]])
        with pytest.raises(InvalidInput):
            as_draw_matrix([[1.0], [np.inf]])

    def test_rejects_too_few_rows(self):
        with pytest.raises(InvalidInput):
            as_draw_matrix([[1.0]], min_rows=2)

    def test_log_density_allows_minus_inf_only(self):
        v = as_log_density_vector([0.0, -np.inf, -3.0], 3)
        assert v[1] == -np.inf
        with pytest.raises(InvalidInput):
            as_log_density_vector([0.0, np.inf], 2)
        with pytest.raises(InvalidInput):
            as_log_density_vector([0.0, np.nan], 2)
        with pytest.raises(InvalidInput):
            as_log_density_vector([0.0], 2)


class TestMoments:
    def test_mean_and_covariance_small_case(self):
        a = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]])
        assert np.allclose(sample_mean(a), [1.0, 1.0])
        cov = sample_covariance(a)
        assert np.allclose(cov, [[4.0 / 3.0, 0.0], [0.0, 4.0 / 3.0]])

    def test_covariance_is_symmetric(self):
        a = RNG.standard_normal((50, 4))
        cov = sample_covariance(a)
        assert np.array_equal(cov, cov.T)


class TestCholesky:
    def test_recomposes(self):
        a = RNG.standard_normal((6, 6))
        sigma = a @ a.T + 6 * np.eye(6)
        lo = cholesky_factor(sigma)
        assert np.allclose(np.tril(lo), lo)
        assert np.allclose(lo @ lo.T, sigma)

    def test_rejects_asymmetric(self):
        with pytest.raises(InvalidInput):
            cholesky_factor(np.array([[1.0, 0.5], [0.2, 1.0]]))

    def test_not_positive_definite(self):
        sigma = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(NotPositiveDefinite):
            cholesky_factor(sigma)

    def test_ridge_rescues_near_singular(self):
        sigma = np.array([[1.0, 1.0], [1.0, 1.0]])
        with pytest.raises(NotPositiveDefinite):
            cholesky_factor(sigma)
        lo = cholesky_factor(sigma, ridge=True)
        assert np.all(np.isfinite(lo))


class TestEllipsoid:
    def test_log_det_cached_from_scale(self):
        lo = np.array([[2.0, 0.0], [1.0, 3.0]])
        e = Ellipsoid(np.zeros(2), lo, 1.5)
        assert e.log_det_sigma == pytest.approx(2.0 * (math.log(2.0) + math.log(3.0)))
        assert e.dim == 2

    def test_fit_matches_moments(self):
        a = RNG.standard_normal((500, 3)) * [1.0, 2.0, 0.5]
        e = Ellipsoid.fit(a, 2.0)
        assert np.allclose(e.center, sample_mean(a))
        assert np.allclose(e.scale @ e.scale.T, sample_covariance(a))

    def test_rejects_bad_radius(self):
        with pytest.raises(InvalidInput):
            Ellipsoid(np.zeros(2), np.eye(2), 0.0)
        with pytest.raises(InvalidInput):
            Ellipsoid(np.zeros(2), np.eye(2), np.inf)

    def test_mahalanobis_against_explicit_inverse(self):
        a = RNG.standard_normal((8, 3))
        sigma = a.T @ a + np.eye(3)
        center = np.array([1.0, -2.0, 0.5])
        e = Ellipsoid.from_moments(center, sigma, 2.0)
        inv = np.linalg.inv(sigma)
        for theta in RNG.standard_normal((5, 3)):
            expected = (theta - center) @ inv @ (theta - center)
            assert mahalanobis_sq(theta, e) == pytest.approx(expected, rel=1e-10)

    def test_mahalanobis_matrix_matches_rowwise(self):
        e = Ellipsoid.fit(RNG.standard_normal((100, 2)), 1.0)
        pts = RNG.standard_normal((7, 2))
        batch = mahalanobis_sq(pts, e)
        assert np.allclose(batch, [mahalanobis_sq(p, e) for p in pts])

    def test_standardize_whitens(self):
        a = RNG.standard_normal((2000, 2)) @ np.array([[2.0, 0.0], [1.5, 0.3]])
        e = Ellipsoid.fit(a, 1.0)
        z = standardize(a, e)
        assert np.allclose(np.cov(z, rowvar=False), np.eye(2), atol=0.01)


class TestLogVolume:
    def test_unit_ball_low_dimensions(self):
        # d=1: 2c, d=2: pi c^2, d=3: 4/3 pi c^3
        for d, expected in ((1, 2.0 * 1.7), (2, math.pi * 1.7 ** 2),
                            (3, 4.0 / 3.0 * math.pi * 1.7 ** 3)):
            e = Ellipsoid(np.zeros(d), np.eye(d), 1.7)
            assert log_volume(e) == pytest.approx(math.log(expected), rel=1e-12)

    def test_scale_determinant_enters_linearly(self):
        lo = np.diag([2.0, 0.5, 3.0])
        e_unit = Ellipsoid(np.zeros(3), np.eye(3), 1.0)
        e = Ellipsoid(np.zeros(3), lo, 1.0)
        assert log_volume(e) - log_volume(e_unit) == pytest.approx(
            math.log(2.0 * 0.5 * 3.0), rel=1e-12)

    @given(st.integers(min_value=1, max_value=30),
           st.floats(min_value=0.1, max_value=5.0))
    @settings(max_examples=50, deadline=None)
    def test_monotone_in_radius(self, d, c):
        e_small = Ellipsoid(np.zeros(d), np.eye(d), c)
        e_big = Ellipsoid(np.zeros(d), np.eye(d), c * 1.5)
        assert log_volume(e_big) - log_volume(e_small) == pytest.approx(
            d * math.log(1.5), rel=1e-9)

    def test_affine_consistency_with_mahalanobis(self):
        # scaling the draws by M scales volumes by |det M| and leaves
        # Mahalanobis distances unchanged
        a = RNG.standard_normal((4000, 3))
        m = np.array([[2.0, 0.0, 0.0], [0.3, 1.5, 0.0], [-0.2, 0.1, 0.7]])
        e1 = Ellipsoid.fit(a, 2.0)
        e2 = Ellipsoid.fit(a @ m.T, 2.0)
        assert log_volume(e2) - log_volume(e1) == pytest.approx(
            math.log(abs(np.linalg.det(m))), rel=1e-9)
        assert np.allclose(mahalanobis_sq(a[:50], e1),
                           mahalanobis_sq(a[:50] @ m.T, e2))
