import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nanofilter.gauss_core import (
    Gaussian,
    NotPositiveDefiniteError,
    Precision,
    fd_hessian,
    fd_jacobian,
    kl_divergence,
    symmetrize_psd,
)

from conftest import random_spd


def gaussians(max_dim=3):
    @st.composite
    def build(draw):
        n = draw(st.integers(1, max_dim))
        seed = draw(st.integers(0, 2**31 - 1))
        rng = np.random.default_rng(seed)
        return n, rng

    return build()


class TestGaussian:
    def test_symmetrizes(self):
        g = Gaussian([0.0, 0.0], [[2.0, 0.5 + 1e-13], [0.5, 1.0]])
        assert np.allclose(g.cov, g.cov.T, atol=0, rtol=0)

    def test_rejects_non_pd(self):
        with pytest.raises(NotPositiveDefiniteError):
            Gaussian([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            Gaussian([0.0], np.eye(2))

    def test_immutable(self):
        g = Gaussian([1.0], [[1.0]])
        with pytest.raises(ValueError):
            g.mean[0] = 3.0

    def test_logpdf_matches_scipy(self):
        from scipy.stats import multivariate_normal

        rng = np.random.default_rng(1)
        cov = random_spd(rng, 3)
        g = Gaussian(rng.normal(size=3), cov)
        x = rng.normal(size=(4, 3))
        assert np.allclose(g.logpdf(x), multivariate_normal(g.mean, cov).logpdf(x))

    def test_precision_roundtrip(self):
        rng = np.random.default_rng(2)
        g = Gaussian(np.zeros(3), random_spd(rng, 3))
        s = g.precision()
        assert np.allclose(s.mat @ g.cov, np.eye(3), atol=1e-10)
        assert np.allclose(s.covariance(), g.cov)
        b = rng.normal(size=3)
        assert np.allclose(s.solve(b), g.cov @ b)

    def test_precision_rejects_non_pd(self):
        with pytest.raises(NotPositiveDefiniteError):
            Precision(-np.eye(2))


class TestKL:
    def test_identical(self):
        assert kl_divergence(Gaussian([0.0], [[1.0]]), Gaussian([0.0], [[1.0]])) == 0.0

    def test_shifted_mean(self):
        assert kl_divergence(Gaussian([1.0], [[1.0]]), Gaussian([0.0], [[1.0]])) == pytest.approx(0.5, abs=1e-14)

    def test_variance_ratio(self):
        kl = kl_divergence(Gaussian([0.0], [[2.0]]), Gaussian([0.0], [[1.0]]))
        assert kl == pytest.approx(0.5 * (1 - np.log(2)), abs=1e-14)
        assert kl == pytest.approx(0.15343, abs=1e-5)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            kl_divergence(Gaussian([0.0], [[1.0]]), Gaussian([0.0, 0.0], np.eye(2)))

    def test_quadrature_oracle_1d(self):
        # trapezoid quadrature of p log(p/q) on a dense grid
        p, q = Gaussian([0.3], [[0.7]]), Gaussian([-0.2], [[1.9]])
        x = np.linspace(-15, 15, 200001)[:, None]
        lp, lq = p.logpdf(x), q.logpdf(x)
        quad = np.trapezoid(np.exp(lp) * (lp - lq), x[:, 0])
        assert kl_divergence(p, q) == pytest.approx(quad, abs=1e-9)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_monte_carlo(self, seed):
        rng = np.random.default_rng(seed)
        n = seed + 1
        p = Gaussian(rng.normal(size=n), random_spd(rng, n))
        q = Gaussian(rng.normal(size=n), random_spd(rng, n, scale=2.0))
        z = p.sample(np.random.default_rng(100 + seed), 1_000_000)
        d = p.logpdf(z) - q.logpdf(z)
        se = d.std(ddof=1) / np.sqrt(len(d))
        assert abs(d.mean() - kl_divergence(p, q)) < 3 * se

    @settings(max_examples=60, deadline=None)
    @given(gaussians())
    def test_nonnegative_and_self_zero(self, case):
        n, rng = case
        p = Gaussian(rng.normal(size=n), random_spd(rng, n))
        q = Gaussian(rng.normal(size=n), random_spd(rng, n))
        assert kl_divergence(p, q) >= -1e-12
        assert kl_divergence(p, p) <= 1e-12


class TestSymmetrizePSD:
    def test_identity_untouched(self):
        m, eps = symmetrize_psd(np.eye(3))
        assert eps == 0.0 and np.array_equal(m, np.eye(3))

    def test_already_pd(self):
        a = np.array([[2.0, 0.1], [0.1, 2.0]])
        m, eps = symmetrize_psd(a)
        assert eps == 0.0 and np.array_equal(m, a)

    def test_singular_symmetric_part_gets_smallest_jitter(self):
        m, eps = symmetrize_psd(np.array([[1.0, 2.0], [0.0, 1.0]]))
        assert eps > 0
        np.linalg.cholesky(m)
        assert np.allclose(m, np.ones((2, 2)) + eps * np.eye(2))
        # a ladder rung below must have failed
        if eps > 1e-12:
            with pytest.raises(np.linalg.LinAlgError):
                np.linalg.cholesky(np.ones((2, 2)) + eps / 100 * np.eye(2))

    def test_fails_beyond_ladder(self):
        with pytest.raises(NotPositiveDefiniteError):
            symmetrize_psd(-np.eye(2), jitter_max=1e-6)

    def test_non_square(self):
        with pytest.raises(ValueError):
            symmetrize_psd(np.ones((2, 3)))

    @settings(max_examples=80, deadline=None)
    @given(st.integers(1, 5), st.integers(0, 2**31 - 1))
    def test_output_factorizes(self, n, seed):
        rng = np.random.default_rng(seed)
        v = rng.normal(size=(n, 1))
        # rank-one PSD plus asymmetric noise at round-off scale
        m = v @ v.T + 1e-14 * rng.normal(size=(n, n))
        try:
            out, _ = symmetrize_psd(m)
        except NotPositiveDefiniteError:
            return
        np.linalg.cholesky(out)


class TestFiniteDifferences:
    def test_jacobian_identity(self):
        x = np.array([0.3, -2.0, 5.0])
        assert np.allclose(fd_jacobian(lambda z: z, x), np.eye(3), atol=1e-9)

    def test_jacobian_polynomial(self):
        jac = fd_jacobian(lambda z: np.array([z[0] ** 2, z[0] * z[1]]), [1.0, 2.0])
        assert np.allclose(jac, [[2.0, 0.0], [2.0, 1.0]], atol=1e-6)

    def test_jacobian_constant(self):
        assert np.allclose(fd_jacobian(lambda z: np.array([1.0, 2.0]), [0.5, 0.5]), 0.0, atol=1e-9)

    def test_jacobian_names_coordinate(self):
        # only the step along coordinate 1 leaves the log domain
        with np.errstate(invalid="ignore"), pytest.raises(FloatingPointError, match="coordinate 1"):
            fd_jacobian(lambda z: np.array([np.log(z[1])]), [1.0, 1e-7])

    def test_hessian_half_norm(self):
        assert np.allclose(fd_hessian(lambda z: 0.5 * z @ z, [0.4, -1.2, 3.0]), np.eye(3), atol=1e-4)

    def test_hessian_cross_term(self):
        assert np.allclose(fd_hessian(lambda z: z[0] * z[1], [2.0, -7.0]), [[0, 1], [1, 0]], atol=1e-4)

    def test_hessian_affine(self):
        assert np.allclose(fd_hessian(lambda z: 3 * z[0] - z[1] + 2, [1.0, 1.0]), 0.0, atol=1e-4)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-3, 3), min_size=3, max_size=3))
    def test_polynomial_relative_error(self, xs):
        x = np.array(xs)
        fn = lambda z: np.array([z[0] ** 3 + z[1] * z[2], z[1] ** 2 - 2 * z[0] * z[2]])  # noqa: E731
        exact = np.array([[3 * x[0] ** 2, x[2], x[1]], [-2 * x[2], 2 * x[1], -2 * x[0]]])
        assert np.allclose(fd_jacobian(fn, x), exact, rtol=1e-5, atol=1e-6)
        scalar = lambda z: z[0] ** 3 + z[0] * z[1] ** 2 + z[2] ** 2  # noqa: E731
        hess = np.array([[6 * x[0], 2 * x[1], 0], [2 * x[1], 2 * x[0], 0], [0, 0, 2]])
        assert np.allclose(fd_hessian(scalar, x), hess, rtol=1e-5, atol=1e-5)
