"""Tests for kernels, Cholesky conditioning, NLL and sampling."""

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from bcgp.errors import ConditioningError
from bcgp.gp_core import (
    ConditionedGp,
    ConstantMean,
    SpectralMixture,
    SquaredExponential,
    SumKernel,
    WhiteNoise,
    ZeroMean,
    cholesky_with_jitter,
    gram,
    nll_gaussian,
    posterior,
    sample_gaussian,
    sample_prior,
)


class TestKernels:
    """Test kernel evaluation."""

    def test_squared_exponential(self):
        """Test σ² exp(−τ²/2ℓ²)."""
        kernel = SquaredExponential(variance=2.0, lengthscale=0.5)
        k = kernel(np.array([0.0]), np.array([0.0, 0.5]))
        np.testing.assert_allclose(k, [[2.0, 2.0 * np.exp(-0.5)]])

    def test_spectral_mixture(self):
        """Test a single cosine component."""
        kernel = SpectralMixture(weights=(2.0,), means=(0.25,), variances=(0.0,))
        k = kernel(np.array([0.0]), np.array([0.0, 1.0, 2.0]))
        np.testing.assert_allclose(k, [[2.0, 0.0, -2.0]], atol=1e-12)

    def test_spectral_mixture_lengths(self):
        """Test mismatched component lists are rejected."""
        with pytest.raises(ValueError):
            SpectralMixture(weights=(1.0, 2.0), means=(0.1,), variances=(0.1,))

    def test_white_noise_only_on_training_diagonal(self):
        """Test noise enters kernel(t) but not kernel(t, t̄)."""
        kernel = SquaredExponential(1.0, 1.0) + WhiteNoise(0.5)
        t = np.array([0.0, 1.0, 2.0])
        np.testing.assert_allclose(np.diag(gram(kernel, t)), 1.5)
        np.testing.assert_allclose(np.diag(gram(kernel, t, t)), 1.0)
        np.testing.assert_allclose(kernel.diag(t), 1.0)
        assert kernel.noise_variance == 0.5

    def test_sum_flattens_and_names(self):
        """Test + builds one flat SumKernel with prefixed names."""
        kernel = SquaredExponential() + WhiteNoise(0.1) + WhiteNoise(0.2)
        assert isinstance(kernel, SumKernel) and len(kernel.parts) == 3
        names = [h.name for h in kernel.hyperparameters()]
        assert names == ["0.variance", "0.lengthscale", "1.noise", "2.noise"]
        rebuilt = kernel.with_values([3.0, 4.0, 0.3, 0.4])
        assert rebuilt.noise_variance == pytest.approx(0.7)


class TestCholesky:
    """Test the jittered Cholesky factorization."""

    def test_no_jitter_when_positive_definite(self, rng):
        """Test a well-conditioned matrix is factored as is."""
        a = rng.normal(size=(5, 5))
        matrix = a @ a.T + 5 * np.eye(5)
        chol, jitter = cholesky_with_jitter(matrix)
        assert jitter == 0.0
        np.testing.assert_allclose(chol @ chol.T, matrix, atol=1e-12)

    def test_jitter_rescues_singular(self):
        """Test a rank-one matrix needs and gets jitter."""
        chol, jitter = cholesky_with_jitter(np.ones((3, 3)))
        assert 0.0 < jitter <= 1e-4

    def test_failure_lists_levels(self):
        """Test an indefinite matrix raises with the attempted jitter levels."""
        with pytest.raises(ConditioningError) as err:
            cholesky_with_jitter(-np.eye(3))
        assert err.value.jitter_levels[0] == 0.0
        assert max(err.value.jitter_levels) == pytest.approx(1e-4)

    def test_non_finite(self):
        """Test NaN entries are a conditioning error."""
        with pytest.raises(ConditioningError):
            cholesky_with_jitter(np.array([[1.0, np.nan], [np.nan, 1.0]]))


class TestNll:
    """Test the Gaussian negative log-likelihood."""

    def test_single_point(self):
        """Test N(0, 1) evaluated at 0 and at 1."""
        kernel = SquaredExponential(1.0, 1.0)
        assert nll_gaussian(ZeroMean(), kernel, [0.0], [0.0]) == pytest.approx(0.9189385, abs=1e-6)
        assert nll_gaussian(ZeroMean(), kernel, [0.0], [1.0]) == pytest.approx(1.4189385, abs=1e-6)

    def test_matches_scipy(self, rng):
        """Test against the multivariate normal log-density."""
        for _ in range(20):
            n = int(rng.integers(1, 20))
            t = np.sort(rng.uniform(0, 10, n))
            kernel = SquaredExponential(rng.uniform(0.5, 2), rng.uniform(0.5, 2)) + WhiteNoise(rng.uniform(0.05, 0.5))
            mean = ConstantMean(rng.normal())
            x = rng.normal(size=n)
            expected = -multivariate_normal(mean(t), kernel(t)).logpdf(x)
            assert nll_gaussian(mean, kernel, t, x) == pytest.approx(expected, rel=1e-10, abs=1e-10)

    def test_empty(self):
        """Test no data gives zero NLL."""
        assert nll_gaussian(ZeroMean(), SquaredExponential(), [], []) == 0.0

    def test_permutation_invariant(self, rng):
        """Test reordering (t, x) pairs jointly leaves the NLL unchanged."""
        kernel = SquaredExponential(1.2, 0.7) + WhiteNoise(0.2)
        t = rng.uniform(0, 10, 15)
        x = rng.normal(size=15)
        order = rng.permutation(15)
        expected = nll_gaussian(ConstantMean(0.3), kernel, t, x)
        assert nll_gaussian(ConstantMean(0.3), kernel, t[order], x[order]) == pytest.approx(expected, abs=1e-9)


class TestPosterior:
    """Test GP conditioning."""

    def test_matches_direct_solve(self, rng):
        """Test posterior mean and covariance against explicit inverses."""
        kernel = SquaredExponential(1.3, 0.8) + WhiteNoise(0.1)
        mean = ConstantMean(0.5)
        t = np.sort(rng.uniform(0, 5, 12))
        x = rng.normal(size=12)
        s = np.linspace(-1, 6, 9)
        post = posterior(mean, kernel, t, x, s)
        k_inv = np.linalg.inv(kernel(t))
        cross = kernel(s, t)
        np.testing.assert_allclose(post.mean, 0.5 + cross @ k_inv @ (x - 0.5), atol=1e-10)
        expected_cov = kernel(s, s) - cross @ k_inv @ cross.T
        np.testing.assert_allclose(post.cov, expected_cov, atol=1e-10)
        np.testing.assert_allclose(post.var, np.diag(expected_cov), atol=1e-10)

    def test_variance_below_prior(self, rng):
        """Test conditioning never raises the variance."""
        kernel = SquaredExponential(1.5, 0.6) + WhiteNoise(0.05)
        t = np.sort(rng.uniform(0, 5, 10))
        s = np.linspace(-2, 7, 40)
        post = posterior(ZeroMean(), kernel, t, rng.normal(size=10), s)
        assert np.all(post.var <= np.diag(kernel(s, s)) + 1e-10)

    def test_predict_without_cov(self):
        """Test the diagonal-only path."""
        gp = ConditionedGp.fit(ZeroMean(), SquaredExponential() + WhiteNoise(0.1), [0.0, 1.0], [1.0, -1.0])
        post = gp.predict([0.5, 3.0], full_cov=False)
        assert post.cov is None
        assert np.all(post.std >= 0)

    def test_no_training_data_is_prior(self):
        """Test predicting from an empty GP returns the prior."""
        gp = ConditionedGp.fit(ConstantMean(1.0), SquaredExponential(2.0, 1.0), [], [])
        post = gp.predict([0.0, 1.0])
        np.testing.assert_allclose(post.mean, 1.0)
        np.testing.assert_allclose(post.var, 2.0)

    def test_length_mismatch(self):
        """Test mismatched inputs and observations."""
        with pytest.raises(ValueError):
            ConditionedGp.fit(ZeroMean(), SquaredExponential(), [0.0, 1.0], [1.0])


class TestSampling:
    """Test Gaussian sampling."""

    def test_prior_shapes_and_determinism(self):
        """Test shapes and seed reproducibility."""
        kernel = SquaredExponential() + WhiteNoise(0.01)
        t = np.linspace(0, 1, 6)
        single = sample_prior(ZeroMean(), kernel, t, seed=1)
        many = sample_prior(ZeroMean(), kernel, t, seed=1, n=4)
        assert single.shape == (6,) and many.shape == (4, 6)
        np.testing.assert_allclose(single, many[0], rtol=1e-12, atol=1e-12)
        assert not np.array_equal(single, sample_prior(ZeroMean(), kernel, t, seed=2))

    def test_moments(self):
        """Test sample mean and covariance of a 2-d Gaussian."""
        cov = np.array([[1.0, 0.6], [0.6, 2.0]])
        draws = sample_gaussian(np.array([1.0, -1.0]), cov, 40000, seed=5)
        np.testing.assert_allclose(draws.mean(axis=0), [1.0, -1.0], atol=0.05)
        np.testing.assert_allclose(np.cov(draws.T), cov, atol=0.06)
