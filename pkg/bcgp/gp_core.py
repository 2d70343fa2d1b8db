"""Gaussian-process machinery: kernels, means, Cholesky conditioning, NLL and sampling."""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cholesky, cho_solve, solve_triangular

from .errors import ConditioningError
from .rng import make_rng

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))
JITTER_START = 1e-10
JITTER_STOP = 1e-4


@dataclass(frozen=True)
class Hyperparameter:
    """A named model parameter; positive ones are optimized in log space."""
    name: str
    value: float
    positive: bool = False


def _inputs(t) -> np.ndarray:
    return np.atleast_1d(np.asarray(t, dtype=float)).ravel()


def _take(values: Sequence[float], count: int) -> Tuple[List[float], List[float]]:
    values = list(values)
    if len(values) < count:
        raise ValueError(f"expected {count} parameter values, got {len(values)}")
    return values[:count], values[count:]


class Kernel(ABC):
    """Covariance function over scalar inputs.

    ``kernel(t)`` is the auto-covariance of a training set and includes any
    white-noise term; ``kernel(t, t2)`` is a cross-covariance and never does.
    """

    def __call__(self, t, t2=None) -> np.ndarray:
        t = _inputs(t)
        if t2 is None:
            return self.auto(t)
        return self.cross(t, _inputs(t2))

    @abstractmethod
    def cross(self, t: np.ndarray, t2: np.ndarray) -> np.ndarray:
        """Latent covariance between two input sets."""

    def auto(self, t: np.ndarray) -> np.ndarray:
        return self.cross(t, t)

    @abstractmethod
    def diag(self, t: np.ndarray) -> np.ndarray:
        """Latent prior variance at each input."""

    @property
    def noise_variance(self) -> float:
        return 0.0

    @abstractmethod
    def hyperparameters(self) -> List[Hyperparameter]:
        """Named parameters in a fixed order."""

    @abstractmethod
    def with_values(self, values: Sequence[float]) -> "Kernel":
        """Copy with parameters replaced in :meth:`hyperparameters` order."""

    def __add__(self, other: "Kernel") -> "SumKernel":
        left = self.parts if isinstance(self, SumKernel) else (self,)
        right = other.parts if isinstance(other, SumKernel) else (other,)
        return SumKernel(left + right)


class StationaryKernel(Kernel):
    """Kernel depending on inputs only through τ = t − t̄."""

    @abstractmethod
    def evaluate(self, tau: np.ndarray) -> np.ndarray:
        """k(τ)."""

    def cross(self, t: np.ndarray, t2: np.ndarray) -> np.ndarray:
        return self.evaluate(t[:, None] - t2[None, :])

    def diag(self, t: np.ndarray) -> np.ndarray:
        return np.full(t.shape, float(self.evaluate(np.zeros(1))[0]))


@dataclass(frozen=True)
class SquaredExponential(StationaryKernel):
    """k(τ) = σ² exp(−τ² / 2ℓ²)."""
    variance: float = 1.0
    lengthscale: float = 1.0

    def evaluate(self, tau: np.ndarray) -> np.ndarray:
        return self.variance * np.exp(-0.5 * (tau / self.lengthscale) ** 2)

    def hyperparameters(self) -> List[Hyperparameter]:
        return [
            Hyperparameter("variance", self.variance, positive=True),
            Hyperparameter("lengthscale", self.lengthscale, positive=True),
        ]

    def with_values(self, values: Sequence[float]) -> "SquaredExponential":
        (variance, lengthscale), rest = _take(values, 2)
        if rest:
            raise ValueError("surplus squared-exponential parameter values")
        return SquaredExponential(float(variance), float(lengthscale))


@dataclass(frozen=True)
class SpectralMixture(StationaryKernel):
    """k(τ) = Σ_q w_q exp(−2π² τ² v_q) cos(2π μ_q τ)."""
    weights: Tuple[float, ...]
    means: Tuple[float, ...]
    variances: Tuple[float, ...]

    def __post_init__(self):
        if not len(self.weights) == len(self.means) == len(self.variances):
            raise ValueError("spectral mixture weights, means and variances differ in length")
        if not self.weights:
            raise ValueError("spectral mixture needs at least one component")

    @property
    def components(self) -> int:
        return len(self.weights)

    def evaluate(self, tau: np.ndarray) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        out = np.zeros_like(tau)
        for w, mu, v in zip(self.weights, self.means, self.variances):
            out = out + w * np.exp(-2.0 * np.pi ** 2 * tau ** 2 * v) * np.cos(2.0 * np.pi * mu * tau)
        return out

    def hyperparameters(self) -> List[Hyperparameter]:
        params = []
        for q in range(self.components):
            params.append(Hyperparameter(f"weight_{q}", self.weights[q], positive=True))
            params.append(Hyperparameter(f"mean_{q}", self.means[q], positive=True))
            params.append(Hyperparameter(f"variance_{q}", self.variances[q], positive=True))
        return params

    def with_values(self, values: Sequence[float]) -> "SpectralMixture":
        flat, rest = _take(values, 3 * self.components)
        if rest:
            raise ValueError("surplus spectral mixture parameter values")
        return SpectralMixture(
            weights=tuple(float(v) for v in flat[0::3]),
            means=tuple(float(v) for v in flat[1::3]),
            variances=tuple(float(v) for v in flat[2::3]),
        )


@dataclass(frozen=True)
class WhiteNoise(Kernel):
    """Observation noise σ_n² on the training diagonal."""
    noise: float = 0.1

    def cross(self, t: np.ndarray, t2: np.ndarray) -> np.ndarray:
        return np.zeros((t.size, t2.size))

    def auto(self, t: np.ndarray) -> np.ndarray:
        return self.noise * np.eye(t.size)

    def diag(self, t: np.ndarray) -> np.ndarray:
        return np.zeros(t.shape)

    @property
    def noise_variance(self) -> float:
        return self.noise

    def hyperparameters(self) -> List[Hyperparameter]:
        return [Hyperparameter("noise", self.noise, positive=True)]

    def with_values(self, values: Sequence[float]) -> "WhiteNoise":
        (noise,), rest = _take(values, 1)
        if rest:
            raise ValueError("surplus white-noise parameter values")
        return WhiteNoise(float(noise))


@dataclass(frozen=True)
class SumKernel(Kernel):
    """Sum of kernels; parameters are prefixed with the part index."""
    parts: Tuple[Kernel, ...]

    def cross(self, t: np.ndarray, t2: np.ndarray) -> np.ndarray:
        return sum(p.cross(t, t2) for p in self.parts)

    def auto(self, t: np.ndarray) -> np.ndarray:
        return sum(p.auto(t) for p in self.parts)

    def diag(self, t: np.ndarray) -> np.ndarray:
        return sum(p.diag(t) for p in self.parts)

    @property
    def noise_variance(self) -> float:
        return float(sum(p.noise_variance for p in self.parts))

    def hyperparameters(self) -> List[Hyperparameter]:
        return [
            Hyperparameter(f"{i}.{h.name}", h.value, h.positive)
            for i, part in enumerate(self.parts)
            for h in part.hyperparameters()
        ]

    def with_values(self, values: Sequence[float]) -> "SumKernel":
        rest = list(values)
        parts = []
        for part in self.parts:
            mine, rest = _take(rest, len(part.hyperparameters()))
            parts.append(part.with_values(mine))
        if rest:
            raise ValueError("surplus kernel parameter values")
        return SumKernel(tuple(parts))


class MeanFunction(ABC):
    """Mean function m(t) of the base GP."""

    @abstractmethod
    def __call__(self, t) -> np.ndarray:
        """Evaluate m at each input."""

    @abstractmethod
    def hyperparameters(self) -> List[Hyperparameter]:
        """Named parameters."""

    @abstractmethod
    def with_values(self, values: Sequence[float]) -> "MeanFunction":
        """Copy with parameters replaced."""


@dataclass(frozen=True)
class ZeroMean(MeanFunction):
    """m(t) = 0."""

    def __call__(self, t) -> np.ndarray:
        return np.zeros(_inputs(t).shape)

    def hyperparameters(self) -> List[Hyperparameter]:
        return []

    def with_values(self, values: Sequence[float]) -> "ZeroMean":
        if len(values):
            raise ValueError("zero mean takes no parameters")
        return self


@dataclass(frozen=True)
class ConstantMean(MeanFunction):
    """m(t) = c."""
    value: float = 0.0

    def __call__(self, t) -> np.ndarray:
        return np.full(_inputs(t).shape, self.value)

    def hyperparameters(self) -> List[Hyperparameter]:
        return [Hyperparameter("value", self.value)]

    def with_values(self, values: Sequence[float]) -> "ConstantMean":
        (value,), rest = _take(values, 1)
        if rest:
            raise ValueError("surplus constant-mean parameter values")
        return ConstantMean(float(value))


@dataclass(frozen=True, eq=False)
class GaussianPosterior:
    """Posterior mean and (co)variance of the latent process at test inputs."""
    t: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    cov: Optional[np.ndarray] = None

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.var)


def gram(kernel: Kernel, t, t2=None) -> np.ndarray:
    """Gram matrix k(t_i, t̄_j); the square training form when ``t2`` is omitted."""
    return kernel(t, t2)


def cholesky_with_jitter(matrix: np.ndarray) -> Tuple[np.ndarray, float]:
    """Lower Cholesky factor, escalating diagonal jitter only when needed.

    Returns the factor and the jitter that was added.
    """
    matrix = np.asarray(matrix, dtype=float)
    if not np.all(np.isfinite(matrix)):
        raise ConditioningError("Gram matrix has non-finite entries")
    n = matrix.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    scale = float(np.mean(np.diag(matrix)))
    if not scale > 0:
        scale = 1.0
    levels = [0.0]
    level = JITTER_START
    while level <= JITTER_STOP * (1 + 1e-9):
        levels.append(level * scale)
        level *= 10.0
    attempted = []
    for jitter in levels:
        try:
            chol = cholesky(matrix + jitter * np.eye(n), lower=True, check_finite=False)
        except LinAlgError:
            attempted.append(jitter)
            logger.debug("Cholesky failed with jitter %.3e, escalating", jitter)
            continue
        if jitter > 0:
            logger.debug("Cholesky succeeded with jitter %.3e", jitter)
        return chol, jitter
    raise ConditioningError("Gram matrix is not positive definite", attempted)


@dataclass(frozen=True, eq=False)
class ConditionedGp:
    """A GP conditioned on training data through one shared Cholesky factor."""
    mean: MeanFunction
    kernel: Kernel
    t_train: np.ndarray
    x_train: np.ndarray
    chol: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    jitter: float = 0.0

    @classmethod
    def fit(cls, mean: MeanFunction, kernel: Kernel, t, x) -> "ConditionedGp":
        t = _inputs(t) if np.size(t) else np.zeros(0)
        x = _inputs(x) if np.size(x) else np.zeros(0)
        if t.shape != x.shape:
            raise ValueError(f"inputs and observations differ in length: {t.size} vs {x.size}")
        chol, jitter = cholesky_with_jitter(kernel(t)) if t.size else (np.zeros((0, 0)), 0.0)
        residual = x - mean(t) if t.size else np.zeros(0)
        alpha = cho_solve((chol, True), residual, check_finite=False) if t.size else np.zeros(0)
        return cls(mean, kernel, t, x, chol, alpha, jitter)

    @property
    def n_train(self) -> int:
        return self.t_train.size

    def nll(self) -> float:
        """Gaussian negative log-likelihood of the training observations."""
        n = self.n_train
        if n == 0:
            return 0.0
        residual = self.x_train - self.mean(self.t_train)
        quad = float(residual @ self.alpha)
        log_det = 2.0 * float(np.sum(np.log(np.diag(self.chol))))
        return 0.5 * n * LOG_2PI + 0.5 * quad + 0.5 * log_det

    def predict(self, t_test, full_cov: bool = True) -> GaussianPosterior:
        """Latent posterior at ``t_test`` (no observation noise)."""
        t_test = _inputs(t_test)
        prior_mean = self.mean(t_test)
        if self.n_train == 0:
            mean = prior_mean
            cov = self.kernel.cross(t_test, t_test) if full_cov else None
            var = self.kernel.diag(t_test)
        else:
            cross = self.kernel.cross(t_test, self.t_train)
            mean = prior_mean + cross @ self.alpha
            v = solve_triangular(self.chol, cross.T, lower=True, check_finite=False)
            var = self.kernel.diag(t_test) - np.sum(v * v, axis=0)
            cov = self.kernel.cross(t_test, t_test) - v.T @ v if full_cov else None
        if cov is not None:
            cov = 0.5 * (cov + cov.T)
            np.fill_diagonal(cov, np.maximum(np.diag(cov), 0.0))
        return GaussianPosterior(t_test, mean, np.maximum(var, 0.0), cov)


def nll_gaussian(mean: MeanFunction, kernel: Kernel, t, x) -> float:
    """(n/2)log 2π + ½(x−μ)ᵀΣ⁻¹(x−μ) + ½ log|Σ| via Cholesky."""
    return ConditionedGp.fit(mean, kernel, t, x).nll()


def posterior(mean: MeanFunction, kernel: Kernel, t_train, x_train, t_test) -> GaussianPosterior:
    """Condition the GP on (t_train, x_train) and evaluate it at t_test."""
    return ConditionedGp.fit(mean, kernel, t_train, x_train).predict(t_test)


def sample_gaussian(mean: np.ndarray, cov: np.ndarray, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` samples μ + L·z, shape (n, d)."""
    chol, _ = cholesky_with_jitter(cov)
    z = make_rng(seed).standard_normal((n, np.size(mean)))
    return np.asarray(mean, dtype=float)[None, :] + z @ chol.T


def sample_prior(mean: MeanFunction, kernel: Kernel, t, seed: int, n: Optional[int] = None) -> np.ndarray:
    """Draw from the GP prior at ``t``; a vector when ``n`` is None, else (n, len(t))."""
    t = _inputs(t)
    draws = sample_gaussian(mean(t), kernel(t), 1 if n is None else n, seed)
    return draws[0] if n is None else draws
