"""Invertible coordinate-wise warpings: Box-Cox, affine and their compositions.

Every warping evaluates forward, inverse and log|dφ/dy| exactly, element-wise
over scalars or numpy arrays. Warpings are immutable; a changed parameter
vector produces a new instance through :meth:`Warping.with_values`.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np

from .errors import SingularityError, WarpingDomainError
from .gp_core import Hyperparameter
from .models import AffineStage, BoxCoxStage, WarpingStage

ArrayLike = Union[float, np.ndarray]

# Below this λ the Box-Cox transform is evaluated as the exact logarithm.
LOG_THRESHOLD = 1e-7
SCALE_GUARD = 1e-12
_EPS = np.finfo(float).eps


def _as_array(value: ArrayLike) -> np.ndarray:
    return np.asarray(value, dtype=float)


def _out(array: np.ndarray) -> ArrayLike:
    return float(array) if array.ndim == 0 else array


def _first(values: np.ndarray, mask: np.ndarray) -> float:
    return float(np.asarray(values)[mask].flat[0])


class Warping(ABC):
    """Strictly monotone coordinate-wise map φ from observations to the base GP."""

    @abstractmethod
    def forward(self, y: ArrayLike) -> ArrayLike:
        """Evaluate φ(y)."""

    @abstractmethod
    def inverse(self, x: ArrayLike) -> ArrayLike:
        """Evaluate φ⁻¹(x)."""

    @abstractmethod
    def log_abs_deriv(self, y: ArrayLike) -> ArrayLike:
        """Evaluate log|dφ/dy| at y."""

    @abstractmethod
    def scale_sign(self) -> int:
        """Return +1 if φ is increasing, -1 if decreasing."""

    @abstractmethod
    def hyperparameters(self) -> List[Hyperparameter]:
        """Named parameters of the warping."""

    @abstractmethod
    def with_values(self, values: Sequence[float]) -> "Warping":
        """Return a copy with parameters replaced in :meth:`hyperparameters` order."""

    @property
    def stages(self) -> Tuple["Warping", ...]:
        return (self,)


@dataclass(frozen=True)
class BoxCoxWarping(Warping):
    """Signed Box-Cox power transform φ_λ(y) = (sgn(y)|y|^λ − 1)/λ.

    For λ below ``LOG_THRESHOLD`` the transform is the natural logarithm and
    its domain shrinks to y > 0. ``sgn(0)`` is taken as 0, so φ_λ(0) = −1/λ.
    """

    lam: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise WarpingDomainError(f"Box-Cox lambda must be finite and >= 0, got {self.lam!r}")

    @property
    def is_log(self) -> bool:
        return self.lam < LOG_THRESHOLD

    def _check_log_domain(self, y: np.ndarray) -> None:
        bad = ~(y > 0)
        if np.any(bad):
            raise WarpingDomainError(f"log warping requires y > 0, got {_first(y, bad)!r}")

    def forward(self, y: ArrayLike) -> ArrayLike:
        y = _as_array(y)
        if self.is_log:
            self._check_log_domain(y)
            return _out(np.log(y))
        lam = self.lam
        with np.errstate(divide="ignore"):
            log_abs = np.log(np.abs(y))
        # expm1 keeps (|y|^λ − 1) accurate for small λ
        positive = np.expm1(lam * log_abs)
        negative = -np.exp(lam * log_abs) - 1.0
        out = np.where(y > 0, positive, np.where(y < 0, negative, -1.0))
        return _out(out / lam)

    def inverse(self, x: ArrayLike) -> ArrayLike:
        x = _as_array(x)
        if self.is_log:
            with np.errstate(over="ignore"):
                return _out(np.exp(x))
        lam = self.lam
        s = lam * x + 1.0
        singular = np.abs(s) <= _EPS
        if np.any(singular):
            raise SingularityError("Box-Cox inverse is singular at lambda*x + 1 = 0", _first(x, singular))
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            log_s = np.where(s > 0, np.log1p(lam * x), np.log(np.abs(s)))
            out = np.sign(s) * np.exp(log_s / lam)
        return _out(out)

    def log_abs_deriv(self, y: ArrayLike) -> ArrayLike:
        y = _as_array(y)
        if self.is_log:
            self._check_log_domain(y)
            return _out(-np.log(y))
        if self.lam == 1.0:
            return _out(np.zeros_like(y))
        at_zero = y == 0
        if np.any(at_zero):
            raise SingularityError(
                f"Box-Cox derivative is {'unbounded' if self.lam < 1 else 'zero'} at y = 0 "
                f"for lambda={self.lam!r}",
                0.0,
            )
        return _out((self.lam - 1.0) * np.log(np.abs(y)))

    def scale_sign(self) -> int:
        return 1

    def hyperparameters(self) -> List[Hyperparameter]:
        return [Hyperparameter("lambda", self.lam, positive=True)]

    def with_values(self, values: Sequence[float]) -> "BoxCoxWarping":
        (lam,) = values
        return BoxCoxWarping(float(lam))


@dataclass(frozen=True)
class AffineWarping(Warping):
    """Affine map φ(y) = a + b·y; a shift when b = 1, a scale when a = 0."""

    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise WarpingDomainError(f"affine parameters must be finite, got a={self.a!r}, b={self.b!r}")
        if abs(self.b) <= SCALE_GUARD:
            raise WarpingDomainError(f"affine scale must satisfy |b| > {SCALE_GUARD}, got {self.b!r}")

    def forward(self, y: ArrayLike) -> ArrayLike:
        return _out(self.a + self.b * _as_array(y))

    def inverse(self, x: ArrayLike) -> ArrayLike:
        return _out((_as_array(x) - self.a) / self.b)

    def log_abs_deriv(self, y: ArrayLike) -> ArrayLike:
        return _out(np.full_like(_as_array(y), np.log(abs(self.b))))

    def scale_sign(self) -> int:
        return 1 if self.b > 0 else -1

    def hyperparameters(self) -> List[Hyperparameter]:
        return [Hyperparameter("a", self.a), Hyperparameter("b", self.b)]

    def with_values(self, values: Sequence[float]) -> "AffineWarping":
        a, b = values
        return AffineWarping(float(a), float(b))


@dataclass(frozen=True)
class ComposedWarping(Warping):
    """Composition of elementary warpings, applied first-to-last going forward."""

    parts: Tuple[Warping, ...]

    def __post_init__(self):
        if not self.parts:
            raise ValueError("a composed warping needs at least one stage")

    @property
    def stages(self) -> Tuple[Warping, ...]:
        return self.parts

    def forward(self, y: ArrayLike) -> ArrayLike:
        value = y
        for stage in self.parts:
            value = stage.forward(value)
        return value

    def inverse(self, x: ArrayLike) -> ArrayLike:
        value = x
        for stage in reversed(self.parts):
            value = stage.inverse(value)
        return value

    def log_abs_deriv(self, y: ArrayLike) -> ArrayLike:
        # chain rule: each stage's derivative at the running intermediate value
        value = y
        total = np.zeros_like(_as_array(y))
        for stage in self.parts:
            total = total + stage.log_abs_deriv(value)
            value = stage.forward(value)
        return _out(_as_array(total))

    def scale_sign(self) -> int:
        sign = 1
        for stage in self.parts:
            sign *= stage.scale_sign()
        return sign

    def hyperparameters(self) -> List[Hyperparameter]:
        return [
            Hyperparameter(f"{i}.{p.name}", p.value, p.positive)
            for i, stage in enumerate(self.parts)
            for p in stage.hyperparameters()
        ]

    def with_values(self, values: Sequence[float]) -> "ComposedWarping":
        values = list(values)
        rebuilt = []
        for stage in self.parts:
            n = len(stage.hyperparameters())
            rebuilt.append(stage.with_values(values[:n]))
            values = values[n:]
        if values:
            raise ValueError(f"{len(values)} surplus warping parameter values")
        return ComposedWarping(tuple(rebuilt))


def identity() -> AffineWarping:
    """The identity warping, Affine(0, 1)."""
    return AffineWarping(0.0, 1.0)


def compose(warpings: Sequence[Warping]) -> ComposedWarping:
    """Compose warpings in forward order, flattening nested compositions."""
    if not warpings:
        raise ValueError("compose() requires a non-empty list of warpings")
    flat: List[Warping] = []
    for w in warpings:
        flat.extend(w.stages)
    return ComposedWarping(tuple(flat))


def lognormal_moment(n: float, m: ArrayLike, k: ArrayLike) -> ArrayLike:
    """E[yⁿ] = exp(n·m + n²·k/2) for y = exp(x), x ~ N(m, k)."""
    return _out(np.exp(n * _as_array(m) + 0.5 * n * n * _as_array(k)))


def warping_from_spec(stages: Sequence[WarpingStage]) -> ComposedWarping:
    """Build a warping from its config fragment; an empty list means identity."""
    built: List[Warping] = []
    for stage in stages:
        if isinstance(stage, BoxCoxStage):
            built.append(BoxCoxWarping(stage.params.lambda_))
        elif isinstance(stage, AffineStage):
            built.append(AffineWarping(stage.params.a, stage.params.b))
        else:
            raise ValueError(f"unknown warping stage {stage!r}")
    return compose(built or [identity()])


def warping_to_spec(warping: Warping, fixed: Sequence[Sequence[str]] = ()) -> List[WarpingStage]:
    """Serialize a warping's stages, optionally with per-stage fixed parameter names."""
    specs: List[WarpingStage] = []
    for i, stage in enumerate(warping.stages):
        stage_fixed = list(fixed[i]) if i < len(fixed) else []
        if isinstance(stage, BoxCoxWarping):
            specs.append(BoxCoxStage(kind="boxcox", params={"lambda": stage.lam}, fixed=stage_fixed))
        elif isinstance(stage, AffineWarping):
            specs.append(AffineStage(kind="affine", params={"a": stage.a, "b": stage.b}, fixed=stage_fixed))
        else:
            raise ValueError(f"cannot serialize warping stage {stage!r}")
    return specs
