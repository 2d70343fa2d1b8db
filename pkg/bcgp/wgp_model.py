"""The warped GP: warped NLL, closed-form prediction, Gauss-Hermite moments and sampling.

The observations y are passed through the warping φ and modelled by a base GP.
Medians and percentile bounds follow from applying φ⁻¹ to the Gaussian
quantiles; expectations under the warped law are computed with a k-point
Gauss-Hermite rule over the base-GP marginal.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.polynomial.hermite import hermgauss
from scipy.stats import norm

from .errors import ConvergenceError, QuadratureRangeError, SingularityError, WarpingDomainError
from .gp_core import ConditionedGp, Hyperparameter, Kernel, MeanFunction, sample_gaussian
from .optimize import ParamSpace
from .warping import LOG_THRESHOLD, AffineWarping, BoxCoxWarping, Warping

logger = logging.getLogger(__name__)

DEFAULT_GH_POINTS = 20
DEFAULT_LEVEL = 0.95
PRIOR_BOUND = 30.0


def _vector(values) -> np.ndarray:
    return np.atleast_1d(np.asarray(values, dtype=float)).ravel()


@dataclass(frozen=True, eq=False)
class WarpedGpModel:
    """Warping, base-GP mean and kernel, and the training data in observation units."""
    warping: Warping
    mean: MeanFunction
    kernel: Kernel
    t: np.ndarray
    y: np.ndarray
    fixed: FrozenSet[str] = frozenset()

    def __post_init__(self):
        t = _vector(self.t) if np.size(self.t) else np.zeros(0)
        y = _vector(self.y) if np.size(self.y) else np.zeros(0)
        if t.shape != y.shape:
            raise ValueError(f"training inputs and observations differ in length: {t.size} vs {y.size}")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "fixed", frozenset(self.fixed))
        unknown = self.fixed - set(self.names)
        if unknown:
            raise ValueError(f"fixed names not among model parameters: {sorted(unknown)}")

    def hyperparameters(self) -> List[Hyperparameter]:
        """All parameters, named ``warping.*``, ``mean.*`` and ``kernel.*``."""
        params = []
        for prefix, part in (("warping", self.warping), ("mean", self.mean), ("kernel", self.kernel)):
            params.extend(
                Hyperparameter(f"{prefix}.{h.name}", h.value, h.positive) for h in part.hyperparameters()
            )
        return params

    @property
    def names(self) -> List[str]:
        return [h.name for h in self.hyperparameters()]

    def with_values(self, values: Sequence[float]) -> "WarpedGpModel":
        """Copy with every parameter replaced, in :meth:`hyperparameters` order."""
        values = list(values)
        counts = [len(p.hyperparameters()) for p in (self.warping, self.mean, self.kernel)]
        if len(values) != sum(counts):
            raise ValueError(f"expected {sum(counts)} parameter values, got {len(values)}")
        w_vals = values[:counts[0]]
        m_vals = values[counts[0]:counts[0] + counts[1]]
        k_vals = values[counts[0] + counts[1]:]
        return WarpedGpModel(
            warping=self.warping.with_values(w_vals),
            mean=self.mean.with_values(m_vals),
            kernel=self.kernel.with_values(k_vals),
            t=self.t,
            y=self.y,
            fixed=self.fixed,
        )

    def shift_collapsed(self) -> bool:
        """Whether free stages push a training value to or below zero ahead of a Box-Cox stage.

        Such points sit on the boundary where the warped likelihood is
        unbounded, so objectives treat them as infeasible.
        """
        if self.y.size == 0:
            return False
        names = self.names
        values = self.y
        offset = 0
        free = False
        for stage in self.warping.stages:
            if free and isinstance(stage, BoxCoxWarping) and np.min(values) <= 0:
                return True
            count = len(stage.hyperparameters())
            free = free or any(name not in self.fixed for name in names[offset:offset + count])
            offset += count
            try:
                values = np.asarray(stage.forward(values), dtype=float)
            except (SingularityError, WarpingDomainError):
                return False
        return False

    @cached_property
    def warped(self) -> np.ndarray:
        """φ(y) for the training observations."""
        return np.asarray(self.warping.forward(self.y), dtype=float) if self.y.size else np.zeros(0)

    @cached_property
    def conditioned(self) -> ConditionedGp:
        """Base GP conditioned on the warped training data (one shared factorization)."""
        return ConditionedGp.fit(self.mean, self.kernel, self.t, self.warped)

    def marginal(self, t_test, include_noise: bool = True) -> Tuple[np.ndarray, np.ndarray]:
        """Base-GP posterior mean and variance at ``t_test``."""
        post = self.conditioned.predict(t_test, full_cov=False)
        var = post.var + self.kernel.noise_variance if include_noise else post.var
        return post.mean, var


@dataclass(frozen=True, eq=False)
class PredictiveSummary:
    """Per-test-point median, percentile interval, mode and GH moments."""
    t: np.ndarray
    median: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    mode: np.ndarray
    gh_mean: np.ndarray
    gh_var: np.ndarray
    level: float
    gh_points: int
    columns: Tuple[str, ...] = field(
        default=("t", "median", "lower", "upper", "mode", "gh_mean", "gh_var"), repr=False
    )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({name: getattr(self, name) for name in self.columns})

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.10g")

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "gh_points": self.gh_points,
            "points": [
                {k: (None if isinstance(v, float) and np.isnan(v) else v) for k, v in row.items()}
                for row in self.to_frame().to_dict(orient="records")
            ],
        }


def nll_warped(model: WarpedGpModel) -> float:
    """Gaussian NLL of φ(y) minus Σ log|dφ(y_i)/dy|."""
    if model.y.size == 0:
        return 0.0
    jacobian = float(np.sum(model.warping.log_abs_deriv(model.y)))
    return model.conditioned.nll() - jacobian


def _inverse_at(warping: Warping, x: np.ndarray, t: np.ndarray, what: str) -> np.ndarray:
    """φ⁻¹(x), naming the offending test input when a point is singular."""
    try:
        return np.asarray(warping.inverse(x), dtype=float)
    except (SingularityError, WarpingDomainError) as err:
        for t_i, x_i in zip(t, x):
            try:
                warping.inverse(float(x_i))
            except (SingularityError, WarpingDomainError):
                raise type(err)(f"{what} at t={t_i!r}: {err}") from err
        raise


def gh_expectation(
    warping: Warping,
    m: np.ndarray,
    var: np.ndarray,
    h: Callable[[np.ndarray], np.ndarray] = lambda y: y,
    k: int = DEFAULT_GH_POINTS,
) -> np.ndarray:
    """E[h(φ⁻¹(x))] for x ~ N(m, var) with the k-point Gauss-Hermite rule."""
    if k < 1:
        raise ValueError(f"gh_points must be a positive integer, got {k}")
    nodes, weights = hermgauss(k)
    m = _vector(m)
    sigma = np.sqrt(_vector(var))
    x = np.sqrt(2.0) * sigma[:, None] * nodes[None, :] + m[:, None]
    try:
        y = np.asarray(warping.inverse(x), dtype=float)
    except (SingularityError, WarpingDomainError) as err:
        for node in x.ravel():
            try:
                warping.inverse(float(node))
            except (SingularityError, WarpingDomainError):
                raise QuadratureRangeError("Gauss-Hermite node outside the inverse warping's domain",
                                           float(node)) from err
        raise
    return (h(y) @ weights) / np.sqrt(np.pi)


def _collapse_affine(stages: Sequence[Warping]) -> Tuple[float, float]:
    """Collapse affine stages into a single (a, b)."""
    a, b = 0.0, 1.0
    for stage in stages:
        a, b = stage.a + stage.b * a, stage.b * b
    return a, b


def boxcox_mode(lam: float, m: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Mode of φ_λ⁻¹(x), x ~ N(m, k); NaN where the closed form has no positive root."""
    m = _vector(m)
    k = _vector(k)
    if lam < LOG_THRESHOLD:
        return np.exp(m - k)
    base = 1.0 + lam * m
    disc = base ** 2 + 4.0 * k * lam * (lam - 1.0)
    with np.errstate(invalid="ignore"):
        inner = 0.5 * (base + np.sqrt(disc))
        mode = np.where((disc >= 0) & (inner > 0), np.power(np.abs(inner), 1.0 / lam), np.nan)
    return mode


def mode(warping: Warping, m: np.ndarray, var: np.ndarray) -> np.ndarray:
    """Closed-form mode for ``[affine*] boxcox [affine*]`` and pure affine warpings, NaN otherwise."""
    m = _vector(m)
    var = _vector(var)
    stages = warping.stages
    boxcox_at = [i for i, s in enumerate(stages) if isinstance(s, BoxCoxWarping)]
    if any(not isinstance(s, (AffineWarping, BoxCoxWarping)) for s in stages) or len(boxcox_at) > 1:
        return np.full(m.shape, np.nan)
    if not boxcox_at:
        return np.asarray(warping.inverse(m), dtype=float)
    j = boxcox_at[0]
    pre_a, pre_b = _collapse_affine(stages[:j])
    post_a, post_b = _collapse_affine(stages[j + 1:])
    u_mode = boxcox_mode(stages[j].lam, (m - post_a) / post_b, var / post_b ** 2)
    return (u_mode - pre_a) / pre_b


def predict(
    model: WarpedGpModel,
    t_test,
    level: float = DEFAULT_LEVEL,
    gh_points: int = DEFAULT_GH_POINTS,
    include_noise: bool = True,
) -> PredictiveSummary:
    """Median, ``level`` interval, mode and GH mean/variance at each test input."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"percentile level must lie in (0, 1), got {level}")
    t_test = _vector(t_test)
    m, var = model.marginal(t_test, include_noise)
    sigma = np.sqrt(var)
    z = norm.ppf(0.5 + 0.5 * level)
    warping = model.warping
    median = _inverse_at(warping, m, t_test, "median")
    lower = _inverse_at(warping, m - z * sigma, t_test, "lower bound")
    upper = _inverse_at(warping, m + z * sigma, t_test, "upper bound")
    if warping.scale_sign() < 0:
        lower, upper = upper, lower
    first = gh_expectation(warping, m, var, lambda y: y, gh_points)
    second = gh_expectation(warping, m, var, lambda y: y * y, gh_points)
    return PredictiveSummary(
        t=t_test,
        median=median,
        lower=lower,
        upper=upper,
        mode=mode(warping, m, var),
        gh_mean=first,
        gh_var=np.maximum(second - first ** 2, 0.0),
        level=level,
        gh_points=gh_points,
    )


def predictive_log_density(model: WarpedGpModel, t, y) -> Union[float, np.ndarray]:
    """log N(φ(y); μ, σ² + σ_n²) + log|dφ(y)/dy| at each (t, y) pair."""
    scalar = np.ndim(y) == 0
    t = _vector(t)
    y = _vector(y)
    if t.shape != y.shape:
        raise ValueError(f"test inputs and values differ in length: {t.size} vs {y.size}")
    m, var = model.marginal(t, include_noise=True)
    x = np.asarray(model.warping.forward(y), dtype=float)
    out = norm.logpdf(x, loc=m, scale=np.sqrt(var)) + np.asarray(model.warping.log_abs_deriv(y), dtype=float)
    return float(out[0]) if scalar else out


def sample_paths(model: WarpedGpModel, t_test, n_paths: int, seed: int, include_noise: bool = True) -> np.ndarray:
    """φ⁻¹ applied to base-GP posterior draws; shape (n_paths, len(t_test))."""
    t_test = _vector(t_test)
    post = model.conditioned.predict(t_test, full_cov=True)
    cov = post.cov
    if include_noise:
        cov = cov + model.kernel.noise_variance * np.eye(t_test.size)
    draws = sample_gaussian(post.mean, cov, n_paths, seed)
    return np.asarray(model.warping.inverse(draws), dtype=float)


def _bracket_start(warping: Warping) -> float:
    for candidate in (1.0, 0.5, 2.0, -1.0, 10.0, -10.0, 100.0, -100.0, 1e4, -1e4):
        try:
            if np.isfinite(warping.forward(candidate)):
                return candidate
        except (SingularityError, WarpingDomainError):
            continue
    raise WarpingDomainError("could not find a point in the warping's domain to start bracketing")


def _evaluate_masked(func: Callable, y: np.ndarray) -> np.ndarray:
    """func(y) element-wise, NaN where y is outside the domain."""
    try:
        return np.asarray(func(y), dtype=float)
    except (SingularityError, WarpingDomainError):
        out = np.empty_like(y)
        for i, value in enumerate(y):
            try:
                out[i] = func(float(value))
            except (SingularityError, WarpingDomainError):
                out[i] = np.nan
        return out


def invert_numeric(
    warping: Warping,
    x,
    tol: float = 1e-10,
    max_iter: int = 100,
    full_output: bool = False,
):
    """Invert φ by doubling-search bracketing and safeguarded Newton-Raphson.

    Returns ŷ with |φ(ŷ) − x| ≤ tol, plus the number of Newton iterations when
    ``full_output`` is set.
    """
    scalar = np.ndim(x) == 0
    target = _vector(x)
    sign = warping.scale_sign()

    def g(y):
        return sign * (_evaluate_masked(warping.forward, y) - target)

    start = _bracket_start(warping)
    lo = np.full(target.shape, start)
    hi = lo.copy()
    g_lo = g(lo)
    g_hi = g_lo.copy()
    step_lo = np.ones_like(lo)
    step_hi = np.ones_like(hi)
    for _ in range(400):
        grow_hi = g_hi < 0
        grow_lo = g_lo > 0
        if not (grow_hi.any() or grow_lo.any()):
            break
        cand = np.where(grow_hi, hi + step_hi, hi)
        g_cand = g(cand)
        ok = grow_hi & np.isfinite(g_cand)
        hi = np.where(ok, cand, hi)
        g_hi = np.where(ok, g_cand, g_hi)
        step_hi = np.where(ok, 2 * step_hi, np.where(grow_hi, 0.5 * step_hi, step_hi))
        cand = np.where(grow_lo, lo - step_lo, lo)
        g_cand = g(cand)
        ok = grow_lo & np.isfinite(g_cand)
        lo = np.where(ok, cand, lo)
        g_lo = np.where(ok, g_cand, g_lo)
        step_lo = np.where(ok, 2 * step_lo, np.where(grow_lo, 0.5 * step_lo, step_lo))
    else:
        raise ConvergenceError("bracketing search did not enclose the target",
                               float(np.nanmax(np.abs(np.minimum(g_lo, 0) + np.maximum(g_hi, 0)))))

    y = 0.5 * (lo + hi)
    residual = np.abs(g(y))
    done = (residual <= tol) | (g_lo == 0) | (g_hi == 0)
    y = np.where(g_lo == 0, lo, np.where(g_hi == 0, hi, y))
    iterations = 0
    while not done.all():
        if iterations >= max_iter:
            raise ConvergenceError(f"Newton-Raphson did not converge in {max_iter} iterations",
                                   float(np.max(residual[~done])))
        iterations += 1
        g_y = g(y)
        slope = np.exp(_evaluate_masked(warping.log_abs_deriv, y))
        lo = np.where(~done & (g_y < 0), y, lo)
        hi = np.where(~done & (g_y > 0), y, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = y - g_y / slope
        inside = np.isfinite(newton) & (newton > np.minimum(lo, hi)) & (newton < np.maximum(lo, hi))
        y = np.where(done, y, np.where(inside, newton, 0.5 * (lo + hi)))
        residual = np.abs(g(y))
        collapsed = np.abs(hi - lo) <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(y))
        done = done | (residual <= tol) | collapsed
    result = float(y[0]) if scalar else y
    return (result, iterations) if full_output else result


def param_space(model: WarpedGpModel) -> ParamSpace:
    """Unconstrained parameter space over the model's free parameters."""
    return ParamSpace(model.hyperparameters(), model.fixed)


def negative_log_likelihood(model: WarpedGpModel, space: ParamSpace) -> Callable[[np.ndarray], float]:
    """Objective for minimizers: unconstrained vector → warped NLL, +inf where the shift collapses."""
    def objective(theta: np.ndarray) -> float:
        candidate = model.with_values(space.decode(theta))
        if candidate.shift_collapsed():
            return np.inf
        return nll_warped(candidate)
    return objective


def log_posterior(
    model: WarpedGpModel, space: ParamSpace, bound: float = PRIOR_BOUND
) -> Callable[[np.ndarray], float]:
    """Log-probability for MCMC: −NLL plus the log-prior.

    The prior is flat on the box |θ_j| ≤ bound, except that Box-Cox λ is
    flat in its natural scale, which adds its encoded value θ = log λ.
    """
    lam_at = [j for j, name in enumerate(space.names) if name.startswith("warping.") and name.endswith(".lambda")]

    def logp(theta: np.ndarray) -> float:
        theta = np.asarray(theta, dtype=float)
        if np.any(np.abs(theta) > bound):
            return -np.inf
        candidate = model.with_values(space.decode(theta))
        if candidate.shift_collapsed():
            return -np.inf
        return -nll_warped(candidate) + float(np.sum(theta[lam_at]))
    return logp


def fitted(model: WarpedGpModel, space: ParamSpace, theta: np.ndarray) -> WarpedGpModel:
    """The model at an unconstrained parameter vector."""
    return model.with_values(space.decode(theta))
