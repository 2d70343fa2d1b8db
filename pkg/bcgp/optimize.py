"""Hyperparameter search over an unconstrained parameter vector.

Optimizers see a pure ``vector -> float`` objective and stay model-agnostic.
Invalid regions (failed Cholesky, warping domain errors, overflow) evaluate
to +inf for minimizers and -inf for the sampler, so the search routes around
them instead of aborting.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import emcee
import numpy as np
import pandas as pd
from scipy.optimize import minimize

from .errors import BcgpError, InitializationError
from .gp_core import Hyperparameter
from .models import ChainSummary
from .rng import make_rng

logger = logging.getLogger(__name__)
trace_logger = logging.getLogger("bcgp.optimize.trace")

Objective = Callable[[np.ndarray], float]

POSITIVE_FLOOR = 1e-10
FD_STEP = 1e-6
LINE_SEARCH_XTOL = 1e-8
POWELL_SPAN = 5.0
QUANTILE_LEVELS = (0.025, 0.25, 0.5, 0.75, 0.975)
_NUMERIC_ERRORS = (BcgpError, np.linalg.LinAlgError, FloatingPointError, OverflowError, ZeroDivisionError)


class ParamSpace:
    """Encode/decode between named hyperparameters and an unconstrained vector.

    Positive parameters are mapped through log; fixed parameters keep the
    values they had when the space was built and are not part of the vector.
    """

    def __init__(self, params: Sequence[Hyperparameter], fixed: Iterable[str] = ()):
        self._params = list(params)
        fixed = set(fixed)
        all_names = [p.name for p in self._params]
        unknown = fixed - set(all_names)
        if unknown:
            raise ValueError(f"fixed names not among parameters: {sorted(unknown)}")
        self.fixed = frozenset(fixed)
        self._free = [i for i, p in enumerate(self._params) if p.name not in fixed]
        self._positive = np.array([self._params[i].positive for i in self._free], dtype=bool)

    @property
    def names(self) -> List[str]:
        return [self._params[i].name for i in self._free]

    @property
    def dim(self) -> int:
        return len(self._free)

    @property
    def base_values(self) -> List[float]:
        return [p.value for p in self._params]

    def encode(self, values: Optional[Sequence[float]] = None) -> np.ndarray:
        """Natural values (all parameters, default the base ones) → unconstrained free vector."""
        values = np.asarray(self.base_values if values is None else values, dtype=float)
        if values.size != len(self._params):
            raise ValueError(f"expected {len(self._params)} values, got {values.size}")
        free = values[self._free]
        return np.where(self._positive, np.log(np.maximum(free, POSITIVE_FLOOR)), free)

    def natural(self, theta: np.ndarray) -> np.ndarray:
        """Unconstrained vector(s) → natural free values; works row-wise on 2-D input."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape[-1] != self.dim:
            raise ValueError(f"expected vectors of length {self.dim}, got {theta.shape[-1]}")
        with np.errstate(over="ignore"):
            return np.where(self._positive, np.exp(theta), theta)

    def decode(self, theta: np.ndarray) -> List[float]:
        """Unconstrained free vector → natural values for every parameter."""
        values = list(self.base_values)
        for i, v in zip(self._free, self.natural(np.asarray(theta, dtype=float).ravel())):
            values[i] = float(v)
        return values


@dataclass
class OptResult:
    """Best point, its objective value, and the search history."""
    x: np.ndarray
    fun: float
    trajectory: List[Tuple[int, float]]
    message: str
    nfev: int
    method: str
    nit: int = 0

    def trajectory_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.trajectory, columns=["iteration", "value"])


class _TrackedObjective:
    """Counts evaluations, maps failures to +inf and remembers the best point."""

    def __init__(self, func: Objective):
        self.func = func
        self.nfev = 0
        self.best_x: Optional[np.ndarray] = None
        self.best_f = np.inf
        self.last: Tuple[Optional[bytes], float] = (None, np.inf)

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        self.nfev += 1
        try:
            value = float(self.func(x))
        except _NUMERIC_ERRORS as err:
            logger.debug("objective failed at %s: %s", x, err)
            value = np.inf
        if not np.isfinite(value):
            value = np.inf
        if value < self.best_f or self.best_x is None:
            self.best_f = value
            self.best_x = x.copy()
        self.last = (x.tobytes(), value)
        return value

    def value_at(self, x: np.ndarray) -> float:
        key, value = self.last
        return value if key == x.tobytes() else self(x)


def central_difference(objective: _TrackedObjective, step: float = FD_STEP) -> Callable[[np.ndarray], np.ndarray]:
    """Central finite-difference gradient with step ``step * max(1, |x_j|)``.

    Falls back to a one-sided difference when one side is infinite.
    """
    def gradient(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        grad = np.zeros_like(x)
        center = None
        for j in range(x.size):
            h = step * max(1.0, abs(x[j]))
            xp = x.copy()
            xm = x.copy()
            xp[j] += h
            xm[j] -= h
            fp, fm = objective(xp), objective(xm)
            if np.isfinite(fp) and np.isfinite(fm):
                grad[j] = (fp - fm) / (2.0 * h)
                continue
            if center is None:
                center = objective.value_at(x)
            if np.isfinite(fp) and np.isfinite(center):
                grad[j] = (fp - center) / h
            elif np.isfinite(fm) and np.isfinite(center):
                grad[j] = (center - fm) / h
        return grad
    return gradient


def _start(objective: _TrackedObjective, x0) -> Tuple[np.ndarray, float]:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float)).ravel()
    f0 = objective(x0)
    if not np.isfinite(f0):
        raise ValueError("objective is not finite at the starting point")
    return x0, f0


def _recorder(objective: _TrackedObjective, trajectory: List[Tuple[int, float]], method: str):
    def callback(*_args, **_kwargs):
        trajectory.append((len(trajectory), objective.best_f))
        trace_logger.info("%s iteration %d value %.10g nfev %d", method, len(trajectory) - 1,
                          objective.best_f, objective.nfev)
    return callback


def search_box(x, span: float = POWELL_SPAN) -> List[Tuple[float, float]]:
    """Bounds of half-width ``span`` around ``x``, one pair per coordinate."""
    x = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    return [(float(v) - span, float(v) + span) for v in x]


def powell_minimize(
    f: Objective,
    x0,
    tol: float = 1e-10,
    max_iter: Optional[int] = None,
    bounds: Optional[Sequence[Tuple[float, float]]] = None,
) -> OptResult:
    """Powell's conjugate-direction method with Brent line searches.

    With ``bounds`` every line search runs over the whole feasible segment of
    its direction instead of bracketing around the current point.
    """
    objective = _TrackedObjective(f)
    x0, f0 = _start(objective, x0)
    trajectory = [(0, f0)]
    res = minimize(
        objective,
        x0,
        method="Powell",
        bounds=bounds,
        callback=_recorder(objective, trajectory, "powell"),
        options={"xtol": LINE_SEARCH_XTOL, "ftol": tol, "maxiter": max_iter},
    )
    logger.debug("powell finished: %s (nfev=%d, best=%.10g)", res.message, objective.nfev, objective.best_f)
    return OptResult(objective.best_x, objective.best_f, trajectory, str(res.message),
                     objective.nfev, "powell", int(res.nit))


def bfgs_minimize(f: Objective, x0, tol: float = 1e-8, max_iter: Optional[int] = None) -> OptResult:
    """Quasi-Newton BFGS with central finite-difference gradients."""
    objective = _TrackedObjective(f)
    x0, f0 = _start(objective, x0)
    trajectory = [(0, f0)]
    res = minimize(
        objective,
        x0,
        jac=central_difference(objective),
        method="BFGS",
        callback=_recorder(objective, trajectory, "bfgs"),
        options={"gtol": tol, "maxiter": max_iter},
    )
    logger.debug("bfgs finished: %s (nfev=%d, best=%.10g)", res.message, objective.nfev, objective.best_f)
    return OptResult(objective.best_x, objective.best_f, trajectory, str(res.message),
                     objective.nfev, "bfgs", int(res.nit))


def bfgs_powell(
    f: Objective,
    x0,
    rounds: int = 2,
    bfgs_tol: float = 1e-8,
    powell_tol: float = 1e-10,
    max_iter: Optional[int] = None,
    span: float = POWELL_SPAN,
) -> OptResult:
    """Alternate BFGS and Powell, each warm-started from the best point so far.

    Powell's line searches are bounded to a box of half-width ``span`` around
    its starting point, so each one scans the full segment and can leave the
    basin BFGS settled in.
    """
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    if span <= 0:
        raise ValueError(f"span must be positive, got {span}")
    best: Optional[OptResult] = None
    trajectory: List[Tuple[int, float]] = []
    nfev = nit = 0
    messages = []
    x = x0
    for r in range(rounds):
        for name in ("bfgs", "powell"):
            if name == "bfgs":
                stage = bfgs_minimize(f, x, bfgs_tol, max_iter)
            else:
                stage = powell_minimize(f, x, powell_tol, max_iter, bounds=search_box(x, span))
            nfev += stage.nfev
            nit += stage.nit
            floor = best.fun if best is not None else np.inf
            trajectory.extend((len(trajectory) + i, min(floor, v)) for i, (_, v) in enumerate(stage.trajectory))
            messages.append(f"round {r + 1} {name}: {stage.message}")
            if best is None or stage.fun < best.fun:
                best = stage
            x = best.x
            logger.info("bfgs-powell round %d %s: value %.6f (nfev %d)", r + 1, name, best.fun, stage.nfev)
    return OptResult(best.x, best.fun, trajectory, "; ".join(messages), nfev, "bfgs-powell", nit)


@dataclass(eq=False)
class McmcChain:
    """Walker trajectories of an ensemble sampler and their log-probabilities."""
    samples: np.ndarray
    log_prob: np.ndarray
    acceptance: np.ndarray
    seed: int
    stretch: float
    names: List[str] = field(default_factory=list)
    burn_in: float = 0.5

    @property
    def n_steps(self) -> int:
        return self.samples.shape[0]

    @property
    def n_walkers(self) -> int:
        return self.samples.shape[1]

    @property
    def dim(self) -> int:
        return self.samples.shape[2]

    def flat(self, burn_in_fraction: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
        """Pooled (samples, log-probs) after discarding the first fraction of steps."""
        start = int(np.floor(burn_in_fraction * self.n_steps))
        return (self.samples[start:].reshape(-1, self.dim), self.log_prob[start:].reshape(-1))

    def best(self) -> Tuple[np.ndarray, float]:
        """The stored sample with the highest log-probability."""
        step, walker = np.unravel_index(int(np.argmax(self.log_prob)), self.log_prob.shape)
        return self.samples[step, walker].copy(), float(self.log_prob[step, walker])

    def to_frame(self) -> pd.DataFrame:
        steps, walkers = np.meshgrid(np.arange(self.n_steps), np.arange(self.n_walkers), indexing="ij")
        frame = pd.DataFrame({"step": steps.ravel(), "walker": walkers.ravel(), "logp": self.log_prob.ravel()})
        names = self.names or [f"theta_{j}" for j in range(self.dim)]
        for j, name in enumerate(names):
            frame[name] = self.samples[:, :, j].ravel()
        return frame

    def save(self, path: Union[str, Path]) -> Path:
        """Write ``<path>`` as CSV and a ``.json`` sidecar with run metadata."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        sidecar = path.with_suffix(".json")
        sidecar.write_text(json.dumps({
            "seed": self.seed,
            "walkers": self.n_walkers,
            "steps": self.n_steps,
            "stretch": self.stretch,
            "burn_in": self.burn_in,
            "names": self.names,
            "acceptance": [float(a) for a in self.acceptance],
        }, indent=2))
        return sidecar

    @classmethod
    def load(cls, path: Union[str, Path]) -> "McmcChain":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        frame = pd.read_csv(path, float_precision="round_trip")
        steps, walkers = meta["steps"], meta["walkers"]
        value_columns = [c for c in frame.columns if c not in ("step", "walker", "logp")]
        frame = frame.sort_values(["step", "walker"])
        samples = frame[value_columns].to_numpy().reshape(steps, walkers, len(value_columns))
        log_prob = frame["logp"].to_numpy().reshape(steps, walkers)
        return cls(samples, log_prob, np.asarray(meta["acceptance"]), meta["seed"], meta["stretch"],
                   meta["names"], meta["burn_in"])


class _SafeLogProb:
    """Maps failures and NaN to -inf; picklable for process pools."""

    def __init__(self, logp: Objective):
        self.logp = logp

    def __call__(self, x) -> float:
        try:
            value = float(self.logp(np.asarray(x, dtype=float)))
        except _NUMERIC_ERRORS:
            return -np.inf
        return value if np.isfinite(value) or value == -np.inf else -np.inf


def default_walkers(dim: int) -> int:
    """Smallest even walker count satisfying K ≥ 2n + 2."""
    return 2 * dim + 2


def ensemble_mcmc(
    logp: Objective,
    center=None,
    radius: float = 0.1,
    n_walkers: Optional[int] = None,
    n_steps: int = 1000,
    stretch: float = 2.0,
    seed: int = 0,
    initial: Optional[np.ndarray] = None,
    names: Optional[Sequence[str]] = None,
    burn_in: float = 0.5,
    pool=None,
) -> McmcChain:
    """Affine-invariant ensemble sampling with the stretch move.

    Walkers start in a Gaussian ball of ``radius`` around ``center`` unless
    explicit ``initial`` positions (K × n) are given. Each step updates the two
    half-ensembles in turn against the other, frozen half.
    """
    if initial is None:
        if center is None:
            raise ValueError("either center or initial positions are required")
        center = np.atleast_1d(np.asarray(center, dtype=float)).ravel()
        n_walkers = n_walkers or default_walkers(center.size)
        initial = center[None, :] + radius * make_rng(seed).standard_normal((n_walkers, center.size))
    initial = np.atleast_2d(np.asarray(initial, dtype=float))
    n_walkers, dim = initial.shape
    if n_walkers < 2 * dim + 2 or n_walkers % 2:
        raise ValueError(f"walker count must be even and >= 2n + 2 = {2 * dim + 2}, got {n_walkers}")
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    safe = _SafeLogProb(logp)
    initial_lp = np.array([safe(p) for p in initial])
    if not np.any(np.isfinite(initial_lp)):
        raise InitializationError(f"all {n_walkers} initial walkers have non-finite log-probability")
    logger.info("ensemble MCMC: %d walkers, %d steps, dim %d, %d/%d finite initial walkers",
                n_walkers, n_steps, dim, int(np.sum(np.isfinite(initial_lp))), n_walkers)

    sampler = emcee.EnsembleSampler(n_walkers, dim, safe, moves=emcee.moves.StretchMove(a=stretch), pool=pool)
    sampler.random_state = np.random.RandomState(seed).get_state()
    sampler.run_mcmc(emcee.State(initial, log_prob=initial_lp), n_steps, progress=False)
    chain = McmcChain(
        samples=sampler.get_chain(),
        log_prob=sampler.get_log_prob(),
        acceptance=np.asarray(sampler.acceptance_fraction),
        seed=seed,
        stretch=stretch,
        names=list(names) if names is not None else [],
        burn_in=burn_in,
    )
    logger.info("ensemble MCMC done: mean acceptance %.3f", float(np.mean(chain.acceptance)))
    return chain


def chain_summary(
    chain: McmcChain,
    burn_in_fraction: float = 0.5,
    transform: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> ChainSummary:
    """Posterior mean/std/quantiles after burn-in, the MAP sample and mean acceptance.

    ``transform`` maps the stored vectors row-wise (e.g. to natural units)
    before summarizing.
    """
    if not 0.0 <= burn_in_fraction < 1.0:
        raise ValueError(f"burn_in_fraction must lie in [0, 1), got {burn_in_fraction}")
    samples, _ = chain.flat(burn_in_fraction)
    if samples.shape[0] == 0:
        raise ValueError("no samples remain after burn-in")
    map_params, map_log_prob = chain.best()
    if transform is not None:
        samples = np.asarray(transform(samples))
        map_params = np.asarray(transform(map_params[None, :]))[0]
    quantiles = np.quantile(samples, QUANTILE_LEVELS, axis=0)
    return ChainSummary(
        names=chain.names or [f"theta_{j}" for j in range(chain.dim)],
        mean=np.mean(samples, axis=0).tolist(),
        std=np.std(samples, axis=0).tolist(),
        quantiles={f"{100 * q:g}": row.tolist() for q, row in zip(QUANTILE_LEVELS, quantiles)},
        map_params=map_params.tolist(),
        map_log_prob=map_log_prob,
        mean_acceptance=float(np.mean(chain.acceptance)),
        burn_in_fraction=burn_in_fraction,
        n_samples=int(samples.shape[0]),
    )
