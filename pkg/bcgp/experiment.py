"""Experiment orchestration over the named model variants of one config."""

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.signal import find_peaks, lombscargle

from .config import ExperimentConfig, config_hash, get_model_spec
from .data_eval import Split, TimeSeries, load_csv, score, split
from .errors import BcgpError, ConfigError
from .gp_core import ConstantMean, Kernel, MeanFunction, SpectralMixture, SquaredExponential, SumKernel, WhiteNoise, ZeroMean
from .models import (
    EvaluationReport,
    FitReport,
    FittedModelFile,
    KernelSpec,
    MeanSpec,
    ModelSpec,
    ScoreReport,
    SpectralMixtureSpec,
    SquaredExponentialSpec,
    VariantReport,
)
from .optimize import McmcChain, OptResult, ParamSpace, bfgs_minimize, bfgs_powell, default_walkers, ensemble_mcmc, powell_minimize
from .warping import warping_from_spec, warping_to_spec
from .wgp_model import (
    PredictiveSummary,
    WarpedGpModel,
    log_posterior,
    negative_log_likelihood,
    nll_warped,
    param_space,
    predict,
    predictive_log_density,
)

VARIANCE_FLOOR = 1e-6


@dataclass(eq=False)
class FitOutcome:
    """A trained variant with its search history."""
    name: str
    model: WarpedGpModel
    result: OptResult
    report: FitReport
    chain: Optional[McmcChain] = None
    space: Optional[ParamSpace] = None


def _fixed_names(spec: ModelSpec, kernel: Kernel) -> List[str]:
    names = []
    if not spec.warping:
        # plain GP: the identity stage stays identity
        names.extend(["warping.0.a", "warping.0.b"])
    for i, stage in enumerate(spec.warping):
        names.extend(f"warping.{i}.{p}" for p in stage.fixed)
    if spec.mean.fixed and spec.mean.type == "constant":
        names.append("mean.value")
    signal = [h.name for h in kernel.parts[0].hyperparameters()]
    for entry in spec.kernel.fixed:
        if entry == "noise":
            names.append("kernel.1.noise")
            continue
        # "weights" selects weight_0..weight_{Q-1}; "weight_1" a single component
        matches = [n for n in signal if n == entry or n.rsplit("_", 1)[0] + "s" == entry]
        if not matches:
            raise ConfigError(f"unknown fixed kernel parameter {entry!r}", path="kernel.fixed")
        names.extend(f"kernel.0.{n}" for n in matches)
    return names


def _periodogram_peaks(t: np.ndarray, x: np.ndarray, count: int) -> List[float]:
    """Frequencies (cycles per time unit) of the ``count`` highest periodogram peaks."""
    span = float(t[-1] - t[0]) if t.size > 1 else 1.0
    spacing = float(np.median(np.diff(t))) if t.size > 1 else 1.0
    freqs = np.linspace(1.0 / span, 0.5 / spacing, 2000)
    power = lombscargle(t, x - np.mean(x), 2.0 * np.pi * freqs)
    peaks, _ = find_peaks(power)
    ranked = list(freqs[peaks[np.argsort(power[peaks])[::-1]]][:count])
    while len(ranked) < count:
        ranked.append(freqs[0] * (len(ranked) + 1))
    return [float(f) for f in ranked]


def initial_kernel(spec: KernelSpec, t: np.ndarray, x: np.ndarray) -> SumKernel:
    """Build the kernel, filling "auto" values from the warped training data."""
    variance = max(float(np.var(x)), VARIANCE_FLOOR) if x.size else 1.0
    span = float(t[-1] - t[0]) if t.size > 1 else 1.0
    noise = 0.1 * variance if spec.noise == "auto" else spec.noise
    if isinstance(spec, SquaredExponentialSpec):
        signal = SquaredExponential(
            variance=variance if spec.variance == "auto" else spec.variance,
            lengthscale=span / 10.0 if spec.lengthscale == "auto" else spec.lengthscale,
        )
    elif isinstance(spec, SpectralMixtureSpec):
        q = spec.components
        means = _periodogram_peaks(t, x, q) if spec.means == "auto" else list(spec.means)
        weights = [variance / q] * q if spec.weights == "auto" else list(spec.weights)
        variances = ([max(1.0 / span, f / 8.0) ** 2 for f in means]
                     if spec.variances == "auto" else list(spec.variances))
        signal = SpectralMixture(tuple(weights), tuple(means), tuple(variances))
    else:
        raise ConfigError(f"unknown kernel spec {spec!r}", path="kernel")
    return SumKernel((signal, WhiteNoise(noise)))


def initial_mean(spec: MeanSpec, x: np.ndarray) -> MeanFunction:
    if spec.type == "zero":
        return ZeroMean()
    return ConstantMean(float(np.mean(x)) if spec.value == "auto" and x.size else
                        (0.0 if spec.value == "auto" else spec.value))


def build_model(spec: ModelSpec, t, y) -> WarpedGpModel:
    """Model from a variant spec, with "auto" values derived from the data."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    warping = warping_from_spec(spec.warping)
    x = np.asarray(warping.forward(y), dtype=float) if y.size else y
    kernel = initial_kernel(spec.kernel, t, x)
    mean = initial_mean(spec.mean, x)
    return WarpedGpModel(warping, mean, kernel, t, y, frozenset(_fixed_names(spec, kernel)))


def _kernel_to_spec(kernel: SumKernel, spec: KernelSpec) -> KernelSpec:
    signal, noise = kernel.parts
    if isinstance(signal, SquaredExponential):
        return SquaredExponentialSpec(type="squared_exponential", variance=signal.variance,
                                      lengthscale=signal.lengthscale, noise=noise.noise, fixed=spec.fixed)
    return SpectralMixtureSpec(type="spectral_mixture", components=signal.components,
                               weights=list(signal.weights), means=list(signal.means),
                               variances=list(signal.variances), noise=noise.noise, fixed=spec.fixed)


def model_to_file(model: WarpedGpModel, spec: ModelSpec, nll: float, method: str) -> FittedModelFile:
    """Serialize a fitted model with its training data."""
    mean = (MeanSpec(type="zero", fixed=spec.mean.fixed) if isinstance(model.mean, ZeroMean)
            else MeanSpec(type="constant", value=model.mean.value, fixed=spec.mean.fixed))
    return FittedModelFile(
        warping=warping_to_spec(model.warping, [s.fixed for s in spec.warping]) if spec.warping else [],
        kernel=_kernel_to_spec(model.kernel, spec.kernel),
        mean=mean,
        train_t=model.t.tolist(),
        train_y=model.y.tolist(),
        nll=nll,
        method=method,
    )


def model_from_file(source: Union[str, Path, FittedModelFile]) -> WarpedGpModel:
    """Rebuild a fitted model from its JSON file; no config needed."""
    if not isinstance(source, FittedModelFile):
        source = FittedModelFile.model_validate_json(Path(source).read_text(encoding="utf-8"))
    spec = ModelSpec(warping=source.warping, kernel=source.kernel, mean=source.mean)
    return build_model(spec, source.train_t, source.train_y)


class ExperimentRunner:
    """Runs fit / evaluate / MCMC workflows for the variants of one experiment."""

    def __init__(self, config: ExperimentConfig, seed: Optional[int] = None):
        self.config = config
        self.seed = config.seed if seed is None else seed
        self.config_hash = config_hash(config)
        self._series: Optional[TimeSeries] = None
        self._split: Optional[Split] = None
        self.logger = logging.getLogger("bcgp.experiment")

    @property
    def series(self) -> TimeSeries:
        if self._series is None:
            dataset = self.config.dataset
            self._series = load_csv(dataset.path, dataset.time_column, dataset.value_column)
        return self._series

    @property
    def split(self) -> Split:
        if self._split is None:
            try:
                self._split = split(self.series, self.config.split_spec(self.seed))
            except ValueError as err:
                raise ConfigError(str(err), path="split") from err
        return self._split

    def resolve(self, name: Optional[str]) -> Tuple[str, ModelSpec]:
        name = name or self.config.default_model
        return name, get_model_spec(self.config, name)

    def list_models(self) -> Dict[str, dict]:
        """Configured variants with their warping, kernel and training method."""
        return {
            name: {
                "warping": "∘".join(s.kind for s in spec.warping) or "identity",
                "kernel": spec.kernel.type,
                "method": spec.optimizer.method,
                "is_default": name == self.config.default_model,
            }
            for name, spec in self.config.models.items()
        }

    def fit(
        self, name: Optional[str] = None, train: Optional[TimeSeries] = None, method: Optional[str] = None
    ) -> FitOutcome:
        """Train one variant on the split's training set (or ``train``), optionally overriding its method."""
        name, spec = self.resolve(name)
        if train is None:
            train = self.split.train
        model = build_model(spec, train.timestamps, train.values)
        space = param_space(model)
        x0 = space.encode()
        opt = spec.optimizer
        method = method or opt.method
        self.logger.info(f"Fitting model '{name}' with {method} over {space.dim} parameters")
        started = time.perf_counter()
        objective = negative_log_likelihood(model, space)
        chain = None
        if space.dim == 0:
            value = nll_warped(model)
            result = OptResult(x0, value, [(0, value)], "no free parameters", 1, method)
        elif method == "bfgs":
            result = bfgs_minimize(objective, x0, opt.tol, opt.max_iter)
        elif method == "powell":
            result = powell_minimize(objective, x0, opt.tol, opt.max_iter)
        elif method == "bfgs-powell":
            result = bfgs_powell(objective, x0, opt.rounds, opt.tol, opt.tol, opt.max_iter, opt.powell_span)
        else:
            result, chain = self._fit_mcmc(model, space, x0, spec)
        wall_time = time.perf_counter() - started
        fitted_model = model.with_values(space.decode(result.x))
        report = FitReport(model=name, method=method, final_nll=float(result.fun), nfev=result.nfev,
                           wall_time=wall_time, termination=result.message)
        self.logger.info(f"Model '{name}' fitted: NLL {result.fun:.6f} after {result.nfev} evaluations "
                         f"({wall_time:.2f}s)")
        return FitOutcome(name, fitted_model, result, report, chain, space)

    def _fit_mcmc(self, model: WarpedGpModel, space: ParamSpace, x0: np.ndarray, spec: ModelSpec) -> Tuple[OptResult, McmcChain]:
        """Locate a mode with BFGS, sample around it, keep the highest-posterior point seen.

        The returned value is the NLL of the kept point.
        """
        opt = spec.optimizer
        nll = negative_log_likelihood(model, space)
        logp = log_posterior(model, space)
        start = bfgs_minimize(nll, x0, opt.tol, opt.max_iter)
        chain = ensemble_mcmc(
            logp,
            center=start.x,
            radius=opt.ball_radius,
            n_walkers=opt.walkers or default_walkers(space.dim),
            n_steps=opt.steps,
            stretch=opt.stretch,
            seed=self.seed,
            names=space.names,
            burn_in=opt.burn_in,
        )
        best_x, best_logp = chain.best()
        nfev = start.nfev + chain.n_walkers * (chain.n_steps + 1)
        trajectory = start.trajectory + [
            (len(start.trajectory) + s, float(-np.max(chain.log_prob[: s + 1])))
            for s in range(chain.n_steps)
        ]
        message = f"bfgs: {start.message}; mcmc: {chain.n_steps} steps, mean acceptance {np.mean(chain.acceptance):.3f}"
        x = best_x if best_logp > logp(start.x) else start.x
        return OptResult(x, float(nll(x)), trajectory, message, nfev + 2, "mcmc"), chain

    def predict(self, model: WarpedGpModel, t_test) -> PredictiveSummary:
        return predict(model, t_test, self.config.percentile, self.config.gh_points)

    def _score(self, model: WarpedGpModel, test: TimeSeries, nll: float) -> ScoreReport:
        summary = self.predict(model, test.timestamps)
        log_density = predictive_log_density(model, test.timestamps, test.values)
        median = score(test.values, summary.median, log_density)
        gh = score(test.values, summary.gh_mean, log_density)
        return ScoreReport(
            mae=median.mae,
            mse=median.mse,
            nlpd=median.nlpd,
            mae_gh_mean=gh.mae if np.isfinite(gh.mae) else None,
            mse_gh_mean=gh.mse if np.isfinite(gh.mse) else None,
            nll=nll,
            n_train=model.t.size,
            n_test=len(test),
            seed=self.seed,
            config_hash=self.config_hash,
        )

    def evaluate_variant(self, name: str) -> Tuple[VariantReport, FitOutcome]:
        """Fit one variant and score it on the reconstruction and forecast sets."""
        stage = "fit"
        try:
            outcome = self.fit(name)
            blocks = {}
            for stage, test in (("reconstruction", self.split.test_reconstruct),
                                ("forecast", self.split.test_forecast)):
                if len(test):
                    blocks[stage] = self._score(outcome.model, test, outcome.report.final_nll)
        except (BcgpError, np.linalg.LinAlgError) as err:
            self.logger.error(f"Model '{name}' failed during {stage}: {err}")
            err.stage = stage
            err.args = (f"model '{name}' failed during {stage}: {err}",)
            raise
        report = VariantReport(method=outcome.report.method, nll=outcome.report.final_nll,
                               nfev=outcome.report.nfev, **blocks)
        return report, outcome

    def evaluate(self) -> Tuple[EvaluationReport, Dict[str, FitOutcome]]:
        """Split, fit, predict and score every configured variant."""
        reports: Dict[str, VariantReport] = {}
        outcomes: Dict[str, FitOutcome] = {}
        for name, info in self.list_models().items():
            self.logger.info(f"Variant '{name}': {info['warping']} warping, {info['kernel']} kernel, {info['method']}")
        for name in self.config.models:
            reports[name], outcomes[name] = self.evaluate_variant(name)
        report = EvaluationReport(seed=self.seed, config_hash=self.config_hash,
                                  n_train=len(self.split.train), models=reports)
        return report, outcomes

    def bands(self, model: WarpedGpModel) -> PredictiveSummary:
        """Plot-ready prediction over every timestamp of the series."""
        return self.predict(model, self.series.timestamps)

    def grid(self) -> np.ndarray:
        """The configured prediction grid, or the series span with 200 points."""
        if self.config.grid is not None:
            g = self.config.grid
            return np.linspace(g.start, g.stop, g.num)
        t = self.series.timestamps
        return np.linspace(t[0], t[-1], 200)
