"""Main entry point for the bcgp command line."""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from .config import ExperimentConfig, load_config
from .errors import BcgpError, ConfigError, DataError
from .experiment import ExperimentRunner, model_from_file, model_to_file
from .logging_config import setup_experiment_logging
from .optimize import chain_summary
from .wgp_model import DEFAULT_GH_POINTS, DEFAULT_LEVEL, predict, sample_paths

logger = logging.getLogger("bcgp.cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _write_json(path: Path, payload: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(payload + "\n", encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


def _write_frame(path: Path, frame: pd.DataFrame, fmt: str = "csv") -> Path:
    path = path.with_suffix(f".{fmt}")
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        frame.to_json(path, orient="records", indent=2, double_precision=15)
    else:
        frame.to_csv(path, index=False, float_format="%.10g")
    logger.info(f"Wrote {path}")
    return path


def parse_grid(text: str) -> np.ndarray:
    """Parse ``start:stop:num`` into an evenly spaced grid."""
    try:
        start, stop, num = text.split(":")
        return np.linspace(float(start), float(stop), int(num))
    except ValueError as err:
        raise ConfigError(f"invalid grid {text!r}, expected start:stop:num", path="--grid") from err


def read_inputs(path: str) -> np.ndarray:
    """Read test inputs from a CSV with a ``t`` column."""
    try:
        frame = pd.read_csv(path)
    except (FileNotFoundError, pd.errors.EmptyDataError, pd.errors.ParserError) as err:
        raise DataError(f"cannot read inputs from {path}: {err}") from err
    if "t" not in frame.columns:
        raise DataError(f"{path}: missing column 't'", column="t")
    t = pd.to_numeric(frame["t"], errors="coerce")
    if t.isna().any():
        row = int(np.flatnonzero(t.isna().to_numpy())[0]) + 1
        raise DataError(f"{path}: cannot parse input", row=row, column="t")
    return t.to_numpy(dtype=float)


def check_flags(args: argparse.Namespace) -> None:
    """Reject out-of-range numeric flags before any work starts."""
    percentile = getattr(args, "percentile", None)
    if percentile is not None and not 0.0 < percentile < 1.0:
        raise ConfigError(f"percentile level must lie in (0, 1), got {percentile}", path="--percentile")
    for flag, attr in (("--gh-points", "gh_points"), ("--n-paths", "n_paths")):
        value = getattr(args, attr, None)
        if value is not None and value < 1:
            raise ConfigError(f"must be a positive integer, got {value}", path=flag)


def _load(args: argparse.Namespace) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("--config is required for this command", path="--config")
    return load_config(args.config)


def _out_dir(args: argparse.Namespace, config: Optional[ExperimentConfig] = None) -> Path:
    if args.out:
        return Path(args.out)
    return Path(config.output_dir) if config is not None else Path("results")


def cmd_fit(args: argparse.Namespace) -> int:
    """Fit one model variant; write the fitted model, trajectory and fit report."""
    config = _load(args)
    runner = ExperimentRunner(config, args.seed)
    name, spec = runner.resolve(args.model)
    outcome = runner.fit(name)
    out = _out_dir(args, config)
    fitted = model_to_file(outcome.model, spec, outcome.report.final_nll, outcome.report.method)
    _write_json(out / f"{name}_model.json", fitted.model_dump_json(indent=2, by_alias=True))
    _write_frame(out / f"{name}_trajectory", outcome.result.trajectory_frame())
    _write_json(out / f"{name}_fit_report.json", outcome.report.model_dump_json(indent=2))
    if outcome.chain is not None:
        outcome.chain.save(out / f"{name}_chain.csv")
    return EXIT_OK


def _prediction_inputs(args: argparse.Namespace, runner: Optional[ExperimentRunner] = None) -> np.ndarray:
    if args.grid:
        return parse_grid(args.grid)
    if args.inputs:
        return read_inputs(args.inputs)
    if runner is not None:
        return runner.grid()
    raise ConfigError("one of --grid or --inputs is required", path="--grid")


def cmd_predict(args: argparse.Namespace) -> int:
    """Predict from a fitted model file on a grid or given inputs."""
    if not args.model_file:
        raise ConfigError("--model-file is required for predict", path="--model-file")
    try:
        model = model_from_file(args.model_file)
    except FileNotFoundError as err:
        raise ConfigError(f"model file not found: {args.model_file}", path="--model-file") from err
    except ValueError as err:
        raise ConfigError(f"invalid model file {args.model_file}: {err}", path="--model-file") from err
    t_test = _prediction_inputs(args)
    summary = predict(
        model,
        t_test,
        DEFAULT_LEVEL if args.percentile is None else args.percentile,
        DEFAULT_GH_POINTS if args.gh_points is None else args.gh_points,
    )
    _write_frame(_out_dir(args) / "predictions", summary.to_frame(), args.format)
    return EXIT_OK


def cmd_sample(args: argparse.Namespace) -> int:
    """Draw warped posterior paths on a grid."""
    runner = None
    if args.model_file:
        model = model_from_file(args.model_file)
        out = _out_dir(args)
        n_paths = 10 if args.n_paths is None else args.n_paths
        seed = 0 if args.seed is None else args.seed
    else:
        config = _load(args)
        runner = ExperimentRunner(config, args.seed)
        model = runner.fit(args.model).model
        out = _out_dir(args, config)
        n_paths = config.n_paths if args.n_paths is None else args.n_paths
        seed = runner.seed
    t_test = _prediction_inputs(args, runner)
    paths = sample_paths(model, t_test, n_paths, seed)
    frame = pd.DataFrame({"t": t_test})
    for i, path in enumerate(paths):
        frame[f"path_{i}"] = path
    _write_frame(out / "paths", frame, args.format)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    """Split, fit, predict and score every variant; write the score report and bands."""
    config = _load(args)
    runner = ExperimentRunner(config, args.seed)
    report, outcomes = runner.evaluate()
    out = _out_dir(args, config)
    _write_json(out / "scores.json", report.model_dump_json(indent=2))
    for name, outcome in outcomes.items():
        _write_frame(out / f"bands_{name}", runner.bands(outcome.model).to_frame(), args.format)
    return EXIT_OK


def cmd_mcmc(args: argparse.Namespace) -> int:
    """Sample the hyperparameter posterior; write chain, summary and scatter data."""
    config = _load(args)
    runner = ExperimentRunner(config, args.seed)
    name, spec = runner.resolve(args.model)
    outcome = runner.fit(name, method="mcmc")
    chain, space = outcome.chain, outcome.space
    out = _out_dir(args, config)
    if chain is None:
        raise ConfigError(f"model '{name}' has no free parameters to sample", path=f"models.{name}")
    chain.save(out / f"{name}_chain.csv")
    summary = chain_summary(chain, spec.optimizer.burn_in, transform=space.natural)
    _write_json(out / f"{name}_chain_summary.json", summary.model_dump_json(indent=2))
    samples, log_prob = chain.flat(spec.optimizer.burn_in)
    scatter = pd.DataFrame(space.natural(samples), columns=chain.names)
    scatter.insert(0, "logp", log_prob)
    _write_frame(out / f"{name}_scatter", scatter, args.format)
    fitted = model_to_file(outcome.model, spec, outcome.report.final_nll, "mcmc")
    _write_json(out / f"{name}_model.json", fitted.model_dump_json(indent=2, by_alias=True))
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "mcmc": cmd_mcmc,
    "sample": cmd_sample,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bcgp", description="Box-Cox warped Gaussian process toolkit")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Experiment config file (JSON)")
    common.add_argument("--seed", type=int, help="Override the config seed")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--format", choices=["csv", "json"], default="csv", help="Table output format")
    common.add_argument("--model", help="Model variant name (default: the config's default_model)")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
                        help="Override the configured log level")

    subparsers = parser.add_subparsers(dest="command", required=True)
    subparsers.add_parser("fit", parents=[common], help="Fit a model variant")
    subparsers.add_parser("evaluate", parents=[common], help="Score all variants")
    subparsers.add_parser("mcmc", parents=[common], help="Sample the hyperparameter posterior")
    for name, text in (("predict", "Predict from a fitted model file"), ("sample", "Draw posterior paths")):
        sub = subparsers.add_parser(name, parents=[common], help=text)
        sub.add_argument("--model-file", help="Fitted model JSON written by fit")
        sub.add_argument("--grid", help="Prediction grid start:stop:num")
        sub.add_argument("--inputs", help="CSV with a 't' column of test inputs")
        if name == "predict":
            sub.add_argument("--percentile", type=float, help="Interval level in (0, 1)")
            sub.add_argument("--gh-points", type=int, help="Gauss-Hermite points")
        else:
            sub.add_argument("--n-paths", type=int, help="Number of paths")
    return parser


def _setup_logging(args: argparse.Namespace) -> None:
    settings = {"log_level": "INFO"}
    if args.config and Path(args.config).exists():
        try:
            settings = load_config(args.config).logging.to_dict()
        except ConfigError:
            pass
    if args.log_level:
        settings["log_level"] = args.log_level
    setup_experiment_logging(settings)


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    _setup_logging(args)
    try:
        check_flags(args)
        return COMMANDS[args.command](args)
    except ConfigError as err:
        code, err_text = EXIT_CONFIG, str(err)
    except DataError as err:
        code, err_text = EXIT_DATA, str(err)
    except (BcgpError, np.linalg.LinAlgError) as err:
        code, err_text = EXIT_NUMERIC, str(err)
    logger.error(f"{args.command} failed: {err_text}")
    print(f"error: {err_text}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
