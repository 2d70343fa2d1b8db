"""Configuration management for Box-Cox GP experiments."""

import hashlib
import json
from pathlib import Path
from typing import Annotated, Dict, Literal, Optional, Tuple, Union

from pydantic import Field, ValidationError, field_validator, model_validator

from .data_eval import RandomFraction, ReconstructForecast, SplitSpec
from .errors import ConfigError
from .models import ModelSpec, StrictModel


class DatasetConfig(StrictModel):
    """Input CSV and its column names."""
    path: str
    time_column: str = "t"
    value_column: str = "y"


class ReconstructForecastConfig(StrictModel):
    """Split {mode: "reconstruct_forecast"}."""
    mode: Literal["reconstruct_forecast"]
    window: Tuple[float, float]
    train_count: int = Field(ge=1)
    forecast_from: Optional[float] = None

    @field_validator("window")
    @classmethod
    def _ordered(cls, window: Tuple[float, float]) -> Tuple[float, float]:
        if window[0] > window[1]:
            raise ValueError(f"window start {window[0]} is after its end {window[1]}")
        return window


class RandomFractionConfig(StrictModel):
    """Split {mode: "random_fraction"}."""
    mode: Literal["random_fraction"]
    train_count: Optional[int] = Field(None, ge=1)
    fraction: Optional[float] = Field(None, gt=0.0, le=1.0)

    @model_validator(mode="after")
    def _one_of(self) -> "RandomFractionConfig":
        if (self.train_count is None) == (self.fraction is None):
            raise ValueError("exactly one of train_count or fraction must be given")
        return self


SplitConfig = Annotated[Union[ReconstructForecastConfig, RandomFractionConfig], Field(discriminator="mode")]


class GridConfig(StrictModel):
    """Evenly spaced prediction grid."""
    start: float
    stop: float
    num: int = Field(200, ge=1)


class LoggingConfig(StrictModel):
    """Log level and optional rotating log files."""
    level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = "INFO"
    file: Optional[str] = None
    optimizer_file: Optional[str] = None

    def to_dict(self) -> Dict[str, Optional[str]]:
        """Settings for :func:`bcgp.logging_config.setup_experiment_logging`."""
        return {"log_level": self.level, "log_file": self.file, "optimizer_log_file": self.optimizer_file}


class ExperimentConfig(StrictModel):
    """One experiment: dataset, split, named model variants and output settings."""
    dataset: DatasetConfig
    split: SplitConfig
    models: Dict[str, ModelSpec]
    default_model: Optional[str] = None
    gh_points: int = Field(20, ge=1)
    percentile: float = Field(0.95, gt=0.0, lt=1.0)
    seed: int = Field(0, ge=0)
    output_dir: str = "results"
    grid: Optional[GridConfig] = None
    n_paths: int = Field(10, ge=1)
    logging: LoggingConfig = LoggingConfig()

    @model_validator(mode="after")
    def _default_exists(self) -> "ExperimentConfig":
        if not self.models:
            raise ValueError("at least one model variant is required")
        if self.default_model is None:
            self.default_model = next(iter(self.models))
        elif self.default_model not in self.models:
            raise ValueError(f"default_model {self.default_model!r} not found in models")
        return self

    def split_spec(self, seed: Optional[int] = None) -> SplitSpec:
        seed = self.seed if seed is None else seed
        if isinstance(self.split, ReconstructForecastConfig):
            mode = ReconstructForecast(tuple(self.split.window), self.split.train_count, self.split.forecast_from)
        else:
            mode = RandomFraction(self.split.train_count, self.split.fraction)
        return SplitSpec(mode, seed)


def _error_path(location: Tuple) -> str:
    # discriminated unions add the tag name to the location; drop it
    return ".".join(str(part) for part in location if part not in ("boxcox", "affine", "squared_exponential",
                                                                     "spectral_mixture", "reconstruct_forecast",
                                                                     "random_fraction"))


def parse_config(data: dict, source: str = "<config>") -> ExperimentConfig:
    """Validate a config mapping, turning the first validation failure into a ConfigError."""
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as err:
        first = err.errors()[0]
        path = _error_path(first["loc"]) or "<root>"
        raise ConfigError(f"{first['msg']} ({source})", path=path) from err


def load_config(config_path: Union[str, Path]) -> ExperimentConfig:
    """Load and validate an experiment config file.

    A relative dataset path is resolved against the config file's directory
    when it does not exist relative to the working directory.
    """
    config_path = Path(config_path)
    try:
        data = json.loads(config_path.read_text(encoding="utf-8"))
    except FileNotFoundError as err:
        raise ConfigError(f"config file not found: {config_path}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"invalid JSON in {config_path}: {err}") from err
    if not isinstance(data, dict):
        raise ConfigError(f"{config_path}: top level must be an object")
    config = parse_config(data, str(config_path))

    dataset_path = Path(config.dataset.path)
    if not dataset_path.is_absolute() and not dataset_path.exists():
        candidate = config_path.parent / dataset_path
        if candidate.exists():
            config.dataset.path = str(candidate)
    return config


def get_model_spec(config: ExperimentConfig, name: Optional[str] = None) -> ModelSpec:
    """Resolve a named model variant, the default one when ``name`` is None."""
    if name is None:
        name = config.default_model
    if name not in config.models:
        available = list(config.models.keys())
        raise ConfigError(f"Model '{name}' not found. Available models: {available}", path="models")
    return config.models[name]


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON dump of the config."""
    canonical = json.dumps(config.model_dump(mode="json", by_alias=True), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
