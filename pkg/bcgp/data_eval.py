"""Dataset ingestion, seeded train/test splits and performance indices."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import DataError
from .models import ScoreSet
from .rng import make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Strictly increasing timestamps with finite values of the same length."""
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float).ravel()
        y = np.asarray(self.values, dtype=float).ravel()
        if t.size != y.size:
            raise ValueError(f"timestamps ({t.size}) and values ({y.size}) differ in length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise ValueError("timestamps and values must be finite")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "values", y)

    def __len__(self) -> int:
        return self.timestamps.size

    def subset(self, index: np.ndarray) -> "TimeSeries":
        index = np.sort(np.asarray(index, dtype=int))
        return TimeSeries(self.timestamps[index], self.values[index])

    @classmethod
    def empty(cls) -> "TimeSeries":
        return cls(np.empty(0), np.empty(0))

    def to_frame(self, time_column: str = "t", value_column: str = "y") -> pd.DataFrame:
        return pd.DataFrame({time_column: self.timestamps, value_column: self.values})


@dataclass(frozen=True)
class ReconstructForecast:
    """Train on a random subset of a window; forecast everything after ``forecast_from``."""
    window: Tuple[float, float]
    train_count: int
    forecast_from: Optional[float] = None

    @property
    def forecast_start(self) -> float:
        return self.window[1] if self.forecast_from is None else self.forecast_from


@dataclass(frozen=True)
class RandomFraction:
    """Train on a uniform random subset of the whole series."""
    train_count: Optional[int] = None
    fraction: Optional[float] = None

    def __post_init__(self):
        if (self.train_count is None) == (self.fraction is None):
            raise ValueError("exactly one of train_count or fraction must be given")
        if self.fraction is not None and not 0.0 < self.fraction <= 1.0:
            raise ValueError(f"fraction must lie in (0, 1], got {self.fraction}")


@dataclass(frozen=True)
class SplitSpec:
    mode: Union[ReconstructForecast, RandomFraction]
    seed: int = 0


@dataclass(frozen=True)
class Split:
    train: TimeSeries
    test_reconstruct: TimeSeries
    test_forecast: TimeSeries


def load_csv(path: Union[str, Path], time_column: str, value_column: str) -> TimeSeries:
    """Read a headed CSV into a validated :class:`TimeSeries`.

    Row numbers in errors are 1-based data rows (the header is row 0).
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as err:
        raise DataError(f"{path}: file is empty") from err
    except pd.errors.ParserError as err:
        raise DataError(f"{path}: cannot parse CSV: {err}") from err
    if frame.empty:
        raise DataError(f"{path}: no data rows")
    for column in (time_column, value_column):
        if column not in frame.columns:
            raise DataError(f"{path}: missing column {column!r} (have {list(frame.columns)})", column=column)

    parsed = {}
    for column in (time_column, value_column):
        raw = frame[column].str.strip()
        missing = raw == ""
        if missing.any():
            row = int(np.flatnonzero(missing.to_numpy())[0]) + 1
            raise DataError(f"{path}: missing value", row=row, column=column)
        numbers = pd.to_numeric(raw, errors="coerce")
        bad = numbers.isna() | ~np.isfinite(numbers.fillna(0.0))
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0]) + 1
            raise DataError(f"{path}: cannot parse {raw.iloc[row - 1]!r} as a number", row=row, column=column)
        parsed[column] = numbers.to_numpy(dtype=float)

    t = parsed[time_column]
    steps = np.diff(t)
    if np.any(steps <= 0):
        row = int(np.flatnonzero(steps <= 0)[0]) + 2
        raise DataError(f"{path}: timestamps are not strictly increasing", row=row, column=time_column)
    series = TimeSeries(t, parsed[value_column])
    logger.info("Loaded %d points from %s (%g to %g)", len(series), path, t[0], t[-1])
    return series


def _draw(rng: np.random.Generator, candidates: np.ndarray, count: int) -> np.ndarray:
    if count < 1:
        raise ValueError(f"train_count must be >= 1, got {count}")
    if count > candidates.size:
        raise ValueError(f"train_count {count} exceeds the {candidates.size} points available")
    return rng.choice(candidates, size=count, replace=False)


def split(series: TimeSeries, spec: SplitSpec) -> Split:
    """Partition a series into disjoint train, reconstruction-test and forecast-test sets."""
    rng = make_rng(spec.seed)
    index = np.arange(len(series))
    t = series.timestamps
    mode = spec.mode
    if isinstance(mode, ReconstructForecast):
        start, stop = mode.window
        in_window = (t >= start) & (t <= min(stop, mode.forecast_start))
        if not np.any(in_window):
            raise ValueError(f"split window [{start}, {stop}] contains no points")
        train = _draw(rng, index[in_window], mode.train_count)
        forecast = index[t > mode.forecast_start]
    elif isinstance(mode, RandomFraction):
        count = mode.train_count
        if count is None:
            count = max(1, int(round(mode.fraction * len(series))))
        train = _draw(rng, index, count)
        forecast = np.empty(0, dtype=int)
    else:
        raise ValueError(f"unknown split mode {mode!r}")

    # everything not trained on and not forecast is reconstruction test,
    # including points before the window start
    reconstruct = np.setdiff1d(np.setdiff1d(index, train), forecast)
    result = Split(series.subset(train), series.subset(reconstruct), series.subset(forecast))
    logger.info("Split seed %d: %d train, %d reconstruction, %d forecast",
                spec.seed, len(result.train), len(result.test_reconstruct), len(result.test_forecast))
    return result


def score(y_true: Sequence[float], y_point: Sequence[float], log_densities: Sequence[float]) -> ScoreSet:
    """MAE and MSE of point predictions, NLPD from per-point log predictive densities."""
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_point = np.asarray(y_point, dtype=float).ravel()
    log_densities = np.asarray(log_densities, dtype=float).ravel()
    if not (y_true.size == y_point.size == log_densities.size):
        raise ValueError(
            f"length mismatch: y_true {y_true.size}, y_point {y_point.size}, log_densities {log_densities.size}"
        )
    if y_true.size == 0:
        raise ValueError("score needs at least one point")
    err = y_true - y_point
    return ScoreSet(
        mae=float(np.mean(np.abs(err))),
        mse=float(np.mean(err ** 2)),
        nlpd=float(-np.mean(log_densities)),
    )
