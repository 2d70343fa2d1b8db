"""Pytest configuration and shared fixtures."""

import json
from pathlib import Path

import numpy as np
import pytest

from bcgp.gp_core import ConstantMean, SquaredExponential, WhiteNoise, sample_prior
from bcgp.warping import BoxCoxWarping, compose
from bcgp.wgp_model import WarpedGpModel

REPO_ROOT = Path(__file__).resolve().parent.parent
DATA_DIR = REPO_ROOT / "data"
CONFIG_DIR = REPO_ROOT / "configs"


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for test data."""
    return np.random.default_rng(12345)


@pytest.fixture
def se_kernel():
    """Squared-exponential kernel plus white noise."""
    return SquaredExponential(variance=1.0, lengthscale=1.5) + WhiteNoise(0.05)


@pytest.fixture
def sqrt_model(se_kernel):
    """Box-Cox(0.5) model trained on a draw from its own prior."""
    warping = compose([BoxCoxWarping(0.5)])
    mean = ConstantMean(2.0)
    t = np.linspace(0.0, 10.0, 15)
    x = sample_prior(mean, se_kernel, t, seed=3)
    return WarpedGpModel(warping, mean, se_kernel, t, warping.inverse(x))


@pytest.fixture
def synthetic_csv(tmp_path) -> Path:
    """Small positive series written as CSV with columns t,y."""
    t = np.linspace(0.0, 12.0, 40)
    y = np.exp(0.5 * np.sin(t) + 0.05 * np.cos(3.0 * t))
    path = tmp_path / "series.csv"
    lines = ["t,y"] + [f"{a:.6f},{b:.8f}" for a, b in zip(t, y)]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def experiment_config(tmp_path, synthetic_csv) -> dict:
    """A fast two-variant experiment over the synthetic series."""
    return {
        "dataset": {"path": str(synthetic_csv), "time_column": "t", "value_column": "y"},
        "split": {"mode": "reconstruct_forecast", "window": [0.0, 9.0], "train_count": 20},
        "models": {
            "gp": {
                "warping": [],
                "kernel": {"type": "squared_exponential"},
                "optimizer": {"method": "bfgs", "max_iter": 50},
            },
            "bcgp": {
                "warping": [{"kind": "boxcox", "params": {"lambda": 0.5}}],
                "kernel": {"type": "squared_exponential"},
                "optimizer": {"method": "bfgs-powell", "rounds": 1, "max_iter": 50, "steps": 20},
            },
        },
        "default_model": "bcgp",
        "seed": 7,
        "output_dir": str(tmp_path / "out"),
        "grid": {"start": 0.0, "stop": 12.0, "num": 25},
        "n_paths": 3,
    }


@pytest.fixture
def config_file(tmp_path, experiment_config) -> Path:
    """The fast experiment written to disk."""
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps(experiment_config))
    return path


@pytest.fixture
def smooth_model(se_kernel):
    """Box-Cox(0.5) model whose warped data stays within [1.5, 2.5]."""
    warping = compose([BoxCoxWarping(0.5)])
    t = np.linspace(0.0, 10.0, 15)
    return WarpedGpModel(warping, ConstantMean(2.0), se_kernel, t, warping.inverse(2.0 + 0.5 * np.sin(t)))
