"""Tests for the command-line entry point."""

import json
from unittest.mock import MagicMock, patch

import numpy as np
import pandas as pd
import pytest

from bcgp.errors import ConditioningError, ConfigError
from bcgp.main import EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, build_parser, main, parse_grid


@pytest.fixture(autouse=True)
def quiet_logging():
    """Keep CLI runs from reconfiguring the root logger."""
    with patch("bcgp.main.setup_experiment_logging") as mock_setup:
        yield mock_setup


class TestParser:
    """Test CLI argument parsing."""

    def test_common_flags(self):
        """Test flags shared by every subcommand."""
        args = build_parser().parse_args(["fit", "--config", "c.json", "--seed", "3", "--model", "gp"])
        assert args.command == "fit"
        assert args.config == "c.json"
        assert args.seed == 3
        assert args.model == "gp"
        assert args.format == "csv"

    def test_predict_flags(self):
        """Test predict-only options."""
        args = build_parser().parse_args(["predict", "--model-file", "m.json", "--grid", "0:1:5",
                                          "--percentile", "0.9", "--gh-points", "30"])
        assert args.model_file == "m.json"
        assert args.percentile == 0.9
        assert args.gh_points == 30

    def test_command_required(self):
        """Test a subcommand is mandatory."""
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_parse_grid(self):
        """Test start:stop:num grids."""
        np.testing.assert_allclose(parse_grid("0:1:5"), [0.0, 0.25, 0.5, 0.75, 1.0])
        with pytest.raises(ConfigError):
            parse_grid("0:1")
        with pytest.raises(ConfigError):
            parse_grid("a:b:c")


class TestDispatch:
    """Test command wiring with the runner mocked out."""

    @patch("bcgp.main.ExperimentRunner")
    def test_evaluate_uses_seed_override(self, mock_runner_cls, config_file, tmp_path):
        """Test --seed reaches the runner."""
        mock_runner = MagicMock()
        mock_runner.evaluate.return_value = (MagicMock(model_dump_json=lambda indent: "{}"), {})
        mock_runner_cls.return_value = mock_runner

        assert main(["evaluate", "--config", str(config_file), "--seed", "11", "--out", str(tmp_path)]) == EXIT_OK

        assert mock_runner_cls.call_args[0][1] == 11
        mock_runner.evaluate.assert_called_once()
        assert (tmp_path / "scores.json").read_text() == "{}\n"

    def test_logging_from_config(self, quiet_logging, config_file, experiment_config):
        """Test the config's logging section is applied, with --log-level on top."""
        experiment_config["split"]["train_count"] = 999
        config_file.write_text(json.dumps(experiment_config))
        main(["fit", "--config", str(config_file), "--log-level", "DEBUG"])
        settings = quiet_logging.call_args[0][0]
        assert settings["log_level"] == "DEBUG"
        assert settings["log_file"] is None

    @patch("bcgp.main.ExperimentRunner")
    def test_numeric_failure_exit_code(self, mock_runner_cls, config_file, capsys):
        """Test numerical failures exit with 4 and a message."""
        mock_runner = MagicMock()
        mock_runner.resolve.return_value = ("bcgp", MagicMock())
        mock_runner.fit.side_effect = ConditioningError("not positive definite", [0.0, 1e-10])
        mock_runner_cls.return_value = mock_runner

        assert main(["fit", "--config", str(config_file)]) == EXIT_NUMERIC
        assert "error: not positive definite" in capsys.readouterr().err


class TestErrorExits:
    """Test exit codes for bad configs and data."""

    def test_missing_config(self, tmp_path, capsys):
        """Test a nonexistent config file."""
        assert main(["fit", "--config", str(tmp_path / "none.json")]) == EXIT_CONFIG
        assert "not found" in capsys.readouterr().err

    def test_config_required(self):
        """Test commands needing a config reject its absence."""
        assert main(["evaluate"]) == EXIT_CONFIG

    def test_invalid_warping_kind(self, tmp_path, experiment_config, capsys):
        """Test a bad stage kind exits 2 and names its location."""
        experiment_config["models"]["bcgp"]["warping"] = [{"kind": "exp"}]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(experiment_config))
        assert main(["fit", "--config", str(path)]) == EXIT_CONFIG
        assert "models.bcgp.warping.0" in capsys.readouterr().err

    def test_missing_dataset(self, tmp_path, experiment_config):
        """Test a config pointing at a missing CSV exits 3."""
        experiment_config["dataset"]["path"] = str(tmp_path / "missing.csv")
        path = tmp_path / "nodata.json"
        path.write_text(json.dumps(experiment_config))
        assert main(["fit", "--config", str(path)]) == EXIT_DATA

    def test_unknown_model(self, config_file):
        """Test --model naming no variant."""
        assert main(["fit", "--config", str(config_file), "--model", "nope"]) == EXIT_CONFIG

    def test_oversized_split(self, config_file, experiment_config):
        """Test a train count larger than the window exits 2."""
        experiment_config["split"]["train_count"] = 999
        config_file.write_text(json.dumps(experiment_config))
        assert main(["fit", "--config", str(config_file)]) == EXIT_CONFIG

    def test_predict_requires_model_file(self):
        """Test predict without --model-file."""
        assert main(["predict", "--grid", "0:1:3"]) == EXIT_CONFIG

    def test_percentile_out_of_range(self, tmp_path, capsys):
        """Test an interval level outside (0, 1) exits 2 and names the flag."""
        code = main(["predict", "--model-file", str(tmp_path / "m.json"), "--grid", "0:1:3",
                     "--percentile", "1.5"])
        assert code == EXIT_CONFIG
        assert "--percentile" in capsys.readouterr().err

    def test_zero_gh_points(self, tmp_path, capsys):
        """Test --gh-points 0 is rejected instead of falling back to the default."""
        code = main(["predict", "--model-file", str(tmp_path / "m.json"), "--grid", "0:1:3",
                     "--gh-points", "0"])
        assert code == EXIT_CONFIG
        assert "--gh-points" in capsys.readouterr().err

    def test_zero_paths(self, config_file):
        """Test --n-paths 0 is rejected."""
        assert main(["sample", "--config", str(config_file), "--n-paths", "0"]) == EXIT_CONFIG

    @patch("bcgp.main.predict")
    @patch("bcgp.main.model_from_file")
    def test_explicit_gh_points_forwarded(self, mock_load, mock_predict, tmp_path):
        """Test the given Gauss-Hermite count and level reach predict unchanged."""
        mock_predict.return_value.to_frame.return_value = pd.DataFrame({"t": [0.0]})
        code = main(["predict", "--model-file", "m.json", "--grid", "0:1:3", "--gh-points", "3",
                     "--percentile", "0.5", "--out", str(tmp_path)])
        assert code == EXIT_OK
        args = mock_predict.call_args.args
        assert args[2] == 0.5
        assert args[3] == 3


class TestRuns:
    """Test small end-to-end runs."""

    def test_fit_then_predict(self, config_file, tmp_path):
        """Test fit artifacts and prediction from the written model file."""
        out = tmp_path / "fit"
        assert main(["fit", "--config", str(config_file), "--model", "gp", "--out", str(out)]) == EXIT_OK
        for name in ("gp_model.json", "gp_trajectory.csv", "gp_fit_report.json"):
            assert (out / name).exists()
        report = json.loads((out / "gp_fit_report.json").read_text())
        assert report["method"] == "bfgs"
        assert np.isfinite(report["final_nll"])

        pred = tmp_path / "pred"
        code = main(["predict", "--model-file", str(out / "gp_model.json"), "--grid", "0:12:7",
                     "--out", str(pred)])
        assert code == EXIT_OK
        frame = pd.read_csv(pred / "predictions.csv")
        assert list(frame.columns) == ["t", "median", "lower", "upper", "mode", "gh_mean", "gh_var"]
        assert len(frame) == 7
        assert np.all(frame["lower"] <= frame["median"]) and np.all(frame["median"] <= frame["upper"])

    def test_predict_from_inputs_as_json(self, config_file, tmp_path):
        """Test --inputs and --format json."""
        out = tmp_path / "fit"
        main(["fit", "--config", str(config_file), "--out", str(out)])
        inputs = tmp_path / "inputs.csv"
        inputs.write_text("t\n0.5\n1.5\n13.0\n")
        code = main(["predict", "--model-file", str(out / "bcgp_model.json"), "--inputs", str(inputs),
                     "--format", "json", "--out", str(tmp_path)])
        assert code == EXIT_OK
        records = json.loads((tmp_path / "predictions.json").read_text())
        assert [r["t"] for r in records] == [0.5, 1.5, 13.0]

    def test_evaluate_reproducible(self, config_file, tmp_path):
        """Test scores.json is byte-identical across runs with the same seed."""
        first, second = tmp_path / "a", tmp_path / "b"
        assert main(["evaluate", "--config", str(config_file), "--out", str(first)]) == EXIT_OK
        assert main(["evaluate", "--config", str(config_file), "--out", str(second)]) == EXIT_OK
        assert (first / "scores.json").read_bytes() == (second / "scores.json").read_bytes()
        scores = json.loads((first / "scores.json").read_text())
        assert set(scores["models"]) == {"gp", "bcgp"}
        assert scores["models"]["bcgp"]["forecast"]["n_test"] > 0
        assert (first / "bands_bcgp.csv").exists()

    def test_sample_paths(self, config_file, tmp_path):
        """Test sample writes one column per path on the configured grid."""
        assert main(["sample", "--config", str(config_file), "--model", "gp", "--out", str(tmp_path)]) == EXIT_OK
        frame = pd.read_csv(tmp_path / "paths.csv")
        assert list(frame.columns) == ["t", "path_0", "path_1", "path_2"]
        assert len(frame) == 25

    def test_mcmc(self, config_file, tmp_path):
        """Test chain, summary and scatter outputs of a short run."""
        assert main(["mcmc", "--config", str(config_file), "--model", "bcgp", "--out", str(tmp_path)]) == EXIT_OK
        for name in ("bcgp_chain.csv", "bcgp_chain.json", "bcgp_chain_summary.json", "bcgp_scatter.csv",
                     "bcgp_model.json"):
            assert (tmp_path / name).exists()
        meta = json.loads((tmp_path / "bcgp_chain.json").read_text())
        assert meta["steps"] == 20
        summary = json.loads((tmp_path / "bcgp_chain_summary.json").read_text())
        assert "warping.0.lambda" in summary["names"]
        scatter = pd.read_csv(tmp_path / "bcgp_scatter.csv")
        assert scatter.columns[0] == "logp"
        assert len(scatter) == 10 * meta["walkers"]
