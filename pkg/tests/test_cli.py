import pandas as pd
import pytest

from fishermoe.cli import build_parser, main
from fishermoe.experiment_manager import LOCK_FILE_NAME
from fishermoe.interface import FisherMoE
from tests.testing_functions import create_tiny_config


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(create_tiny_config(steps=10).to_yaml())
    return path


def write_runs(directory, failed):
    directory.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(
        {
            "seed": list(range(len(failed))),
            "failed": failed,
            "final_accuracy": [0.3 if outcome else 0.9 for outcome in failed],
            "final_fsi_normalized": [0.2 if outcome else 0.8 for outcome in failed],
            "fhs_at_10pct": [0.5 + 0.3 * index for index in range(len(failed))],
        }
    ).to_csv(directory / "failure_study_runs.csv", index=False)


class TestParser:
    def test_subcommands(self):
        args = build_parser().parse_args(["simulate", "-c", "a.yaml", "--seeds", "1,2"])
        assert (args.command, args.config, args.seeds) == ("simulate", "a.yaml", "1,2")

    def test_command_is_required(self):
        with pytest.raises(SystemExit) as error:
            build_parser().parse_args([])
        assert error.value.code == 2

    def test_thresholds_only_for_threshold_sweep(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["simulate", "--thresholds", "1.0"])

    def test_version(self):
        with pytest.raises(SystemExit) as error:
            build_parser().parse_args(["--version"])
        assert error.value.code == 0


class TestExitCodes:
    def test_invariance_demo(self, tmp_path, capsys):
        assert main(["invariance-demo", "-q", "--out", str(tmp_path)]) == 0
        assert "0.70711 -> 0.44721" in capsys.readouterr().out
        assert (tmp_path / "invariance_report.json").exists()

    def test_simulate_is_reproducible(self, tmp_path, config_path):
        for name in ("first", "second"):
            assert main(["simulate", "-q", "-c", str(config_path), "-o", str(tmp_path / name)]) == 0
        first = (tmp_path / "first" / "trajectory_0.csv").read_bytes()
        assert first == (tmp_path / "second" / "trajectory_0.csv").read_bytes()
        assert (tmp_path / "first" / "run_0.json").exists()

    def test_seed_environment_variable(self, tmp_path, config_path, monkeypatch):
        monkeypatch.setenv("FISHER_MOE_SEED", "9")
        assert main(["simulate", "-q", "-c", str(config_path), "-o", str(tmp_path / "out")]) == 0
        assert [path.name for path in (tmp_path / "out").glob("run_*.json")] == ["run_9.json"]

    def test_report_on_empty_directory(self, tmp_path):
        assert main(["report", "-q", "--out", str(tmp_path)]) == 2

    def test_report(self, tmp_path, capsys):
        write_runs(tmp_path, [False, True])
        assert main(["report", "-q", "--out", str(tmp_path)]) == 0
        assert "# fishermoe report" in capsys.readouterr().out
        assert (tmp_path / "report.md").exists()

    def test_invalid_configuration(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("model:\n  colour: red\n")
        assert main(["simulate", "-q", "-c", str(path), "-o", str(tmp_path)]) == 2

    def test_invalid_seed_list(self, tmp_path):
        assert main(["simulate", "-q", "--seeds", "one", "-o", str(tmp_path)]) == 2

    def test_geodesic_validation_needs_dense_routing(self, tmp_path):
        path = tmp_path / "topk.yaml"
        path.write_text(create_tiny_config(top_k=1).to_yaml())
        assert main(["geodesic-validate", "-q", "-c", str(path), "-o", str(tmp_path)]) == 2

    def test_locked_output_directory(self, tmp_path):
        (tmp_path / LOCK_FILE_NAME).write_text("12345\n")
        assert main(["invariance-demo", "-q", "--out", str(tmp_path)]) == 2

    def test_threshold_sweep(self, tmp_path):
        write_runs(tmp_path, [False, False, True])
        assert main(["threshold-sweep", "-q", "-o", str(tmp_path), "--thresholds", "0.6,1.0"]) == 0
        assert len(pd.read_csv(tmp_path / "threshold_sweep.csv")) == 2

    def test_invalid_thresholds(self, tmp_path):
        write_runs(tmp_path, [False, True])
        assert main(["threshold-sweep", "-q", "-o", str(tmp_path), "--thresholds", "a,b"]) == 2

    @pytest.mark.parametrize("failed", [[False, False, False], [True]])
    def test_degenerate_campaign(self, tmp_path, failed):
        write_runs(tmp_path, failed)
        assert main(["threshold-sweep", "-q", "-o", str(tmp_path)]) == 3

    def test_internal_error(self, tmp_path, monkeypatch):
        def broken(self):
            raise RuntimeError("boom")

        monkeypatch.setattr(FisherMoE, "simulate", broken)
        assert main(["simulate", "-q", "-o", str(tmp_path)]) == 4
