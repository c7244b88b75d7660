from pathlib import Path

import pytest

from fishermoe.config import (
    CampaignConfig,
    ConfigError,
    ExperimentConfig,
    LotteryConfig,
    ModelConfig,
    RunConfig,
    load_config,
    resolve_runs,
)
from tests.testing_functions import create_tiny_config

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


class TestParsing:
    def test_empty_document_gives_defaults(self):
        assert ExperimentConfig.from_yaml("") == ExperimentConfig()

    def test_yaml_round_trip(self):
        config = create_tiny_config(top_k=1, lam=0.05, seeds=(3, 4))
        assert ExperimentConfig.from_yaml(config.to_yaml()) == config

    def test_yaml_names(self):
        config = ExperimentConfig.from_yaml("model:\n  top_k: 2\n  lambda: 0.1\n")
        assert config.model.top_k == 2
        assert config.model.lam == 0.1
        data = config.to_dict()
        assert data["model"]["lambda"] == 0.1
        assert ExperimentConfig().to_dict()["model"]["top_k"] == "dense"

    def test_dense_routing(self):
        config = ExperimentConfig.from_yaml("model:\n  top_k: dense\n")
        assert config.model.top_k is None

    @pytest.mark.parametrize("text, expected", [("3e-3", 0.003), ("0.3", 0.3), ("1", 1.0)])
    def test_float_coercion(self, text, expected):
        config = ExperimentConfig.from_yaml(f"training:\n  eta: {text}\n")
        assert config.training.eta == expected
        assert isinstance(config.training.eta, float)

    @pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.yaml")))
    def test_shipped_configs(self, path):
        config = load_config(path, environ={})
        assert config.model.n_experts >= 2

    def test_default_campaign_flag_threshold(self):
        config = load_config(CONFIG_DIR / "default.yaml", environ={})
        assert config.diagnostics.fhs_threshold == 0.9
        assert 0.9 in config.campaign.thresholds
        assert ExperimentConfig().diagnostics.fhs_threshold == 1.0


class TestErrors:
    @pytest.mark.parametrize(
        "text, line, fragment",
        [
            ("model:\n  n_experts: 4\n  colour: red\n", 3, "unknown key 'model.colour'"),
            ("training:\n  eta: -1\n", 2, "eta"),
            ("model:\n  n_experts: 4\n  lambda: -0.5\n", 3, "lambda"),
            ("training:\n  steps: many\n", 2, "expected an integer"),
            ("diagnostics:\n  geodesic_tracking: 3\n", 2, "expected true or false"),
            ("model:\n  n_experts: 3\ntask:\n  label_of_cluster: [0, 1]\n", 4, "label"),
            ("model:\n  n_experts: 2\n  top_k: 3\n", 3, "top_k"),
            ("campaign:\n  seeds: [1, 1]\n", 2, "distinct"),
            ("colour: red\n", 1, "unknown key 'colour'"),
            ("model: 4\n", 1, "must be a mapping"),
        ],
    )
    def test_reports_line(self, text, line, fragment):
        with pytest.raises(ConfigError) as error:
            ExperimentConfig.from_yaml(text)
        assert error.value.line == line
        assert fragment in str(error.value)

    def test_invalid_yaml(self):
        with pytest.raises(ConfigError) as error:
            ExperimentConfig.from_yaml("model: [1, 2\n")
        assert "invalid YAML" in str(error.value)

    def test_document_must_be_mapping(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_yaml("- 1\n- 2\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.yaml", environ={})

    def test_direct_construction_validates(self):
        with pytest.raises(ValueError):
            ModelConfig(n_experts=1)
        with pytest.raises(ValueError):
            CampaignConfig(seeds=())


class TestSeedOverride:
    def test_environment_replaces_seeds(self, tmp_path):
        path = tmp_path / "config.yaml"
        path.write_text("campaign:\n  seeds: [1, 2, 3]\n")
        assert load_config(path, environ={}).campaign.seeds == (1, 2, 3)
        assert load_config(path, environ={"FISHER_MOE_SEED": "7"}).campaign.seeds == (7,)

    def test_defaults_without_file(self):
        assert load_config(None, environ={"FISHER_MOE_SEED": "5"}).campaign.seeds == (5,)

    def test_invalid_seed(self):
        with pytest.raises(ConfigError):
            load_config(None, environ={"FISHER_MOE_SEED": "five"})


class TestRuns:
    def test_without_lottery(self):
        config = create_tiny_config(seeds=(2, 5))
        runs = resolve_runs(config)
        assert [run.seed for run in runs] == [2, 5]
        assert all(run.experiment == config and run.lottery_cell is None for run in runs)

    def test_lottery_is_deterministic_per_seed(self):
        config = ExperimentConfig(
            campaign=CampaignConfig(
                seeds=tuple(range(10)), lottery=LotteryConfig(enabled=True, top_k=(1, 8))
            )
        )
        first, second = resolve_runs(config), resolve_runs(config)
        assert [run.lottery_cell for run in first] == [run.lottery_cell for run in second]
        for run in first:
            cell = run.lottery_cell
            assert cell["top_k"] <= cell["n_experts"]
            assert run.experiment.model.n_experts == cell["n_experts"]
            assert run.experiment.model.lam == cell["lambda"]
            assert run.experiment.training.eta == cell["eta"]
            assert run.experiment.task.separation == cell["separation"]

    def test_run_config_dict(self):
        run = RunConfig(create_tiny_config(), seed=4)
        data = run.to_dict()
        assert data["seed"] == 4
        assert data["config"]["model"]["n_experts"] == 2

    def test_workers(self):
        assert CampaignConfig(parallel=3).workers == 3
        assert CampaignConfig().workers >= 1
