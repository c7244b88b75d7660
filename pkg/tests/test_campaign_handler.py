import dataclasses
import math

import numpy as np
import pytest

from fishermoe.campaign_handler import (
    LOTTERY_COLUMNS,
    DegenerateCampaignError,
    campaign_runner,
    intervention_study,
    intervention_trial,
    run_campaign,
    score_runs,
    summarize_failure_study,
    threshold_table,
)
from fishermoe.config import RunConfig
from fishermoe.diagnostics import INTERVENTION_ARMS, run_training_with_diagnostics
from tests.testing_functions import create_run_result, create_tiny_config


def create_results(early_fhs=(0.5, 0.7, 1.3, 1.5), failed=(False, False, True, True)):
    results = []
    for seed, (value, outcome) in enumerate(zip(early_fhs, failed)):
        fhs_values = (1.0, value) + tuple(np.linspace(value, 0.5, 8))
        results.append(create_run_result(seed=seed, fhs_values=fhs_values, failed=outcome))
    return results


def with_fhs_threshold(config, threshold):
    return dataclasses.replace(
        config,
        diagnostics=dataclasses.replace(config.diagnostics, fhs_threshold=threshold),
    )


class TestCampaignRunner:
    def test_serial(self):
        with campaign_runner(workers=1, progress=False) as runner:
            assert runner(abs, [-1, 2, -3]) == [1, 2, 3]

    def test_pool_keeps_order(self):
        with campaign_runner(workers=2, progress=False) as runner:
            assert runner(math.sqrt, [16.0, 1.0, 9.0, 4.0]) == [4.0, 1.0, 3.0, 2.0]


class TestScoreRuns:
    def test_columns(self):
        runs = score_runs(create_results(), 0.4)
        for name in LOTTERY_COLUMNS:
            assert runs[name].isna().all()
        assert runs["seed"].tolist() == [0, 1, 2, 3]
        assert runs["fhs_at_10pct"].tolist() == [0.5, 0.7, 1.3, 1.5]
        assert runs["failed"].tolist() == [False, False, True, True]
        assert not runs["val_loss_flagged"].any()
        assert runs["routing_entropy"].tolist() == pytest.approx([-0.6] * 4)

    def test_too_few_validation_points_are_flagged(self):
        runs = score_runs(create_results(), 0.1)
        assert runs["val_loss_flagged"].all()
        assert (runs["val_loss_score"] == 1.0).all()


class TestFailureStudySummary:
    def test_summary(self):
        summary = summarize_failure_study(score_runs(create_results(), 0.4), [0.9, 1.0, 1.4])
        assert summary.auc_fhs == 1.0
        assert summary.auc_val_loss == pytest.approx(0.5)
        assert summary.baseline_aucs["cosine_mean"] == pytest.approx(0.5)
        reports = {report.threshold: report for report in summary.threshold_reports}
        assert (reports[1.0].precision, reports[1.0].recall) == (1.0, 1.0)
        assert reports[1.4].recall == pytest.approx(0.5)
        data = summary.to_dict()
        assert (data["n_runs"], data["n_failed"]) == (4, 2)
        assert len(data["threshold_reports"]) == 3

    def test_fhs_correlates_negatively_with_accuracy(self):
        summary = summarize_failure_study(score_runs(create_results(), 0.4), [1.0])
        assert summary.correlations["fhs_at_10pct_vs_final_accuracy"] < 0

    @pytest.mark.parametrize(
        "failed", [(True, True, True, True), (False, False, False, False)]
    )
    def test_single_outcome_is_degenerate(self, failed):
        runs = score_runs(create_results(failed=failed), 0.4)
        with pytest.raises(DegenerateCampaignError):
            summarize_failure_study(runs, [1.0])

    def test_single_run_is_degenerate(self):
        runs = score_runs(create_results(early_fhs=(1.2,), failed=(True,)), 0.4)
        with pytest.raises(DegenerateCampaignError):
            threshold_table(runs, [1.0])

    def test_threshold_table(self):
        table = threshold_table(score_runs(create_results(), 0.4), [0.6, 1.0, 2.0])
        assert list(table.columns) == [
            "threshold",
            "precision",
            "recall",
            "f1",
            "precision_defined",
        ]
        assert table["precision_defined"].tolist() == [True, True, False]
        assert table["recall"].tolist() == [1.0, 1.0, 0.0]


class TestCampaigns:
    def test_run_campaign_keeps_seed_order(self):
        results = run_campaign(create_tiny_config(seeds=(5, 2), steps=4))
        assert [result.seed for result in results] == [5, 2]

    def test_intervention_trial_branches_every_arm(self):
        config = with_fhs_threshold(create_tiny_config(steps=10), 0.0)
        rows = intervention_trial(RunConfig(config, 0))
        assert [row["arm"] for row in rows] == list(INTERVENTION_ARMS)
        assert {row["intervention_step"] for row in rows} == {1}
        assert len({row["fhs_at_intervention"] for row in rows}) == 1

    def test_stalled_run_is_flagged_at_calibrated_threshold(self):
        config = with_fhs_threshold(create_tiny_config(n_experts=4, eta=0.001), 0.9)
        result = run_training_with_diagnostics(config)
        assert result.fhs_at_10pct == pytest.approx(1.0, abs=0.02)
        rows = intervention_trial(RunConfig(config, 0))
        assert [row["arm"] for row in rows] == list(INTERVENTION_ARMS)
        assert rows[0]["fhs_at_intervention"] > 0.9

    def test_unflagged_run_is_skipped(self):
        config = with_fhs_threshold(create_tiny_config(steps=10), 1e9)
        assert intervention_trial(RunConfig(config, 0)) == []

    def test_intervention_study(self):
        config = with_fhs_threshold(create_tiny_config(steps=10, seeds=(0, 1)), 0.0)
        summary = intervention_study(config)
        assert len(summary.runs) == 8
        assert set(summary.intervention_outcomes) == set(INTERVENTION_ARMS)
        for outcome in summary.intervention_outcomes.values():
            assert outcome["n_runs"] == 2
            assert 0.0 <= outcome["recovery_rate"] <= 1.0

    def test_intervention_study_without_flagged_runs(self):
        config = with_fhs_threshold(create_tiny_config(steps=10), 1e9)
        with pytest.raises(DegenerateCampaignError):
            intervention_study(config)
