"""
Multi-run campaigns: failure-prediction study, threshold sweep and
intervention study.

Runs are executed through a map-like runner (``multiprocessing.Pool`` for
several workers); results come back in run order whatever the completion
order, so aggregated tables are deterministic.
"""

import logging
import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from multiprocessing import Pool

import numpy as np
import pandas as pd
from tqdm import tqdm

from fishermoe.baseline_metrics import (
    BASELINE_ORIENTATION,
    PredictionScore,
    auc,
    threshold_sweep,
    val_loss_failure_predictor,
)
from fishermoe.config import resolve_runs
from fishermoe.diagnostics import (
    INTERVENTION_ARMS,
    TrainingRun,
    baseline_failure_scores,
    loss_series_until,
    run_training_with_diagnostics,
)

logger = logging.getLogger(__name__)

LOTTERY_COLUMNS = ("n_experts", "lambda", "eta", "init_scale", "separation", "top_k")


class DegenerateCampaignError(RuntimeError):
    """The campaign produced nothing to evaluate (single-class outcomes, no flagged runs)."""


@contextmanager
def campaign_runner(workers=1, progress=True, description="runs"):
    """
    Map-like callable executing runs serially or on a process pool.

    Parameters:
        workers (int): number of processes; 1 runs in-process.
        progress (bool): show a tqdm progress bar.
        description (str): progress bar label.
    """

    def serial(function, items):
        items = list(items)
        return [
            function(item)
            for item in tqdm(items, desc=description, disable=not progress)
        ]

    if workers <= 1:
        yield serial
        return
    with Pool(workers) as pool:

        def parallel(function, items):
            items = list(items)
            return list(
                tqdm(
                    pool.imap(function, items),
                    total=len(items),
                    desc=description,
                    disable=not progress,
                )
            )

        yield parallel


@dataclass
class CampaignSummary:
    """
    Aggregated campaign outcome.

    Attributes:
        runs (pandas.DataFrame): one row per run with its scores.
        auc_fhs (float): AUC of FHS at the scoring fraction.
        auc_val_loss (float): AUC of the validation-loss predictor.
        baseline_aucs (dict): AUC per heuristic baseline.
        threshold_reports (list): ThresholdReport per FHS threshold.
        correlations (dict): Pearson r of final FSI and of FHS with final accuracy.
        intervention_outcomes (dict): arm name to recovery rate, mean final
            accuracy and number of runs.
    """

    runs: pd.DataFrame
    auc_fhs: float = math.nan
    auc_val_loss: float = math.nan
    baseline_aucs: dict = field(default_factory=dict)
    threshold_reports: list = field(default_factory=list)
    correlations: dict = field(default_factory=dict)
    intervention_outcomes: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "n_runs": int(len(self.runs)),
            "n_failed": int(self.runs["failed"].sum()) if len(self.runs) else 0,
            "auc_fhs": self.auc_fhs,
            "auc_val_loss": self.auc_val_loss,
            "baseline_aucs": dict(self.baseline_aucs),
            "threshold_reports": [report.__dict__ for report in self.threshold_reports],
            "correlations": dict(self.correlations),
            "intervention_outcomes": dict(self.intervention_outcomes),
        }


def run_campaign(config, runner=map):
    """
    Train every resolved run of the campaign.

    Returns:
        list of RunResult, in seed order.
    """
    return list(runner(run_training_with_diagnostics, resolve_runs(config)))


def _val_loss_score(result, fraction):
    try:
        return val_loss_failure_predictor(
            loss_series_until(result, fraction), run_id=result.seed, label=result.failed
        )
    except ValueError:
        # runs that diverged before enough checkpoints
        logger.debug("Seed %d: too few validation points, flagged", result.seed)
        return PredictionScore(result.seed, 1.0, result.failed, flagged=True)


def score_runs(results, fraction):
    """
    Per-run table of outcomes and failure scores at ``fraction`` of training.

    Returns:
        pandas.DataFrame
    """
    rows = []
    for result in results:
        val_loss = _val_loss_score(result, fraction)
        row = {"seed": result.seed}
        cell = result.lottery_cell or {}
        for name in LOTTERY_COLUMNS:
            row[name] = cell.get(name, math.nan)
        row.update(
            {
                "final_accuracy": result.final_accuracy,
                "optimal_accuracy": result.optimal_accuracy,
                "failed": result.failed,
                "failure_reason": result.failure_reason,
                "final_fsi": result.final_fsi,
                "final_fsi_normalized": result.final_fsi_normalized,
                "fhs_at_10pct": result.fhs_at_10pct,
                "val_loss_score": val_loss.score,
                "val_loss_flagged": val_loss.flagged,
            }
        )
        row.update(baseline_failure_scores(result, fraction))
        rows.append(row)
    return pd.DataFrame(rows)


def _scores(runs, column):
    # runs without any checkpoint score as flagged
    return [
        PredictionScore(
            run_id=seed,
            score=float(np.nan_to_num(score, nan=np.finfo(float).max)),
            label=failed,
        )
        for seed, score, failed in zip(runs["seed"], runs[column], runs["failed"])
    ]


def _check_mixed_outcomes(runs):
    if len(runs) < 2:
        raise DegenerateCampaignError("degenerate campaign: at least 2 runs are required")
    failed = runs["failed"].astype(bool)
    if failed.all() or not failed.any():
        raise DegenerateCampaignError(
            "degenerate campaign: all runs "
            + ("failed" if failed.all() else "succeeded")
            + "; widen the hyperparameter lottery"
        )


def summarize_failure_study(runs, thresholds):
    """
    AUCs, threshold sweep and correlations of a scored run table.

    Parameters:
        runs (pandas.DataFrame): output of ``score_runs`` (or its CSV).
        thresholds (sequence): FHS thresholds.

    Returns:
        CampaignSummary

    Raises:
        DegenerateCampaignError: when all runs share the same outcome.
    """
    _check_mixed_outcomes(runs)
    baseline_aucs = {
        name: auc(_scores(runs, name))
        for name in BASELINE_ORIENTATION
        if runs[name].notna().all() and np.isfinite(runs[name]).all()
    }
    correlations = {
        "final_fsi_vs_final_accuracy": float(
            runs["final_fsi"].corr(runs["final_accuracy"])
        ),
        "fhs_at_10pct_vs_final_accuracy": float(
            runs["fhs_at_10pct"].corr(runs["final_accuracy"])
        ),
    }
    summary = CampaignSummary(
        runs=runs,
        auc_fhs=auc(_scores(runs, "fhs_at_10pct")),
        auc_val_loss=auc(_scores(runs, "val_loss_score")),
        baseline_aucs=baseline_aucs,
        threshold_reports=threshold_sweep(_scores(runs, "fhs_at_10pct"), thresholds),
        correlations=correlations,
    )
    logger.info(
        "AUC FHS %.3f, AUC val-loss %.3f over %d runs",
        summary.auc_fhs,
        summary.auc_val_loss,
        len(runs),
    )
    return summary


def failure_study(config, runner=map):
    """
    Train the campaign and evaluate failure prediction at the scoring fraction.

    Returns:
        tuple: (list of RunResult, CampaignSummary)
    """
    results = run_campaign(config, runner)
    runs = score_runs(results, config.diagnostics.scoring_fraction)
    return results, summarize_failure_study(runs, config.campaign.thresholds)


def threshold_table(runs, thresholds):
    """
    Precision, recall and F1 of the FHS rule per threshold.

    Returns:
        pandas.DataFrame
    """
    _check_mixed_outcomes(runs)
    reports = threshold_sweep(_scores(runs, "fhs_at_10pct"), thresholds)
    return pd.DataFrame([report.__dict__ for report in reports])


def intervention_trial(run_config):
    """
    Train to the intervention point and, when FHS exceeds the threshold,
    finish one branch per arm from the same state.

    Returns:
        list of dict: one row per arm, empty for runs that are not flagged.
    """
    experiment = run_config.experiment
    fraction = experiment.campaign.intervention_fraction
    threshold = experiment.diagnostics.fhs_threshold
    run = TrainingRun(run_config)
    run.advance(int(round(fraction * run.total_steps)))
    if run.diverged:
        return []
    detected = run.analyzer.analyze(run.model).fhs
    if detected <= threshold:
        return []
    rows = []
    for arm in INTERVENTION_ARMS:
        branch = run.branch().intervene(arm)
        result = branch.advance().finish()
        rows.append(
            {
                "seed": run_config.seed,
                "arm": arm,
                "intervention_step": run.step,
                "fhs_at_intervention": detected,
                "final_accuracy": result.final_accuracy,
                "optimal_accuracy": result.optimal_accuracy,
                "recovered": not result.failed,
                "failure_reason": result.failure_reason,
                "final_fsi": result.final_fsi,
            }
        )
    return rows


def intervention_study(config, runner=map):
    """
    Intervention arms on every run flagged by FHS at the intervention point.

    Returns:
        CampaignSummary: ``runs`` holds one row per (run, arm).

    Raises:
        DegenerateCampaignError: when no run is flagged.
    """
    trials = list(runner(intervention_trial, resolve_runs(config)))
    rows = [row for trial in trials for row in trial]
    if not rows:
        raise DegenerateCampaignError(
            "degenerate campaign: no run exceeded the FHS threshold at the "
            "intervention point"
        )
    runs = pd.DataFrame(rows)
    outcomes = {}
    for arm in INTERVENTION_ARMS:
        group = runs[runs["arm"] == arm]
        outcomes[arm] = {
            "recovery_rate": float(group["recovered"].mean()),
            "mean_final_accuracy": float(group["final_accuracy"].mean()),
            "n_runs": int(len(group)),
        }
    logger.info(
        "Intervention study on %d flagged runs",
        runs["seed"].nunique(),
    )
    return CampaignSummary(runs=runs, intervention_outcomes=outcomes)
