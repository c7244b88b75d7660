"""
Baseline specialization metrics and failure-prediction evaluation.

Heuristic metrics (cosine similarity, routing entropy, load imbalance, expert
overlap, gradient norm) are compared against the Fisher-geometric ones. The
module also holds the validation-loss early-stopping predictor, AUC and
threshold sweeps, and the non-invariance demonstration.
"""

import itertools
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
import statsmodels.formula.api as smf
from scipy.stats import entropy
from sklearn.metrics import precision_score, recall_score, roc_auc_score

from fishermoe.simplex_geometry import (
    ProbabilityVector,
    fisher_rao_distance,
    fsi,
    softmax,
)
from fishermoe.utils import ensure_numeric_data

logger = logging.getLogger(__name__)

# +1: higher value is more failure-like, -1: lower value is
BASELINE_ORIENTATION = {
    "cosine_mean": 1.0,
    "expert_overlap": 1.0,
    "load_imbalance": 1.0,
    "gradient_norm": 1.0,
    "routing_entropy": -1.0,
}
DEFAULT_THRESHOLDS = (0.8, 0.9, 1.0, 1.1, 1.2)
SCORE_CAP = 1.0 - 1e-9


@dataclass(frozen=True)
class PredictionScore:
    """
    Failure score of one run.

    Attributes:
        run_id (str or int): run identifier.
        score (float): higher means more likely to fail.
        label (bool): whether the run actually failed.
        flagged (bool): whether the predictor's binary rule fired.
    """

    run_id: object
    score: float
    label: bool
    flagged: bool = False

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError(f"Score of run {self.run_id} is not finite")
        object.__setattr__(self, "score", float(self.score))
        object.__setattr__(self, "label", bool(self.label))


@dataclass(frozen=True)
class ThresholdReport:
    threshold: float
    precision: float
    recall: float
    f1: float
    precision_defined: bool = True


def cosine_similarity(theta_a, theta_b):
    """
    Cosine of the angle between two parameter vectors.

    Raises:
        ValueError: for zero vectors or different lengths.
    """
    a = ensure_numeric_data(theta_a).ravel()
    b = ensure_numeric_data(theta_b).ravel()
    if a.shape != b.shape:
        raise ValueError("Vectors must have the same length")
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0 or norm_b == 0:
        raise ValueError("Cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (norm_a * norm_b), -1.0, 1.0))


def mean_pairwise_cosine(vectors, absolute=False):
    """Mean cosine similarity over all unordered pairs of vectors."""
    vectors = [np.asarray(vector, dtype=float).ravel() for vector in vectors]
    if len(vectors) < 2:
        raise ValueError("At least 2 experts are required")
    values = [
        cosine_similarity(first, second)
        for first, second in itertools.combinations(vectors, 2)
    ]
    values = np.abs(values) if absolute else np.asarray(values)
    return float(np.mean(values))


def expert_overlap(expert_weight_list):
    """
    Mean pairwise absolute cosine similarity of flattened expert weights.

    The quantity has no canonical definition; this reconstruction treats
    parallel and anti-parallel experts as fully overlapping.
    """
    return mean_pairwise_cosine(expert_weight_list, absolute=True)


def routing_entropy(p):
    """Shannon entropy of a routing distribution in nats (0·log 0 = 0)."""
    p = p if isinstance(p, ProbabilityVector) else ProbabilityVector(p)
    return float(entropy(p.values))


def load_imbalance(assignments):
    """
    Coefficient of variation (std / mean) of per-expert token fractions.

    Parameters:
        assignments (list or array): non-negative token count per expert.
    """
    counts = ensure_numeric_data(assignments)
    if np.any(counts < 0):
        raise ValueError("Expert counts must be non-negative")
    total = counts.sum()
    if total <= 0:
        raise ValueError("Expert counts must have a positive total")
    fractions = counts / total
    return float(np.std(fractions) / np.mean(fractions))


def _fit_loss_trend(fractions, losses):
    frame = pd.DataFrame({"fraction": fractions, "loss": losses})
    with np.errstate(divide="ignore", invalid="ignore"):
        fitted = smf.ols("loss ~ fraction", frame).fit()
        r_squared = float(fitted.rsquared)
    if not np.isfinite(r_squared):
        r_squared = 0.0
    return float(fitted.params["Intercept"]), float(fitted.params["fraction"]), r_squared


def val_loss_failure_predictor(loss_series, run_id=None, label=False):
    """
    Early-stopping style failure predictor on a validation-loss curve.

    A run is flagged when the linear trend of loss against training fraction
    rises with R² > 0.7, or when its extrapolation to the end of training
    exceeds 1.5 times the current loss. Flagged runs score 1; the others get
    ``max(normalized slope, extrapolation ratio − 1)`` capped just below 1.

    Parameters:
        loss_series (list): (fraction, loss) pairs, at least 4, fractions increasing.
        run_id (object, optional): identifier copied into the score.
        label (bool): actual outcome, copied into the score.

    Returns:
        PredictionScore
    """
    series = ensure_numeric_data(loss_series)
    if series.ndim != 2 or series.shape[1] != 2:
        raise ValueError("loss_series must contain (fraction, loss) pairs")
    if series.shape[0] < 4:
        raise ValueError("At least 4 points are required")
    fractions, losses = series[:, 0], series[:, 1]
    if np.any(np.diff(fractions) <= 0):
        raise ValueError("Fractions must be strictly increasing")
    intercept, slope, r_squared = _fit_loss_trend(fractions, losses)
    current = losses[-1]
    scale = max(abs(current), 1e-12)
    ratio = (intercept + slope * 1.0) / scale
    flagged = bool((slope > 0 and r_squared > 0.7) or ratio > 1.5)
    if flagged:
        score = 1.0
    else:
        score = min(max(slope / scale, ratio - 1.0), SCORE_CAP)
    return PredictionScore(run_id=run_id, score=score, label=label, flagged=flagged)


def _labels_and_scores(scores):
    labels = np.array([score.label for score in scores], dtype=bool)
    values = np.array([score.score for score in scores], dtype=float)
    if labels.size == 0 or labels.all() or not labels.any():
        raise ValueError("Both failed and healthy runs are required")
    return labels, values


def auc(scores):
    """
    Area under the ROC curve of failure scores (ties count one half).

    Raises:
        ValueError: when all runs share the same label.
    """
    labels, values = _labels_and_scores(scores)
    return float(roc_auc_score(labels, values))


def threshold_sweep(scores, thresholds=DEFAULT_THRESHOLDS):
    """
    Precision, recall and F1 of the failure class when runs scoring
    strictly above each threshold are flagged.

    When no run is flagged precision is reported as 0 with
    ``precision_defined = False``.

    Returns:
        list of ThresholdReport
    """
    labels, values = _labels_and_scores(scores)
    reports = []
    for threshold in thresholds:
        predicted = values > threshold
        precision = float(precision_score(labels, predicted, zero_division=0))
        recall = float(recall_score(labels, predicted, zero_division=0))
        f1 = 0.0
        if precision + recall > 0:
            f1 = 2 * precision * recall / (precision + recall)
        reports.append(
            ThresholdReport(
                threshold=float(threshold),
                precision=precision,
                recall=recall,
                f1=f1,
                precision_defined=bool(predicted.any()),
            )
        )
    return reports


def invariance_demonstration():
    """
    Machine-checkable report contrasting heuristic and Fisher-geometric metrics.

    Cosine similarity changes under the reparametrization ``θ → diag(1, 2) θ``
    and routing entropy changes under logit scaling by 2, while the
    Fisher-Rao distance and FSI stay put under expert permutations and under
    logit transformations that leave the routing distribution unchanged.

    Returns:
        dict
    """
    theta_1 = np.array([1.0, 1.0])
    theta_2 = np.array([1.0, 0.0])
    transform = np.diag([1.0, 2.0])
    cosine_before = cosine_similarity(theta_1, theta_2)
    cosine_after = cosine_similarity(transform @ theta_1, transform @ theta_2)

    logits = np.array([1.0, 0.0])
    entropy_before = routing_entropy(softmax(logits))
    entropy_after = routing_entropy(softmax(2.0 * logits))

    router_logits = np.array([1.5, 0.2, -0.7, 0.0])
    other_logits = np.array([-0.3, 0.9, 0.1, 0.4])
    tau = 1.0
    permutation = np.array([2, 0, 3, 1])
    p = softmax(router_logits, tau)
    q = softmax(other_logits, tau)
    fsi_base = fsi(p)
    fsi_permuted = fsi(ProbabilityVector(p.values[permutation]))
    fsi_shifted = fsi(softmax(router_logits + 3.7, tau))
    fsi_rescaled = fsi(softmax(2.0 * router_logits, 2.0 * tau))
    distance_base = fisher_rao_distance(p, q)
    distance_permuted = fisher_rao_distance(
        ProbabilityVector(p.values[permutation]),
        ProbabilityVector(q.values[permutation]),
    )

    fsi_checks = {
        "permutation": abs(fsi_permuted - fsi_base),
        "constant_shift": abs(fsi_shifted - fsi_base),
        "joint_temperature_rescaling": abs(fsi_rescaled - fsi_base),
    }
    return {
        "cosine": {
            "theta_1": theta_1.tolist(),
            "theta_2": theta_2.tolist(),
            "transform_diagonal": [1.0, 2.0],
            "before": cosine_before,
            "after": cosine_after,
            "ratio": cosine_after / cosine_before,
            "relative_drop": 1.0 - cosine_after / cosine_before,
            "invariant": bool(abs(cosine_after - cosine_before) <= 1e-10),
        },
        "entropy": {
            "logits": logits.tolist(),
            "scale": 2.0,
            "before": entropy_before,
            "after": entropy_after,
            "change": entropy_after - entropy_before,
            "invariant": bool(abs(entropy_after - entropy_before) <= 1e-10),
        },
        "fisher_rao": {
            "router_logits": router_logits.tolist(),
            "permutation": permutation.tolist(),
            "fsi": fsi_base,
            "fsi_abs_differences": fsi_checks,
            "distance": distance_base,
            "distance_abs_difference_under_permutation": abs(
                distance_permuted - distance_base
            ),
            "invariant": bool(
                max(fsi_checks.values()) <= 1e-10
                and abs(distance_permuted - distance_base) <= 1e-10
            ),
        },
    }


def format_invariance_report(report):
    """Human-readable rendering of ``invariance_demonstration``."""
    cosine = report["cosine"]
    entropy_part = report["entropy"]
    fisher = report["fisher_rao"]
    verdict = {True: "invariant", False: "NOT invariant"}
    lines = [
        "Invariance of specialization metrics",
        "",
        f"Cosine similarity under diag(1, 2): {cosine['before']:.5f} -> "
        f"{cosine['after']:.5f} (ratio {cosine['ratio']:.4f}, "
        f"drop {100 * cosine['relative_drop']:.1f}%): {verdict[cosine['invariant']]}",
        f"Routing entropy under logit scaling x2: {entropy_part['before']:.5f} -> "
        f"{entropy_part['after']:.5f} nats: {verdict[entropy_part['invariant']]}",
        f"FSI = {fisher['fsi']:.6f} rad",
    ]
    for name, difference in fisher["fsi_abs_differences"].items():
        lines.append(f"  |dFSI| under {name.replace('_', ' ')}: {difference:.3e}")
    lines.append(
        "  |dFR| under expert permutation: "
        f"{fisher['distance_abs_difference_under_permutation']:.3e}"
    )
    lines.append(f"Fisher-Rao metrics: {verdict[fisher['invariant']]}")
    return "\n".join(lines) + "\n"
