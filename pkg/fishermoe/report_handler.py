"""
Markdown summary of the artifacts in an output directory, with the
monitoring checklist evaluated against each run.
"""

import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd

from fishermoe.diagnostics import INTERVENTION_ARMS
from fishermoe.experiment_manager import read_json, read_table

logger = logging.getLogger(__name__)

FSI_TARGET_FRACTION = 0.6
CORRELATION_TARGETS = (
    ("final_fsi_vs_final_accuracy", "final FSI", 0.5),
    ("fhs_at_10pct_vs_final_accuracy", "FHS at 10%", -0.5),
)
GEODESIC_CHECK_COLUMNS = {
    "tau",
    "mean_deviation_fraction",
    "mean_bound_fraction",
    "fraction_steps_within_bound",
}
INTERVENTION_ADVICE = (
    "FHS above the threshold at 10% of training: reinitialize the expert weights (Xavier), "
    "keep the router weights, halve λ and resume"
)
KNOWN_ARTIFACTS = (
    "failure_study_runs.csv",
    "failure_study_summary.json",
    "threshold_sweep.csv",
    "intervention_summary.json",
    "geodesic_validation.csv",
    "lambda_sweep.csv",
    "invariance_report.txt",
)


class EmptyReportDirectoryError(FileNotFoundError):
    """The directory holds no campaign artifacts."""


def _format(value):
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return "n/a" if math.isnan(value) else f"{value:.4g}"
    return str(value).replace("|", "\\|")


def markdown_table(table):
    """
    Pipe table of a DataFrame.

    ``DataFrame.to_markdown`` would need tabulate, which is not a dependency;
    floats are written with 4 significant digits, NaN as "n/a" and booleans
    as yes/no.
    """
    header = "| " + " | ".join(str(column) for column in table.columns) + " |"
    rule = "|" + "|".join("---" for _ in table.columns) + "|"
    rows = [
        "| " + " | ".join(_format(value) for value in row) + " |"
        for row in table.itertuples(index=False)
    ]
    return "\n".join([header, rule] + rows) + "\n"


def checklist(final_fsi_normalized, fhs_at_10pct, fhs_threshold=1.0):
    """
    Monitoring checklist of one run.

    Returns:
        list of str
    """
    items = []
    if final_fsi_normalized is None or math.isnan(final_fsi_normalized):
        items.append("FSI not available")
    elif final_fsi_normalized > FSI_TARGET_FRACTION:
        items.append("FSI target met")
    else:
        items.append(
            f"FSI below target ({final_fsi_normalized:.2f} ≤ "
            f"{FSI_TARGET_FRACTION} · FSI_max): experts under-differentiated"
        )
    if fhs_at_10pct is not None and fhs_at_10pct > fhs_threshold:
        items.append(INTERVENTION_ADVICE)
    return items


def correlation_checks(correlations):
    """
    Sign checks of the failure-study correlations with final accuracy:
    final FSI should exceed r = 0.5 and FHS at 10% should stay below -0.5.

    Returns:
        list of str
    """
    items = []
    for name, label, target in CORRELATION_TARGETS:
        value = correlations.get(name)
        if value is None or math.isnan(value):
            items.append(f"not available: r {label} vs final accuracy")
            continue
        met = value > target if target > 0 else value < target
        relation = ">" if target > 0 else "<"
        items.append(
            f"{'ok' if met else 'not met'}: r {label} vs final accuracy = "
            f"{value:.3f} (target {relation} {target})"
        )
    return items


def threshold_checks(table, reference=1.0, tolerance=0.1):
    """
    Location and flatness of the F1 peak of a threshold sweep. The peak
    should sit at ``reference`` or a neighbouring threshold; the F1 two
    thresholds below and one above the reference should stay within
    ``tolerance`` of the peak.

    Returns:
        list of str
    """
    table = table.sort_values("threshold").reset_index(drop=True)
    thresholds = table["threshold"].tolist()
    if reference not in thresholds:
        return [f"not available: threshold {reference} not swept"]
    position = thresholds.index(reference)
    neighbours = thresholds[max(position - 1, 0) : position + 2]
    peak = table.loc[table["f1"].idxmax()]
    items = [
        f"{'ok' if peak['threshold'] in neighbours else 'not met'}: F1 peaks at "
        f"{peak['threshold']:g} (F1 {peak['f1']:.3f}), expected within {neighbours}"
    ]
    below = thresholds[max(position - 2, 0)]
    above = thresholds[min(position + 1, len(thresholds) - 1)]
    for threshold in sorted({below, above}):
        f1 = float(table.loc[table["threshold"] == threshold, "f1"].iloc[0])
        met = peak["f1"] - f1 <= tolerance
        items.append(
            f"{'ok' if met else 'not met'}: F1 at {threshold:g} = {f1:.3f}, "
            f"within {tolerance} of the peak"
        )
    return items


def intervention_checks(outcomes, min_flagged=10):
    """
    Recovery-rate ordering of the intervention arms: expert reinitialization
    with half λ at least as good as reinitialization alone, itself at least
    as good as continuing, and strictly better than a full reinitialization.

    Returns:
        list of str
    """
    if not all(arm in outcomes for arm in INTERVENTION_ARMS):
        return ["not available: intervention arms missing"]
    rate = {arm: outcomes[arm]["recovery_rate"] for arm in INTERVENTION_ARMS}
    flagged = min(outcomes[arm]["n_runs"] for arm in INTERVENTION_ARMS)
    comparisons = (
        ("reinit_experts_half_lambda", "reinit_experts", False),
        ("reinit_experts", "continue", False),
        ("reinit_experts_half_lambda", "full_reinit", True),
    )
    items = [
        f"{'ok' if flagged >= min_flagged else 'not met'}: {flagged} flagged runs "
        f"(at least {min_flagged})"
    ]
    for first, second, strict in comparisons:
        met = rate[first] > rate[second] if strict else rate[first] >= rate[second]
        relation = ">" if strict else "≥"
        items.append(
            f"{'ok' if met else 'not met'}: recovery {first} {rate[first]:.3f} "
            f"{relation} {second} {rate[second]:.3f}"
        )
    return items


def geodesic_checks(table):
    """
    Bound satisfaction at every temperature, and the direction in which the
    cumulative deviation moves with τ compared with the direction of the
    cumulative bound.

    Returns:
        list of str
    """
    table = table.sort_values("tau").reset_index(drop=True)
    within = table["fraction_steps_within_bound"]
    items = [
        f"{'ok' if (within == 1.0).all() else 'not met'}: per-step deviation within "
        f"the bound at every τ (lowest share {within.min():.4f})"
    ]
    if len(table) > 1:
        measured = _direction(table["mean_deviation_fraction"])
        bound = _direction(table["mean_bound_fraction"])
        items.append(
            f"{'ok' if measured == bound != 'mixed' else 'not met'}: cumulative "
            f"deviation {measured} with τ, cumulative bound {bound}"
        )
    return items


def monotonicity_checks(table, slack=1e-3):
    """
    FSI monotonicity of the λ = 0 runs of a load-balancing sweep.

    Returns:
        list of str
    """
    free = table[table["lambda"] == 0.0]
    if free.empty:
        return ["not available: no λ = 0 run"]
    violations = free["fsi_monotonicity_violations"]
    return [
        f"{'ok' if violations.sum() == 0 else 'not met'}: FSI decreases larger than "
        f"{slack:g} at λ = 0 in {int((violations > 0).sum())} of {len(free)} runs "
        f"({int(violations.sum())} in total)"
    ]


def _direction(values):
    steps = np.diff(values.to_numpy(dtype=float))
    if np.all(steps > 0):
        return "increasing"
    if np.all(steps < 0):
        return "decreasing"
    return "mixed"


def _campaign_checks(output_dir):
    items = []
    if (output_dir / "failure_study_summary.json").exists():
        summary = read_json(output_dir / "failure_study_summary.json")
        if "correlations" in summary:
            items += correlation_checks(summary["correlations"])
    for name, columns, check in (
        ("threshold_sweep.csv", {"threshold", "f1"}, threshold_checks),
        ("geodesic_validation.csv", GEODESIC_CHECK_COLUMNS, geodesic_checks),
        ("lambda_sweep.csv", {"lambda", "fsi_monotonicity_violations"}, monotonicity_checks),
    ):
        if (output_dir / name).exists():
            table = read_table(output_dir / name)
            if columns <= set(table.columns):
                items += check(table)
    if (output_dir / "intervention_summary.json").exists():
        outcomes = read_json(output_dir / "intervention_summary.json").get(
            "intervention_outcomes", {}
        )
        items += intervention_checks(outcomes)
    return items


def _run_rows(output_dir):
    runs_csv = output_dir / "failure_study_runs.csv"
    if runs_csv.exists():
        runs = read_table(runs_csv)
        return [
            (row.seed, row.final_accuracy, row.final_fsi_normalized, row.fhs_at_10pct, row.failed)
            for row in runs.itertuples(index=False)
        ]
    rows = []
    for path in sorted(output_dir.glob("run_*.json")):
        run = read_json(path)
        rows.append(
            (
                run["seed"],
                run["final_accuracy"],
                math.nan if run["final_fsi_normalized"] is None else run["final_fsi_normalized"],
                math.nan if run["fhs_at_10pct"] is None else run["fhs_at_10pct"],
                run["failed"],
            )
        )
    return sorted(rows, key=lambda row: row[0])


def build_report(output_dir, fhs_threshold=1.0):
    """
    Aggregate the artifacts of ``output_dir`` into a markdown document.

    Parameters:
        output_dir (str): directory written by the other commands.
        fhs_threshold (float): FHS warning threshold.

    Returns:
        str

    Raises:
        EmptyReportDirectoryError: when no artifact is found.
    """
    output_dir = Path(output_dir)
    runs = _run_rows(output_dir) if output_dir.is_dir() else []
    present = [name for name in KNOWN_ARTIFACTS if (output_dir / name).exists()]
    if not runs and not present:
        raise EmptyReportDirectoryError(f"No campaign artifacts in '{output_dir}'")

    sections = ["# fishermoe report", ""]
    if runs:
        sections += ["## Runs", ""]
        table = pd.DataFrame(
            runs,
            columns=["seed", "final_accuracy", "fsi_normalized", "fhs_at_10pct", "failed"],
        )
        sections.append(markdown_table(table))
        sections += ["## Checklist", ""]
        for seed, _, fsi_normalized, fhs_value, _ in runs:
            for item in checklist(fsi_normalized, fhs_value, fhs_threshold):
                sections.append(f"- seed {seed}: {item}")
        sections.append("")

    if (output_dir / "failure_study_summary.json").exists():
        summary = read_json(output_dir / "failure_study_summary.json")
        sections += ["## Failure prediction", ""]
        sections.append(f"- AUC FHS at 10%: {_format(summary.get('auc_fhs'))}")
        sections.append(f"- AUC validation loss: {_format(summary.get('auc_val_loss'))}")
        for name, value in sorted(summary.get("baseline_aucs", {}).items()):
            sections.append(f"- AUC {name}: {_format(value)}")
        for name, value in sorted(summary.get("correlations", {}).items()):
            sections.append(f"- r {name.replace('_', ' ')}: {_format(value)}")
        sections.append("")

    for name, title in (
        ("threshold_sweep.csv", "FHS threshold sweep"),
        ("geodesic_validation.csv", "Geodesic validation"),
        ("lambda_sweep.csv", "Load-balancing sweep"),
    ):
        if (output_dir / name).exists():
            sections += [f"## {title}", "", markdown_table(read_table(output_dir / name))]

    if (output_dir / "intervention_summary.json").exists():
        outcomes = read_json(output_dir / "intervention_summary.json").get(
            "intervention_outcomes", {}
        )
        table = pd.DataFrame(
            [
                (arm, values["recovery_rate"], values["mean_final_accuracy"], values["n_runs"])
                for arm, values in outcomes.items()
            ],
            columns=["arm", "recovery_rate", "mean_final_accuracy", "n_runs"],
        )
        sections += ["## Interventions", "", markdown_table(table)]

    checks = _campaign_checks(output_dir)
    if checks:
        sections += ["## Campaign checks", ""] + [f"- {item}" for item in checks] + [""]

    if (output_dir / "invariance_report.txt").exists():
        text = (output_dir / "invariance_report.txt").read_text(encoding="utf-8")
        sections += ["## Invariance", "", "```", text.rstrip("\n"), "```", ""]

    logger.debug("Report built from %d runs and %s", len(runs), present)
    return "\n".join(sections).rstrip("\n") + "\n"
