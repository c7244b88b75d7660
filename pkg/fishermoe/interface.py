import logging
from pathlib import Path

from fishermoe.baseline_metrics import format_invariance_report, invariance_demonstration
from fishermoe.campaign_handler import (
    campaign_runner,
    failure_study,
    intervention_study,
    threshold_table,
)
from fishermoe.config import ExperimentConfig, load_config, resolve_runs
from fishermoe.diagnostics import (
    geodesic_validation,
    lambda_sweep,
    run_training_with_diagnostics,
)
from fishermoe.experiment_manager import ExperimentManager, read_table
from fishermoe.report_handler import build_report
from fishermoe.visualization_handler import Visualization

logger = logging.getLogger(__name__)


class FisherMoE:
    """
    Information-geometric analysis of mixture-of-experts training.

    Every command writes its artifacts into ``output_dir``, which the
    instance locks for the duration of the command.
    """

    def __init__(self, config=None, output_dir=None, progress=True) -> None:
        """
        Parameters:
            config (ExperimentConfig, optional): defaults when omitted.
            output_dir (str, optional): overrides ``config.output_dir``.
            progress (bool): show progress bars over runs.
        """
        self.config = config if config is not None else ExperimentConfig()
        self.output_dir = Path(output_dir if output_dir is not None else self.config.output_dir)
        self.progress = progress

    @classmethod
    def from_file(cls, path, output_dir=None, progress=True):
        return cls(load_config(path), output_dir=output_dir, progress=progress)

    @property
    def visualization(self):
        """Lazy initialization of Visualization instance."""
        if not hasattr(self, "_visualization_"):
            self._visualization_ = Visualization(self.config.diagnostics.fhs_threshold)
        return self._visualization_

    def _manager(self):
        return ExperimentManager(self.output_dir)

    def _runner(self, description):
        return campaign_runner(
            self.config.campaign.workers, progress=self.progress, description=description
        )

    ###COMMANDS###
    def simulate(self):
        """
        Train one model per campaign seed and save run JSON and trajectory CSV.

        Returns:
            list of RunResult
        """
        with self._manager() as manager, self._runner("simulate") as runner:
            results = list(runner(run_training_with_diagnostics, resolve_runs(self.config)))
            for result in results:
                manager.save_run(result)
                logger.info(
                    "Seed %d: final accuracy %.4f (optimal %.4f), final FSI %.4f%s",
                    result.seed,
                    result.final_accuracy,
                    result.optimal_accuracy,
                    result.final_fsi,
                    f", failed ({result.failure_reason})" if result.failed else "",
                )
        return results

    def failure_study(self):
        """
        Failure prediction campaign.

        Returns:
            CampaignSummary
        """
        with self._manager() as manager, self._runner("failure study") as runner:
            _, summary = failure_study(self.config, runner)
            manager.save_table(summary.runs, "failure_study_runs.csv")
            manager.save_json(summary.to_dict(), "failure_study_summary.json")
        return summary

    def threshold_sweep(self, thresholds=None):
        """
        Threshold sweep over the scored runs of a failure study.

        The runs are read from ``failure_study_runs.csv``; the failure study
        is run first when the file is absent.

        Returns:
            pandas.DataFrame
        """
        thresholds = self.config.campaign.thresholds if thresholds is None else thresholds
        runs_path = self.output_dir / "failure_study_runs.csv"
        if runs_path.exists():
            runs = read_table(runs_path)
        else:
            logger.info("%s not found, running the failure study first", runs_path)
            runs = self.failure_study().runs
        table = threshold_table(runs, thresholds)
        with self._manager() as manager:
            manager.save_table(table, "threshold_sweep.csv")
        return table

    def intervention_study(self):
        with self._manager() as manager, self._runner("intervention study") as runner:
            summary = intervention_study(self.config, runner)
            manager.save_table(summary.runs, "intervention_runs.csv")
            manager.save_json(
                {"intervention_outcomes": summary.intervention_outcomes},
                "intervention_summary.json",
            )
        return summary

    def geodesic_validate(self, taus=None):
        with self._manager() as manager, self._runner("geodesic validation") as runner:
            table = geodesic_validation(self.config, taus, runner)
            manager.save_table(table, "geodesic_validation.csv")
        return table

    def lambda_sweep(self, lambdas=None):
        with self._manager() as manager, self._runner("lambda sweep") as runner:
            sweep = lambda_sweep(self.config, lambdas, runner)
            manager.save_table(sweep.table, "lambda_sweep.csv")
            manager.save_table(sweep.trajectories, "lambda_trajectories.csv")
        logger.info("Strictly ordered seeds: %.0f%%", 100 * sweep.ordered_fraction)
        return sweep

    def invariance_demo(self):
        report = invariance_demonstration()
        with self._manager() as manager:
            manager.save_json(report, "invariance_report.json")
            manager.save_text(format_invariance_report(report), "invariance_report.txt")
        return report

    def report(self, plots=False):
        """
        Write ``report.md`` and, with ``plots``, the figures available from
        the artifacts.

        Returns:
            str: the markdown text.
        """
        text = build_report(self.output_dir, self.config.diagnostics.fhs_threshold)
        with self._manager() as manager:
            manager.save_text(text, "report.md")
            if plots:
                trajectories = self.output_dir / "lambda_trajectories.csv"
                if trajectories.exists():
                    self.visualization.plot_fsi_trajectories(
                        read_table(trajectories),
                        n_experts=self.config.model.n_experts,
                        savepath=manager.path("fsi_trajectories.png"),
                    )
                runs = self.output_dir / "failure_study_runs.csv"
                if runs.exists():
                    self.visualization.plot_fhs_scatter(
                        read_table(runs), savepath=manager.path("fhs_scatter.png")
                    )
        return text
