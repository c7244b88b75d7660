"""
Figures for fishermoe campaigns: FSI trajectories per load-balancing weight
and FHS at the scoring fraction against final accuracy.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402
import seaborn as sns  # noqa: E402

from fishermoe.simplex_geometry import fsi_max  # noqa: E402


class Visualization:
    def __init__(self, fhs_threshold=1.0) -> None:
        """
        Parameters
        ----------
        fhs_threshold: float
            Failure-warning threshold drawn on the FHS scatter.
        """
        self.fhs_threshold = fhs_threshold

    def plot_fsi_trajectories(self, trajectories, n_experts=None, savepath=None):
        """
        FSI against training step, one line per load-balancing weight.

        Seeds are aggregated into a mean line with a ±1 standard deviation
        band.

        Parameters
        ----------
        trajectories: pandas.DataFrame
            Columns ``step``, ``fsi`` and ``lambda`` (as in ``lambda_trajectories.csv``).
        n_experts: int, optional
            Draws the FSI_max reference line when given.
        savepath: str, optional
            Path of the image file.

        Returns
        -------
        plot: matplotlib.axes.Axes
        """
        if not isinstance(trajectories, pd.DataFrame) or trajectories.empty:
            raise ValueError("No trajectories to plot")
        figure, axes = plt.subplots(figsize=(6, 4))
        data = trajectories.assign(**{"λ": trajectories["lambda"].astype(str)})
        plot = sns.lineplot(
            data=data, x="step", y="fsi", hue="λ", errorbar="sd", ax=axes
        )
        if n_experts is not None:
            plot.axhline(fsi_max(n_experts), color="grey", linestyle="--", label="FSI max")
        plot.set_xlabel("training step")
        plot.set_ylabel("FSI (rad)")
        plot.legend()
        if savepath:
            figure.savefig(savepath, dpi=150, bbox_inches="tight")
        plt.close(figure)
        return plot

    def plot_fhs_scatter(self, runs, savepath=None):
        """
        FHS at the scoring fraction against final accuracy, coloured by outcome.

        Parameters
        ----------
        runs: pandas.DataFrame
            Columns ``fhs_at_10pct``, ``final_accuracy`` and ``failed``
            (as in ``failure_study_runs.csv``).
        savepath: str, optional
            Path of the image file.

        Returns
        -------
        plot: matplotlib.axes.Axes
        """
        if not isinstance(runs, pd.DataFrame) or runs.empty:
            raise ValueError("No runs to plot")
        figure, axes = plt.subplots(figsize=(5, 4))
        data = runs.assign(outcome=runs["failed"].map({True: "failed", False: "healthy"}))
        plot = sns.scatterplot(
            data=data, x="fhs_at_10pct", y="final_accuracy", hue="outcome", ax=axes
        )
        plot.axvline(self.fhs_threshold, color="grey", linestyle="--")
        plot.set_xlabel("FHS at 10% of training")
        plot.set_ylabel("final accuracy")
        if savepath:
            figure.savefig(savepath, dpi=150, bbox_inches="tight")
        plt.close(figure)
        return plot
