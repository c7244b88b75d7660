"""
Information-geometric analysis of MoE training runs.

``IGMAnalyzer`` evaluates one checkpoint: marginal routing on a fixed probe
set, FSI, per-expert diagonal Fisher matrices, the heterogeneity matrix and
FHS against the first checkpoint. ``TrainingRun`` trains a model, calls the
analyzer at every checkpoint and, in dense mode, measures each step's
deviation from the predicted great-circle continuation.
"""

import copy
import dataclasses
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from fishermoe.baseline_metrics import (
    BASELINE_ORIENTATION,
    expert_overlap,
    load_imbalance,
    mean_pairwise_cosine,
    routing_entropy,
)
from fishermoe.config import ExperimentConfig, RunConfig
from fishermoe.fisher_estimation import (
    estimate_all_diagonal_fims,
    fhs,
    heterogeneity_matrix,
    operator_bound_from_fims,
    specialization_rate_bound,
)
from fishermoe.moe_model import (
    NonFiniteLossError,
    accuracy,
    apply_gradients,
    backward,
    compute_gates,
    init_model,
    make_optimizer,
    predict,
    reinit_all,
    reinit_experts_keep_router,
    router_logit_gradient,
)
from fishermoe.simplex_geometry import (
    ProbabilityVector,
    embed_displacement,
    fisher_rao_distance,
    fsi,
    fsi_max,
    geodesic_bound,
    geodesic_step_deviation,
    project_to_tangent,
    sqrt_embed,
)
from fishermoe.synthetic_task import bayes_optimal_accuracy, is_failure, sample_batch
from fishermoe.utils import rng_stream

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = (
    "step",
    "fsi",
    "fsi_normalized",
    "fhs",
    "h_frob",
    "fisher_trace",
    "fsi_rate_bound",
    "task_loss",
    "accuracy",
    "router_grad_norm",
    "per_step_geodesic_deviation",
    "per_step_geodesic_bound",
    "cosine_mean",
    "routing_entropy",
    "load_imbalance",
    "expert_overlap",
    "gradient_norm",
)
GEODESIC_COLUMNS = ("step", "deviation", "bound", "fisher_rao_displacement")
# larger weights overflow squared Fisher scores
MAX_ABS_WEIGHT = 1e100
INTERVENTION_ARMS = (
    "continue",
    "reinit_experts",
    "reinit_experts_half_lambda",
    "full_reinit",
)


@dataclass
class TrajectoryRecord:
    """
    One checkpoint of a run. ``task_loss`` and ``accuracy`` are measured on
    the probe set; ``gradient_norm`` is the router gradient norm used as a
    baseline score.
    """

    step: int
    fsi: float
    fsi_normalized: float
    fhs: float
    h_frob: float
    fisher_trace: float
    fsi_rate_bound: float
    task_loss: float
    accuracy: float
    router_grad_norm: float
    per_step_geodesic_deviation: float
    per_step_geodesic_bound: float
    cosine_mean: float
    routing_entropy: float
    load_imbalance: float
    expert_overlap: float
    gradient_norm: float

    def __post_init__(self):
        if self.fsi_normalized > 1.0 + 1e-9:
            raise ValueError("Normalized FSI exceeds 1")
        if self.per_step_geodesic_deviation < 0 or self.per_step_geodesic_bound < 0:
            raise ValueError("Geodesic deviation and bound must be non-negative")


@dataclass(frozen=True)
class GeodesicStep:
    step: int
    deviation: float
    bound: float
    fisher_rao_displacement: float


@dataclass
class RunResult:
    """
    Outcome of one training run.

    Attributes:
        config (dict): resolved run configuration (seed, lottery cell, sections).
        trajectory (list): TrajectoryRecord per checkpoint, in step order.
        final_accuracy (float): held-out test accuracy, 0 for diverged runs.
        optimal_accuracy (float): Monte-Carlo Bayes accuracy.
        failed (bool): ``is_failure(final_accuracy, optimal_accuracy)``.
        fhs_at_10pct (float): FHS at the scoring fraction.
        seed (int): run seed.
    """

    config: dict
    trajectory: list
    final_accuracy: float
    optimal_accuracy: float
    failed: bool
    fhs_at_10pct: float
    seed: int
    total_steps: int
    failure_reason: str = ""
    optimal_accuracy_se: float = 0.0
    final_fsi: float = math.nan
    final_fsi_normalized: float = math.nan
    lottery_cell: dict = None
    geodesic_steps: list = field(default_factory=list)

    def trajectory_frame(self):
        return pd.DataFrame(
            [dataclasses.astuple(record) for record in self.trajectory],
            columns=list(TRAJECTORY_COLUMNS),
        )

    def geodesic_frame(self):
        return pd.DataFrame(
            [dataclasses.astuple(step) for step in self.geodesic_steps],
            columns=list(GEODESIC_COLUMNS),
        )

    def summary(self):
        """JSON-ready digest with the configuration echo."""
        steps = self.geodesic_frame()
        within = (steps["deviation"] <= steps["bound"]).mean() if len(steps) else math.nan
        return {
            "seed": self.seed,
            "failed": self.failed,
            "failure_reason": self.failure_reason,
            "final_accuracy": self.final_accuracy,
            "optimal_accuracy": self.optimal_accuracy,
            "optimal_accuracy_se": self.optimal_accuracy_se,
            "fhs_at_10pct": self.fhs_at_10pct,
            "final_fsi": self.final_fsi,
            "final_fsi_normalized": self.final_fsi_normalized,
            "total_steps": self.total_steps,
            "checkpoints": len(self.trajectory),
            "fsi_monotonicity_violations": fsi_monotonicity_violations(self.trajectory),
            "geodesic_steps_measured": int(len(steps)),
            "geodesic_fraction_within_bound": float(within),
            "lottery_cell": self.lottery_cell,
            "config": self.config,
        }


def checkpoint_steps(total_steps, fraction):
    """Steps at multiples of ``fraction · total_steps``, from 0 to the last step."""
    count = int(round(1.0 / fraction))
    steps = {int(round(k * fraction * total_steps)) for k in range(count + 1)}
    steps = {min(step, total_steps) for step in steps}
    steps.add(total_steps)
    return sorted(steps)


class IGMAnalyzer:
    """
    Checkpoint analysis against a fixed probe set.

    The first analyzed checkpoint must be step 0; its heterogeneity matrix
    is the FHS reference.

    Parameters:
        probe (LabeledBatch): probe set, also used as validation data.
        fim_batch_size (int): number of probe samples used for the FIMs.
        eta (float, optional): learning rate for the rate bound.
    """

    def __init__(self, probe, fim_batch_size, eta=None):
        self.probe = probe
        self.fim_batch = probe.head(fim_batch_size)
        self.eta = eta
        self.initial = None
        self.operator_bound = None

    def analyze(self, model):
        """
        Evaluate one checkpoint.

        Returns:
            TrajectoryRecord: with zero geodesic columns.
        """
        gate_output = compute_gates(model, self.probe.inputs)
        p_bar = ProbabilityVector(gate_output.routing_probs.mean(axis=0))
        fims = estimate_all_diagonal_fims(model, self.fim_batch)
        heterogeneity = heterogeneity_matrix(fims, p_bar)
        if self.initial is None:
            if model.step != 0:
                raise ValueError("missing t0 checkpoint")
            self.initial = heterogeneity
            self.operator_bound = operator_bound_from_fims(fims)
        score = fhs(heterogeneity, self.initial)

        _, breakdown = backward(model, self.probe)
        predictions = predict(model, self.probe.inputs)
        index = fsi(p_bar)
        return TrajectoryRecord(
            step=int(model.step),
            fsi=index,
            fsi_normalized=index / fsi_max(model.n_experts),
            fhs=score.value,
            h_frob=heterogeneity.frob_norm,
            fisher_trace=heterogeneity.fisher_trace,
            fsi_rate_bound=self._rate_bound(model, p_bar, heterogeneity),
            task_loss=breakdown.task_loss,
            accuracy=float(np.mean(predictions == self.probe.labels)),
            router_grad_norm=breakdown.router_grad_norm,
            per_step_geodesic_deviation=0.0,
            per_step_geodesic_bound=0.0,
            cosine_mean=mean_pairwise_cosine(
                [model.expert_parameters(e) for e in range(model.n_experts)]
            ),
            routing_entropy=routing_entropy(p_bar),
            load_imbalance=load_imbalance(
                np.bincount(gate_output.assignments, minlength=model.n_experts)
            ),
            expert_overlap=expert_overlap(
                [model.expert_parameters(e) for e in range(model.n_experts)]
            ),
            gradient_norm=breakdown.router_grad_norm,
        )

    def _rate_bound(self, model, p_bar, heterogeneity):
        # router-logit gradient in the categorical metric diag(1/p̄)
        if self.eta is None or np.any(p_bar.values <= 0):
            return math.nan
        gradient = router_logit_gradient(model, self.probe).mean(axis=0)
        return specialization_rate_bound(
            self.eta,
            gradient,
            1.0 / p_bar.values,
            heterogeneity.frob_norm,
            fim_trace=heterogeneity.fisher_trace,
        )


def igma_analyze(model_checkpoints, probe_data, fim_batch_size, eta=None):
    """
    Run the analysis over a sequence of checkpoints.

    Parameters:
        model_checkpoints (sequence): MoEModelState snapshots, step 0 first.
        probe_data (LabeledBatch): probe set.
        fim_batch_size (int): samples used for the FIMs.
        eta (float, optional): learning rate, enables the rate bound column.

    Returns:
        list of TrajectoryRecord, in step order.

    Raises:
        ValueError: when no checkpoint is given or the first is not step 0.
    """
    checkpoints = sorted(model_checkpoints, key=lambda model: model.step)
    if not checkpoints or checkpoints[0].step != 0:
        raise ValueError("missing t0 checkpoint")
    analyzer = IGMAnalyzer(probe_data, fim_batch_size, eta)
    return [analyzer.analyze(model) for model in checkpoints]


class TrainingRun:
    """
    One training run with checkpoint analysis.

    All randomness comes from named streams of the run seed, so a deep copy
    (``branch``) continues with the same data as the original.

    Parameters:
        run_config (RunConfig): resolved run.
    """

    def __init__(self, run_config):
        experiment = run_config.experiment
        seed = run_config.seed
        self.run_config = run_config
        self.eta = experiment.training.eta
        self.batch_size = experiment.training.batch_size
        self.total_steps = experiment.training.steps
        self.init_scale = experiment.model.init_scale
        diagnostics = experiment.diagnostics
        self.scoring_fraction = diagnostics.scoring_fraction

        self.spec = experiment.task.build_spec(
            experiment.model.n_experts, rng_stream(seed, "task")
        )
        self.oracle = bayes_optimal_accuracy(
            self.spec, diagnostics.oracle_samples, rng_stream(seed, "oracle")
        )
        self.probe = sample_batch(self.spec, diagnostics.probe_size, rng_stream(seed, "probe"))
        self.test = sample_batch(self.spec, diagnostics.test_size, rng_stream(seed, "test"))
        self.data_rng = rng_stream(seed, "data")
        self.model = init_model(
            n_experts=experiment.model.n_experts,
            input_dim=experiment.task.input_dim,
            n_classes=self.spec.n_classes,
            rng=rng_stream(seed, "init"),
            tau=experiment.model.tau,
            top_k=experiment.model.top_k,
            lam=experiment.model.lam,
            init_scale=experiment.model.init_scale,
            expert_arch=experiment.model.expert_arch,
            hidden_dim=experiment.model.hidden_dim,
        )
        self.optimizer = make_optimizer(experiment.training.optimizer)
        self.analyzer = IGMAnalyzer(self.probe, diagnostics.fim_batch_size, self.eta)
        self.checkpoints = set(checkpoint_steps(self.total_steps, diagnostics.checkpoint_fraction))
        self.track_geodesic = (
            diagnostics.geodesic_tracking and self.model.dense and self.eta > 0
        )
        self.trajectory = []
        self.geodesic_steps = []
        self.failure_reason = ""
        self.divergence = None
        self._routing_cache = None
        self._record_checkpoint()

    @property
    def diverged(self):
        return self.failure_reason == "diverged"

    @property
    def step(self):
        return self.model.step

    def advance(self, until_step=None):
        """Train up to ``until_step`` (the last step by default) or divergence."""
        until_step = self.total_steps if until_step is None else min(until_step, self.total_steps)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            while self.model.step < until_step and not self.diverged:
                batch = sample_batch(self.spec, self.batch_size, self.data_rng)
                try:
                    gradients, _ = backward(self.model, batch)
                except NonFiniteLossError as error:
                    self._diverge(error.diagnostics)
                    break
                updated = apply_gradients(self.model, gradients, self.eta, self.optimizer)
                if not updated.weights_finite() or updated.max_abs_weight() > MAX_ABS_WEIGHT:
                    self._diverge(
                        {"step": updated.step, "max_abs_weight": updated.max_abs_weight()}
                    )
                    break
                if self.track_geodesic:
                    self._measure_geodesic(self.model, updated)
                self.model = updated
                if self.model.step in self.checkpoints:
                    self._record_checkpoint()
        return self

    def branch(self):
        return copy.deepcopy(self)

    def intervene(self, arm):
        """
        Apply one intervention arm to the current model.

        Parameters:
            arm (str): "continue", "reinit_experts", "reinit_experts_half_lambda"
                or "full_reinit".
        """
        if arm not in INTERVENTION_ARMS:
            raise ValueError(f"Unknown intervention arm '{arm}'")
        if arm == "continue" or self.diverged:
            return self
        seed = self.run_config.seed
        if arm == "full_reinit":
            self.model = reinit_all(
                self.model,
                rng_stream(seed, "intervention"),
                rng_stream(seed, "router_reinit"),
                self.init_scale,
            )
            self.optimizer.reset()
        else:
            self.model = reinit_experts_keep_router(
                self.model,
                rng_stream(seed, "intervention"),
                halve_lambda=arm == "reinit_experts_half_lambda",
            )
            self.optimizer.reset("experts", "hidden")
        self._routing_cache = None
        logger.debug("Seed %d: applied intervention %s at step %d", seed, arm, self.step)
        return self

    def finish(self):
        """
        Final evaluation.

        Returns:
            RunResult
        """
        final_accuracy = 0.0 if self.diverged else accuracy(self.model, self.test)
        failed = is_failure(final_accuracy, self.oracle.accuracy)
        reason = self.failure_reason or ("accuracy" if failed else "")
        last = self.trajectory[-1] if self.trajectory else None
        result = RunResult(
            config=self.run_config.to_dict(),
            trajectory=list(self.trajectory),
            final_accuracy=float(final_accuracy),
            optimal_accuracy=self.oracle.accuracy,
            failed=failed,
            fhs_at_10pct=math.nan,
            seed=self.run_config.seed,
            total_steps=self.total_steps,
            failure_reason=reason,
            optimal_accuracy_se=self.oracle.standard_error,
            final_fsi=math.nan if last is None else last.fsi,
            final_fsi_normalized=math.nan if last is None else last.fsi_normalized,
            lottery_cell=self.run_config.lottery_cell,
            geodesic_steps=list(self.geodesic_steps),
        )
        if last is not None:
            result.fhs_at_10pct = scoring_record(result, self.scoring_fraction).fhs
        return result

    def _diverge(self, details):
        self.failure_reason = "diverged"
        self.divergence = details
        logger.warning(
            "Seed %d diverged at step %s", self.run_config.seed, details.get("step")
        )

    def _record_checkpoint(self):
        try:
            record = self.analyzer.analyze(self.model)
        except NonFiniteLossError as error:
            self._diverge(error.diagnostics)
            return
        if self.geodesic_steps and self.geodesic_steps[-1].step == self.model.step:
            last = self.geodesic_steps[-1]
            record.per_step_geodesic_deviation = last.deviation
            record.per_step_geodesic_bound = last.bound
        self.trajectory.append(record)

    def _routing_probs(self, model):
        if self._routing_cache is not None and self._routing_cache[0] is model:
            return self._routing_cache[1]
        return compute_gates(model, self.probe.inputs).routing_probs

    def _measure_geodesic(self, before, after):
        inputs = self.probe.inputs
        probs_before = self._routing_probs(before)
        probs_after = compute_gates(after, inputs).routing_probs
        self._routing_cache = (after, probs_after)
        p_before = ProbabilityVector(probs_before.mean(axis=0))
        p_after = ProbabilityVector(probs_after.mean(axis=0))

        logit_shift = inputs @ (after.router_weights - before.router_weights).T
        centered = logit_shift - np.sum(probs_before * logit_shift, axis=1, keepdims=True)
        predicted_dp = np.mean(probs_before * centered, axis=0) / before.tau
        phi_before = sqrt_embed(p_before)
        tangent = project_to_tangent(
            phi_before.coords, embed_displacement(p_before, predicted_dp)
        )
        deviation = geodesic_step_deviation(phi_before, sqrt_embed(p_after), tangent)
        grad_norm = float(np.max(np.linalg.norm(logit_shift, axis=1))) / self.eta
        self.geodesic_steps.append(
            GeodesicStep(
                step=int(after.step),
                deviation=deviation,
                bound=geodesic_bound(self.eta, grad_norm, before.tau),
                fisher_rao_displacement=fisher_rao_distance(p_before, p_after),
            )
        )


def _as_run_config(config):
    if isinstance(config, RunConfig):
        return config
    if isinstance(config, ExperimentConfig):
        return RunConfig(config, config.campaign.seeds[0])
    raise TypeError("Expected a RunConfig or an ExperimentConfig")


def run_training_with_diagnostics(config):
    """
    Train one model with checkpoint analysis.

    Divergence is data: the run is marked failed with reason "diverged" and
    its truncated trajectory is returned.

    Parameters:
        config (RunConfig or ExperimentConfig): run; an ExperimentConfig
            uses its first campaign seed.

    Returns:
        RunResult
    """
    run = TrainingRun(_as_run_config(config))
    return run.advance().finish()


def record_at_fraction(result, fraction):
    """
    Checkpoint nearest to ``fraction · total_steps``; ties go to the
    earlier checkpoint.

    Raises:
        ValueError: for fractions outside (0, 1] or a trajectory that stops
            before the requested point.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    if not result.trajectory:
        raise ValueError("Empty trajectory")
    target = fraction * result.total_steps
    last_step = result.trajectory[-1].step
    if last_step < target and last_step < result.total_steps:
        raise ValueError(
            f"Trajectory stops at step {last_step}, before fraction {fraction}"
        )
    return min(result.trajectory, key=lambda record: (abs(record.step - target), record.step))


def fhs_at_fraction(result, fraction):
    """FHS of the checkpoint nearest to ``fraction`` of training."""
    return record_at_fraction(result, fraction).fhs


def scoring_record(result, fraction):
    """
    ``record_at_fraction``, falling back to the last record (with a warning)
    for runs that diverged before the scoring point.
    """
    try:
        return record_at_fraction(result, fraction)
    except ValueError:
        if not result.trajectory:
            raise
        warnings.warn(
            f"Run {result.seed} stops before fraction {fraction}; "
            "using its last checkpoint",
            stacklevel=2,
        )
        return result.trajectory[-1]


def baseline_failure_scores(result, fraction):
    """
    Baseline metrics at the scoring checkpoint, oriented so that higher
    values are more failure-like.

    Returns:
        dict: metric name to score.
    """
    if not result.trajectory:
        return {name: math.nan for name in BASELINE_ORIENTATION}
    record = scoring_record(result, fraction)
    return {
        name: orientation * getattr(record, name)
        for name, orientation in BASELINE_ORIENTATION.items()
    }


def loss_series_until(result, fraction):
    """(fraction, validation loss) pairs of the checkpoints up to ``fraction``."""
    horizon = fraction * result.total_steps + 1e-9
    return [
        (record.step / result.total_steps, record.task_loss)
        for record in result.trajectory
        if record.step <= horizon
    ]


def fsi_monotonicity_violations(trajectory, slack=1e-3):
    """Number of consecutive-checkpoint FSI decreases larger than ``slack``."""
    values = [record.fsi for record in trajectory]
    return int(sum(1 for before, after in zip(values, values[1:]) if after < before - slack))


def geodesic_validation(config, taus=None, runner=map):
    """
    Geodesic deviation against the per-step bound across temperatures.

    For every temperature and seed a dense run is trained with geodesic
    tracking; cumulative deviation and cumulative bound are divided by the
    run's path length (sum of per-step Fisher-Rao displacements) and averaged
    over seeds.

    Parameters:
        config (ExperimentConfig): base experiment, dense routing.
        taus (list, optional): temperatures, ``diagnostics.geodesic_taus`` by default.
        runner (callable): map-like function used to execute the runs.

    Returns:
        pandas.DataFrame: one row per temperature.
    """
    if config.model.top_k is not None:
        raise ValueError("geodesic validation requires dense routing")
    taus = tuple(config.diagnostics.geodesic_taus if taus is None else taus)
    if not taus or min(taus) <= 0:
        raise ValueError("Temperatures must be positive")
    run_configs = []
    for tau in taus:
        experiment = dataclasses.replace(
            config,
            model=dataclasses.replace(config.model, tau=float(tau)),
            diagnostics=dataclasses.replace(config.diagnostics, geodesic_tracking=True),
        )
        run_configs.extend(RunConfig(experiment, seed) for seed in config.campaign.seeds)
    results = list(runner(run_training_with_diagnostics, run_configs))

    rows = []
    n_seeds = len(config.campaign.seeds)
    for index, tau in enumerate(taus):
        batch = results[index * n_seeds : (index + 1) * n_seeds]
        deviation_fractions, bound_fractions, within, ratios, n_steps = [], [], [], [], 0
        for result in batch:
            steps = result.geodesic_frame()
            if steps.empty:
                continue
            n_steps += len(steps)
            path = steps["fisher_rao_displacement"].sum()
            if path > 0:
                deviation_fractions.append(steps["deviation"].sum() / path)
                bound_fractions.append(steps["bound"].sum() / path)
            within.append(steps["deviation"] <= steps["bound"])
            positive = steps["bound"] > 0
            if positive.any():
                ratios.append((steps["deviation"][positive] / steps["bound"][positive]).max())
        fraction_within = float(pd.concat(within).mean()) if within else math.nan
        if within and fraction_within < 1.0:
            warnings.warn(
                f"Geodesic deviation exceeded the per-step bound at tau={tau} "
                f"in {100 * (1 - fraction_within):.2f}% of steps",
                stacklevel=2,
            )
        rows.append(
            {
                "tau": float(tau),
                "mean_deviation_fraction": float(np.mean(deviation_fractions))
                if deviation_fractions
                else math.nan,
                "mean_bound_fraction": float(np.mean(bound_fractions))
                if bound_fractions
                else math.nan,
                "fraction_steps_within_bound": fraction_within,
                "max_deviation_to_bound": float(max(ratios)) if ratios else math.nan,
                "n_steps": int(n_steps),
                "n_runs": len(batch),
            }
        )
    return pd.DataFrame(rows)


@dataclass
class LambdaSweepResult:
    """
    Attributes:
        table (pandas.DataFrame): final FSI and accuracy per (seed, λ).
        trajectories (pandas.DataFrame): trajectories with seed and λ columns.
        ordered_fraction (float): share of seeds whose final FSI strictly
            decreases as λ increases.
    """

    table: pd.DataFrame
    trajectories: pd.DataFrame
    ordered_fraction: float


def lambda_sweep(config, lambdas=None, runner=map):
    """
    Matched-seed runs over load-balancing weights.

    Parameters:
        config (ExperimentConfig): base experiment.
        lambdas (list, optional): weights, ``campaign.lambdas`` by default.
        runner (callable): map-like function used to execute the runs.

    Returns:
        LambdaSweepResult
    """
    if lambdas is None:
        lambdas = config.campaign.lambdas
    lambdas = sorted(float(lam) for lam in lambdas)
    if not lambdas or lambdas[0] < 0:
        raise ValueError("Load-balancing weights must be non-negative")
    seeds = list(config.campaign.seeds)
    run_configs = [
        RunConfig(
            dataclasses.replace(config, model=dataclasses.replace(config.model, lam=lam)),
            seed,
        )
        for seed in seeds
        for lam in lambdas
    ]
    results = list(runner(run_training_with_diagnostics, run_configs))

    rows, frames = [], []
    for run_config, result in zip(run_configs, results):
        lam = run_config.experiment.model.lam
        rows.append(
            {
                "seed": result.seed,
                "lambda": lam,
                "final_fsi": result.final_fsi,
                "final_fsi_normalized": result.final_fsi_normalized,
                "final_accuracy": result.final_accuracy,
                "failed": result.failed,
                "fsi_monotonicity_violations": fsi_monotonicity_violations(
                    result.trajectory
                ),
            }
        )
        frame = result.trajectory_frame()
        frame.insert(0, "lambda", lam)
        frame.insert(0, "seed", result.seed)
        frames.append(frame)
    table = pd.DataFrame(rows)
    ordered = {}
    for seed, group in table.groupby("seed", sort=True):
        values = group.sort_values("lambda")["final_fsi"].to_numpy()
        ordered[seed] = bool(np.all(np.diff(values) < 0))
    table["strictly_ordered"] = table["seed"].map(ordered)
    return LambdaSweepResult(
        table=table,
        trajectories=pd.concat(frames, ignore_index=True),
        ordered_fraction=float(np.mean(list(ordered.values()))),
    )
