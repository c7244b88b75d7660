"""
Experiment configuration.

Configurations are YAML documents with the sections ``task``, ``model``,
``training``, ``diagnostics`` and ``campaign`` plus the scalar
``output_dir``. Every field has a default; parsing validates types and
ranges and reports the line of the offending key.
"""

import dataclasses
import logging
import os
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union, get_args, get_origin, get_type_hints

import numpy as np
import yaml

from fishermoe.synthetic_task import GaussianMixtureSpec, cluster_means
from fishermoe.simplex_geometry import ProbabilityVector
from fishermoe.utils import rng_stream

logger = logging.getLogger(__name__)

SEED_ENVIRONMENT_VARIABLE = "FISHER_MOE_SEED"
OPTIMIZERS = ("gd", "adam")
EXPERT_ARCHITECTURES = ("linear", "mlp")


class ConfigError(ValueError):
    """
    Invalid configuration.

    Attributes:
        line (int or None): 1-based line of the offending key, when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}" if line is not None else message)


class _FieldError(ValueError):
    def __init__(self, field_name, message):
        self.field_name = field_name
        super().__init__(message)


def _require(condition, field_name, message):
    if not condition:
        raise _FieldError(field_name, f"{field_name}: {message}")


@dataclass(frozen=True)
class TaskConfig:
    """
    Synthetic task. ``n_clusters`` defaults to the number of experts; explicit
    ``means`` override the separation-based placement.
    """

    n_clusters: Optional[int] = None
    input_dim: int = 8
    separation: float = 4.0
    covariance_scale: float = 1.0
    mixture_weights: Optional[Tuple[float, ...]] = None
    label_of_cluster: Optional[Tuple[int, ...]] = None
    means: Optional[Tuple[Tuple[float, ...], ...]] = None

    def __post_init__(self):
        _require(
            self.n_clusters is None or self.n_clusters >= 2, "n_clusters", "must be >= 2"
        )
        _require(self.input_dim >= 1, "input_dim", "must be >= 1")
        _require(self.separation >= 0, "separation", "must be non-negative")
        _require(self.covariance_scale > 0, "covariance_scale", "must be positive")
        if self.mixture_weights is not None:
            try:
                ProbabilityVector(self.mixture_weights)
            except ValueError as ve:
                raise _FieldError("mixture_weights", f"mixture_weights: {ve}") from ve
        if self.label_of_cluster is not None:
            _require(
                min(self.label_of_cluster) >= 0,
                "label_of_cluster",
                "labels must be non-negative",
            )
        if self.means is not None:
            _require(
                all(len(mean) == self.input_dim for mean in self.means),
                "means",
                "every mean must have input_dim entries",
            )

    def resolved_clusters(self, n_experts):
        if self.means is not None:
            return len(self.means)
        return self.n_clusters if self.n_clusters is not None else n_experts

    def build_spec(self, n_experts, rng=None):
        """
        Generating distribution of the task.

        Parameters:
            n_experts (int): used when ``n_clusters`` is not set.
            rng (numpy.random.Generator, optional): task stream, needed when
                random mean directions are drawn.

        Returns:
            GaussianMixtureSpec
        """
        n_clusters = self.resolved_clusters(n_experts)
        if self.means is not None:
            means = np.asarray(self.means, dtype=float)
        else:
            means = cluster_means(n_clusters, self.input_dim, self.separation, rng)
        weights = (
            ProbabilityVector.uniform(n_clusters)
            if self.mixture_weights is None
            else ProbabilityVector(self.mixture_weights)
        )
        labels = (
            tuple(range(n_clusters))
            if self.label_of_cluster is None
            else self.label_of_cluster
        )
        return GaussianMixtureSpec(
            means=means,
            covariance_scale=self.covariance_scale,
            mixture_weights=weights,
            label_of_cluster=labels,
        )


@dataclass(frozen=True)
class ModelConfig:
    """MoE hyperparameters; ``top_k`` None is dense routing ("dense" in YAML)."""

    n_experts: int = 4
    tau: float = 1.0
    top_k: Optional[int] = None
    lam: float = 0.0
    init_scale: float = 1.0
    expert_arch: str = "linear"
    hidden_dim: int = 16
    input_dim: Optional[int] = None
    n_classes: Optional[int] = None

    yaml_names = {"lam": "lambda"}

    def __post_init__(self):
        _require(self.n_experts >= 2, "n_experts", "must be >= 2")
        _require(self.tau > 0, "tau", "must be positive")
        _require(
            self.top_k is None or 1 <= self.top_k <= self.n_experts,
            "top_k",
            f"must be 'dense' or lie in [1, {self.n_experts}]",
        )
        _require(self.lam >= 0, "lambda", "must be non-negative")
        _require(self.init_scale >= 0, "init_scale", "must be non-negative")
        _require(
            self.expert_arch in EXPERT_ARCHITECTURES,
            "expert_arch",
            f"must be one of {EXPERT_ARCHITECTURES}",
        )
        _require(self.hidden_dim >= 1, "hidden_dim", "must be >= 1")


@dataclass(frozen=True)
class TrainingConfig:
    eta: float = 0.03
    steps: int = 2000
    batch_size: int = 64
    optimizer: str = "gd"

    def __post_init__(self):
        _require(self.eta >= 0, "eta", "must be non-negative")
        _require(self.steps >= 1, "steps", "must be >= 1")
        _require(self.batch_size >= 1, "batch_size", "must be >= 1")
        _require(self.optimizer in OPTIMIZERS, "optimizer", f"must be one of {OPTIMIZERS}")


@dataclass(frozen=True)
class DiagnosticsConfig:
    """
    Checkpoint cadence and measurement settings.

    The probe set doubles as the validation set; FIMs use its first
    ``fim_batch_size`` samples.
    """

    checkpoint_fraction: float = 0.025
    fim_batch_size: int = 512
    probe_size: int = 2048
    test_size: int = 4096
    oracle_samples: int = 20000
    scoring_fraction: float = 0.1
    monotonicity_slack: float = 1e-3
    geodesic_tracking: bool = True
    geodesic_taus: Tuple[float, ...] = (0.5, 1.0, 2.0)
    fhs_threshold: float = 1.0

    def __post_init__(self):
        _require(
            0 < self.checkpoint_fraction <= 1,
            "checkpoint_fraction",
            "must lie in (0, 1]",
        )
        _require(self.fim_batch_size >= 1, "fim_batch_size", "must be >= 1")
        _require(self.probe_size >= 1, "probe_size", "must be >= 1")
        _require(self.test_size >= 1, "test_size", "must be >= 1")
        _require(self.oracle_samples >= 10_000, "oracle_samples", "must be >= 10000")
        _require(0 < self.scoring_fraction <= 1, "scoring_fraction", "must lie in (0, 1]")
        _require(self.monotonicity_slack >= 0, "monotonicity_slack", "must be non-negative")
        _require(
            len(self.geodesic_taus) > 0 and min(self.geodesic_taus) > 0,
            "geodesic_taus",
            "must be a non-empty list of positive temperatures",
        )


@dataclass(frozen=True)
class LotteryConfig:
    """Hyperparameter grid from which each seed draws one cell."""

    enabled: bool = False
    n_experts: Tuple[int, ...] = (4, 8)
    lambdas: Tuple[float, ...] = (0.0, 0.01, 0.05, 0.1, 0.5)
    etas: Tuple[float, ...] = (3e-3, 3e-2, 3e-1)
    init_scales: Tuple[float, ...] = (1e-3, 1.0, 10.0)
    separations: Tuple[float, ...] = (1.0, 4.0)
    top_k: Tuple[int, ...] = (1,)

    def __post_init__(self):
        for name in ("n_experts", "lambdas", "etas", "init_scales", "separations", "top_k"):
            _require(len(getattr(self, name)) > 0, name, "must not be empty")
        _require(min(self.n_experts) >= 2, "n_experts", "must be >= 2")
        _require(min(self.lambdas) >= 0, "lambdas", "must be non-negative")
        _require(min(self.etas) > 0, "etas", "must be positive")
        _require(min(self.top_k) >= 1, "top_k", "must be >= 1")

    def draw(self, rng):
        """One grid cell drawn uniformly per axis."""
        n_experts = int(rng.choice(self.n_experts))
        return {
            "n_experts": n_experts,
            "lambda": float(rng.choice(self.lambdas)),
            "eta": float(rng.choice(self.etas)),
            "init_scale": float(rng.choice(self.init_scales)),
            "separation": float(rng.choice(self.separations)),
            "top_k": min(int(rng.choice(self.top_k)), n_experts),
        }


@dataclass(frozen=True)
class CampaignConfig:
    seeds: Tuple[int, ...] = (0,)
    parallel: Optional[int] = None
    lottery: LotteryConfig = field(default_factory=LotteryConfig)
    lambdas: Tuple[float, ...] = (0.0, 0.01, 0.05)
    thresholds: Tuple[float, ...] = (0.8, 0.9, 1.0, 1.1, 1.2)
    intervention_fraction: float = 0.1

    def __post_init__(self):
        _require(len(self.seeds) > 0, "seeds", "must not be empty")
        _require(len(set(self.seeds)) == len(self.seeds), "seeds", "must be distinct")
        _require(min(self.seeds) >= 0, "seeds", "must be non-negative")
        _require(self.parallel is None or self.parallel >= 1, "parallel", "must be >= 1")
        _require(
            len(self.lambdas) > 0 and min(self.lambdas) >= 0,
            "lambdas",
            "must be non-negative",
        )
        _require(len(self.thresholds) > 0, "thresholds", "must not be empty")
        _require(
            0 < self.intervention_fraction < 1,
            "intervention_fraction",
            "must lie in (0, 1)",
        )

    @property
    def workers(self):
        return self.parallel if self.parallel is not None else (os.cpu_count() or 1)


@dataclass(frozen=True)
class ExperimentConfig:
    task: TaskConfig = field(default_factory=TaskConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    campaign: CampaignConfig = field(default_factory=CampaignConfig)
    output_dir: str = "results"

    def __post_init__(self):
        n_clusters = self.task.resolved_clusters(self.model.n_experts)
        labels = self.task.label_of_cluster
        if labels is not None:
            _require(
                len(labels) == n_clusters,
                "task.label_of_cluster",
                "one label per cluster is required",
            )
        if self.task.mixture_weights is not None:
            _require(
                len(self.task.mixture_weights) == n_clusters,
                "task.mixture_weights",
                "one weight per cluster is required",
            )
        n_classes = max(labels) + 1 if labels is not None else n_clusters
        if self.model.input_dim is not None:
            _require(
                self.model.input_dim == self.task.input_dim,
                "model.input_dim",
                "must match task.input_dim",
            )
        if self.model.n_classes is not None:
            _require(
                self.model.n_classes == n_classes,
                "model.n_classes",
                f"must match the task's {n_classes} classes",
            )

    @property
    def n_classes(self):
        labels = self.task.label_of_cluster
        if labels is not None:
            return max(labels) + 1
        return self.task.resolved_clusters(self.model.n_experts)

    def with_seeds(self, seeds):
        return dataclasses.replace(
            self, campaign=dataclasses.replace(self.campaign, seeds=tuple(seeds))
        )

    def to_dict(self):
        return _section_to_dict(self)

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_dict(cls, data, lines=None):
        return _build(cls, data, (), lines or {})

    @classmethod
    def from_yaml(cls, text):
        """
        Parse and validate a YAML document.

        Raises:
            ConfigError: with the line of the offending key or syntax error.
        """
        try:
            data = yaml.safe_load(text)
            lines = _key_lines(yaml.compose(text))
        except yaml.MarkedYAMLError as ye:
            mark = ye.problem_mark or ye.context_mark
            raise ConfigError(
                f"invalid YAML: {ye.problem}", None if mark is None else mark.line + 1
            ) from ye
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping", 1)
        return cls.from_dict(data, lines)


@dataclass(frozen=True)
class RunConfig:
    """
    One fully resolved training run: the experiment with its lottery cell
    applied, and the run seed.
    """

    experiment: ExperimentConfig
    seed: int
    lottery_cell: Optional[dict] = None

    def to_dict(self):
        return {
            "seed": self.seed,
            "lottery_cell": self.lottery_cell,
            "config": self.experiment.to_dict(),
        }


def _key_lines(node, prefix=()):
    lines = {}
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            path = prefix + (str(key_node.value),)
            lines[path] = key_node.start_mark.line + 1
            lines.update(_key_lines(value_node, path))
    return lines


def _line_for(lines, path):
    while path:
        if path in lines:
            return lines[path]
        path = path[:-1]
    return None


def _coerce(value, hint, name):
    origin = get_origin(hint)
    if origin is Union:
        if value is None:
            return None
        inner = [arg for arg in get_args(hint) if arg is not type(None)][0]
        return _coerce(value, inner, name)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise _FieldError(name, f"{name}: expected a list")
        inner = get_args(hint)[0]
        return tuple(_coerce(item, inner, name) for item in value)
    if hint is bool:
        if not isinstance(value, bool):
            raise _FieldError(name, f"{name}: expected true or false")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise _FieldError(name, f"{name}: expected an integer")
        return value
    if hint is float:
        # YAML 1.1 reads exponents without a dot (3e-3) as strings
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise _FieldError(name, f"{name}: expected a number")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise _FieldError(name, f"{name}: expected a string")
        return value
    raise _FieldError(name, f"{name}: unsupported value")


def _build(cls, data, path, lines):
    if not isinstance(data, dict):
        raise ConfigError(
            f"section '{'.'.join(path)}' must be a mapping", _line_for(lines, path)
        )
    hints = get_type_hints(cls)
    yaml_names = getattr(cls, "yaml_names", {})
    by_yaml_name = {yaml_names.get(f.name, f.name): f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        key_path = path + (str(key),)
        if key not in by_yaml_name:
            raise ConfigError(
                f"unknown key '{'.'.join(key_path)}'", _line_for(lines, key_path)
            )
        field_def = by_yaml_name[key]
        hint = hints[field_def.name]
        try:
            if dataclasses.is_dataclass(hint):
                kwargs[field_def.name] = _build(hint, value, key_path, lines)
            elif cls is ModelConfig and field_def.name == "top_k" and value == "dense":
                kwargs[field_def.name] = None
            else:
                kwargs[field_def.name] = _coerce(value, hint, ".".join(key_path))
        except _FieldError as fe:
            raise ConfigError(str(fe), _line_for(lines, key_path)) from fe
    try:
        return cls(**kwargs)
    except _FieldError as fe:
        name = fe.field_name.split(".")
        name = [yaml_names.get(part, part) for part in name]
        field_path = path + tuple(name)
        message = str(fe) if not path else f"{'.'.join(path)}.{fe}"
        raise ConfigError(message, _line_for(lines, field_path)) from fe


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(item) for item in value]
    return value


def _section_to_dict(section):
    yaml_names = getattr(section, "yaml_names", {})
    result = {}
    for field_def in dataclasses.fields(section):
        value = getattr(section, field_def.name)
        if dataclasses.is_dataclass(value):
            value = _section_to_dict(value)
        elif isinstance(section, ModelConfig) and field_def.name == "top_k" and value is None:
            value = "dense"
        else:
            value = _plain(value)
        result[yaml_names.get(field_def.name, field_def.name)] = value
    return result


def load_config(path, environ=None):
    """
    Read a configuration file.

    ``FISHER_MOE_SEED`` in the environment replaces the campaign seeds with
    the single given seed.

    Parameters:
        path (str or None): YAML file; None gives the defaults.
        environ (dict, optional): environment, ``os.environ`` by default.

    Returns:
        ExperimentConfig
    """
    environ = os.environ if environ is None else environ
    if path is None:
        config = ExperimentConfig()
    else:
        try:
            with open(path, encoding="utf-8") as handle:
                text = handle.read()
        except OSError as oe:
            raise ConfigError(f"cannot read {path}: {oe.strerror}") from oe
        config = ExperimentConfig.from_yaml(text)
    seed = environ.get(SEED_ENVIRONMENT_VARIABLE)
    if seed:
        try:
            seed_value = int(seed)
        except ValueError as ve:
            raise ConfigError(f"{SEED_ENVIRONMENT_VARIABLE} must be an integer") from ve
        logger.info("Seed overridden by %s=%d", SEED_ENVIRONMENT_VARIABLE, seed_value)
        config = config.with_seeds([seed_value])
    return config


def apply_lottery_cell(config, cell):
    """Experiment with one lottery cell's hyperparameters substituted."""
    return dataclasses.replace(
        config,
        task=dataclasses.replace(config.task, separation=cell["separation"]),
        model=dataclasses.replace(
            config.model,
            n_experts=cell["n_experts"],
            lam=cell["lambda"],
            init_scale=cell["init_scale"],
            top_k=cell["top_k"],
        ),
        training=dataclasses.replace(config.training, eta=cell["eta"]),
    )


def resolve_runs(config):
    """
    One RunConfig per campaign seed, in seed order. With the lottery enabled
    each seed draws its own cell from its lottery stream.
    """
    runs = []
    for seed in config.campaign.seeds:
        if config.campaign.lottery.enabled:
            cell = config.campaign.lottery.draw(rng_stream(seed, "lottery"))
            try:
                experiment = apply_lottery_cell(config, cell)
            except _FieldError as fe:
                raise ConfigError(f"lottery cell {cell} is invalid: {fe}") from fe
            runs.append(RunConfig(experiment, seed, cell))
        else:
            runs.append(RunConfig(config, seed))
    return runs
