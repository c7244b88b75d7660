import dataclasses
from pathlib import Path

import numpy as np

from fishermoe.config import (
    CampaignConfig,
    DiagnosticsConfig,
    ExperimentConfig,
    ModelConfig,
    TaskConfig,
    TrainingConfig,
    load_config,
)
from fishermoe.diagnostics import RunResult, TrajectoryRecord
from fishermoe.moe_model import init_model
from fishermoe.synthetic_task import LabeledBatch, default_task, sample_batch

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


##Small experiment configuration that trains in well under a second
def create_tiny_config(
    n_experts=2,
    steps=20,
    eta=0.05,
    lam=0.0,
    top_k=None,
    tau=1.0,
    seeds=(0,),
    expert_arch="linear",
    optimizer="gd",
    output_dir="results",
):
    return ExperimentConfig(
        task=TaskConfig(input_dim=4, separation=4.0),
        model=ModelConfig(
            n_experts=n_experts,
            tau=tau,
            top_k=top_k,
            lam=lam,
            expert_arch=expert_arch,
            hidden_dim=3,
        ),
        training=TrainingConfig(eta=eta, steps=steps, batch_size=16, optimizer=optimizer),
        diagnostics=DiagnosticsConfig(
            checkpoint_fraction=0.1,
            fim_batch_size=64,
            probe_size=128,
            test_size=256,
            oracle_samples=10_000,
            geodesic_taus=(0.5, 1.0),
        ),
        campaign=CampaignConfig(seeds=tuple(seeds), parallel=1, lambdas=(0.0, 0.05)),
        output_dir=output_dir,
    )


##Shipped dense-routing experiment, shortened and restricted to the given seeds
def load_dense_sweep(steps, seeds):
    config = load_config(CONFIG_DIR / "dense_sweep.yaml", environ={})
    config = dataclasses.replace(
        config, training=dataclasses.replace(config.training, steps=steps)
    )
    return config.with_seeds(seeds)


##Model and data for gradient and Fisher checks
def create_tiny_model(
    seed=0,
    n_experts=3,
    input_dim=4,
    n_classes=3,
    top_k=None,
    lam=0.0,
    tau=1.0,
    expert_arch="linear",
    hidden_dim=3,
):
    return init_model(
        n_experts=n_experts,
        input_dim=input_dim,
        n_classes=n_classes,
        rng=np.random.default_rng(seed),
        tau=tau,
        top_k=top_k,
        lam=lam,
        expert_arch=expert_arch,
        hidden_dim=hidden_dim,
    )


def create_tiny_batch(seed=1, n_clusters=3, input_dim=4, batch_size=32):
    spec = default_task(n_clusters, input_dim, separation=3.0)
    return sample_batch(spec, batch_size, np.random.default_rng(seed))


def random_probability_vectors(rng, n, count, sparse=False):
    """Dirichlet draws; with ``sparse`` some entries are set to zero."""
    draws = rng.dirichlet(np.ones(n), size=count)
    if sparse:
        mask = rng.random(draws.shape) < 0.3
        mask[:, 0] = False
        draws = np.where(mask, 0.0, draws)
        draws /= draws.sum(axis=1, keepdims=True)
    return draws


def numerical_gradient(function, weights, epsilon=1e-6):
    """Central finite differences of a scalar function of an array."""
    gradient = np.zeros_like(weights)
    for index in np.ndindex(weights.shape):
        original = weights[index]
        weights[index] = original + epsilon
        plus = function()
        weights[index] = original - epsilon
        minus = function()
        weights[index] = original
        gradient[index] = (plus - minus) / (2 * epsilon)
    return gradient


##Hand-built run results for scoring and campaign tests
def create_record(step, fsi=0.1, fhs=1.0, task_loss=1.0, **overrides):
    values = {
        "step": step,
        "fsi": fsi,
        "fsi_normalized": fsi / (np.pi / 2),
        "fhs": fhs,
        "h_frob": 1.0,
        "fisher_trace": 1.0,
        "fsi_rate_bound": 0.0,
        "task_loss": task_loss,
        "accuracy": 0.5,
        "router_grad_norm": 0.1,
        "per_step_geodesic_deviation": 0.0,
        "per_step_geodesic_bound": 0.0,
        "cosine_mean": 0.0,
        "routing_entropy": 0.6,
        "load_imbalance": 0.1,
        "expert_overlap": 0.2,
        "gradient_norm": 0.1,
    }
    values.update(overrides)
    return TrajectoryRecord(**values)


def create_run_result(
    seed=0,
    fhs_values=(1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1),
    total_steps=1000,
    failed=False,
    losses=None,
):
    """Run with one checkpoint every ``total_steps / 10`` steps (no final checkpoint)."""
    spacing = total_steps // 10
    losses = losses if losses is not None else [1.0 - 0.05 * i for i in range(len(fhs_values))]
    trajectory = [
        create_record(i * spacing, fhs=value, task_loss=loss)
        for i, (value, loss) in enumerate(zip(fhs_values, losses))
    ]
    return RunResult(
        config={},
        trajectory=trajectory,
        final_accuracy=0.3 if failed else 0.9,
        optimal_accuracy=0.95,
        failed=failed,
        fhs_at_10pct=fhs_values[1],
        seed=seed,
        total_steps=total_steps,
        failure_reason="accuracy" if failed else "",
        final_fsi=trajectory[-1].fsi,
        final_fsi_normalized=trajectory[-1].fsi_normalized,
    )


def create_labeled_batch(inputs, labels):
    return LabeledBatch(np.asarray(inputs, dtype=float), np.asarray(labels))
