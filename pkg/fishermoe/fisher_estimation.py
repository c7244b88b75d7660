"""
Per-expert Fisher information, the heterogeneity matrix and the
Fisher Heterogeneity Score (FHS).

The log-likelihood of expert ``e`` is the class softmax of that expert's
logits alone, with the router bypassed. The diagonal estimator averages
squared per-sample scores at observed labels (empirical Fisher); the exact
oracle enumerates the classes under the expert's own predictive
distribution (expected Fisher).
"""

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax as _scipy_softmax

from fishermoe.moe_model import expert_logits
from fishermoe.simplex_geometry import ProbabilityVector
from fishermoe.synthetic_task import LabeledBatch
from fishermoe.utils import ensure_numeric_data, ordered_sum

logger = logging.getLogger(__name__)

FHS_EPSILON = 1e-8
MAX_ORACLE_PARAMETERS = 500


@dataclass(frozen=True, eq=False)
class DiagonalFIM:
    """
    Diagonal empirical Fisher estimate of one expert.

    Attributes:
        expert_id (int): expert index.
        diag (np.array): non-negative entries, one per expert parameter.
        batch_size_used (int): number of samples averaged.
    """

    expert_id: int
    diag: np.ndarray
    batch_size_used: int

    def __post_init__(self):
        diag = ensure_numeric_data(self.diag)
        if diag.ndim != 1:
            raise ValueError("A diagonal FIM must be one-dimensional")
        if np.any(diag < 0):
            raise ValueError("Diagonal Fisher entries must be non-negative")
        diag.setflags(write=False)
        object.__setattr__(self, "diag", diag)

    @property
    def dim(self):
        return self.diag.size

    @property
    def trace(self):
        return ordered_sum(self.diag)


@dataclass(frozen=True, eq=False)
class HeterogeneityMatrix:
    """
    Heterogeneity matrix ``H_jk = M_jk − M_jk² / tr(M)`` with
    ``M = Σ_e p̄_e F_e``.

    When every input FIM is diagonal only the diagonal is stored
    (off-diagonal entries of M, and therefore of H, are zero).

    Attributes:
        entries (np.array): diagonal (d,) or full (d, d) entries.
        frob_norm (float): Frobenius norm of H.
        fisher_trace (float): trace of the routing-weighted mean FIM.
        mean_fim (np.array): the routing-weighted mean FIM itself, same storage.
    """

    entries: np.ndarray
    frob_norm: float
    fisher_trace: float
    mean_fim: np.ndarray

    @property
    def is_diagonal(self):
        return self.entries.ndim == 1

    @property
    def dim(self):
        return self.entries.shape[0]

    def dense(self):
        """Full d × d view of the entries."""
        if self.is_diagonal:
            return np.diag(self.entries)
        return self.entries.copy()


@dataclass(frozen=True)
class FHSValue:
    """
    Attributes:
        value (float): ``h_frob_now / (h_frob_initial + epsilon)``.
        h_frob_now (float): current Frobenius norm.
        h_frob_initial (float): Frobenius norm at initialization.
        epsilon (float): denominator guard.
    """

    value: float
    h_frob_now: float
    h_frob_initial: float
    epsilon: float = FHS_EPSILON


def _batch_parts(batch, labels=None):
    if isinstance(batch, LabeledBatch):
        inputs = batch.inputs
        labels = batch.labels if labels is None else labels
    else:
        inputs = ensure_numeric_data(batch)
    if inputs.shape[0] == 0:
        raise ValueError("Cannot estimate the Fisher information of an empty batch")
    return inputs, labels


def _check_expert(model, expert_id):
    if not 0 <= int(expert_id) < model.n_experts:
        raise ValueError(f"Expert id {expert_id} outside [0, {model.n_experts})")


def expert_class_probs(model, expert_id, inputs):
    """Class probabilities of one expert alone, shape (B, n_classes)."""
    logits, _ = expert_logits(model, inputs)
    return _scipy_softmax(logits[:, expert_id, :], axis=1)


def per_sample_scores(model, expert_id, inputs, labels):
    """
    Per-sample gradients of ``log p(y | x, E_e)`` with respect to the
    parameters of expert ``e``, in the order of ``model.expert_parameters``.

    Returns:
        np.array: shape (B, d).
    """
    _check_expert(model, expert_id)
    inputs = ensure_numeric_data(inputs)
    labels = np.asarray(labels, dtype=np.int64)
    logits, hidden = expert_logits(model, inputs)
    probs = _scipy_softmax(logits[:, expert_id, :], axis=1)
    residual = -probs
    residual[np.arange(labels.shape[0]), labels] += 1.0
    if hidden is None:
        return np.einsum("bc,bd->bcd", residual, inputs).reshape(inputs.shape[0], -1)
    activation = hidden[:, expert_id, :]
    output_scores = np.einsum("bc,bh->bch", residual, activation)
    back = residual @ model.expert_weights[expert_id]
    pre_act = back * (1.0 - activation**2)
    hidden_scores = np.einsum("bh,bd->bhd", pre_act, inputs)
    batch_size = inputs.shape[0]
    return np.concatenate(
        [hidden_scores.reshape(batch_size, -1), output_scores.reshape(batch_size, -1)],
        axis=1,
    )


def estimate_diagonal_fim(model, expert_id, batch, labels=None):
    """
    Diagonal empirical Fisher of one expert: the batch mean of squared
    per-sample scores at the given labels.

    Parameters:
        model (MoEModelState): model snapshot.
        expert_id (int): expert index.
        batch (LabeledBatch): non-empty batch; its labels are used unless
            ``labels`` is given (model-sampled labels, for instance).
        labels (np.array, optional): labels overriding the batch labels.

    Returns:
        DiagonalFIM
    """
    inputs, labels = _batch_parts(batch, labels)
    if labels is None:
        raise ValueError("Labels are required for the empirical Fisher")
    scores = per_sample_scores(model, expert_id, inputs, labels)
    return DiagonalFIM(
        expert_id=int(expert_id),
        diag=np.mean(scores**2, axis=0),
        batch_size_used=int(inputs.shape[0]),
    )


def estimate_all_diagonal_fims(model, batch):
    """Diagonal FIMs of every expert on the same batch."""
    return [
        estimate_diagonal_fim(model, expert_id, batch)
        for expert_id in range(model.n_experts)
    ]


def exact_fim_oracle(model, expert_id, inputs):
    """
    Expected Fisher of one expert by exact enumeration of the classes,
    averaged over the given inputs.

    Parameters:
        model (MoEModelState): tiny model, at most 500 parameters per expert.
        expert_id (int): expert index.
        inputs (array): inputs (B, input_dim).

    Returns:
        np.array: symmetric positive semi-definite d × d matrix.
    """
    dim = model.expert_parameter_count()
    if dim > MAX_ORACLE_PARAMETERS:
        raise ValueError(
            f"Exact Fisher oracle limited to {MAX_ORACLE_PARAMETERS} parameters, got {dim}"
        )
    inputs, _ = _batch_parts(inputs)
    probs = expert_class_probs(model, expert_id, inputs)
    fim = np.zeros((dim, dim))
    for label in range(model.n_classes):
        labels = np.full(inputs.shape[0], label)
        scores = per_sample_scores(model, expert_id, inputs, labels)
        fim += np.einsum("b,bd,be->de", probs[:, label], scores, scores)
    fim /= inputs.shape[0]
    return (fim + fim.T) / 2.0


def sample_model_labels(model, expert_id, inputs, rng):
    """
    Draw one label per input from expert ``e``'s predictive distribution.
    """
    probs = expert_class_probs(model, expert_id, inputs)
    cumulative = np.cumsum(probs, axis=1)
    draws = rng.random(probs.shape[0])
    labels = np.sum(cumulative < draws[:, None], axis=1)
    return np.minimum(labels, model.n_classes - 1).astype(np.int64)


def fim_fidelity(model, inputs, rng):
    """
    Correlation between the exact Fisher diagonal and the diagonal estimator
    with model-sampled labels, per expert.

    Returns:
        list: Pearson correlation per expert.
    """
    inputs, _ = _batch_parts(inputs)
    correlations = []
    for expert_id in range(model.n_experts):
        exact = np.diag(exact_fim_oracle(model, expert_id, inputs))
        labels = sample_model_labels(model, expert_id, inputs, rng)
        estimate = estimate_diagonal_fim(model, expert_id, inputs, labels=labels).diag
        correlations.append(float(np.corrcoef(exact, estimate)[0, 1]))
    logger.debug(
        "Diagonal FIM fidelity over %d samples: %s",
        len(inputs),
        ", ".join(f"{value:.4f}" for value in correlations),
    )
    return correlations


def heterogeneity_matrix(fims, p_bar):
    """
    Heterogeneity matrix of routing-weighted expert Fisher matrices.

    Parameters:
        fims (list): one DiagonalFIM (or full d × d array) per expert.
        p_bar (ProbabilityVector): marginal routing distribution.

    Returns:
        HeterogeneityMatrix

    Raises:
        ValueError: on mismatched dimensions or a zero-trace mean FIM
            ("degenerate Fisher mass").
    """
    p_bar = p_bar if isinstance(p_bar, ProbabilityVector) else ProbabilityVector(p_bar)
    if len(fims) != p_bar.n:
        raise ValueError(f"Expected {p_bar.n} expert FIMs, got {len(fims)}")
    blocks = [
        fim.diag if isinstance(fim, DiagonalFIM) else np.asarray(fim, dtype=float)
        for fim in fims
    ]
    if len({block.shape for block in blocks}) != 1:
        raise ValueError("All expert FIMs must have the same dimension")
    diagonal = blocks[0].ndim == 1
    mean_fim = np.zeros_like(blocks[0])
    for weight, block in zip(p_bar.values, blocks):
        mean_fim = mean_fim + weight * block
    trace = ordered_sum(mean_fim if diagonal else np.diag(mean_fim))
    if not trace > 0:
        raise ValueError("degenerate Fisher mass")
    entries = mean_fim - mean_fim**2 / trace
    frob_norm = float(np.sqrt(ordered_sum(entries**2)))
    return HeterogeneityMatrix(
        entries=entries,
        frob_norm=frob_norm,
        fisher_trace=float(trace),
        mean_fim=mean_fim,
    )


def fhs(current, initial):
    """
    Fisher Heterogeneity Score ``‖H(t)‖_F / (‖H(0)‖_F + 1e-8)``.

    Parameters:
        current (HeterogeneityMatrix or float): current matrix or its norm.
        initial (HeterogeneityMatrix or float): initial matrix or its norm.

    Returns:
        FHSValue
    """
    now, start = (
        matrix.frob_norm if isinstance(matrix, HeterogeneityMatrix) else float(matrix)
        for matrix in (current, initial)
    )
    if now < 0 or start < 0:
        raise ValueError("Frobenius norms must be non-negative")
    return FHSValue(
        value=now / (start + FHS_EPSILON), h_frob_now=now, h_frob_initial=start
    )


def specialization_rate_bound(eta, router_grad, mean_fim_diag, h_frob, fim_trace=None):
    """
    Bound on the per-step growth of the specialization index,
    ``η ‖g‖_{F⁻¹} / √(1 + ‖H‖_F / tr(F))``.

    Parameters:
        eta (float): learning rate.
        router_grad (array): gradient g.
        mean_fim_diag (array): positive diagonal metric F used for ``‖g‖_{F⁻¹}``.
        h_frob (float): Frobenius norm of H.
        fim_trace (float, optional): trace in the denominator, ``Σ F_ii`` by default.

    Returns:
        float
    """
    gradient = ensure_numeric_data(router_grad).ravel()
    metric = ensure_numeric_data(mean_fim_diag).ravel()
    if gradient.shape != metric.shape:
        raise ValueError("Gradient and Fisher diagonal dimensions differ")
    if np.any(metric <= 0):
        raise ValueError("Fisher diagonal entries must be positive")
    if h_frob < 0:
        raise ValueError("h_frob must be non-negative")
    trace = ordered_sum(metric) if fim_trace is None else float(fim_trace)
    if not trace > 0:
        raise ValueError("Fisher trace must be positive")
    dual_norm = np.sqrt(ordered_sum(gradient**2 / metric))
    return float(eta * dual_norm / np.sqrt(1.0 + h_frob / trace))


def fhs_failure_probability_bound(fhs_value, n, d, M):
    """
    Concentration bound ``min(1, 2d·exp(−n(FHS−1)² / (32M²)))`` on the
    probability that specialization fails once FHS exceeds 1.

    Parameters:
        fhs_value (float): score, strictly above 1.
        n (int): number of experts.
        d (int): expert parameter dimension.
        M (float): operator-norm bound of the expert FIMs, positive.
    """
    if M <= 0:
        raise ValueError("M must be positive")
    if fhs_value <= 1:
        raise ValueError("bound applies only above threshold")
    bound = 2.0 * d * np.exp(-n * (fhs_value - 1.0) ** 2 / (32.0 * M**2))
    if bound >= 1.0:
        warnings.warn(
            f"Failure probability bound is vacuous at n={n}, FHS={fhs_value:.4g}",
            stacklevel=2,
        )
    return float(min(1.0, bound))


def operator_bound_from_fims(fims):
    """Largest diagonal Fisher entry across experts, the default M."""
    return float(max(np.max(fim.diag) for fim in fims))
