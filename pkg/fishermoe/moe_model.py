"""
Minimal mixture-of-experts classifier with analytic gradients.

The router is linear, ``z = W_r x``, and routes through a tempered softmax
``p = softmax(z/τ)``, optionally truncated to the top-k experts and
renormalized. Experts map inputs to class logits, either linearly or through
one tanh hidden layer. The class logits of the experts are mixed with the
gates and passed through a class softmax; the loss is the mean cross-entropy
plus the load-balancing term ``λ·n·Σ p̄_i f_i``.
"""

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import dill
import numpy as np
from scipy.special import log_softmax, softmax as _scipy_softmax

from fishermoe.simplex_geometry import ProbabilityVector
from fishermoe.synthetic_task import LabeledBatch
from fishermoe.utils import create_directory, ensure_numeric_data

logger = logging.getLogger(__name__)

EXPERT_ARCHITECTURES = ("linear", "mlp")
CHECKPOINT_FORMAT = "fishermoe-checkpoint"
CHECKPOINT_VERSION = 1


class NonFiniteLossError(FloatingPointError):
    """
    Raised when the loss (or a gradient) stops being finite.

    Attributes:
        diagnostics (dict): step, task loss, aux loss and largest absolute weight.
    """

    def __init__(self, message, diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(eq=False)
class MoEModelState:
    """
    Weights and routing hyperparameters of the model.

    Attributes:
        router_weights (np.array): shape (n, input_dim).
        expert_weights (np.array): expert output layers, shape (n, n_classes, width)
            where width is input_dim for linear experts and hidden_dim otherwise.
        hidden_weights (np.array or None): hidden layers of mlp experts,
            shape (n, hidden_dim, input_dim).
        tau (float): softmax temperature.
        top_k (int or None): experts kept per sample, None for dense routing.
        lam (float): load-balancing weight λ.
        step (int): number of updates applied.
    """

    router_weights: np.ndarray
    expert_weights: np.ndarray
    hidden_weights: np.ndarray = None
    tau: float = 1.0
    top_k: int = None
    lam: float = 0.0
    step: int = 0

    def __post_init__(self):
        self.router_weights = np.asarray(self.router_weights, dtype=float)
        self.expert_weights = np.asarray(self.expert_weights, dtype=float)
        if self.hidden_weights is not None:
            self.hidden_weights = np.asarray(self.hidden_weights, dtype=float)
        if self.router_weights.ndim != 2 or self.expert_weights.ndim != 3:
            raise ValueError("Router weights must be 2-D and expert weights 3-D")
        n = self.router_weights.shape[0]
        if self.expert_weights.shape[0] != n:
            raise ValueError("One expert weight block per router row is required")
        expected_width = (
            self.input_dim
            if self.hidden_weights is None
            else self.hidden_weights.shape[1]
        )
        if self.expert_weights.shape[2] != expected_width:
            raise ValueError("Expert weight width does not match the expert input")
        if self.hidden_weights is not None and self.hidden_weights.shape != (
            n,
            expected_width,
            self.input_dim,
        ):
            raise ValueError("Hidden weights must have shape (n, hidden_dim, input_dim)")
        if not self.tau > 0:
            raise ValueError("Temperature tau must be positive")
        if self.top_k is not None and not 1 <= int(self.top_k) <= n:
            raise ValueError(f"top_k must lie in [1, {n}]")
        if self.lam < 0:
            raise ValueError("Load-balancing weight lambda must be non-negative")

    @property
    def n_experts(self):
        return self.router_weights.shape[0]

    @property
    def input_dim(self):
        return self.router_weights.shape[1]

    @property
    def n_classes(self):
        return self.expert_weights.shape[1]

    @property
    def expert_arch(self):
        return "linear" if self.hidden_weights is None else "mlp"

    @property
    def dense(self):
        return self.top_k is None

    def weights_finite(self):
        blocks = [self.router_weights, self.expert_weights]
        if self.hidden_weights is not None:
            blocks.append(self.hidden_weights)
        return all(np.all(np.isfinite(block)) for block in blocks)

    def max_abs_weight(self):
        blocks = [self.router_weights, self.expert_weights]
        if self.hidden_weights is not None:
            blocks.append(self.hidden_weights)
        return float(max(np.max(np.abs(block)) for block in blocks))

    def copy(self):
        return replace(
            self,
            router_weights=self.router_weights.copy(),
            expert_weights=self.expert_weights.copy(),
            hidden_weights=None
            if self.hidden_weights is None
            else self.hidden_weights.copy(),
        )

    def expert_parameters(self, expert_id):
        """Flattened parameter vector of one expert (hidden layer first)."""
        output = self.expert_weights[expert_id].ravel()
        if self.hidden_weights is None:
            return output.copy()
        return np.concatenate([self.hidden_weights[expert_id].ravel(), output])

    def expert_parameter_count(self):
        count = self.n_classes * self.expert_weights.shape[2]
        if self.hidden_weights is not None:
            count += self.hidden_weights.shape[1] * self.input_dim
        return count


@dataclass(frozen=True, eq=False)
class GateOutput:
    """
    Routing decisions for a batch; row ``b`` belongs to sample ``b``.

    Attributes:
        routing_probs (np.array): dense softmax probabilities (B, n).
        gates (np.array): post-top-k renormalized gates (B, n).
        selected (np.array): boolean mask of selected experts (B, n).
    """

    routing_probs: np.ndarray
    gates: np.ndarray
    selected: np.ndarray

    def routing_vector(self, index):
        return ProbabilityVector(self.routing_probs[index])

    @property
    def assignments(self):
        """Top-1 expert of each sample (lowest index on ties)."""
        return np.argmax(self.routing_probs, axis=1)


@dataclass(frozen=True)
class LossBreakdown:
    task_loss: float
    aux_loss: float
    total: float
    router_grad_norm: float


@dataclass(eq=False)
class Gradients:
    router: np.ndarray
    experts: np.ndarray
    hidden: np.ndarray = None

    def blocks(self):
        blocks = {"router": self.router, "experts": self.experts}
        if self.hidden is not None:
            blocks["hidden"] = self.hidden
        return blocks

    def norm(self):
        return float(
            np.sqrt(sum(np.sum(block**2) for block in self.blocks().values()))
        )


@dataclass(frozen=True, eq=False)
class _ForwardCache:
    inputs: np.ndarray
    gate_output: GateOutput
    expert_logits: np.ndarray
    hidden: np.ndarray
    mixed_logits: np.ndarray
    class_probs: np.ndarray


def xavier_uniform(shape, fan_in, fan_out, rng):
    """Fan-based uniform initialization with bound √(6/(fan_in + fan_out))."""
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def _init_experts(n_experts, input_dim, n_classes, expert_arch, hidden_dim, rng):
    if expert_arch == "linear":
        experts = xavier_uniform(
            (n_experts, n_classes, input_dim), input_dim, n_classes, rng
        )
        return experts, None
    if expert_arch == "mlp":
        hidden = xavier_uniform(
            (n_experts, hidden_dim, input_dim), input_dim, hidden_dim, rng
        )
        experts = xavier_uniform(
            (n_experts, n_classes, hidden_dim), hidden_dim, n_classes, rng
        )
        return experts, hidden
    raise ValueError(
        f"Unknown expert architecture '{expert_arch}', use one of {EXPERT_ARCHITECTURES}"
    )


def init_router(n_experts, input_dim, init_scale, rng):
    """Router weights ``init_scale · N(0, 1) / √input_dim``."""
    if init_scale < 0:
        raise ValueError("init_scale must be non-negative")
    return init_scale * rng.standard_normal((n_experts, input_dim)) / np.sqrt(input_dim)


def init_model(
    n_experts,
    input_dim,
    n_classes,
    rng,
    tau=1.0,
    top_k=None,
    lam=0.0,
    init_scale=1.0,
    expert_arch="linear",
    hidden_dim=16,
):
    """
    Create a freshly initialized model.

    Parameters:
        n_experts (int): number of experts.
        input_dim (int): input dimension.
        n_classes (int): number of classes.
        rng (numpy.random.Generator): initialization stream.
        tau (float): routing temperature.
        top_k (int or None): sparse routing width, None for dense.
        lam (float): load-balancing weight.
        init_scale (float): router initialization scale.
        expert_arch (str): "linear" or "mlp".
        hidden_dim (int): hidden width of mlp experts.

    Returns:
        MoEModelState
    """
    router = init_router(n_experts, input_dim, init_scale, rng)
    experts, hidden = _init_experts(
        n_experts, input_dim, n_classes, expert_arch, hidden_dim, rng
    )
    return MoEModelState(
        router_weights=router,
        expert_weights=experts,
        hidden_weights=hidden,
        tau=tau,
        top_k=top_k,
        lam=lam,
    )


def _inputs_of(model, batch):
    inputs = batch.inputs if isinstance(batch, LabeledBatch) else batch
    inputs = ensure_numeric_data(inputs)
    if inputs.ndim == 1:
        inputs = inputs[None, :]
    if inputs.shape[1] != model.input_dim:
        raise ValueError(
            f"Input dimension {inputs.shape[1]} does not match the model ({model.input_dim})"
        )
    return inputs


def compute_gates(model, inputs):
    """
    Dense routing probabilities and top-k gates for a batch of inputs.

    Returns:
        GateOutput
    """
    inputs = _inputs_of(model, inputs)
    logits = inputs @ model.router_weights.T
    probs = _scipy_softmax(logits / model.tau, axis=1)
    if model.dense:
        return GateOutput(
            routing_probs=probs,
            gates=probs.copy(),
            selected=np.ones_like(probs, dtype=bool),
        )
    order = np.argsort(-probs, axis=1, kind="stable")[:, : model.top_k]
    selected = np.zeros_like(probs, dtype=bool)
    np.put_along_axis(selected, order, True, axis=1)
    kept = np.where(selected, probs, 0.0)
    gates = kept / kept.sum(axis=1, keepdims=True)
    return GateOutput(routing_probs=probs, gates=gates, selected=selected)


def expert_logits(model, inputs):
    """
    Class logits of every expert for every input.

    Returns:
        tuple: logits of shape (B, n, n_classes) and the hidden activations
        (B, n, hidden_dim), or None for linear experts.
    """
    inputs = _inputs_of(model, inputs)
    if model.hidden_weights is None:
        return np.einsum("icd,bd->bic", model.expert_weights, inputs), None
    hidden = np.tanh(np.einsum("ihd,bd->bih", model.hidden_weights, inputs))
    return np.einsum("ich,bih->bic", model.expert_weights, hidden), hidden


def _forward(model, batch):
    inputs = _inputs_of(model, batch)
    gate_output = compute_gates(model, inputs)
    logits, hidden = expert_logits(model, inputs)
    mixed = np.einsum("bi,bic->bc", gate_output.gates, logits)
    return _ForwardCache(
        inputs=inputs,
        gate_output=gate_output,
        expert_logits=logits,
        hidden=hidden,
        mixed_logits=mixed,
        class_probs=_scipy_softmax(mixed, axis=1),
    )


def forward(model, batch):
    """
    Class probabilities of the mixture and the routing decisions.

    Parameters:
        model (MoEModelState): model.
        batch (LabeledBatch or array): inputs of shape (B, input_dim).

    Returns:
        tuple: class probabilities (B, n_classes) and GateOutput.
    """
    cache = _forward(model, batch)
    return cache.class_probs, cache.gate_output


def predict(model, inputs):
    class_probs, _ = forward(model, inputs)
    return np.argmax(class_probs, axis=1)


def accuracy(model, batch):
    return float(np.mean(predict(model, batch.inputs) == batch.labels))


def aux_loss(routing_probs_batch, assignments_batch, lam, n):
    """
    Load-balancing loss ``λ·n·Σ p̄_i f_i``.

    Parameters:
        routing_probs_batch (np.array): dense routing probabilities (B, n).
        assignments_batch (np.array): top-1 expert of each sample (B,).
        lam (float): weight λ, non-negative.
        n (int): number of experts.

    Returns:
        float
    """
    if lam < 0:
        raise ValueError("Load-balancing weight lambda must be non-negative")
    probs = np.asarray(routing_probs_batch, dtype=float)
    assignments = np.asarray(assignments_batch, dtype=int)
    p_bar = probs.mean(axis=0)
    fractions = np.bincount(assignments, minlength=n) / assignments.shape[0]
    return float(lam * n * np.dot(p_bar, fractions))


def _task_loss(cache, labels):
    log_probs = log_softmax(cache.mixed_logits, axis=1)
    return float(-np.mean(log_probs[np.arange(labels.shape[0]), labels]))


def _check_labels(model, batch):
    if not isinstance(batch, LabeledBatch):
        raise TypeError("A LabeledBatch is required")
    if batch.labels.max() >= model.n_classes:
        raise ValueError("Labels exceed the number of model classes")


def loss(model, batch):
    """Task, auxiliary and total loss without gradients."""
    _check_labels(model, batch)
    cache = _forward(model, batch)
    task = _task_loss(cache, batch.labels)
    gate_output = cache.gate_output
    aux = aux_loss(
        gate_output.routing_probs, gate_output.assignments, model.lam, model.n_experts
    )
    return task, aux


def _logit_gradient(model, cache, delta, balance_grad=None):
    """
    Back-propagate the class-logit error ``delta`` (B, n_classes) to the
    router logits through the gates and the tempered softmax.
    """
    probs = cache.gate_output.routing_probs
    gates = cache.gate_output.gates
    gate_signal = np.einsum("bc,bic->bi", delta, cache.expert_logits)
    if model.dense:
        prob_grad = gate_signal
    else:
        # renormalized top-k gates g_j = p_j s_j / Σ p_i s_i
        selected = cache.gate_output.selected
        kept_mass = np.where(selected, probs, 0.0).sum(axis=1, keepdims=True)
        mixed_signal = np.sum(gate_signal * gates, axis=1, keepdims=True)
        prob_grad = np.where(selected, (gate_signal - mixed_signal) / kept_mass, 0.0)
    if balance_grad is not None:
        prob_grad = prob_grad + balance_grad[None, :]
    centered = prob_grad - np.sum(probs * prob_grad, axis=1, keepdims=True)
    return probs * centered / model.tau


def backward(model, batch):
    """
    Exact analytic gradients of the total loss.

    The top-1 fractions of the load-balancing term are piecewise constant and
    carry no gradient; only the mean routing probabilities do.

    Parameters:
        model (MoEModelState): model.
        batch (LabeledBatch): labeled batch.

    Returns:
        tuple: Gradients and LossBreakdown.

    Raises:
        NonFiniteLossError: if the loss or a gradient is not finite.
    """
    _check_labels(model, batch)
    cache = _forward(model, batch)
    inputs = cache.inputs
    labels = batch.labels
    batch_size = inputs.shape[0]
    n = model.n_experts
    gate_output = cache.gate_output
    probs = gate_output.routing_probs
    gates = gate_output.gates

    task = _task_loss(cache, labels)
    fractions = np.bincount(gate_output.assignments, minlength=n) / batch_size
    aux = float(model.lam * n * np.dot(probs.mean(axis=0), fractions))

    delta = cache.class_probs.copy()
    delta[np.arange(batch_size), labels] -= 1.0
    delta /= batch_size

    hidden_grad = None
    if cache.hidden is None:
        expert_grad = np.einsum("bi,bc,bd->icd", gates, delta, inputs)
    else:
        expert_grad = np.einsum("bi,bc,bih->ich", gates, delta, cache.hidden)
        hidden_act = np.einsum("bi,ich,bc->bih", gates, model.expert_weights, delta)
        pre_act = hidden_act * (1.0 - cache.hidden**2)
        hidden_grad = np.einsum("bih,bd->ihd", pre_act, inputs)

    balance_grad = model.lam * n * fractions / batch_size
    logit_grad = _logit_gradient(model, cache, delta, balance_grad)
    router_grad = logit_grad.T @ inputs

    gradients = Gradients(router=router_grad, experts=expert_grad, hidden=hidden_grad)
    breakdown = LossBreakdown(
        task_loss=task,
        aux_loss=aux,
        total=task + aux,
        router_grad_norm=float(np.linalg.norm(router_grad)),
    )
    finite = np.isfinite(task) and np.isfinite(aux)
    finite = finite and all(
        np.all(np.isfinite(block)) for block in gradients.blocks().values()
    )
    if not finite:
        raise NonFiniteLossError(
            f"Non-finite loss at step {model.step}",
            {
                "step": model.step,
                "task_loss": task,
                "aux_loss": aux,
                "max_abs_weight": model.max_abs_weight(),
            },
        )
    return gradients, breakdown


def router_logit_gradient(model, batch):
    """
    Gradient of the task loss with respect to each sample's router logits,
    shape (B, n), scaled per sample (not divided by the batch size).
    """
    _check_labels(model, batch)
    cache = _forward(model, batch)
    delta = cache.class_probs.copy()
    delta[np.arange(delta.shape[0]), batch.labels] -= 1.0
    return _logit_gradient(model, cache, delta)


class GradientDescent:
    """Plain gradient descent ``θ ← θ − η ∇L``."""

    name = "gd"

    def update(self, name, weights, gradient, eta):
        return weights - eta * gradient

    def reset(self, *names):
        pass


class Adam:
    """
    Bias-corrected Adam, kept for robustness experiments.

    State is held per weight block; ``reset`` clears the moments of blocks
    that were reinitialized.
    """

    name = "adam"

    def __init__(self, beta1=0.9, beta2=0.98, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._state = {}

    def update(self, name, weights, gradient, eta):
        first, second, count = self._state.get(
            name, (np.zeros_like(weights), np.zeros_like(weights), 0)
        )
        count += 1
        first = self.beta1 * first + (1 - self.beta1) * gradient
        second = self.beta2 * second + (1 - self.beta2) * gradient**2
        self._state[name] = (first, second, count)
        first_hat = first / (1 - self.beta1**count)
        second_hat = second / (1 - self.beta2**count)
        return weights - eta * first_hat / (np.sqrt(second_hat) + self.eps)

    def reset(self, *names):
        for name in names or list(self._state):
            self._state.pop(name, None)


def make_optimizer(name):
    if name == "gd":
        return GradientDescent()
    if name == "adam":
        return Adam()
    raise ValueError(f"Unknown optimizer '{name}', use 'gd' or 'adam'")


def apply_gradients(model, gradients, eta, optimizer=None):
    """Return a new model with one optimizer update applied."""
    if eta < 0:
        raise ValueError("Learning rate eta must be non-negative")
    optimizer = optimizer or GradientDescent()
    updated = model.copy()
    if eta > 0:
        updated.router_weights = optimizer.update(
            "router", model.router_weights, gradients.router, eta
        )
        updated.expert_weights = optimizer.update(
            "experts", model.expert_weights, gradients.experts, eta
        )
        if gradients.hidden is not None:
            updated.hidden_weights = optimizer.update(
                "hidden", model.hidden_weights, gradients.hidden, eta
            )
    updated.step = model.step + 1
    return updated


def train_step(model, batch, eta, optimizer=None):
    """
    One update on a batch; gradient descent unless an optimizer is given.

    Parameters:
        model (MoEModelState): current model, left untouched.
        batch (LabeledBatch): training batch.
        eta (float): learning rate; 0 leaves the weights unchanged.
        optimizer (GradientDescent or Adam, optional): update rule.

    Returns:
        tuple: updated MoEModelState and the LossBreakdown before the update.
    """
    gradients, breakdown = backward(model, batch)
    return apply_gradients(model, gradients, eta, optimizer), breakdown


def marginal_routing(model, dataset_sample):
    """
    Mean dense routing distribution over a sample of inputs.

    Parameters:
        model (MoEModelState): model.
        dataset_sample (LabeledBatch or array): non-empty sample.

    Returns:
        ProbabilityVector
    """
    inputs = dataset_sample
    if isinstance(dataset_sample, LabeledBatch):
        inputs = dataset_sample.inputs
    if np.asarray(inputs).size == 0:
        raise ValueError("Cannot compute the marginal routing of an empty sample")
    gate_output = compute_gates(model, inputs)
    return ProbabilityVector(gate_output.routing_probs.mean(axis=0))


def reinit_experts_keep_router(model, rng, halve_lambda=False):
    """
    Resample the expert weights with fan-based uniform initialization,
    keeping the router weights and the step counter.

    Parameters:
        model (MoEModelState): model, left untouched.
        rng (numpy.random.Generator): intervention stream.
        halve_lambda (bool): also reduce λ by half.

    Returns:
        MoEModelState
    """
    hidden_dim = None if model.hidden_weights is None else model.hidden_weights.shape[1]
    experts, hidden = _init_experts(
        model.n_experts,
        model.input_dim,
        model.n_classes,
        model.expert_arch,
        hidden_dim,
        rng,
    )
    updated = model.copy()
    updated.expert_weights = experts
    updated.hidden_weights = hidden
    if halve_lambda:
        updated.lam = model.lam / 2.0
    return updated


def reinit_all(model, rng, router_rng, init_scale):
    """Resample experts and router alike; the step counter is kept."""
    updated = reinit_experts_keep_router(model, rng)
    updated.router_weights = init_router(
        model.n_experts, model.input_dim, init_scale, router_rng
    )
    return updated


def save_checkpoint(model, path):
    """
    Write a self-describing, versioned checkpoint with dill.

    Parameters:
        model (MoEModelState): model to save.
        path (str): destination file.
    """
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "expert_arch": model.expert_arch,
        "shapes": {
            "router_weights": list(model.router_weights.shape),
            "expert_weights": list(model.expert_weights.shape),
            "hidden_weights": None
            if model.hidden_weights is None
            else list(model.hidden_weights.shape),
        },
        "tau": model.tau,
        "lambda": model.lam,
        "top_k": model.top_k,
        "step": model.step,
        "router_weights": model.router_weights,
        "expert_weights": model.expert_weights,
        "hidden_weights": model.hidden_weights,
    }
    create_directory(Path(path).parent)
    with open(path, "wb") as handle:
        dill.dump(payload, handle)


def load_checkpoint(path):
    """
    Read a checkpoint written by ``save_checkpoint``.

    Raises:
        ValueError: if the file is not a checkpoint of a known version.
    """
    with open(path, "rb") as handle:
        payload = dill.load(handle)
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a fishermoe checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(
            f"Unsupported checkpoint version {payload.get('version')!r} in {path}"
        )
    model = MoEModelState(
        router_weights=payload["router_weights"],
        expert_weights=payload["expert_weights"],
        hidden_weights=payload["hidden_weights"],
        tau=payload["tau"],
        top_k=payload["top_k"],
        lam=payload["lambda"],
        step=payload["step"],
    )
    for name, shape in payload["shapes"].items():
        block = getattr(model, name)
        if (block is None) != (shape is None) or (
            block is not None and list(block.shape) != shape
        ):
            raise ValueError(f"Checkpoint shape mismatch for {name}")
    return model
