"""
Mixture-of-Gaussians classification task with an exact Bayes oracle.

Each cluster is an isotropic Gaussian with its own mean; clusters map to
class labels. The default task gives every expert one cluster and one class,
with the cluster means placed so that every pair sits ``separation`` apart.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import multivariate_normal

from fishermoe.simplex_geometry import ProbabilityVector
from fishermoe.utils import ensure_numeric_data

FAILURE_FRACTION = 0.85


@dataclass(frozen=True, eq=False)
class GaussianMixtureSpec:
    """
    Generating distribution of the synthetic task.

    Attributes:
        means (np.array): cluster means, shape (n_clusters, input_dim).
        covariance_scale (float): isotropic standard deviation σ of every cluster.
        mixture_weights (ProbabilityVector): cluster probabilities.
        label_of_cluster (tuple): class label of each cluster.
    """

    means: np.ndarray
    covariance_scale: float
    mixture_weights: ProbabilityVector
    label_of_cluster: tuple

    def __post_init__(self):
        means = ensure_numeric_data(self.means)
        if means.ndim != 2:
            raise ValueError("Cluster means must be a 2-D array")
        if means.shape[0] < 2:
            raise ValueError("At least 2 clusters are required")
        if not self.covariance_scale > 0:
            raise ValueError("covariance_scale must be positive")
        weights = self.mixture_weights
        if not isinstance(weights, ProbabilityVector):
            weights = ProbabilityVector(weights)
        if weights.n != means.shape[0]:
            raise ValueError("One mixture weight per cluster is required")
        labels = tuple(int(label) for label in self.label_of_cluster)
        if len(labels) != means.shape[0]:
            raise ValueError("One label per cluster is required")
        if min(labels) < 0:
            raise ValueError("Labels must be non-negative")
        means.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariance_scale", float(self.covariance_scale))
        object.__setattr__(self, "mixture_weights", weights)
        object.__setattr__(self, "label_of_cluster", labels)

    @property
    def n_clusters(self):
        return self.means.shape[0]

    @property
    def input_dim(self):
        return self.means.shape[1]

    @property
    def n_classes(self):
        return max(self.label_of_cluster) + 1

    def __eq__(self, other):
        if not isinstance(other, GaussianMixtureSpec):
            return NotImplemented
        return (
            np.array_equal(self.means, other.means)
            and self.covariance_scale == other.covariance_scale
            and self.mixture_weights == other.mixture_weights
            and self.label_of_cluster == other.label_of_cluster
        )

    def to_dict(self):
        """Plain-Python representation, suitable for YAML or JSON."""
        return {
            "means": self.means.tolist(),
            "covariance_scale": self.covariance_scale,
            "mixture_weights": self.mixture_weights.values.tolist(),
            "label_of_cluster": list(self.label_of_cluster),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            means=np.asarray(data["means"], dtype=float),
            covariance_scale=data["covariance_scale"],
            mixture_weights=ProbabilityVector(data["mixture_weights"]),
            label_of_cluster=tuple(data["label_of_cluster"]),
        )


@dataclass(frozen=True, eq=False)
class LabeledBatch:
    """
    A batch of inputs with integer class labels.

    Attributes:
        inputs (np.array): shape (B, input_dim).
        labels (np.array): shape (B,), integers.
        clusters (np.array or None): generating cluster of each sample, when known.
    """

    inputs: np.ndarray
    labels: np.ndarray
    clusters: np.ndarray = None

    def __post_init__(self):
        inputs = ensure_numeric_data(self.inputs)
        if inputs.ndim != 2:
            raise ValueError("Inputs must be a 2-D array")
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.shape[0] != inputs.shape[0]:
            raise ValueError("One label per input row is required")
        if inputs.shape[0] < 1:
            raise ValueError("A batch needs at least one sample")
        if not np.issubdtype(labels.dtype, np.integer):
            raise TypeError("Labels must be integers")
        if np.any(labels < 0):
            raise ValueError("Labels must be non-negative")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels.astype(np.int64))

    def __len__(self):
        return self.inputs.shape[0]

    def head(self, size):
        """First ``size`` samples of the batch."""
        size = min(int(size), len(self))
        clusters = None if self.clusters is None else self.clusters[:size]
        return LabeledBatch(self.inputs[:size], self.labels[:size], clusters)


def cluster_means(n_clusters, input_dim, separation, rng=None):
    """
    Cluster means with every pair of means ``separation`` apart when possible.

    With ``input_dim >= n_clusters`` the means are scaled basis vectors
    ``(separation/√2)·e_k``. Otherwise random unit directions drawn from
    ``rng`` are scaled to norm ``separation/√2``.
    """
    if separation < 0:
        raise ValueError("separation must be non-negative")
    radius = separation / np.sqrt(2.0)
    if input_dim >= n_clusters:
        means = np.zeros((n_clusters, input_dim))
        means[np.arange(n_clusters), np.arange(n_clusters)] = radius
        return means
    if rng is None:
        raise ValueError("A random generator is needed when input_dim < n_clusters")
    directions = rng.standard_normal((n_clusters, input_dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return radius * directions


def default_task(
    n_clusters,
    input_dim,
    separation=4.0,
    covariance_scale=1.0,
    mixture_weights=None,
    label_of_cluster=None,
    rng=None,
):
    """
    Default task: one class per cluster, equal weights, controllable separation.

    Parameters:
        n_clusters (int): number of clusters (the number of experts by default).
        input_dim (int): input dimension.
        separation (float): distance between cluster means.
        covariance_scale (float): isotropic σ.
        mixture_weights (list, optional): cluster probabilities, uniform if omitted.
        label_of_cluster (list, optional): class per cluster, identity if omitted.
        rng (numpy.random.Generator, optional): used when input_dim < n_clusters.

    Returns:
        GaussianMixtureSpec
    """
    if mixture_weights is None:
        mixture_weights = ProbabilityVector.uniform(n_clusters)
    if label_of_cluster is None:
        label_of_cluster = tuple(range(n_clusters))
    return GaussianMixtureSpec(
        means=cluster_means(n_clusters, input_dim, separation, rng),
        covariance_scale=covariance_scale,
        mixture_weights=ProbabilityVector(mixture_weights),
        label_of_cluster=tuple(label_of_cluster),
    )


def sample_batch(spec, batch_size, rng):
    """
    Draw a labeled batch from the mixture.

    Each sample picks a cluster from the mixture weights, then adds isotropic
    Gaussian noise of scale σ to the cluster mean.

    Parameters:
        spec (GaussianMixtureSpec): generating distribution.
        batch_size (int): number of samples, at least 1.
        rng (numpy.random.Generator): seed stream.

    Returns:
        LabeledBatch
    """
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    clusters = rng.choice(
        spec.n_clusters, size=int(batch_size), p=spec.mixture_weights.values
    )
    noise = rng.standard_normal((int(batch_size), spec.input_dim))
    inputs = spec.means[clusters] + spec.covariance_scale * noise
    labels = np.asarray(spec.label_of_cluster, dtype=np.int64)[clusters]
    return LabeledBatch(inputs=inputs, labels=labels, clusters=clusters)


def bayes_predict(spec, inputs):
    """
    Labels chosen by the exact Bayes classifier: the most probable cluster
    (weight times Gaussian density) mapped to its class.
    """
    inputs = ensure_numeric_data(inputs)
    covariance = spec.covariance_scale**2 * np.eye(spec.input_dim)
    log_posterior = np.column_stack(
        [
            np.log(weight) + multivariate_normal(mean, covariance).logpdf(inputs)
            if weight > 0
            else np.full(inputs.shape[0], -np.inf)
            for mean, weight in zip(spec.means, spec.mixture_weights.values)
        ]
    )
    best_cluster = np.argmax(log_posterior, axis=1)
    return np.asarray(spec.label_of_cluster, dtype=np.int64)[best_cluster]


@dataclass(frozen=True)
class OracleAccuracy:
    """Monte-Carlo estimate of the Bayes accuracy with its standard error."""

    accuracy: float
    standard_error: float
    n_samples: int


def bayes_optimal_accuracy(spec, n_monte_carlo, rng):
    """
    Monte-Carlo estimate of the accuracy of the exact Bayes classifier.

    Parameters:
        spec (GaussianMixtureSpec): generating distribution.
        n_monte_carlo (int): number of samples, at least 10 000.
        rng (numpy.random.Generator): seed stream.

    Returns:
        OracleAccuracy
    """
    if n_monte_carlo < 10_000:
        raise ValueError("n_monte_carlo must be at least 10000")
    batch = sample_batch(spec, n_monte_carlo, rng)
    correct = bayes_predict(spec, batch.inputs) == batch.labels
    accuracy = float(np.mean(correct))
    standard_error = float(np.sqrt(accuracy * (1.0 - accuracy) / n_monte_carlo))
    return OracleAccuracy(accuracy, standard_error, int(n_monte_carlo))


def is_failure(final_accuracy, optimal_accuracy):
    """
    A run fails when its final accuracy is below 85% of the Bayes accuracy.

    Parameters:
        final_accuracy (float): accuracy in [0, 1].
        optimal_accuracy (float): Bayes accuracy in (0, 1].
    """
    if not 0.0 <= final_accuracy <= 1.0:
        raise ValueError("final_accuracy must lie in [0, 1]")
    if not 0.0 < optimal_accuracy <= 1.0:
        raise ValueError("optimal_accuracy must lie in (0, 1]")
    return bool(final_accuracy < FAILURE_FRACTION * optimal_accuracy)
