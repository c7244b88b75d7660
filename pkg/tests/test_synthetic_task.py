import numpy as np
import pytest
from scipy.stats import norm

from fishermoe.synthetic_task import (
    GaussianMixtureSpec,
    LabeledBatch,
    bayes_optimal_accuracy,
    bayes_predict,
    cluster_means,
    default_task,
    is_failure,
    sample_batch,
)


class TestClusterMeans:
    @pytest.mark.parametrize("n_clusters, input_dim", [(2, 2), (3, 4), (4, 8)])
    def test_pairwise_separation(self, n_clusters, input_dim):
        means = cluster_means(n_clusters, input_dim, separation=4.0)
        for i in range(n_clusters):
            for j in range(i + 1, n_clusters):
                assert np.linalg.norm(means[i] - means[j]) == pytest.approx(4.0)

    def test_random_directions_have_fixed_norm(self):
        means = cluster_means(5, 2, 3.0, np.random.default_rng(0))
        np.testing.assert_allclose(np.linalg.norm(means, axis=1), 3.0 / np.sqrt(2.0))

    def test_random_directions_need_generator(self):
        with pytest.raises(ValueError):
            cluster_means(5, 2, 3.0)

    def test_negative_separation(self):
        with pytest.raises(ValueError):
            cluster_means(2, 2, -1.0)


class TestGaussianMixtureSpec:
    def test_default_task(self):
        spec = default_task(3, 4)
        assert spec.n_clusters == 3
        assert spec.n_classes == 3
        assert spec.input_dim == 4
        assert spec.label_of_cluster == (0, 1, 2)

    def test_dict_round_trip(self):
        spec = default_task(3, 4, mixture_weights=[0.5, 0.3, 0.2])
        assert GaussianMixtureSpec.from_dict(spec.to_dict()) == spec

    @pytest.mark.parametrize(
        "overrides",
        [
            {"covariance_scale": 0.0},
            {"mixture_weights": [0.5, 0.5, 0.0, 0.0]},
            {"label_of_cluster": (0, 1)},
            {"label_of_cluster": (0, -1, 2)},
        ],
    )
    def test_invalid_specs(self, overrides):
        values = {
            "means": np.eye(3),
            "covariance_scale": 1.0,
            "mixture_weights": [1 / 3, 1 / 3, 1 / 3],
            "label_of_cluster": (0, 1, 2),
        }
        values.update(overrides)
        with pytest.raises(ValueError):
            GaussianMixtureSpec(**values)

    def test_single_cluster(self):
        with pytest.raises(ValueError):
            GaussianMixtureSpec(np.zeros((1, 2)), 1.0, [1.0], (0,))


class TestLabeledBatch:
    def test_float_labels(self):
        with pytest.raises(TypeError):
            LabeledBatch(np.zeros((2, 2)), np.array([0.0, 1.0]))

    def test_mismatched_lengths(self):
        with pytest.raises(ValueError):
            LabeledBatch(np.zeros((3, 2)), np.array([0, 1]))

    def test_head(self):
        batch = sample_batch(default_task(2, 2), 10, np.random.default_rng(0))
        head = batch.head(4)
        assert len(head) == 4
        np.testing.assert_array_equal(head.labels, batch.labels[:4])
        assert len(batch.head(50)) == 10


class TestSampling:
    def test_reproducible(self):
        spec = default_task(3, 4)
        first = sample_batch(spec, 100, np.random.default_rng(7))
        second = sample_batch(spec, 100, np.random.default_rng(7))
        np.testing.assert_array_equal(first.inputs, second.inputs)
        np.testing.assert_array_equal(first.labels, second.labels)

    def test_labels_follow_clusters(self):
        spec = default_task(3, 4, label_of_cluster=(0, 0, 1))
        batch = sample_batch(spec, 200, np.random.default_rng(1))
        np.testing.assert_array_equal(
            batch.labels, np.asarray(spec.label_of_cluster)[batch.clusters]
        )

    def test_zero_weight_cluster_is_never_drawn(self):
        spec = default_task(3, 4, mixture_weights=[0.5, 0.5, 0.0])
        batch = sample_batch(spec, 500, np.random.default_rng(2))
        assert not np.any(batch.clusters == 2)

    def test_cluster_frequencies_follow_weights(self):
        weights = [0.5, 0.3, 0.2]
        spec = default_task(3, 4, mixture_weights=weights)
        batch = sample_batch(spec, 100_000, np.random.default_rng(4))
        frequencies = np.bincount(batch.clusters, minlength=3) / 100_000
        np.testing.assert_allclose(frequencies, weights, atol=0.01)

    def test_invalid_batch_size(self):
        with pytest.raises(ValueError):
            sample_batch(default_task(2, 2), 0, np.random.default_rng(0))


class TestBayesOracle:
    def test_predicts_nearest_mean_for_equal_weights(self):
        spec = default_task(3, 4)
        np.testing.assert_array_equal(bayes_predict(spec, spec.means), [0, 1, 2])

    @pytest.mark.parametrize("separation", [1.0, 2.0, 4.0])
    def test_two_cluster_accuracy(self, separation):
        spec = default_task(2, 4, separation=separation)
        oracle = bayes_optimal_accuracy(spec, 20_000, np.random.default_rng(3))
        assert oracle.accuracy == pytest.approx(norm.cdf(separation / 2), abs=0.015)
        assert 0 < oracle.standard_error < 0.01
        assert oracle.n_samples == 20_000

    def test_identical_means_give_chance_accuracy(self):
        spec = default_task(2, 4, separation=0.0)
        oracle = bayes_optimal_accuracy(spec, 20_000, np.random.default_rng(5))
        assert oracle.accuracy == pytest.approx(0.5, abs=0.02)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            bayes_optimal_accuracy(default_task(2, 2), 9_999, np.random.default_rng(0))


class TestIsFailure:
    @pytest.mark.parametrize(
        "final, optimal, expected",
        [(0.80, 0.95, True), (0.81, 0.95, False), (0.0, 1.0, True), (0.85, 1.0, False)],
    )
    def test_correct_results(self, final, optimal, expected):
        assert is_failure(final, optimal) is expected

    @pytest.mark.parametrize("final, optimal", [(1.2, 0.9), (0.5, 0.0), (-0.1, 0.9)])
    def test_invalid_arguments(self, final, optimal):
        with pytest.raises(ValueError):
            is_failure(final, optimal)
