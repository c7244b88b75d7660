import numpy as np
import pytest

from fishermoe.simplex_geometry import (
    ProbabilityVector,
    SphericalPoint,
    bhattacharyya_coefficient,
    embed_displacement,
    exp_map,
    fisher_rao_distance,
    fsi,
    fsi_max,
    geodesic_bound,
    geodesic_interpolate,
    geodesic_step_deviation,
    log_map,
    project_to_tangent,
    softmax,
    softmax_jacobian,
    sqrt_embed,
)
from tests.testing_functions import random_probability_vectors


def great_circle_rk4(point, velocity, steps=1000):
    """Integrate x'' = -|x'|² x on the unit sphere for unit time."""
    state = np.concatenate([point, velocity])
    dim = point.size

    def derivative(y):
        x, v = y[:dim], y[dim:]
        return np.concatenate([v, -np.dot(v, v) * x])

    h = 1.0 / steps
    for _ in range(steps):
        k1 = derivative(state)
        k2 = derivative(state + h / 2 * k1)
        k3 = derivative(state + h / 2 * k2)
        k4 = derivative(state + h * k3)
        state = state + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return state[:dim]


class TestProbabilityVector:
    def test_normalizes_within_tolerance(self):
        p = ProbabilityVector([0.5, 0.5 + 5e-7])
        assert abs(p.values.sum() - 1.0) < 1e-15

    @pytest.mark.parametrize(
        "values",
        [[0.5, 0.6], [1.2, -0.2], [0.3, 0.3, 0.3]],
    )
    def test_invalid_vectors(self, values):
        with pytest.raises(ValueError):
            ProbabilityVector(values)

    def test_non_numeric(self):
        with pytest.raises(TypeError):
            ProbabilityVector(["a", "b"])

    def test_read_only(self):
        p = ProbabilityVector.uniform(3)
        with pytest.raises(ValueError):
            p.values[0] = 1.0

    def test_spherical_point_requires_unit_norm(self):
        with pytest.raises(ValueError):
            SphericalPoint([0.5, 0.5])


class TestFisherRaoDistance:
    @pytest.mark.parametrize(
        "p, q, expected",
        [
            ([0.5, 0.5], [0.5, 0.5], 0.0),
            ([1.0, 0.0], [0.0, 1.0], np.pi),
            ([0.5, 0.5], [0.9, 0.1], 0.9272952180016122),
            ([1.0, 0.0, 0.0], [0.0, 0.0, 1.0], np.pi),
        ],
    )
    def test_correct_results(self, p, q, expected):
        assert fisher_rao_distance(p, q) == pytest.approx(expected, abs=1e-12)

    def test_identical_points_are_exactly_zero(self):
        p = ProbabilityVector([0.2, 0.3, 0.5])
        assert fisher_rao_distance(p, p) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            fisher_rao_distance([0.5, 0.5], [0.2, 0.3, 0.5])

    def test_symmetry_and_triangle_inequality(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            p, q, r = random_probability_vectors(rng, 4, 3, sparse=True)
            d_pq = fisher_rao_distance(p, q)
            assert d_pq == fisher_rao_distance(q, p)
            assert d_pq <= fisher_rao_distance(p, r) + fisher_rao_distance(r, q) + 1e-9

    def test_isometry_of_the_square_root_embedding(self):
        rng = np.random.default_rng(1)
        for p, q in zip(
            random_probability_vectors(rng, 5, 200), random_probability_vectors(rng, 5, 200)
        ):
            phi, psi = sqrt_embed(p).coords, sqrt_embed(q).coords
            angle = np.arccos(np.clip(np.dot(phi, psi), -1.0, 1.0))
            assert fisher_rao_distance(p, q) == pytest.approx(2 * angle, abs=1e-10)

    def test_bhattacharyya_coefficient_range(self):
        assert bhattacharyya_coefficient([1.0, 0.0], [0.0, 1.0]) == 0.0
        assert bhattacharyya_coefficient([0.3, 0.7], [0.3, 0.7]) == pytest.approx(1.0)


class TestFSI:
    @pytest.mark.parametrize(
        "p, expected",
        [
            ([0.25, 0.25, 0.25, 0.25], 0.0),
            ([1.0, 0.0, 0.0, 0.0], 2 * np.pi / 3),
            ([0.7, 0.1, 0.1, 0.1], 0.935378),
            ([0.5, 0.5], 0.0),
            ([1.0, 0.0], np.pi / 2),
        ],
    )
    def test_correct_results(self, p, expected):
        assert fsi(p) == pytest.approx(expected, abs=1e-6)

    @pytest.mark.parametrize("n, expected", [(2, np.pi / 2), (4, 2 * np.pi / 3)])
    def test_fsi_max(self, n, expected):
        assert fsi_max(n) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("n", [1, 2.5])
    def test_fsi_max_invalid(self, n):
        with pytest.raises(ValueError):
            fsi_max(n)

    def test_single_expert(self):
        with pytest.raises(ValueError):
            fsi([1.0])

    def test_bounds(self):
        rng = np.random.default_rng(2)
        for n in (2, 3, 8):
            upper = fsi_max(n)
            for p in random_probability_vectors(rng, n, 2000, sparse=True):
                assert 0.0 <= fsi(p) <= upper + 1e-12

    def test_permutation_invariance_is_exact(self):
        rng = np.random.default_rng(3)
        for p in random_probability_vectors(rng, 6, 100):
            assert fsi(p) == fsi(rng.permutation(p))

    def test_constant_shift_invariance(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            w = rng.normal(size=5)
            tau = rng.uniform(0.2, 3.0)
            shifted = softmax(w + rng.normal() * 10, tau)
            assert fsi(softmax(w, tau)) == pytest.approx(fsi(shifted), abs=1e-10)


class TestGeodesicInterpolate:
    def test_end_points(self):
        p, q = ProbabilityVector([0.6, 0.4]), ProbabilityVector([0.1, 0.9])
        assert geodesic_interpolate(p, q, 0.0) == p
        assert geodesic_interpolate(p, q, 1.0) == q

    def test_midpoint_between_vertices(self):
        mid = geodesic_interpolate([1.0, 0.0], [0.0, 1.0], 0.5)
        np.testing.assert_allclose(mid.values, [0.5, 0.5], atol=1e-12)

    def test_constant_speed(self):
        p, q = ProbabilityVector([0.7, 0.2, 0.1]), ProbabilityVector([0.1, 0.3, 0.6])
        total = fisher_rao_distance(p, q)
        for s in (0.25, 0.5, 0.8):
            point = geodesic_interpolate(p, q, s)
            assert fisher_rao_distance(p, point) == pytest.approx(s * total, abs=1e-9)

    def test_identical_points(self):
        p = ProbabilityVector([0.3, 0.7])
        assert geodesic_interpolate(p, p, 0.4) == p

    def test_invalid_fraction(self):
        with pytest.raises(ValueError):
            geodesic_interpolate([0.5, 0.5], [0.2, 0.8], 1.5)


class TestSoftmax:
    @pytest.mark.parametrize(
        "w, tau, expected",
        [
            ([0.0, 0.0, 0.0], 1.0, [1 / 3, 1 / 3, 1 / 3]),
            ([1.0, 0.0], 1.0, [0.731059, 0.268941]),
            ([1.0, 0.0], 0.5, [0.880797, 0.119203]),
        ],
    )
    def test_correct_results(self, w, tau, expected):
        np.testing.assert_allclose(softmax(w, tau).values, expected, atol=1e-6)

    def test_large_logits_are_stable(self):
        p = softmax([1000.0, 0.0])
        np.testing.assert_allclose(p.values, [1.0, 0.0], atol=1e-12)

    @pytest.mark.parametrize("tau", [0.0, -1.0])
    def test_invalid_temperature(self, tau):
        with pytest.raises(ValueError):
            softmax([1.0, 0.0], tau)

    def test_jacobian_at_uniform(self):
        np.testing.assert_allclose(
            softmax_jacobian([0.0, 0.0]), [[0.25, -0.25], [-0.25, 0.25]], atol=1e-15
        )

    def test_jacobian_identities(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            w = rng.normal(size=4)
            tau = rng.uniform(0.2, 3.0)
            p = softmax(w, tau).values
            jacobian = softmax_jacobian(w, tau)
            np.testing.assert_allclose(jacobian.sum(axis=1), 0.0, atol=1e-12)
            np.testing.assert_allclose(
                tau * jacobian + np.outer(p, p), np.diag(p), atol=1e-10
            )
            np.testing.assert_allclose(
                tau**2 * jacobian @ np.diag(1.0 / p) @ jacobian.T + np.outer(p, p),
                np.diag(p),
                atol=1e-10,
            )

    def test_jacobian_matches_finite_differences(self):
        w, tau, epsilon = np.array([0.3, -1.2, 0.8]), 0.7, 1e-6
        numeric = np.column_stack(
            [
                (softmax(w + epsilon * e, tau).values - softmax(w - epsilon * e, tau).values)
                / (2 * epsilon)
                for e in np.eye(3)
            ]
        )
        np.testing.assert_allclose(softmax_jacobian(w, tau), numeric, atol=1e-8)


class TestSphereMaps:
    def test_exp_map_matches_numerical_integration(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            phi = sqrt_embed(random_probability_vectors(rng, 4, 1)[0]).coords
            velocity = project_to_tangent(phi, 0.3 * rng.normal(size=4))
            np.testing.assert_allclose(
                exp_map(phi, velocity), great_circle_rk4(phi, velocity), atol=1e-6
            )

    def test_log_map_inverts_exp_map(self):
        phi = sqrt_embed([0.4, 0.3, 0.3]).coords
        velocity = project_to_tangent(phi, np.array([0.1, -0.2, 0.05]))
        np.testing.assert_allclose(log_map(phi, exp_map(phi, velocity)), velocity, atol=1e-12)

    def test_zero_tangent(self):
        phi = sqrt_embed([0.2, 0.8]).coords
        np.testing.assert_allclose(exp_map(phi, np.zeros(2)), phi)
        np.testing.assert_allclose(log_map(phi, phi), np.zeros(2))

    def test_embed_displacement(self):
        np.testing.assert_allclose(
            embed_displacement([0.25, 0.75, 0.0], [0.1, -0.1, 0.0]),
            [0.1, -0.1 / (2 * np.sqrt(0.75)), 0.0],
        )


class TestGeodesicStepDeviation:
    def test_exact_continuation_has_zero_deviation(self):
        phi = sqrt_embed([0.5, 0.3, 0.2])
        tangent = project_to_tangent(phi.coords, np.array([0.05, -0.02, -0.01]))
        target = SphericalPoint(exp_map(phi, tangent))
        assert geodesic_step_deviation(phi, target, tangent) == pytest.approx(0.0, abs=1e-12)

    def test_zero_tangent_same_point(self):
        phi = sqrt_embed([0.5, 0.5])
        assert geodesic_step_deviation(phi, phi, np.zeros(2)) == 0.0

    def test_perturbed_step_matches_integration(self):
        rng = np.random.default_rng(7)
        phi = sqrt_embed([0.4, 0.35, 0.25])
        tangent = project_to_tangent(phi.coords, 0.1 * rng.normal(size=3))
        actual = sqrt_embed([0.42, 0.33, 0.25])
        expected = np.linalg.norm(actual.coords - great_circle_rk4(phi.coords, tangent))
        assert geodesic_step_deviation(phi, actual, tangent) == pytest.approx(
            expected, abs=1e-6
        )

    def test_non_unit_input(self):
        with pytest.raises(ValueError):
            geodesic_step_deviation([0.5, 0.5], [0.6, 0.8], np.zeros(2))


class TestGeodesicBound:
    @pytest.mark.parametrize(
        "eta, grad_norm, tau, expected",
        [(0.1, 0.0, 1.0, 0.0), (0.1, 1.0, 1.0, 0.000625), (0.1, 1.0, 2.0, 0.0003125)],
    )
    def test_correct_results(self, eta, grad_norm, tau, expected):
        assert geodesic_bound(eta, grad_norm, tau) == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize(
        "eta, grad_norm, tau", [(0.0, 1.0, 1.0), (0.1, 1.0, 0.0), (0.1, -1.0, 1.0)]
    )
    def test_invalid_arguments(self, eta, grad_norm, tau):
        with pytest.raises(ValueError):
            geodesic_bound(eta, grad_norm, tau)
