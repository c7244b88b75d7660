"""
Fisher geometry of the probability simplex.

The square-root map sends the simplex onto the positive orthant of the unit
sphere, turning the Fisher metric into the round metric (up to a factor 4).
Everything here works on that picture: Fisher-Rao distances are twice the
angle between embedded points, geodesics are great-circle arcs, and the
specialization index (FSI) is the distance of the routing marginal from the
uniform distribution.

Boundary points (zero entries) are accepted everywhere; distances extend
continuously to the boundary and the arccos argument is clamped to [0, 1].
"""

import numpy as np
from scipy.special import softmax as _scipy_softmax

from fishermoe.utils import ensure_numeric_data, ordered_sum

SUM_TOLERANCE = 1e-6
UNIT_NORM_TOLERANCE = 1e-9
ARCCOS_SNAP = 1e-12
DEGENERATE_ANGLE = 1e-12
# sectional curvature of the Fisher simplex
KAPPA = 0.25


class ProbabilityVector:
    """
    A point of the closed probability simplex.

    Construction rejects negative entries and sums outside
    ``[1 - 1e-6, 1 + 1e-6]``, then divides by the sum so the stored values
    add up to 1 to rounding precision. The stored array is read-only.

    Parameters:
        values (list or array): probabilities, one per expert.
    """

    def __init__(self, values):
        values = ensure_numeric_data(values)
        if values.ndim != 1:
            raise ValueError("A probability vector must be one-dimensional")
        if np.any(values < 0):
            raise ValueError("Probabilities must be non-negative")
        total = ordered_sum(values)
        if abs(total - 1.0) > SUM_TOLERANCE:
            raise ValueError(f"Probabilities must sum to 1, got {total!r}")
        values = values / total
        values.setflags(write=False)
        self._values = values

    @classmethod
    def uniform(cls, n):
        """Uniform distribution over ``n`` outcomes."""
        if n < 1:
            raise ValueError("n must be at least 1")
        return cls(np.full(n, 1.0 / n))

    @property
    def values(self):
        return self._values

    @property
    def n(self):
        return self._values.size

    def __len__(self):
        return self.n

    def __iter__(self):
        return iter(self._values.tolist())

    def __getitem__(self, index):
        return self._values[index]

    def __array__(self, dtype=None, copy=None):
        return np.array(self._values, dtype=dtype)

    def __eq__(self, other):
        if not isinstance(other, ProbabilityVector):
            return NotImplemented
        return np.array_equal(self._values, other._values)

    def __hash__(self):
        return hash(self._values.tobytes())

    def __repr__(self):
        return f"ProbabilityVector({np.array2string(self._values, precision=6)})"


class SphericalPoint:
    """
    A point on the positive orthant of the unit sphere, the image of the
    square-root embedding.

    Parameters:
        coords (list or array): non-negative coordinates of unit Euclidean norm.
    """

    def __init__(self, coords):
        coords = ensure_numeric_data(coords)
        if coords.ndim != 1:
            raise ValueError("A spherical point must be one-dimensional")
        if np.any(coords < 0):
            raise ValueError("Spherical point must lie in the positive orthant")
        norm = np.sqrt(ordered_sum(coords**2))
        if abs(norm - 1.0) > UNIT_NORM_TOLERANCE:
            raise ValueError(f"Spherical point must have unit norm, got {norm!r}")
        coords.setflags(write=False)
        self._coords = coords

    @property
    def coords(self):
        return self._coords

    @property
    def n(self):
        return self._coords.size

    def __len__(self):
        return self.n

    def __array__(self, dtype=None, copy=None):
        return np.array(self._coords, dtype=dtype)

    def __eq__(self, other):
        if not isinstance(other, SphericalPoint):
            return NotImplemented
        return np.array_equal(self._coords, other._coords)

    def __hash__(self):
        return hash(self._coords.tobytes())

    def __repr__(self):
        return f"SphericalPoint({np.array2string(self._coords, precision=6)})"


def _as_probability_vector(p):
    if isinstance(p, ProbabilityVector):
        return p
    return ProbabilityVector(p)


def _as_spherical_point(point):
    if isinstance(point, SphericalPoint):
        return point
    return SphericalPoint(point)


def _check_same_dimension(p, q):
    if p.n != q.n:
        raise ValueError(f"Dimension mismatch: {p.n} != {q.n}")


def _distance_from_coefficient(coefficient):
    """2·arccos of a Bhattacharyya coefficient, clamped and snapped at 1."""
    coefficient = min(max(coefficient, 0.0), 1.0)
    if coefficient >= 1.0 - ARCCOS_SNAP:
        return 0.0
    return float(2.0 * np.arccos(coefficient))


def bhattacharyya_coefficient(p, q):
    """
    Bhattacharyya coefficient Σ √(p_i q_i) of two distributions.

    Parameters:
        p, q (ProbabilityVector): distributions of equal dimension.

    Returns:
        float: coefficient in [0, 1].
    """
    p = _as_probability_vector(p)
    q = _as_probability_vector(q)
    _check_same_dimension(p, q)
    return ordered_sum(np.sqrt(p.values * q.values))


def fisher_rao_distance(p, q):
    """
    Fisher-Rao distance ``2·arccos(Σ √(p_i q_i))`` between two distributions.

    Parameters:
        p, q (ProbabilityVector): distributions of equal dimension.

    Returns:
        float: distance in radians, in [0, π].

    Raises:
        ValueError: if the dimensions differ.
    """
    return _distance_from_coefficient(bhattacharyya_coefficient(p, q))


def sqrt_embed(p):
    """
    Square-root embedding of a distribution onto the unit sphere.

    Parameters:
        p (ProbabilityVector): distribution.

    Returns:
        SphericalPoint: point with coordinates √p_i.
    """
    p = _as_probability_vector(p)
    return SphericalPoint(np.sqrt(p.values))


def fsi_max(n):
    """
    Largest attainable specialization index for ``n`` experts, reached at
    the vertices of the simplex.

    Parameters:
        n (int): number of experts, at least 2.

    Returns:
        float: ``2·arccos(1/√n)``.
    """
    if int(n) != n or n < 2:
        raise ValueError("fsi_max requires an integer n >= 2")
    return float(2.0 * np.arccos(1.0 / np.sqrt(n)))


def fsi(p_bar):
    """
    Fisher Specialization Index: Fisher-Rao distance of the routing marginal
    from uniform routing.

    The square roots are summed in ascending order of value, so the index is
    bit-identical under any relabeling of the experts.

    Parameters:
        p_bar (ProbabilityVector): marginal routing distribution, n >= 2.

    Returns:
        float: index in radians, in ``[0, fsi_max(n)]``.
    """
    p_bar = _as_probability_vector(p_bar)
    if p_bar.n < 2:
        raise ValueError("FSI requires at least 2 experts")
    root_sum = ordered_sum(np.sort(np.sqrt(p_bar.values)))
    return _distance_from_coefficient(root_sum / np.sqrt(p_bar.n))


def geodesic_interpolate(p, q, s):
    """
    Point at fraction ``s`` along the Fisher-Rao geodesic from ``p`` to ``q``.

    The geodesic is the great-circle arc between the embedded points,
    squared back onto the simplex.

    Parameters:
        p, q (ProbabilityVector): end points.
        s (float): position in [0, 1].

    Returns:
        ProbabilityVector: ``p`` at s=0, ``q`` at s=1.
    """
    p = _as_probability_vector(p)
    q = _as_probability_vector(q)
    _check_same_dimension(p, q)
    if not 0.0 <= s <= 1.0:
        raise ValueError("s must lie in [0, 1]")
    omega = fisher_rao_distance(p, q) / 2.0
    if omega < DEGENERATE_ANGLE or s == 0.0:
        return p
    if s == 1.0:
        return q
    a = np.sqrt(p.values)
    b = np.sqrt(q.values)
    coords = (np.sin((1.0 - s) * omega) * a + np.sin(s * omega) * b) / np.sin(omega)
    values = coords**2
    return ProbabilityVector(values / ordered_sum(values))


def softmax(w, tau=1.0):
    """
    Tempered softmax ``exp(w_i/τ) / Σ exp(w_j/τ)``.

    Parameters:
        w (array): finite logits.
        tau (float): temperature, strictly positive.

    Returns:
        ProbabilityVector
    """
    if tau <= 0:
        raise ValueError("Temperature tau must be positive")
    w = ensure_numeric_data(w)
    return ProbabilityVector(_scipy_softmax(w / tau))


def softmax_jacobian(w, tau=1.0):
    """
    Jacobian of the tempered softmax with respect to the logits,
    ``(1/τ)(diag(p) − p pᵀ)``.

    With the inverse categorical Fisher metric ``diag(p)`` it satisfies
    ``τ J + p pᵀ = diag(p)`` and ``τ² J diag(1/p) Jᵀ + p pᵀ = diag(p)``
    (interior points). The product ``τ² J Jᵀ`` alone does not give
    ``diag(p) − p pᵀ``.
    """
    p = softmax(w, tau).values
    return (np.diag(p) - np.outer(p, p)) / tau


def project_to_tangent(point, vector):
    """Remove the component of ``vector`` along the unit vector ``point``."""
    phi = np.asarray(point, dtype=float)
    vector = ensure_numeric_data(vector)
    if vector.shape != phi.shape:
        raise ValueError("Tangent vector and point dimensions differ")
    return vector - np.dot(vector, phi) * phi


def exp_map(point, tangent):
    """
    Exponential map of the unit sphere: follow the great circle leaving
    ``point`` with initial velocity ``tangent`` for unit time.

    Parameters:
        point (SphericalPoint or array): unit vector.
        tangent (array): velocity; its normal component is projected out.

    Returns:
        np.array: unit vector (it may leave the positive orthant).
    """
    phi = np.asarray(point, dtype=float)
    velocity = project_to_tangent(phi, tangent)
    speed = np.sqrt(ordered_sum(velocity**2))
    if speed < 1e-15:
        return phi.copy()
    return np.cos(speed) * phi + np.sin(speed) * velocity / speed


def log_map(point, other):
    """
    Logarithm map of the unit sphere: the tangent vector at ``point`` whose
    exponential is ``other``.
    """
    phi = np.asarray(point, dtype=float)
    psi = np.asarray(other, dtype=float)
    cosine = min(max(float(np.dot(phi, psi)), -1.0), 1.0)
    direction = psi - cosine * phi
    direction_norm = np.sqrt(ordered_sum(direction**2))
    if direction_norm < 1e-15:
        return np.zeros_like(phi)
    return np.arccos(cosine) * direction / direction_norm


def embed_displacement(p, dp):
    """
    Push a simplex displacement through the differential of the square-root
    embedding, ``dφ_i = dp_i / (2√p_i)``; coordinates with ``p_i = 0`` get 0.
    """
    p = _as_probability_vector(p)
    dp = ensure_numeric_data(dp)
    if dp.shape != p.values.shape:
        raise ValueError("Displacement and distribution dimensions differ")
    roots = np.sqrt(p.values)
    dphi = np.zeros_like(dp)
    positive = roots > 0
    dphi[positive] = dp[positive] / (2.0 * roots[positive])
    return dphi


def geodesic_step_deviation(phi_prev, phi_next, predicted_tangent):
    """
    Distance between the point actually reached after one step and the
    great-circle continuation predicted from the previous point.

    Parameters:
        phi_prev (SphericalPoint): embedded point before the step.
        phi_next (SphericalPoint): embedded point after the step.
        predicted_tangent (array): first-order predicted velocity at
            ``phi_prev``; it is projected on the tangent space first.

    Returns:
        float: ambient Euclidean distance ``‖φ_next − exp_{φ_prev}(v)‖``.

    Raises:
        ValueError: if either point is not a unit vector in the positive orthant.
    """
    phi_prev = _as_spherical_point(phi_prev)
    phi_next = _as_spherical_point(phi_next)
    if phi_prev.n != phi_next.n:
        raise ValueError(f"Dimension mismatch: {phi_prev.n} != {phi_next.n}")
    predicted = exp_map(phi_prev, predicted_tangent)
    return float(np.sqrt(ordered_sum((phi_next.coords - predicted) ** 2)))


def geodesic_bound(eta, grad_norm, tau):
    """
    Per-step geodesic deviation bound ``κ η² ‖∇L‖² / (4τ)`` with κ = 1/4.

    Parameters:
        eta (float): learning rate, positive.
        grad_norm (float): gradient norm, non-negative.
        tau (float): routing temperature, positive.
    """
    if eta <= 0:
        raise ValueError("Learning rate eta must be positive")
    if tau <= 0:
        raise ValueError("Temperature tau must be positive")
    if grad_norm < 0:
        raise ValueError("Gradient norm must be non-negative")
    return KAPPA * eta**2 * grad_norm**2 / (4.0 * tau)
