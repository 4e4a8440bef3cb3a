"""Poincare ball primitives with curvature fixed at 1.

Distances, Busemann functions, Klein-model conversions, Einstein midpoints,
and the origin-LCA similarity used to group class clusters. All operations
are pure functions on float64 arrays; batched inputs broadcast over the
leading axes. Points are kept strictly inside the unit ball by rescaling
norms at ``1 - BALL_EPS``, which keeps every formula below finite even for
near-boundary embedding files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Boundary clamp: norms >= 1 - BALL_EPS are rescaled to exactly 1 - BALL_EPS.
BALL_EPS = 1e-7
MAX_NORM = 1.0 - BALL_EPS

# lca_similarity singular-angle guards; sin(theta) sits in a denominator.
_LCA_ORIGIN_TOL = 1e-9
_LCA_ANGLE_TOL = 1e-6


def clip_to_ball(coords) -> np.ndarray:
    """Return float64 coordinates rescaled to norm <= 1 - BALL_EPS.

    Rows with norm below the threshold pass through unchanged; non-finite
    input raises ValueError. Works on single vectors or stacked rows.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if not np.all(np.isfinite(coords)):
        raise ValueError("coordinates must be finite")
    norms = np.linalg.norm(coords, axis=-1, keepdims=True)
    over = norms >= MAX_NORM
    if np.any(over):
        scale = np.ones_like(norms)
        np.divide(MAX_NORM, norms, out=scale, where=over)
        coords = coords * scale
    return coords


def unit_vector(v) -> np.ndarray:
    """Normalize ``v`` to the unit sphere; zero or non-finite input raises."""
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("direction must be finite")
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("direction must be nonzero")
    return v / n


@dataclass(frozen=True)
class PoincarePoint:
    """A point strictly inside the unit ball (clamped on construction)."""

    coords: np.ndarray

    def __post_init__(self):
        coords = clip_to_ball(np.atleast_1d(self.coords))
        object.__setattr__(self, "coords", coords)

    @property
    def dim(self) -> int:
        return self.coords.shape[-1]


@dataclass(frozen=True)
class IdealPoint:
    """A direction on the boundary sphere (renormalized on construction)."""

    direction: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "direction", unit_vector(np.atleast_1d(self.direction)))

    @property
    def dim(self) -> int:
        return self.direction.shape[-1]


@dataclass(frozen=True)
class KleinPoint:
    """A point of the Klein model; norm must be strictly below 1."""

    coords: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if not np.all(np.isfinite(coords)):
            raise ValueError("coordinates must be finite")
        if np.linalg.norm(coords, axis=-1).max() >= 1.0:
            raise ValueError("Klein coordinates must have norm < 1")
        object.__setattr__(self, "coords", coords)


def _coords(x) -> np.ndarray:
    if isinstance(x, PoincarePoint) or isinstance(x, KleinPoint):
        return x.coords
    if isinstance(x, IdealPoint):
        return x.direction
    return np.asarray(x, dtype=np.float64)


def _coords_matrix(points) -> np.ndarray:
    """Stack a point collection into an (N, n) float64 matrix."""
    if isinstance(points, np.ndarray):
        return np.atleast_2d(points.astype(np.float64, copy=False))
    rows = [_coords(p) for p in points]
    return np.atleast_2d(np.stack(rows))


def _check_same_dim(a: np.ndarray, b: np.ndarray):
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(
            f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}"
        )


def poincare_distance(a, b):
    """Geodesic distance between ball points.

    arcosh(1 + 2 ||a-b||^2 / ((1-||a||^2)(1-||b||^2))), broadcast over rows.
    """
    a, b = _coords(a), _coords(b)
    _check_same_dim(a, b)
    diff2 = np.sum((a - b) ** 2, axis=-1)
    denom = (1.0 - np.sum(a * a, axis=-1)) * (1.0 - np.sum(b * b, axis=-1))
    return np.arccosh(1.0 + 2.0 * diff2 / denom)


def busemann(w, x):
    """Busemann function toward ideal point ``w``: log(||w-x||^2 / (1-||x||^2)).

    Strictly decreases as ``x`` moves radially toward ``w``; zero at the
    origin. ``x`` may be a single point or stacked rows.
    """
    w, x = _coords(w), _coords(x)
    _check_same_dim(w, x)
    wx2 = np.sum((w - x) ** 2, axis=-1)
    return np.log(wx2 / (1.0 - np.sum(x * x, axis=-1)))


def busemann_inv(w, x):
    """log((1-||x||^2) / ||w-x||^2), the exact negation of :func:`busemann`."""
    return -busemann(w, x)


def poincare_to_klein(x):
    """Map ball coordinates to the Klein model: 2x / (1 + ||x||^2)."""
    x = _coords(x)
    return 2.0 * x / (1.0 + np.sum(x * x, axis=-1, keepdims=True))


def klein_to_poincare(x):
    """Map Klein coordinates back to the ball: x / (1 + sqrt(1 - ||x||^2))."""
    x = _coords(x)
    nx2 = np.sum(x * x, axis=-1, keepdims=True)
    return x / (1.0 + np.sqrt(np.maximum(1.0 - nx2, 0.0)))


def _lorentz_factors(klein: np.ndarray) -> np.ndarray:
    return 1.0 / np.sqrt(1.0 - np.sum(klein * klein, axis=-1))


def einstein_midpoint(points, member_mask=None) -> np.ndarray:
    """Lorentz-factor-weighted mean of the selected points.

    Members are converted to Klein coordinates, averaged with weights
    gamma_i = 1/sqrt(1 - ||k_i||^2), and the result is mapped back to the
    ball. Both sums run over the selected members only.

    Args:
        points: (N, n) matrix or sequence of ball points.
        member_mask: optional boolean selector; all points when omitted.

    Returns:
        The midpoint as an (n,) array strictly inside the ball.
    """
    pts = _coords_matrix(points)
    if member_mask is not None:
        pts = pts[np.asarray(member_mask, dtype=bool)]
    if pts.shape[0] == 0:
        raise ValueError("einstein_midpoint requires at least one member")
    klein = poincare_to_klein(pts)
    gamma = _lorentz_factors(klein)
    mean_klein = gamma @ klein / np.sum(gamma)
    return klein_to_poincare(mean_klein)


@dataclass(frozen=True)
class ClassMean:
    """Running Einstein midpoint of one class, mergeable in O(1).

    Carries the weighted Klein-coordinate sum and the total Lorentz weight
    so cluster merges reduce to adding the two sums.
    """

    class_id: int
    klein_sum: np.ndarray
    weight_sum: float

    @classmethod
    def from_points(cls, class_id: int, points, member_mask=None) -> "ClassMean":
        pts = _coords_matrix(points)
        if member_mask is not None:
            pts = pts[np.asarray(member_mask, dtype=bool)]
        if pts.shape[0] == 0:
            raise ValueError("ClassMean requires at least one member")
        klein = poincare_to_klein(pts)
        gamma = _lorentz_factors(klein)
        return cls(class_id=class_id, klein_sum=gamma @ klein, weight_sum=float(np.sum(gamma)))

    @property
    def mean(self) -> PoincarePoint:
        if self.weight_sum <= 0.0:
            raise ValueError("mean undefined for an empty ClassMean")
        return PoincarePoint(klein_to_poincare(self.klein_sum / self.weight_sum))


def merge_class_means(m1: ClassMean, m2: ClassMean) -> ClassMean:
    """Combine two class means; equals the midpoint over the member union."""
    _check_same_dim(m1.klein_sum, m2.klein_sum)
    return ClassMean(
        class_id=m1.class_id,
        klein_sum=m1.klein_sum + m2.klein_sum,
        weight_sum=m1.weight_sum + m2.weight_sum,
    )


def _origin_distance(norm: float) -> float:
    return 2.0 * math.atanh(min(norm, MAX_NORM))


def lca_similarity(p, q) -> float:
    """Depth of the lowest common ancestor of two ball points.

    The LCA of ``p`` and ``q`` is the point on the geodesic segment between
    them that is closest to the origin; its distance from the origin is the
    similarity (deeper LCA = more similar). The geodesic is the arc of the
    Euclidean circle through both points orthogonal to the boundary sphere.
    The circle center sits at angle alpha from ``p`` in the plane spanned by
    the two points, and the circle's apex (its closest point to the origin)
    has distance 2*artanh(sqrt(R^2+1) - R) where R is the circle radius.
    When the apex falls outside the segment the minimum is attained at an
    endpoint instead.

    Singular configurations: near-collinear same-side pairs fall back to the
    radial rule min(d(0,p), d(0,q)); near-antipodal pairs return 0 (the
    geodesic passes through the origin); so does either point at the origin.
    """
    p, q = _coords(p), _coords(q)
    _check_same_dim(p, q)
    np_, nq = float(np.linalg.norm(p)), float(np.linalg.norm(q))
    if np_ < _LCA_ORIGIN_TOL or nq < _LCA_ORIGIN_TOL:
        return 0.0
    cos_t = float(np.clip(np.dot(p, q) / (np_ * nq), -1.0, 1.0))
    theta = math.acos(cos_t)
    if theta < _LCA_ANGLE_TOL:
        return min(_origin_distance(np_), _origin_distance(nq))
    if theta > math.pi - _LCA_ANGLE_TOL:
        return 0.0

    alpha = math.atan(
        (np_ * (nq * nq + 1.0) / (nq * (np_ * np_ + 1.0)) - cos_t) / math.sin(theta)
    )
    c_norm = (np_ * np_ + 1.0) / (2.0 * np_ * math.cos(alpha))
    radius = math.sqrt(max(c_norm * c_norm - 1.0, 0.0))

    # In-plane coordinates: e1 along p, e2 the orthogonal component toward q.
    center = np.array([c_norm * math.cos(alpha), c_norm * math.sin(alpha)])
    p2 = np.array([np_, 0.0])
    q2 = np.array([nq * cos_t, nq * math.sin(theta)])
    # The apex points away from the center direction; the opposite point of
    # the circle lies outside the ball, so the in-ball arc from p to q
    # contains the apex iff the apex angle lands between the endpoint angles
    # measured from the far point.
    theta_far = math.atan2(center[1], center[0])
    phi_p = (math.atan2(p2[1] - center[1], p2[0] - center[0]) - theta_far) % (2.0 * math.pi)
    phi_q = (math.atan2(q2[1] - center[1], q2[0] - center[0]) - theta_far) % (2.0 * math.pi)
    if min(phi_p, phi_q) <= math.pi <= max(phi_p, phi_q):
        closest = min(c_norm - radius, MAX_NORM)
        return 2.0 * math.atanh(closest)
    return min(_origin_distance(np_), _origin_distance(nq))
