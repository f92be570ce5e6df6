"""Static and dynamic obstacle risk, superposed fields, directional guidance.

Static obstacles carry an anisotropic Gaussian risk; the normalisation keeps
the ``(2*pi)**3`` under the square root even though the covariance is 2x2
(it is a constant absorbed by the semantic weight).  Moving obstacles carry
an inverse-square risk stretched along their velocity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels


class SingularityError(ValueError):
    pass


class RiskSample(NamedTuple):
    value: float
    gradient: np.ndarray


class DirectionalContext(NamedTuple):
    delta: float
    n_last: float
    n_ref: float
    epsilon: float
    degenerate: bool = False


@dataclass(frozen=True, eq=False)
class ObstacleArrays:
    """Column layout of an obstacle list as consumed by the kernels."""

    mu: np.ndarray
    sigma: np.ndarray
    weight: np.ndarray
    velocity: np.ndarray
    k1: np.ndarray
    moving: np.ndarray

    @classmethod
    def from_obstacles(cls, obstacles, k1=1.0):
        n = len(obstacles)
        if n == 0:
            z2 = np.zeros((0, 2))
            return cls(z2, np.ones((0, 2)), np.zeros(0), z2.copy(), np.zeros(0), np.zeros(0, dtype=bool))
        return cls(
            mu=np.array([o.mu for o in obstacles], dtype=float),
            sigma=np.array([o.sigma for o in obstacles], dtype=float),
            weight=np.array([o.weight for o in obstacles], dtype=float),
            velocity=np.array([o.velocity for o in obstacles], dtype=float),
            k1=np.array([k1 if o.k1 is None else o.k1 for o in obstacles], dtype=float),
            moving=np.array([o.is_moving for o in obstacles], dtype=bool),
        )

    def movers(self):
        m = self.moving
        return self.mu[m], self.velocity[m], self.weight[m], self.k1[m]


def _eval(points, arrays, min_radius=0.0, near_radius=0.0):
    pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 2))
    return kernels.risk_points(
        pts, arrays.mu, arrays.sigma, arrays.weight, arrays.velocity,
        arrays.k1, arrays.moving, float(min_radius), float(near_radius),
    )


def _single(p, arrays, min_radius=0.0):
    value, grad, _near, singular = _eval(p, arrays, min_radius)
    if singular[0]:
        raise SingularityError("singular evaluation at obstacle center")
    return RiskSample(float(value[0]), grad[0].copy())


def static_risk(p, obs):
    """Gaussian risk of ``obs`` treated as a static obstacle, whatever its velocity."""
    arrays = ObstacleArrays.from_obstacles([obs])
    arrays.moving[:] = False
    return _single(p, arrays)


def dynamic_risk(p, obs, k1=1.0, *, legacy_gradient=False, min_radius=0.0):
    """Velocity-stretched inverse-square risk of a moving obstacle.

    The gradient is the exact derivative of the risk.  ``legacy_gradient=True``
    swaps in the closed form ``-R/|r| * (2r - k1 v + k1 (v.r) r)`` for
    comparison; it is not a true derivative.
    """
    arrays = ObstacleArrays.from_obstacles([obs], k1)
    arrays.moving[:] = True
    sample = _single(p, arrays, min_radius)
    if not legacy_gradient:
        return sample
    r = np.asarray(p, dtype=float) - np.asarray(obs.mu)
    v = np.asarray(obs.velocity)
    kk = arrays.k1[0]
    rn = float(np.linalg.norm(r))
    grad = -sample.value / rn * (2.0 * r - kk * v + kk * float(v @ r) * r)
    return RiskSample(sample.value, grad)


def total_risk(p, obstacles, k1=1.0, *, min_radius=0.0):
    """Superposed risk and gradient at ``p``.

    ``obstacles`` may be an obstacle list or prebuilt :class:`ObstacleArrays`.
    ``min_radius`` clamps queries closer than that to a moving obstacle's
    centre onto the clamp circle; with the default 0 an exact hit raises.
    """
    arrays = obstacles if isinstance(obstacles, ObstacleArrays) else ObstacleArrays.from_obstacles(obstacles, k1)
    return _single(p, arrays, min_radius)


class RiskEvaluator:
    """Total risk over a fixed obstacle set, callable on one point or batched."""

    def __init__(self, obstacles, k1=1.0, min_radius=0.0):
        self.arrays = obstacles if isinstance(obstacles, ObstacleArrays) else ObstacleArrays.from_obstacles(obstacles, k1)
        self.min_radius = float(min_radius)

    def batch(self, points):
        value, grad, _near, singular = _eval(points, self.arrays, self.min_radius)
        if singular.any():
            raise SingularityError("singular evaluation at obstacle center")
        return value, grad

    def __call__(self, p):
        return _single(p, self.arrays, self.min_radius)


def risk_values(points, obstacles, k1=1.0, min_radius=0.0):
    """Vectorised risk values and gradients for an ``(n, 2)`` array of points."""
    arrays = obstacles if isinstance(obstacles, ObstacleArrays) else ObstacleArrays.from_obstacles(obstacles, k1)
    value, grad, _near, singular = _eval(points, arrays, min_radius)
    if singular.any():
        raise SingularityError("singular evaluation at obstacle center")
    return value, grad


def direction_factor(p_curr, obs, epsilon=1e-6, n_ref=4.0):
    """Signed along-track offset of ``p_curr`` ahead of a moving obstacle.

    ``n_last`` is the lateral distance from ``p_curr`` to the obstacle's line
    of motion.  A zero velocity yields ``delta = 0`` with ``degenerate`` set.
    """
    r = np.asarray(p_curr, dtype=float) - np.asarray(obs.mu, dtype=float)
    v = np.asarray(obs.velocity, dtype=float)
    vn = float(np.hypot(v[0], v[1]))
    delta = float(r @ v) / (vn + epsilon)
    if vn == 0.0:
        return DirectionalContext(0.0, float(np.hypot(r[0], r[1])), n_ref, epsilon, True)
    n_last = abs(float(r[0] * v[1] - r[1] * v[0])) / vn
    return DirectionalContext(delta, n_last, n_ref, epsilon)


def guidance_term(p_id, p_curr, obstacles, n_ref=4.0, *, k1=1.0, epsilon=1e-6, rho_dyn=10.0,
                  grad=None):
    """Scalar guidance cost for stepping from ``p_curr`` to ``p_id``.

    Away from moving obstacles this is ``grad R(p_id) . d_air`` (positive
    when the step climbs the risk field).  Within ``rho_dyn`` of a mover the
    directional cases apply: ahead of it and far off its line of motion the
    cost becomes ``v_obs . d_air``, which favours passing behind it.
    ``grad`` may supply a precomputed risk gradient at ``p_id``.
    """
    arrays = ObstacleArrays.from_obstacles(obstacles, k1)
    p_id = np.asarray(p_id, dtype=float)
    p_curr = np.asarray(p_curr, dtype=float)
    if grad is None:
        grad = total_risk(p_id, arrays).gradient
    d_air = p_id - p_curr
    mu, vel, w, kk = arrays.movers()
    return float(kernels.guidance_scalar(
        float(grad[0]), float(grad[1]), float(d_air[0]), float(d_air[1]),
        float(p_curr[0]), float(p_curr[1]), float(p_id[0]), float(p_id[1]),
        np.ascontiguousarray(mu), np.ascontiguousarray(vel), np.ascontiguousarray(w),
        np.ascontiguousarray(kk), float(n_ref), float(epsilon), float(rho_dyn),
    ))


@dataclass(frozen=True, eq=False)
class RiskGrid:
    """Risk value and gradient baked at every cell centre (arrays are ``[y, x]``)."""

    value: np.ndarray
    grad: np.ndarray
    clamped: np.ndarray
    resolution: float
    time: float = 0.0

    def sample(self, cell):
        x, y = cell
        return RiskSample(float(self.value[y, x]), self.grad[y, x].copy())


def bake_risk_grid(grid, obstacles, k1=1.0, time=0.0):
    """Evaluate the superposed field at every cell centre.

    Cells whose centre lies within half a cell of a moving obstacle's centre
    are clamped: they take the largest unclamped value among their
    8-neighbours, get a zero gradient and are flagged in ``clamped``.
    """
    arrays = ObstacleArrays.from_obstacles(obstacles, k1)
    centers = grid.cell_centers().reshape(-1, 2)
    value, grad, near, singular = _eval(centers, arrays, 0.0, 0.5 * grid.resolution)
    shape = (grid.height, grid.width)
    value = value.reshape(shape)
    grad = grad.reshape(shape + (2,))
    clamped = (near | singular).reshape(shape)
    if clamped.any():
        finite = np.where(clamped, -np.inf, value)
        padded = np.pad(finite, 1, constant_values=-np.inf)
        neigh = np.full(shape, -np.inf)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dx or dy:
                    neigh = np.maximum(neigh, padded[1 + dy:1 + dy + shape[0], 1 + dx:1 + dx + shape[1]])
        neigh = np.where(np.isfinite(neigh), neigh, 0.0)
        value = np.where(clamped, neigh, value)
        grad = np.where(clamped[..., None], 0.0, grad)
    return RiskGrid(value, grad, clamped, float(grid.resolution), float(time))


def anisotropy_gap(obs, alpha, k1=1.0):
    """Risk ahead minus risk behind a moving obstacle at distance ``alpha``."""
    v = np.asarray(obs.velocity, dtype=float)
    vhat = v / math.hypot(v[0], v[1])
    mu = np.asarray(obs.mu)
    ahead = dynamic_risk(mu + alpha * vhat, obs, k1).value
    behind = dynamic_risk(mu - alpha * vhat, obs, k1).value
    return ahead - behind
