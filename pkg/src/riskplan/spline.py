"""Uniform B-spline trajectories and their penalty-based optimisation.

Knots are ``t_j = (j - p) * dt`` so the valid time domain of a degree-``p``
spline with ``N`` control points is ``[0, (N - p) * dt]``.  Derivative
control points are finite differences of the control points divided by
``dt`` (velocity ``V``, acceleration ``A``, jerk ``J``).

The first and last ``p`` control points pin the boundary state (position,
and for a rest start also zero velocity), so they are never shifted or
optimised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .optim import OptimizerError, OptimizeReport, lbfgs  # noqa: F401  (re-exported)
from .riskfield import RiskEvaluator


@dataclass(frozen=True, eq=False)
class BSplineTrajectory:
    control_points: np.ndarray
    dt: float
    degree: int = 3

    def __post_init__(self):
        q = np.array(self.control_points, dtype=float).reshape(-1, 2)
        q.setflags(write=False)
        object.__setattr__(self, "control_points", q)
        if self.degree < 2:
            raise ValueError("degree must be >= 2")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if len(q) < self.degree + 1:
            raise ValueError(f"need at least degree + 1 = {self.degree + 1} control points, got {len(q)}")

    @property
    def n_control(self):
        return len(self.control_points)

    @property
    def duration(self):
        return (self.n_control - self.degree) * self.dt

    def derivative_points(self, order):
        return np.diff(self.control_points, order, axis=0) / self.dt ** order

    @property
    def velocity_points(self):
        return self.derivative_points(1)

    @property
    def acceleration_points(self):
        return self.derivative_points(2)

    @property
    def jerk_points(self):
        return self.derivative_points(3)

    def with_points(self, q):
        return replace(self, control_points=q)

    def free_slice(self):
        return slice(self.degree, self.n_control - self.degree)


def evaluate(traj, t, order=0):
    """Evaluate the curve (or its ``order``-th derivative) with de Boor's
    recursion.  ``t`` may be a scalar or an array."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    lo, hi = 0.0, traj.duration
    tol = 1e-12 * max(1.0, hi)
    if np.any(t_arr < lo - tol) or np.any(t_arr > hi + tol):
        raise ValueError(f"t outside the spline domain [{lo}, {hi}]")
    t_arr = np.clip(t_arr, lo, hi)
    q = traj.degree - order
    if q < 0:
        out = np.zeros((len(t_arr), 2))
        return out[0] if np.ndim(t) == 0 else out
    pts = traj.derivative_points(order) if order else traj.control_points
    dt = traj.dt
    m = len(pts)
    span = np.minimum(np.floor(t_arr / dt).astype(np.int64) + q, m - 1)
    # d[:, j] starts as control point span - q + j
    idx = span[:, None] - q + np.arange(q + 1)[None, :]
    d = pts[idx].copy()
    for r in range(1, q + 1):
        for j in range(q, r - 1, -1):
            knot_lo = (span + j - q - q) * dt
            a = ((t_arr - knot_lo) / ((q + 1 - r) * dt))[:, None]
            d[:, j] = (1.0 - a) * d[:, j - 1] + a * d[:, j]
    out = d[:, q]
    return out[0] if np.ndim(t) == 0 else out


def active_control_points(traj, t):
    """Indices of the ``p + 1`` control points that shape the curve at ``t``."""
    s = min(int(math.floor(t / traj.dt)) + traj.degree, traj.n_control - 1)
    return np.arange(s - traj.degree, s + 1)


def _start_block(p0, v0, dt, degree):
    # control points 0..p-1 fix position and derivatives 1..p-1 at t = 0
    unit = BSplineTrajectory(np.zeros((degree + 1, 2)), dt, degree)
    basis = np.zeros((degree, degree))
    for i in range(degree):
        q = np.zeros((degree + 1, 2))
        q[i, 0] = 1.0
        probe = unit.with_points(q)
        for k in range(degree):
            basis[k, i] = evaluate(probe, 0.0, k)[0]
    rhs = np.zeros((degree, 2))
    rhs[0] = p0
    rhs[1] = v0
    return np.linalg.solve(basis, rhs)


def fit_initial_spline(path, dt=0.3, degree=3, *, spacing=None, start_velocity=None):
    """Spline through a grid path (or an ``(n, 2)`` array of world points).

    With ``spacing`` the polyline is resampled at that arc-length step, which
    sets the cruise speed to ``spacing / dt``.  Both ends are clamped by
    repeating the boundary point ``degree`` times; ``start_velocity`` instead
    clamps the start to that velocity.
    """
    pts = path.points() if hasattr(path, "points") else np.asarray(path, dtype=float).reshape(-1, 2)
    if len(pts) >= 2:
        keep = np.ones(len(pts), dtype=bool)
        keep[1:] = np.any(np.diff(pts, axis=0) != 0.0, axis=1)
        pts = pts[keep]
    if len(pts) < 2:
        raise ValueError("degenerate path: need at least two distinct cells")
    seg = np.hypot(*np.diff(pts, axis=0).T)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    if spacing is not None:
        n = max(1, int(math.ceil(arc[-1] / spacing)))
        s = np.linspace(0.0, arc[-1], n + 1)
        pts = np.stack([np.interp(s, arc, pts[:, 0]), np.interp(s, arc, pts[:, 1])], axis=1)
        arc = s
    head = [pts[0]] * (degree - 1)
    body = pts
    if start_velocity is not None and np.any(np.asarray(start_velocity) != 0.0):
        v0 = np.asarray(start_velocity, dtype=float)
        head = list(_start_block(pts[0], v0, dt, degree))
        reach = max(float(np.hypot(*v0)) * dt * (degree - 1), 1e-9)
        body = pts[arc > reach]
        if len(body) == 0:
            body = pts[-1:]
    q = np.vstack(head + list(body) + [pts[-1]] * (degree - 1))
    return BSplineTrajectory(q, dt, degree)


# --------------------------------------------------------------------------
# objective terms
# --------------------------------------------------------------------------

def _diff_adjoint(g, n):
    for _ in range(n):
        out = np.zeros((g.shape[0] + 1, g.shape[1]))
        out[:-1] -= g
        out[1:] += g
        g = out
    return g


def _hinge3(x):
    pos = np.maximum(x, 0.0)
    return pos ** 3, 3.0 * pos ** 2


def cost_smoothness(traj):
    """Squared acceleration plus squared jerk over the control points."""
    q, dt = traj.control_points, traj.dt
    a = np.diff(q, 2, axis=0) / dt ** 2
    j = np.diff(q, 3, axis=0) / dt ** 3
    value = float(np.sum(a * a) + np.sum(j * j))
    grad = 2.0 * _diff_adjoint(a, 2) / dt ** 2 + 2.0 * _diff_adjoint(j, 3) / dt ** 3
    return value, grad


def cost_collision(traj, obstacles, s_f):
    """Cubic hinge on the clearance deficit ``max(s_f - d, 0)``, where ``d``
    is the signed distance from a control point to an obstacle footprint."""
    q = traj.control_points
    value = 0.0
    grad = np.zeros_like(q)
    for o in obstacles:
        reach = max(o.sigma) + s_f
        near = (np.abs(q[:, 0] - o.mu[0]) < reach) & (np.abs(q[:, 1] - o.mu[1]) < reach)
        if not near.any():
            continue
        idx = np.flatnonzero(near)
        d, n = kernels.ellipse_distance(np.ascontiguousarray(q[idx]), o.mu[0], o.mu[1], o.sigma[0], o.sigma[1])
        h, dh = _hinge3(s_f - d)
        value += float(h.sum())
        grad[idx] -= dh[:, None] * n
    return value, grad


def cost_dynamic_feasibility(traj, v_m, a_m):
    """Cubic hinge on ``|V|^2 - v_m^2`` and ``|A|^2 - a_m^2``."""
    q, dt = traj.control_points, traj.dt
    v = np.diff(q, 1, axis=0) / dt
    a = np.diff(q, 2, axis=0) / dt ** 2
    hv, dhv = _hinge3(np.sum(v * v, axis=1) - v_m * v_m)
    ha, dha = _hinge3(np.sum(a * a, axis=1) - a_m * a_m)
    value = float(hv.sum() + ha.sum())
    grad = _diff_adjoint(2.0 * dhv[:, None] * v, 1) / dt + _diff_adjoint(2.0 * dha[:, None] * a, 2) / dt ** 2
    return value, grad


def predict_positions(mover, n, dt, forward=True):
    """Linear prediction of a mover's centre at control-point times ``i * dt``."""
    sign = 1.0 if forward else -1.0
    i = np.arange(n, dtype=float)[:, None]
    return np.asarray(mover.mu)[None, :] + sign * np.asarray(mover.velocity)[None, :] * dt * i


def cost_dynamic_risk(traj, movers, risk_values, r_thresh, C, *, forward=True, flags=None):
    """Cubic hinge on ``C - |Q_i - P_j(i)|`` for control points whose risk
    reaches ``r_thresh``; ``P_j(i)`` is mover ``j`` extrapolated to time
    ``i * dt``.  ``risk_values`` holds ``R(Q_i)`` for every control point."""
    q = traj.control_points
    value = 0.0
    grad = np.zeros_like(q)
    if not movers:
        return value, grad
    gate = np.asarray(risk_values) >= r_thresh
    if not gate.any():
        return value, grad
    idx = np.flatnonzero(gate)
    for m in movers:
        p = predict_positions(m, len(q), traj.dt, forward)[idx]
        diff = q[idx] - p
        dist = np.hypot(diff[:, 0], diff[:, 1])
        hit = dist == 0.0
        if hit.any():
            # direction undefined: nudge along the incoming segment
            for k in np.flatnonzero(hit):
                i = idx[k]
                seg = q[i] - q[i - 1] if i > 0 else q[1] - q[0]
                sn = float(np.hypot(*seg)) or 1.0
                eps = np.finfo(float).eps * max(1.0, float(np.abs(q[i]).max()))
                diff[k] = seg / sn * eps
                dist[k] = float(np.hypot(*diff[k]))
                if flags is not None:
                    flags.append(int(i))
        h, dh = _hinge3(C - dist)
        value += float(h.sum())
        grad[idx] -= (dh / dist)[:, None] * diff
    return value, grad


@dataclass(frozen=True)
class ObjectiveWeights:
    lambda_s: float = 1.0
    lambda_c: float = 300.0
    lambda_d: float = 1.0
    lambda_r: float = 10.0
    s_f: float = 1.5
    v_m: float = 2.0
    a_m: float = 3.0
    C: float = 4.0
    r_thresh: float = 0.02
    r_d: float = 0.5
    forward: bool = True

    def __post_init__(self):
        for name in ("lambda_s", "lambda_c", "lambda_d", "lambda_r"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("s_f", "v_m", "a_m", "C", "r_thresh"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.r_d < 0:
            raise ValueError("r_d must be >= 0")

    @classmethod
    def from_planner(cls, p, **overrides):
        base = cls(p.lambda_s, p.lambda_c, p.lambda_d, p.lambda_r, p.s_f, p.v_m, p.a_m, p.C, p.r_thresh, p.r_d)
        return replace(base, **overrides)


@dataclass
class ObjectiveValue:
    value: float
    gradient: np.ndarray
    terms: dict = field(default_factory=dict)


def _batch_risk(risk_eval, points):
    if hasattr(risk_eval, "batch"):
        return risk_eval.batch(points)
    samples = [risk_eval(p) for p in points]
    return np.array([s.value for s in samples]), np.array([s.gradient for s in samples])


def total_objective(traj, weights, obstacles, risk_eval=None):
    """Weighted sum of smoothness, collision, feasibility and dynamic-risk
    penalties.  Static-state obstacles feed the collision term, moving ones
    the dynamic-risk term.  Gradients of the pinned boundary points are zero."""
    q = traj.control_points
    grad = np.zeros_like(q)
    terms = {"J_s": 0.0, "J_c": 0.0, "J_d": 0.0, "J_r": 0.0}
    statics = [o for o in obstacles if not o.is_moving]
    movers = [o for o in obstacles if o.is_moving]
    if weights.lambda_s:
        v, g = cost_smoothness(traj)
        terms["J_s"] = v
        grad += weights.lambda_s * g
    if weights.lambda_c and statics:
        v, g = cost_collision(traj, statics, weights.s_f)
        terms["J_c"] = v
        grad += weights.lambda_c * g
    if weights.lambda_d:
        v, g = cost_dynamic_feasibility(traj, weights.v_m, weights.a_m)
        terms["J_d"] = v
        grad += weights.lambda_d * g
    if weights.lambda_r and movers and risk_eval is not None:
        risk, _ = _batch_risk(risk_eval, q)
        v, g = cost_dynamic_risk(traj, movers, risk, weights.r_thresh, weights.C, forward=weights.forward)
        terms["J_r"] = v
        grad += weights.lambda_r * g
    value = (weights.lambda_s * terms["J_s"] + weights.lambda_c * terms["J_c"]
             + weights.lambda_d * terms["J_d"] + weights.lambda_r * terms["J_r"])
    p = traj.degree
    grad[:p] = 0.0
    grad[len(q) - p:] = 0.0
    return ObjectiveValue(float(value), grad, terms)


def init_shift_control_points(traj, risk_eval, r_thresh, r_d, *, return_flags=False):
    """Push risky interior control points ``r_d`` down the risk gradient.

    Points whose gradient norm is below 1e-12 are left in place and reported
    in the flag list when ``return_flags`` is set.
    """
    if r_d < 0:
        raise ValueError("r_d must be >= 0")
    q = np.array(traj.control_points)
    sl = traj.free_slice()
    flags = []
    if sl.stop > sl.start:
        value, grad = _batch_risk(risk_eval, q[sl])
        for k, i in enumerate(range(sl.start, sl.stop)):
            if value[k] < r_thresh:
                continue
            gn = float(np.hypot(grad[k, 0], grad[k, 1]))
            if gn < 1e-12:
                flags.append(i)
                continue
            q[i] = q[i] - grad[k] / gn * r_d
    out = traj.with_points(q)
    return (out, flags) if return_flags else out


def optimize(traj, weights, obstacles, risk_eval=None, *, max_iters=200, grad_tol=1e-6, memory=8):
    """Minimise :func:`total_objective` over the interior control points."""
    sl = traj.free_slice()
    base = np.array(traj.control_points)
    free_shape = base[sl].shape

    def fun(x):
        q = base.copy()
        q[sl] = x.reshape(free_shape)
        obj = total_objective(traj.with_points(q), weights, obstacles, risk_eval)
        return obj.value, obj.gradient[sl].ravel()

    x, _f, _g, report = lbfgs(fun, base[sl].ravel(), max_iters=max_iters, grad_tol=grad_tol, memory=memory)
    q = base.copy()
    q[sl] = x.reshape(free_shape)
    return traj.with_points(q), report


# --------------------------------------------------------------------------
# canonical instances for the optimizer contracts
# --------------------------------------------------------------------------

def threading_instance(dt=0.3, v_cruise=1.5):
    """A straight 20-cell line through a round obstacle (radius 1.5) sitting
    0.2 cells off the line; returns ``(traj, obstacles)``."""
    from .scenario import Obstacle, ObstacleClass

    obs = [Obstacle(1, ObstacleClass.STATIONARY_STRUCTURE, (10.0, 0.2), (1.5, 1.5))]
    line = np.array([[0.0, 0.0], [20.0, 0.0]])
    return fit_initial_spline(line, dt, 3, spacing=v_cruise * dt), obs


def overspeed_instance(dt=0.3, v_m=2.0):
    """A gently waving 14-cell line whose samples bunch up over the first
    two cells and spread out over the rest, so the tail runs well above
    ``v_m`` although the whole line fits in at half that speed."""
    n = int(round(14.0 / (0.5 * v_m) / dt))
    slow, fast = (3 * n) // 4, n - (3 * n) // 4
    s = np.concatenate([np.linspace(0.0, 2.0, slow), 2.0 + np.linspace(0.0, 12.0, fast + 1)[1:]])
    q = np.stack([s, 0.3 * np.sin(s)], axis=1)
    q = np.vstack([q[:1], q[:1], q, q[-1:], q[-1:]])
    return BSplineTrajectory(q, dt, 3)


__all__ = [
    "BSplineTrajectory", "ObjectiveWeights", "ObjectiveValue", "OptimizeReport", "RiskEvaluator",
    "active_control_points", "cost_collision", "cost_dynamic_feasibility", "cost_dynamic_risk",
    "cost_smoothness", "evaluate", "fit_initial_spline", "init_shift_control_points", "optimize",
    "overspeed_instance", "predict_positions", "threading_instance", "total_objective",
]
