"""Risk-informed A* (R-A*) and a plain A* baseline on 8-connected grids.

Node cost is ``f = g + h + lam * R + alpha * G`` where ``g`` is the
accumulated Euclidean step length, ``h`` the Euclidean distance to the goal,
``R`` the baked risk and ``G`` the signed guidance term.  ``G`` can be
negative, so R-A* is a best-first search rather than an optimal one.

Both searches break ties on ``(f, h, row, col)`` and forbid diagonal moves
that cut between two blocked orthogonal neighbours.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .riskfield import ObstacleArrays
from .scenario import rasterize


class NoPathError(RuntimeError):
    def __init__(self, message="no feasible path found"):
        super().__init__(message)


@dataclass(frozen=True)
class PathNode:
    cell: tuple[int, int]
    g: float
    h: float
    risk: float
    guidance: float
    f: float
    parent: Optional[tuple[int, int]]


@dataclass(frozen=True)
class Path:
    cells: tuple[tuple[int, int], ...]
    length: float
    nodes: tuple[PathNode, ...] = ()
    expansions: int = 0
    resolution: float = 1.0

    def points(self):
        """Cell centres in world coordinates, shape ``(n, 2)``."""
        return np.asarray(self.cells, dtype=float).reshape(-1, 2) * self.resolution


@dataclass(frozen=True)
class SearchParams:
    lam: float = 200.0
    alpha: float = 100.0
    n_ref: float = 4.0
    epsilon: float = 1e-6
    k1: float = 1.0
    rho_dyn: float = 10.0

    @classmethod
    def from_planner(cls, p):
        return cls(p.lam, p.alpha, p.n_ref, p.epsilon, p.k1, p.rho_dyn)


def _check_endpoints(occ, start, goal):
    h, w = occ.shape
    for name, (x, y) in (("start", start), ("goal", goal)):
        if not (0 <= x < w and 0 <= y < h):
            raise ValueError(f"{name} {x, y} outside the map")
    if occ[goal[1], goal[0]]:
        raise NoPathError("goal cell is occupied")


def _retrieve(parent, width, goal):
    idx = goal[1] * width + goal[0]
    out = []
    while idx >= 0:
        out.append((int(idx % width), int(idx // width)))
        idx = parent[idx]
    out.reverse()
    return out


def _arc_length(cells, res):
    total = 0.0
    for (x0, y0), (x1, y1) in zip(cells, cells[1:]):
        total += math.sqrt((x1 - x0) ** 2 + (y1 - y0) ** 2)
    return total * res


def astar_baseline(occupancy, start, goal, resolution=1.0):
    """Shortest 8-connected path by plain A* with the Euclidean heuristic."""
    occ = np.ascontiguousarray(occupancy, dtype=bool)
    _check_endpoints(occ, start, goal)
    found, parent, g, expansions = kernels.astar_kernel(
        occ, int(start[0]), int(start[1]), int(goal[0]), int(goal[1]), float(resolution)
    )
    if not found:
        raise NoPathError()
    cells = _retrieve(parent, occ.shape[1], goal)
    return Path(tuple(cells), _arc_length(cells, resolution), expansions=int(expansions),
                resolution=float(resolution))


def r_astar(occupancy, risk, obstacles, start, goal, params=None):
    """Risk-informed A* over a baked :class:`RiskGrid`.

    ``obstacles`` supplies the moving obstacles used by the directional
    guidance cases; static ones only act through ``risk``.
    """
    params = params or SearchParams()
    if params.lam < 0 or params.alpha < 0:
        raise ValueError("lam and alpha must be non-negative")
    occ = np.ascontiguousarray(occupancy, dtype=bool)
    _check_endpoints(occ, start, goal)
    arrays = obstacles if isinstance(obstacles, ObstacleArrays) else ObstacleArrays.from_obstacles(obstacles, params.k1)
    mu, vel, w, kk = (np.ascontiguousarray(a) for a in arrays.movers())
    res = risk.resolution
    found, parent, g, hv, gv, f, expansions = kernels.rastar_kernel(
        occ, np.ascontiguousarray(risk.value), np.ascontiguousarray(risk.grad[..., 0]),
        np.ascontiguousarray(risk.grad[..., 1]),
        int(start[0]), int(start[1]), int(goal[0]), int(goal[1]), float(res),
        float(params.lam), float(params.alpha), mu, vel, w, kk,
        float(params.n_ref), float(params.epsilon), float(params.rho_dyn),
    )
    if not found:
        raise NoPathError()
    width = occ.shape[1]
    cells = _retrieve(parent, width, goal)
    nodes = []
    prev = None
    for c in cells:
        i = c[1] * width + c[0]
        nodes.append(PathNode(c, float(g[i]), float(hv[i]), float(risk.value[c[1], c[0]]),
                              float(gv[i]), float(f[i]), prev))
        prev = c
    return Path(tuple(cells), _arc_length(cells, res), tuple(nodes), int(expansions), float(res))


def min_clearance(points, obstacles):
    """Smallest distance from any point to any obstacle footprint boundary
    (0 inside a footprint, ``inf`` without obstacles)."""
    pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 2))
    best = math.inf
    for o in obstacles:
        d, _ = kernels.ellipse_distance(pts, o.mu[0], o.mu[1], o.sigma[0], o.sigma[1])
        best = min(best, float(d.min()))
    return max(best, 0.0)


def path_metrics(path, obstacles):
    """Arc length and clearance to the high-risk obstacles along ``path``."""
    if not path.cells:
        raise ValueError("empty path")
    risky = [o for o in obstacles if o.is_high_risk]
    return {
        "length": _arc_length(list(path.cells), path.resolution),
        "min_high_risk_clearance": min_clearance(path.points(), risky),
    }


def replan_on_change(prev, occupancy, risk, obstacles, current_cell, goal, params=None):
    """Full R-A* re-search from ``current_cell``; ``prev`` is kept only for
    the caller's bookkeeping."""
    return r_astar(occupancy, risk, obstacles, current_cell, goal, params)


def occupancy_for(grid, obstacles):
    return rasterize(grid, obstacles)
