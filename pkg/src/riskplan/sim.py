"""Deterministic replanning simulator.

By default the robot tracks its active spline with a velocity controller
whose acceleration is capped at ``a_m`` and speed at ``v_m``; ideal
tracking is available too.  The planner sees obstacle states that are
``latency`` seconds old, and collisions count the robot's body radius.
Obstacles move linearly; a temporarily static obstacle
switches to its post-trigger velocity the first time the robot comes within
its activation distance.  Occluded obstacles are invisible to the planner
until their trigger fires.

Three pipelines are simulated:

``full``
    risk bake, R-A*, init-shift and optimisation with the dynamic-risk term.
``search_only``
    risk bake and R-A*; the fitted spline is flown unoptimised.
``risk_disabled``
    plain A* and optimisation without the dynamic-risk term.  Moving
    obstacles are seen as frozen footprints, the way an occupancy map sees
    them.
"""

from __future__ import annotations

import dataclasses
import math
import time as _time
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .riskfield import RiskEvaluator, bake_risk_grid
from .scenario import (
    BehaviorTrigger, GridMap, Obstacle, ObstacleClass, PlannerParams, ScenarioConfig, rasterize,
)
from .search import NoPathError, SearchParams, astar_baseline, r_astar
from .spline import (
    ObjectiveWeights, OptimizerError, evaluate, fit_initial_spline, init_shift_control_points, optimize,
)

PIPELINES = ("full", "search_only", "risk_disabled")


@dataclass(frozen=True)
class SimSettings:
    dt_sim: float = 0.05
    goal_tolerance: float = 0.5
    budget: float = 60.0
    # replan once a mover has drifted this far (cells) since the last bake
    replan_displacement: float = 0.5
    opt_iters: int = 60
    # "ideal" follows the plan exactly (speed capped at v_m); "limited" also
    # caps the robot's acceleration at a_m
    tracking: str = "limited"
    # age of the obstacle states the planner sees, seconds
    latency: float = 0.3
    # body radius added to every footprint semi-axis for collisions, cells
    robot_radius: float = 0.3

    def __post_init__(self):
        for name in ("dt_sim", "goal_tolerance", "budget", "replan_displacement"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.latency < 0 or self.robot_radius < 0:
            raise ValueError("latency and robot_radius must be >= 0")
        if self.tracking not in ("ideal", "limited"):
            raise ValueError("tracking must be 'ideal' or 'limited'")


@dataclass(frozen=True)
class Plan:
    traj: object
    t0: float
    path: object = None

    def position(self, t):
        tau = min(max(t - self.t0, 0.0), self.traj.duration)
        return evaluate(self.traj, tau)

    def velocity(self, t):
        tau = t - self.t0
        if tau >= self.traj.duration:
            return np.zeros(2)
        return evaluate(self.traj, max(tau, 0.0), 1)


@dataclass(frozen=True)
class WorldState:
    time: float
    robot_pos: tuple[float, float]
    robot_vel: tuple[float, float]
    obstacles: tuple[Obstacle, ...]
    active_plan: Optional[Plan] = None
    fired: frozenset = frozenset()
    v_max: float = math.inf
    # finite: the tracker cannot exceed this acceleration
    a_max: float = math.inf


@dataclass(frozen=True)
class CollisionRecord:
    time: float
    obstacle_id: int
    point: tuple[float, float]


@dataclass(frozen=True)
class TrialResult:
    success: bool
    path_length: float
    min_clearance: float
    planning_time: float
    flight_time: float
    collision_time: Optional[float] = None
    reason: str = ""
    replans: int = 0


def initial_state(cfg: ScenarioConfig, tracking="ideal"):
    a_max = float(cfg.params.a_m) if tracking == "limited" else math.inf
    return WorldState(0.0, tuple(map(float, cfg.map.to_world(cfg.start))), (0.0, 0.0),
                      tuple(cfg.obstacles), None, frozenset(), float(cfg.params.v_m), a_max)


def _advance_obstacles(obstacles, dt):
    out = []
    for o in obstacles:
        if o.is_moving:
            o = replace(o, mu=(o.mu[0] + o.velocity[0] * dt, o.mu[1] + o.velocity[1] * dt))
        out.append(o)
    return tuple(out)


def _fire_triggers(obstacles, fired, pos):
    out = []
    fired = set(fired)
    for o in obstacles:
        if o.trigger is not None and o.id not in fired:
            if math.hypot(pos[0] - o.mu[0], pos[1] - o.mu[1]) <= o.trigger.activation_distance:
                o = replace(o, velocity=o.trigger.post_velocity)
                fired.add(o.id)
        out.append(o)
    return tuple(out), frozenset(fired)


def step_world(state: WorldState, dt_sim: float) -> WorldState:
    """Advance obstacles and robot by ``dt_sim`` and evaluate triggers."""
    if not dt_sim > 0:
        raise ValueError("dt_sim must be > 0")
    obstacles = _advance_obstacles(state.obstacles, dt_sim)
    pos = np.asarray(state.robot_pos, dtype=float)
    t_next = state.time + dt_sim
    plan = state.active_plan
    if plan is None:
        new_pos = pos
    elif math.isinf(state.a_max):
        move = np.asarray(plan.position(t_next), dtype=float) - pos
        dist = float(np.hypot(*move))
        cap = state.v_max * dt_sim
        if dist > cap:
            move *= cap / dist
        new_pos = pos + move
    else:
        new_pos = pos + _limited_velocity(state, plan, t_next, dt_sim) * dt_sim
    vel = (new_pos - pos) / dt_sim
    new_pos_t = (float(new_pos[0]), float(new_pos[1]))
    obstacles, fired = _fire_triggers(obstacles, state.fired, new_pos_t)
    return replace(state, time=t_next, robot_pos=new_pos_t, robot_vel=(float(vel[0]), float(vel[1])),
                   obstacles=obstacles, fired=fired)


def _limited_velocity(state, plan, t_next, dt_sim, gain=4.0):
    # feedforward reference velocity plus position feedback, then saturate
    # the acceleration at a_max and the speed at v_max
    vel = np.asarray(state.robot_vel, dtype=float)
    err = np.asarray(plan.position(t_next), dtype=float) - np.asarray(state.robot_pos, dtype=float)
    cmd = np.asarray(plan.velocity(t_next), dtype=float) + gain * err
    dv = cmd - vel
    dv_n = float(np.hypot(*dv))
    cap = state.a_max * dt_sim
    if dv_n > cap:
        dv *= cap / dv_n
    vel = vel + dv
    speed = float(np.hypot(*vel))
    if speed > state.v_max:
        vel *= state.v_max / speed
    return vel


def check_collision(state: WorldState, previous: Optional[WorldState] = None, resolution=1.0,
                    radius=0.0):
    """First obstacle footprint containing the robot centre, if any.

    ``radius`` grows each footprint's semi-axes by the robot's body size.

    With ``previous`` the motion since that state is sub-sampled so that the
    relative displacement per sub-step stays at or below a quarter cell.
    """
    before = {o.id: o for o in previous.obstacles} if previous is not None else {}
    r1 = np.asarray(state.robot_pos, dtype=float)
    r0 = np.asarray(previous.robot_pos, dtype=float) if previous is not None else r1
    for o in state.obstacles:
        m1 = np.asarray(o.mu, dtype=float)
        m0 = np.asarray(before[o.id].mu, dtype=float) if o.id in before else m1
        rel = float(np.hypot(*((r1 - r0) - (m1 - m0))))
        n = max(1, int(math.ceil(rel / (0.25 * resolution))))
        for k in range(1, n + 1):
            s = k / n
            rp = r0 + s * (r1 - r0)
            mu = m0 + s * (m1 - m0)
            dx = (rp[0] - mu[0]) / (o.sigma[0] + radius)
            dy = (rp[1] - mu[1]) / (o.sigma[1] + radius)
            if dx * dx + dy * dy <= 1.0:
                t = state.time if previous is None else previous.time + s * (state.time - previous.time)
                return CollisionRecord(float(t), o.id, (float(rp[0]), float(rp[1])))
    return None


def _clearance(point, obstacles):
    pts = np.asarray(point, dtype=float).reshape(1, 2)
    best = math.inf
    for o in obstacles:
        d, _ = kernels.ellipse_distance(pts, o.mu[0], o.mu[1], o.sigma[0], o.sigma[1])
        best = min(best, float(d[0]))
    return max(best, 0.0)


# --------------------------------------------------------------------------
# planning
# --------------------------------------------------------------------------

def visible_obstacles(obstacles, fired):
    return tuple(o for o in obstacles
                 if not (o.trigger is not None and o.trigger.occluded and o.id not in fired))


def _frozen(obstacles):
    return tuple(replace(o, velocity=(0.0, 0.0)) if o.is_moving else o for o in obstacles)


def plan_once(grid: GridMap, obstacles, start_pos, start_vel, goal, params: PlannerParams,
              pipeline="full", opt_iters=100):
    """One planning cycle from a world-space pose; returns ``(traj, path)``.

    Raises :class:`NoPathError` or :class:`OptimizerError` on failure.
    """
    if pipeline not in PIPELINES:
        raise ValueError(f"unknown pipeline {pipeline!r}")
    if pipeline == "risk_disabled":
        obstacles = _frozen(obstacles)
    occ = rasterize(grid, obstacles)
    start_cell = grid.to_cell(start_pos)
    if pipeline == "risk_disabled":
        path = astar_baseline(occ, start_cell, goal, grid.resolution)
    else:
        risk = bake_risk_grid(grid, obstacles, params.k1)
        path = r_astar(occ, risk, obstacles, start_cell, goal, SearchParams.from_planner(params))
    pts = path.points()[1:]
    pts = np.vstack([np.asarray(start_pos, dtype=float)[None, :], pts])
    if len(pts) < 2 or not np.any(pts[-1] != pts[0]):
        pts = np.vstack([pts[:1], np.asarray(grid.to_world(goal), dtype=float)[None, :]])
    if not np.any(pts[-1] != pts[0]):
        raise NoPathError("already at goal")
    traj = fit_initial_spline(pts, params.dt, params.degree, spacing=params.v_cruise * params.dt,
                              start_velocity=start_vel)
    if pipeline == "search_only":
        return traj, path
    weights = ObjectiveWeights.from_planner(params)
    risk_eval = None
    if pipeline == "full":
        risk_eval = RiskEvaluator(obstacles, params.k1, min_radius=0.5 * grid.resolution)
        traj = init_shift_control_points(traj, risk_eval, params.r_thresh, params.r_d)
    else:
        weights = replace(weights, lambda_r=0.0)
    traj, report = optimize(traj, weights, obstacles, risk_eval, max_iters=opt_iters)
    if not np.all(np.isfinite(traj.control_points)):
        raise OptimizerError("optimizer produced a non-finite trajectory")
    return traj, path


def run_trial(cfg: ScenarioConfig, pipeline="full", budget=None, settings: SimSettings = None):
    """Fly one scenario with one pipeline and report the outcome.

    The planner sees obstacles as they were ``settings.latency`` seconds
    ago; the robot's own pose is always current.
    """
    settings = settings or SimSettings()
    if budget is not None:
        settings = replace(settings, budget=float(budget))
    grid, params = cfg.map, cfg.params
    goal_pos = np.asarray(grid.to_world(cfg.goal), dtype=float)
    high_risk = {o.id for o in cfg.obstacles if o.is_high_risk or o.trigger is not None}
    state = initial_state(cfg, settings.tracking)
    lag = int(round(settings.latency / settings.dt_sim))
    history = deque([(state.obstacles, state.fired)] * (lag + 1), maxlen=lag + 1)
    plan_ms = []

    def replan(st, seen):
        vis = visible_obstacles(*seen)
        t0 = _time.perf_counter()
        try:
            traj, path = plan_once(grid, vis, st.robot_pos, st.robot_vel, cfg.goal, params,
                                   pipeline, settings.opt_iters)
        finally:
            plan_ms.append((_time.perf_counter() - t0) * 1000.0)
        return replace(st, active_plan=Plan(traj, st.time, path))

    def result(success, length, clearance, collision=None, reason=""):
        mean_ms = float(np.mean(plan_ms)) if plan_ms else 0.0
        return TrialResult(success, length, clearance, mean_ms, state.time,
                           None if collision is None else collision.time, reason, len(plan_ms))

    def risky(st):
        return [o for o in st.obstacles if o.id in high_risk]

    length = 0.0
    clearance = _clearance(state.robot_pos, risky(state))
    seen = history[0]
    try:
        state = replan(state, seen)
    except (NoPathError, OptimizerError) as exc:
        return result(False, 0.0, clearance, reason=f"initial plan failed: {exc}")
    baked = {o.id: o.mu for o in seen[0]}
    n_steps = int(round(settings.budget / settings.dt_sim))
    for _ in range(n_steps):
        prev = state
        state = step_world(state, settings.dt_sim)
        history.append((state.obstacles, state.fired))
        length += math.hypot(state.robot_pos[0] - prev.robot_pos[0], state.robot_pos[1] - prev.robot_pos[1])
        clearance = min(clearance, _clearance(state.robot_pos, risky(state)))
        hit = check_collision(state, prev, grid.resolution, settings.robot_radius)
        if hit is not None:
            return result(False, length, 0.0, hit, f"collision with obstacle {hit.obstacle_id}")
        if math.hypot(state.robot_pos[0] - goal_pos[0], state.robot_pos[1] - goal_pos[1]) <= settings.goal_tolerance:
            return result(True, length, clearance)
        prev_seen, seen = seen, history[0]
        drift = max((math.hypot(o.mu[0] - baked.get(o.id, o.mu)[0], o.mu[1] - baked.get(o.id, o.mu)[1])
                     for o in seen[0] if o.is_moving), default=0.0)
        exhausted = state.time - state.active_plan.t0 >= state.active_plan.traj.duration
        if seen[1] != prev_seen[1] or drift > settings.replan_displacement * grid.resolution or exhausted:
            try:
                state = replan(state, seen)
            except (NoPathError, OptimizerError):
                # keep flying the previous plan
                pass
            baked = {o.id: o.mu for o in seen[0]}
    return result(False, length, clearance, reason="time budget exhausted")


# --------------------------------------------------------------------------
# scenario families
# --------------------------------------------------------------------------

def _scatter_trees(rng, n, keep_clear, first_id=10, width=40, height=21, sigma=(0.8, 1.3)):
    # trees anywhere on the map except near the listed (point, radius) pairs
    trees = []
    while len(trees) < n:
        s = float(rng.uniform(*sigma))
        x = float(rng.uniform(4.0, width - 4.0))
        y = float(rng.uniform(1.0, height - 2.0))
        if all(math.hypot(x - px, y - py) > r + s for (px, py), r in keep_clear):
            trees.append(Obstacle(first_id + len(trees), ObstacleClass.STATIONARY_STRUCTURE, (x, y), (s, s)))
            keep_clear = keep_clear + [((x, y), s + 1.5)]
    return trees


def _intercept_heading(person, robot, robot_vel, speed):
    """Heading that meets a robot moving at constant velocity, or straight at
    it when the robot cannot be caught."""
    d = np.asarray(robot, dtype=float) - np.asarray(person, dtype=float)
    rv = np.asarray(robot_vel, dtype=float)
    # |d + rv t| = speed t
    a = float(rv @ rv) - speed * speed
    b = 2.0 * float(d @ rv)
    c = float(d @ d)
    t = None
    if abs(a) < 1e-12:
        t = -c / b if b < 0 else None
    else:
        disc = b * b - 4 * a * c
        if disc >= 0:
            roots = [r for r in ((-b - math.sqrt(disc)) / (2 * a), (-b + math.sqrt(disc)) / (2 * a)) if r > 0]
            t = min(roots) if roots else None
    aim = d + rv * t if t is not None else d
    return math.atan2(aim[1], aim[0])


def _walker(rng, pid, pos, corridor_y, speed, activation, spread, v_robot, occluded=False):
    act = float(rng.uniform(*activation))
    v = float(rng.uniform(*speed))
    dy = pos[1] - corridor_y
    robot = (pos[0] - math.sqrt(max(act * act - dy * dy, 0.0)), corridor_y)
    heading = _intercept_heading(pos, robot, (v_robot, 0.0), v) + float(rng.uniform(-spread, spread))
    vel = (v * math.cos(heading), v * math.sin(heading))
    return Obstacle(pid, ObstacleClass.TEMPORARILY_STATIC, pos, (0.6, 0.6), weight=3.0,
                    trigger=BehaviorTrigger(act, vel, occluded=occluded))


def crossing_person(seed, params=None, *, speed=(1.2, 1.8), offset=(1.0, 2.0), activation=(3.5, 5.0),
                    spread=0.5, n_trees=6):
    """A standing person beside the corridor who starts walking when the
    robot approaches, heading roughly for where the robot will be.  Trees
    are scattered over the rest of the map."""
    rng = np.random.default_rng(seed)
    params = params or PlannerParams()
    grid = GridMap(40, 21)
    start, goal = (2, 10), (37, 10)
    px = float(rng.uniform(17.0, 23.0))
    side = 1.0 if rng.random() < 0.5 else -1.0
    py = 10.0 + side * float(rng.uniform(*offset))
    person = _walker(rng, 1, (px, py), 10.0, speed, activation, spread, params.v_cruise)
    trees = _scatter_trees(rng, int(n_trees), [((2.0, 10.0), 2.0), ((37.0, 10.0), 2.0), ((px, py), 2.5)])
    return ScenarioConfig(grid, (person, *trees), start, goal, int(seed), params)


def occluded_corner(seed, params=None, *, speed=(1.2, 1.8), edge=(0.5, 1.5), activation=(3.5, 5.0),
                    spread=0.5, k_corner=2.0, corner_sigma=1.0, aim_offset=2.3):
    """A house beside the corridor hides a person at its far corner who
    steps out toward the robot when it approaches.  The corridor-side
    corners carry small high-weight markers so risk-aware searches keep
    away from them."""
    rng = np.random.default_rng(seed)
    params = params or PlannerParams()
    grid = GridMap(40, 21)
    start, goal = (2, 10), (37, 10)
    side = 1.0 if rng.random() < 0.5 else -1.0
    hx = float(rng.uniform(16.0, 20.0))
    half_w, half_h = 3.0, 3.0
    hy = 10.0 + side * (half_h + float(rng.uniform(*edge)))
    house = Obstacle(20, ObstacleClass.STATIONARY_STRUCTURE, (hx, hy), (half_w, half_h))
    cy = hy - side * half_h
    corners = (
        Obstacle(21, ObstacleClass.STATIONARY_STRUCTURE, (hx - half_w, cy), (corner_sigma,) * 2, weight=k_corner),
        Obstacle(22, ObstacleClass.STATIONARY_STRUCTURE, (hx + half_w, cy), (corner_sigma,) * 2, weight=k_corner),
    )
    px = hx + half_w + float(rng.uniform(0.5, 1.2))
    py = cy + side * float(rng.uniform(0.3, 1.0))
    # aim at a line this far off the corner, roughly where risk-aware
    # searches fly past it
    pass_y = cy - side * float(aim_offset)
    person = _walker(rng, 1, (px, py), pass_y, speed, activation, spread, params.v_cruise, occluded=True)
    return ScenarioConfig(grid, (person, house, *corners), start, goal, int(seed), params)


def canonical_crossing_scenario(params=None):
    """The crossing-person seed used as the fixed reference case."""
    return crossing_person(6, params)


FAMILIES: dict[str, Callable] = {"crossing": crossing_person, "occluded_corner": occluded_corner}


# --------------------------------------------------------------------------
# batches
# --------------------------------------------------------------------------

TRIAL_COLUMNS = ("seed", "pipeline", "success", "path_length", "min_clearance", "planning_ms",
                 "flight_s", "collision_t")


@dataclass
class BatchReport:
    pipeline: str
    rows: list = field(default_factory=list)

    @property
    def success_rate(self):
        return sum(r["success"] for r in self.rows) / len(self.rows) if self.rows else 0.0

    @property
    def mean_planning_ms(self):
        return float(np.mean([r["planning_ms"] for r in self.rows])) if self.rows else 0.0

    @property
    def mean_flight_s(self):
        ok = [r["flight_s"] for r in self.rows if r["success"]]
        return float(np.mean(ok)) if ok else 0.0

    def summary(self):
        return {"pipeline": self.pipeline, "trials": len(self.rows), "success_rate": self.success_rate,
                "mean_planning_ms": self.mean_planning_ms, "mean_flight_s": self.mean_flight_s}


def _trial_row(args):
    source, seed, pipeline, settings = args
    cfg = source(seed) if callable(source) else source
    res = run_trial(cfg, pipeline, settings=settings)
    return {
        "seed": int(seed), "pipeline": pipeline, "success": bool(res.success),
        "path_length": res.path_length, "min_clearance": res.min_clearance,
        "planning_ms": res.planning_time, "flight_s": res.flight_time,
        "collision_t": res.collision_time, "reason": res.reason,
    }


def run_batch(cfgs, pipeline="full", trials=None, *, base_seed=0, settings=None, workers=1):
    """Run seeded trials of one pipeline.

    ``cfgs`` is a seed -> scenario callable (seeds ``base_seed + k``) or a
    sequence of scenarios (trial ``k`` uses ``cfgs[k]`` and its seed).
    Rows come back ordered by trial index whatever ``workers`` is.
    """
    settings = settings or SimSettings()
    if callable(cfgs):
        n = int(trials or 0)
        jobs = [(cfgs, base_seed + k, pipeline, settings) for k in range(n)]
    else:
        cfgs = list(cfgs)
        n = len(cfgs) if trials is None else min(int(trials), len(cfgs))
        jobs = [(c, c.seed, pipeline, settings) for c in cfgs[:n]]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_trial_row, jobs))
    else:
        rows = [_trial_row(j) for j in jobs]
    return BatchReport(pipeline, rows)


# --------------------------------------------------------------------------
# grid-level dynamic search protocol
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SearchRun:
    cells: tuple
    min_clearance: float
    replans: int
    reached: bool


def canonical_triggered_scenario(params=None):
    """Fixed 50x50 map with one standing obstacle that starts moving with
    velocity ``(-0.5, -0.3)`` once the search front comes within 5 cells."""
    grid = GridMap(50, 50)
    obstacles = (
        Obstacle(1, ObstacleClass.TEMPORARILY_STATIC, (27.0, 26.0), (1.2, 1.2), weight=3.0,
                 trigger=BehaviorTrigger(5.0, (-0.5, -0.3))),
        Obstacle(2, ObstacleClass.STATIONARY_STRUCTURE, (14.0, 30.0), (2.0, 3.0)),
        Obstacle(3, ObstacleClass.STATIONARY_STRUCTURE, (36.0, 14.0), (3.0, 2.0)),
        Obstacle(4, ObstacleClass.STATIONARY_STRUCTURE, (30.0, 40.0), (2.5, 2.0)),
    )
    return ScenarioConfig(grid, obstacles, (3, 3), (46, 46), 0, params or PlannerParams())


def run_search_protocol(cfg: ScenarioConfig, method="rastar", max_steps=500):
    """Walk the robot one grid move per unit time along the current path.

    Obstacles move by ``velocity * step_length`` per move after their
    trigger fires; the path is re-searched (risk rebaked for R-A*) whenever
    any obstacle has moved.  Clearance to high-risk obstacles is sampled
    after every move.
    """
    if method not in ("rastar", "astar"):
        raise ValueError(f"unknown method {method!r}")
    grid, params = cfg.map, cfg.params
    sp = SearchParams.from_planner(params)
    obstacles = tuple(cfg.obstacles)
    fired = frozenset()
    high = {o.id for o in obstacles if o.is_high_risk or o.trigger is not None}

    def search(cell, obs):
        occ = rasterize(grid, obs)
        if method == "astar":
            return astar_baseline(occ, cell, cfg.goal, grid.resolution)
        return r_astar(occ, bake_risk_grid(grid, obs, params.k1), obs, cell, cfg.goal, sp)

    cell = cfg.start
    path = search(cell, obstacles)
    visited = [cell]
    replans = 0
    clearance = _clearance(grid.to_world(cell), [o for o in obstacles if o.id in high])
    idx = 0
    for _ in range(max_steps):
        if cell == cfg.goal:
            break
        nxt = path.cells[idx + 1]
        step = math.hypot(nxt[0] - cell[0], nxt[1] - cell[1]) * grid.resolution
        cell = nxt
        idx += 1
        visited.append(cell)
        moved = any(o.is_moving for o in obstacles)
        obstacles = _advance_obstacles(obstacles, step)
        obstacles, fired_now = _fire_triggers(obstacles, fired, grid.to_world(cell))
        moved = moved or fired_now != fired
        fired = fired_now
        clearance = min(clearance, _clearance(grid.to_world(cell), [o for o in obstacles if o.id in high]))
        if moved and cell != cfg.goal:
            try:
                path = search(cell, obstacles)
                idx = 0
                replans += 1
            except NoPathError:
                pass
    return SearchRun(tuple(visited), clearance, replans, cell == cfg.goal)


__all__ = [
    "BatchReport", "CollisionRecord", "FAMILIES", "PIPELINES", "Plan", "SearchRun", "SimSettings",
    "TRIAL_COLUMNS", "TrialResult", "WorldState", "canonical_crossing_scenario",
    "canonical_triggered_scenario", "check_collision", "crossing_person", "initial_state",
    "occluded_corner", "plan_once", "run_batch", "run_search_protocol", "run_trial", "step_world",
    "visible_obstacles",
]
