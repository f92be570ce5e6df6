"""World model: grid map, semantically labelled obstacles, scenario files."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from . import kernels


class ScenarioError(ValueError):
    """Invalid scenario content; ``field`` holds the offending path when known."""

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class UnknownLabelError(KeyError):
    def __init__(self, label):
        self.label = label
        super().__init__(f"unknown semantic label {label!r}")

    def __str__(self):
        return self.args[0]


class PlacementError(RuntimeError):
    pass


class ObstacleClass(str, Enum):
    STATIONARY_STRUCTURE = "StationaryStructure"
    CONTINUOUSLY_DYNAMIC = "ContinuouslyDynamic"
    TEMPORARILY_STATIC = "TemporarilyStatic"


HIGH_RISK_CLASSES = (ObstacleClass.TEMPORARILY_STATIC, ObstacleClass.CONTINUOUSLY_DYNAMIC)

DEFAULT_WEIGHTS = {
    ObstacleClass.STATIONARY_STRUCTURE: 1.0,
    ObstacleClass.TEMPORARILY_STATIC: 3.0,
    ObstacleClass.CONTINUOUSLY_DYNAMIC: 3.0,
}

# label -> (class, semantic weight)
DEFAULT_CLASS_TABLE = {
    "wall": (ObstacleClass.STATIONARY_STRUCTURE, 1.0),
    "building": (ObstacleClass.STATIONARY_STRUCTURE, 1.0),
    "house": (ObstacleClass.STATIONARY_STRUCTURE, 1.0),
    "tree": (ObstacleClass.STATIONARY_STRUCTURE, 1.0),
    "pole": (ObstacleClass.STATIONARY_STRUCTURE, 1.0),
    "person_standing": (ObstacleClass.TEMPORARILY_STATIC, 3.0),
    "parked_car": (ObstacleClass.TEMPORARILY_STATIC, 3.0),
    "person_walking": (ObstacleClass.CONTINUOUSLY_DYNAMIC, 3.0),
    "moving_vehicle": (ObstacleClass.CONTINUOUSLY_DYNAMIC, 3.0),
}


def classify_semantic(label, table=None, fallback=None):
    """Map a semantic label to ``(ObstacleClass, weight)``.

    ``fallback`` is an optional ``(class, weight)`` pair returned for
    unmapped labels; without it an unknown label raises
    :class:`UnknownLabelError`.
    """
    table = DEFAULT_CLASS_TABLE if table is None else table
    try:
        cls, weight = table[label]
    except KeyError:
        if fallback is None:
            raise UnknownLabelError(label) from None
        cls, weight = fallback
    return ObstacleClass(cls), float(weight)


@dataclass(frozen=True)
class BehaviorTrigger:
    activation_distance: float
    post_velocity: tuple[float, float]
    # hidden from the planner until the trigger fires (occluded-person scenes)
    occluded: bool = False

    def __post_init__(self):
        if not self.activation_distance > 0:
            raise ScenarioError("activation_distance > 0", "trigger.activation_distance")
        object.__setattr__(self, "post_velocity", _pair(self.post_velocity))


@dataclass(frozen=True)
class Obstacle:
    id: int
    cls: ObstacleClass
    mu: tuple[float, float]
    sigma: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)
    weight: float = 1.0
    trigger: Optional[BehaviorTrigger] = None
    k1: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "cls", ObstacleClass(self.cls))
        object.__setattr__(self, "mu", _pair(self.mu))
        object.__setattr__(self, "sigma", _pair(self.sigma))
        object.__setattr__(self, "velocity", _pair(self.velocity))
        if not self.sigma[0] > 0:
            raise ScenarioError("invariant violated: sigma_x > 0", f"obstacles[id={self.id}].sigma")
        if not self.sigma[1] > 0:
            raise ScenarioError("invariant violated: sigma_y > 0", f"obstacles[id={self.id}].sigma")
        if not self.weight > 0:
            raise ScenarioError("invariant violated: weight > 0", f"obstacles[id={self.id}].weight")
        if self.cls is ObstacleClass.STATIONARY_STRUCTURE:
            if self.trigger is not None:
                raise ScenarioError(
                    "invariant violated: StationaryStructure has no trigger",
                    f"obstacles[id={self.id}].trigger",
                )
            if self.is_moving:
                raise ScenarioError(
                    "invariant violated: StationaryStructure velocity is zero",
                    f"obstacles[id={self.id}].velocity",
                )

    @property
    def is_moving(self):
        return self.velocity[0] != 0.0 or self.velocity[1] != 0.0

    @property
    def is_high_risk(self):
        return self.cls in HIGH_RISK_CLASSES or self.is_moving

    def contains(self, point):
        dx = (point[0] - self.mu[0]) / self.sigma[0]
        dy = (point[1] - self.mu[1]) / self.sigma[1]
        return dx * dx + dy * dy <= 1.0


@dataclass(frozen=True)
class GridMap:
    width: int
    height: int
    resolution: float = 1.0

    def __post_init__(self):
        if not (isinstance(self.width, int) and self.width >= 2):
            raise ScenarioError("invariant violated: width >= 2", "map.width")
        if not (isinstance(self.height, int) and self.height >= 2):
            raise ScenarioError("invariant violated: height >= 2", "map.height")
        if not self.resolution > 0:
            raise ScenarioError("invariant violated: resolution > 0", "map.resolution")

    def cell_centers(self):
        """World coordinates of all cell centres, shape ``(height, width, 2)``."""
        ys, xs = np.mgrid[0:self.height, 0:self.width]
        return np.stack([xs * self.resolution, ys * self.resolution], axis=-1).astype(float)

    def in_bounds(self, cell):
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def to_world(self, cell):
        return (cell[0] * self.resolution, cell[1] * self.resolution)

    def to_cell(self, point):
        x = int(math.floor(point[0] / self.resolution + 0.5))
        y = int(math.floor(point[1] / self.resolution + 0.5))
        return (min(max(x, 0), self.width - 1), min(max(y, 0), self.height - 1))


def rasterize(grid, obstacles):
    """Occupancy ``[y, x]``: cells whose centre lies inside a 1-sigma ellipse."""
    occ = np.zeros((grid.height, grid.width), dtype=bool)
    if not obstacles:
        return occ
    centers = grid.cell_centers()
    for obs in obstacles:
        dx = (centers[..., 0] - obs.mu[0]) / obs.sigma[0]
        dy = (centers[..., 1] - obs.mu[1]) / obs.sigma[1]
        occ |= dx * dx + dy * dy <= 1.0
    return occ


# name in the file -> attribute on PlannerParams
PARAM_KEYS = {
    "lambda": "lam",
    "alpha": "alpha",
    "n_ref": "n_ref",
    "epsilon": "epsilon",
    "k1": "k1",
    "r_thresh": "r_thresh",
    "r_d": "r_d",
    "s_f": "s_f",
    "v_m": "v_m",
    "a_m": "a_m",
    "dt": "dt",
    "C": "C",
    "lambda_s": "lambda_s",
    "lambda_c": "lambda_c",
    "lambda_d": "lambda_d",
    "lambda_r": "lambda_r",
    "rho_dyn": "rho_dyn",
    "degree": "degree",
    "v_cruise": "v_cruise",
}
_ZERO_OK = {"lam", "alpha", "lambda_s", "lambda_c", "lambda_d", "lambda_r", "k1", "r_d"}


@dataclass(frozen=True)
class PlannerParams:
    """Full planner parameter set; lengths are world units."""

    lam: float = 200.0
    alpha: float = 100.0
    n_ref: float = 4.0
    epsilon: float = 1e-6
    k1: float = 1.0
    r_thresh: float = 0.02
    r_d: float = 0.5
    s_f: float = 1.5
    v_m: float = 2.0
    a_m: float = 3.0
    dt: float = 0.3
    C: float = 4.0
    lambda_s: float = 1.0
    lambda_c: float = 300.0
    lambda_d: float = 1.0
    lambda_r: float = 10.0
    rho_dyn: float = 10.0
    degree: int = 3
    v_cruise: float = 1.5

    def __post_init__(self):
        for key, attr in PARAM_KEYS.items():
            val = getattr(self, attr)
            if attr == "epsilon":
                if not 0 < val <= 1e-3:
                    raise ScenarioError("invariant violated: 0 < epsilon <= 1e-3", f"params.{key}")
            elif attr in _ZERO_OK:
                if not val >= 0:
                    raise ScenarioError(f"invariant violated: {key} >= 0", f"params.{key}")
            elif not val > 0:
                raise ScenarioError(f"invariant violated: {key} > 0", f"params.{key}")
        if not (isinstance(self.degree, int) and self.degree >= 2):
            raise ScenarioError("invariant violated: degree >= 2", "params.degree")

    def to_dict(self):
        return {key: getattr(self, attr) for key, attr in PARAM_KEYS.items()}

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(PARAM_KEYS)
        if unknown:
            raise ScenarioError(f"unknown parameter(s) {sorted(unknown)}", "params")
        return cls(**{PARAM_KEYS[k]: v for k, v in data.items()})


@dataclass(frozen=True)
class ScenarioConfig:
    map: GridMap
    obstacles: tuple[Obstacle, ...]
    start: tuple[int, int]
    goal: tuple[int, int]
    seed: int = 0
    params: PlannerParams = field(default_factory=PlannerParams)

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "start", tuple(int(v) for v in self.start))
        object.__setattr__(self, "goal", tuple(int(v) for v in self.goal))
        ids = [o.id for o in self.obstacles]
        if len(set(ids)) != len(ids):
            raise ScenarioError("invariant violated: obstacle ids are unique", "obstacles")
        for name in ("start", "goal"):
            cell = getattr(self, name)
            if not self.map.in_bounds(cell):
                raise ScenarioError("invariant violated: cell inside the map", name)
            if self.occupancy[cell[1], cell[0]]:
                raise ScenarioError(f"invariant violated: {name} cell is unoccupied", name)

    @cached_property
    def occupancy(self):
        return rasterize(self.map, self.obstacles)

    def with_params(self, **changes):
        return dataclasses.replace(self, params=dataclasses.replace(self.params, **changes))


# --------------------------------------------------------------------------
# random maps
# --------------------------------------------------------------------------

def generate_random_map(width, height, n_static, n_risky, seed, params=None, max_tries=2000):
    """Random grid world with ``n_risky`` temporarily static obstacles on the
    start-goal corridor and ``n_static`` structures scattered elsewhere.

    Deterministic in ``seed``; the result is checked for A* connectivity.
    """
    rng = np.random.default_rng(seed)
    grid = GridMap(int(width), int(height), 1.0)
    params = params or PlannerParams()
    margin = max(0, min(3, width // 10, height // 10))
    jitter = max(1, height // 10)
    s_j = int(rng.integers(0, jitter)) if margin else 0
    g_j = int(rng.integers(0, jitter)) if margin else 0
    start = (margin, margin + s_j)
    goal = (width - 1 - margin, height - 1 - margin - g_j)
    sx, sy = grid.to_world(start)
    gx, gy = grid.to_world(goal)
    line = np.array([gx - sx, gy - sy])
    length = float(np.hypot(*line)) or 1.0
    along = line / length
    normal = np.array([-along[1], along[0]])

    def clear_of_endpoints(obs, pad):
        for px, py in ((sx, sy), (gx, gy)):
            dx = (px - obs.mu[0]) / (obs.sigma[0] + pad)
            dy = (py - obs.mu[1]) / (obs.sigma[1] + pad)
            if dx * dx + dy * dy <= 1.0:
                return False
        return True

    for _attempt in range(50):
        obstacles = []
        risky = []
        for k in range(n_risky):
            lo = 0.25 + 0.5 * k / n_risky
            for _ in range(max_tries):
                frac = float(rng.uniform(lo, lo + 0.5 / n_risky))
                sig = float(rng.uniform(1.0, 1.6))
                offset = float(rng.uniform(-1.0, 1.0)) * sig
                c = np.array([sx, sy]) + along * length * frac + normal * offset
                obs = Obstacle(
                    id=len(obstacles) + 1,
                    cls=ObstacleClass.TEMPORARILY_STATIC,
                    mu=(round(float(c[0]), 3), round(float(c[1]), 3)),
                    sigma=(round(sig, 3), round(sig, 3)),
                    weight=DEFAULT_WEIGHTS[ObstacleClass.TEMPORARILY_STATIC],
                    trigger=BehaviorTrigger(
                        activation_distance=5.0,
                        post_velocity=(-0.5, -0.3),
                    ),
                )
                if clear_of_endpoints(obs, 3.0) and all(
                    math.dist(obs.mu, r.mu) > r.sigma[0] + obs.sigma[0] + 6.0 for r in risky
                ):
                    obstacles.append(obs)
                    risky.append(obs)
                    break
            else:
                raise PlacementError(f"could not place risky obstacle {k + 1} of {n_risky}")

        for k in range(n_static):
            for _ in range(max_tries):
                s0 = float(rng.uniform(1.0, 2.5))
                s1 = float(rng.uniform(1.0, 2.5))
                c = rng.uniform([0.0, 0.0], [gx + margin, gy + margin])
                obs = Obstacle(
                    id=len(obstacles) + 1,
                    cls=ObstacleClass.STATIONARY_STRUCTURE,
                    mu=(round(float(c[0]), 3), round(float(c[1]), 3)),
                    sigma=(round(s0, 3), round(s1, 3)),
                    weight=DEFAULT_WEIGHTS[ObstacleClass.STATIONARY_STRUCTURE],
                )
                if not clear_of_endpoints(obs, 1.0):
                    continue
                # keep a free ring around the risky obstacles
                if any(_ellipses_closer_than(obs, r, 4.0) for r in risky):
                    continue
                obstacles.append(obs)
                break
            else:
                raise PlacementError(f"could not place static obstacle {k + 1} of {n_static}")

        try:
            cfg = ScenarioConfig(grid, tuple(obstacles), start, goal, int(seed), params)
        except ScenarioError:
            continue
        found, *_ = kernels.astar_kernel(cfg.occupancy, start[0], start[1], goal[0], goal[1], 1.0)
        if found:
            return cfg
    raise PlacementError(f"no connected placement found for seed {seed}")


def _ellipses_closer_than(a, b, gap):
    # conservative: compare centre distance against the larger semi-axes
    return math.dist(a.mu, b.mu) < max(a.sigma) + max(b.sigma) + gap


# --------------------------------------------------------------------------
# files
# --------------------------------------------------------------------------

_NUM = {"type": "number"}
_PAIR = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}
_CELL = {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["map", "start", "goal", "seed", "obstacles", "params"],
    "additionalProperties": False,
    "properties": {
        "map": {
            "type": "object",
            "required": ["width", "height", "resolution"],
            "additionalProperties": False,
            "properties": {
                "width": {"type": "integer"},
                "height": {"type": "integer"},
                "resolution": _NUM,
            },
        },
        "start": _CELL,
        "goal": _CELL,
        "seed": {"type": "integer"},
        "obstacles": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "class", "mu", "sigma", "velocity", "weight"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "integer"},
                    "class": {"enum": [c.value for c in ObstacleClass]},
                    "mu": _PAIR,
                    "sigma": _PAIR,
                    "velocity": _PAIR,
                    "weight": _NUM,
                    "k1": _NUM,
                    "trigger": {
                        "type": "object",
                        "required": ["activation_distance", "post_velocity"],
                        "additionalProperties": False,
                        "properties": {
                            "activation_distance": _NUM,
                            "post_velocity": _PAIR,
                            "occluded": {"type": "boolean"},
                        },
                    },
                },
            },
        },
        "params": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: ({"type": "integer"} if k == "degree" else _NUM) for k in PARAM_KEYS},
        },
    },
}


def _num(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    return float(f"{float(x):.9g}")


def _pair(v):
    return (float(v[0]), float(v[1]))


def scenario_to_dict(cfg):
    obstacles = []
    for o in cfg.obstacles:
        d = {
            "id": o.id,
            "class": o.cls.value,
            "mu": [_num(v) for v in o.mu],
            "sigma": [_num(v) for v in o.sigma],
            "velocity": [_num(v) for v in o.velocity],
            "weight": _num(o.weight),
        }
        if o.k1 is not None:
            d["k1"] = _num(o.k1)
        if o.trigger is not None:
            t = {
                "activation_distance": _num(o.trigger.activation_distance),
                "post_velocity": [_num(v) for v in o.trigger.post_velocity],
            }
            if o.trigger.occluded:
                t["occluded"] = True
            d["trigger"] = t
        obstacles.append(d)
    return {
        "map": {
            "width": cfg.map.width,
            "height": cfg.map.height,
            "resolution": _num(cfg.map.resolution),
        },
        "start": list(cfg.start),
        "goal": list(cfg.goal),
        "seed": int(cfg.seed),
        "obstacles": obstacles,
        "params": {k: _num(v) for k, v in cfg.params.to_dict().items()},
    }


def _field_path(err):
    parts = []
    for p in err.absolute_path:
        if isinstance(p, int):
            parts.append(f"[{p}]")
        else:
            parts.append(("." if parts else "") + str(p))
    return "".join(parts) or "<root>"


def scenario_from_dict(data):
    try:
        jsonschema.validate(data, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as err:
        raise ScenarioError(err.message, _field_path(err)) from None
    m = data["map"]
    grid = GridMap(m["width"], m["height"], float(m["resolution"]))
    obstacles = []
    for i, o in enumerate(data["obstacles"]):
        trig = None
        if "trigger" in o:
            t = o["trigger"]
            try:
                trig = BehaviorTrigger(t["activation_distance"], t["post_velocity"], t.get("occluded", False))
            except ScenarioError as err:
                raise ScenarioError(str(err).split(": ", 1)[-1], f"obstacles[{i}].trigger") from None
        try:
            obstacles.append(
                Obstacle(
                    id=o["id"],
                    cls=o["class"],
                    mu=o["mu"],
                    sigma=o["sigma"],
                    velocity=o["velocity"],
                    weight=float(o["weight"]),
                    trigger=trig,
                    k1=o.get("k1"),
                )
            )
        except ScenarioError as err:
            raise ScenarioError(str(err).split(": ", 1)[-1], f"obstacles[{i}]") from None
    params = PlannerParams.from_dict(data["params"])
    return ScenarioConfig(grid, tuple(obstacles), tuple(data["start"]), tuple(data["goal"]), data["seed"], params)


def dumps_scenario(cfg):
    """Canonical text: key-sorted JSON, two-space indent, trailing newline."""
    return json.dumps(scenario_to_dict(cfg), sort_keys=True, indent=2) + "\n"


def loads_scenario(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ScenarioError(f"not valid JSON ({err.msg} at line {err.lineno})", "<root>") from None
    return scenario_from_dict(data)


def save_scenario(cfg, path):
    Path(path).write_text(dumps_scenario(cfg))


def load_scenario(path):
    return loads_scenario(Path(path).read_text())
