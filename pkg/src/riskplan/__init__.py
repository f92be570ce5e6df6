"""Risk-aware path search and B-spline trajectory optimisation on 2D grids."""

__version__ = "0.1.0"

from .scenario import (  # noqa: E402
    BehaviorTrigger, GridMap, Obstacle, ObstacleClass, PlannerParams, ScenarioConfig, ScenarioError,
    classify_semantic, generate_random_map, load_scenario, save_scenario,
)
from .riskfield import RiskEvaluator, bake_risk_grid, dynamic_risk, static_risk, total_risk  # noqa: E402
from .search import NoPathError, SearchParams, astar_baseline, r_astar  # noqa: E402
from .spline import BSplineTrajectory, ObjectiveWeights, fit_initial_spline, optimize  # noqa: E402

__all__ = [
    "BSplineTrajectory", "BehaviorTrigger", "GridMap", "NoPathError", "ObjectiveWeights", "Obstacle",
    "ObstacleClass", "PlannerParams", "RiskEvaluator", "ScenarioConfig", "ScenarioError", "SearchParams",
    "astar_baseline", "bake_risk_grid", "classify_semantic", "dynamic_risk", "fit_initial_spline",
    "generate_random_map", "load_scenario", "optimize", "r_astar", "save_scenario", "static_risk",
    "total_risk",
]
