"""Command-line front end.

Exit codes: 0 ok, 2 bad input, 3 no feasible path, 4 optimizer failure.

Every data file starts with a ``# manifest: <name>`` line naming the
manifest written next to it.  Data files hold only deterministic content;
wall-clock timings and timestamps live in the manifest and ``timings.csv``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .riskfield import RiskEvaluator, bake_risk_grid
from .scenario import (
    PlacementError, PlannerParams, ScenarioError, dumps_scenario, generate_random_map, scenario_from_dict,
)
from .search import NoPathError, SearchParams, astar_baseline, path_metrics, r_astar
from .sim import FAMILIES, PIPELINES, TRIAL_COLUMNS, SimSettings, plan_once, run_batch, run_trial
from .spline import ObjectiveWeights, OptimizerError, evaluate, total_objective

EXIT_OK, EXIT_INPUT, EXIT_NO_PATH, EXIT_OPTIMIZER = 0, 2, 3, 4
MANIFEST = "manifest.json"


class InputError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data, overrides):
    """Set dotted-path keys (``params.lambda=5``) in a scenario dict."""
    data = json.loads(json.dumps(data))
    for item in overrides:
        if "=" not in item:
            raise InputError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = key.split(".")
        node = data
        for part in parts[:-1]:
            if isinstance(node, list):
                node = node[int(part)]
            else:
                node = node.setdefault(part, {})
        last = parts[-1]
        if isinstance(node, list):
            node[int(last)] = _parse_value(raw)
        else:
            node[last] = _parse_value(raw)
    return data


def _params_from_overrides(overrides):
    data = apply_overrides({"params": {}}, overrides)
    extra = set(data) - {"params"}
    if extra:
        raise InputError(f"only params.* overrides apply here, got {sorted(extra)}")
    return PlannerParams.from_dict(data["params"])


def load_config(path, overrides=()):
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise InputError(f"cannot read scenario: {err}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ScenarioError(f"not valid JSON ({err.msg} at line {err.lineno})", "<root>") from None
    return scenario_from_dict(apply_overrides(data, overrides))


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(round(v, 9)) if np.isfinite(v) else str(v)
    return str(v)


def write_csv(path, columns, rows, comments=()):
    buf = io.StringIO()
    buf.write(f"# manifest: {MANIFEST}\n")
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


def write_manifest(out_dir, command, *, scenario_text=None, params=None, seeds=(), outputs=(), extra=None):
    manifest = {
        "tool": "riskplan",
        "version": __version__,
        "command": command,
        "scenario_sha256": hashlib.sha256(scenario_text.encode()).hexdigest() if scenario_text else None,
        "params": params.to_dict() if params is not None else None,
        "seeds": list(seeds),
        "outputs": list(outputs),
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        manifest.update(extra)
    Path(out_dir, MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _out_dir(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _traj_rows(traj, step=None):
    step = step or traj.dt / 4
    ts = np.arange(0.0, traj.duration + 0.5 * step, step)
    ts = np.minimum(ts, traj.duration)
    p, v, a = evaluate(traj, ts), evaluate(traj, ts, 1), evaluate(traj, ts, 2)
    return [(float(t), *map(float, p[k]), *map(float, v[k]), *map(float, a[k])) for k, t in enumerate(ts)]


def _objective_line(traj, cfg, pipeline):
    weights = ObjectiveWeights.from_planner(cfg.params)
    risk_eval = None
    if pipeline == "full":
        risk_eval = RiskEvaluator(cfg.obstacles, cfg.params.k1, min_radius=0.5 * cfg.map.resolution)
    else:
        weights = dataclasses.replace(weights, lambda_r=0.0)
    obj = total_objective(traj, weights, cfg.obstacles, risk_eval)
    terms = " ".join(f"{k}={_fmt(float(v))}" for k, v in obj.terms.items())
    return f"objective: J={_fmt(obj.value)} {terms}"


TRAJ_COLUMNS = ("t", "x", "y", "vx", "vy", "ax", "ay")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_plan(args):
    cfg = load_config(args.scenario, args.overrides)
    start = cfg.map.to_world(cfg.start)
    traj, path = plan_once(cfg.map, cfg.obstacles, start, (0.0, 0.0), cfg.goal, cfg.params, "full",
                           args.opt_iters)
    out = _out_dir(args)
    write_csv(out / "path.csv", ("x", "y"), path.cells)
    write_csv(out / "trajectory.csv", TRAJ_COLUMNS, _traj_rows(traj), [_objective_line(traj, cfg, "full")])
    write_manifest(out, "plan", scenario_text=dumps_scenario(cfg), params=cfg.params, seeds=[cfg.seed],
                   outputs=["path.csv", "trajectory.csv"])
    print(f"path: {len(path.cells)} cells, length {path.length:.3f}; trajectory: {traj.n_control} control "
          f"points, {traj.duration:.2f} s")
    return EXIT_OK


def cmd_export_traj(args):
    cfg = load_config(args.scenario, args.overrides)
    pipeline = "full" if args.pipeline == "all" else args.pipeline
    start = cfg.map.to_world(cfg.start)
    traj, _path = plan_once(cfg.map, cfg.obstacles, start, (0.0, 0.0), cfg.goal, cfg.params, pipeline,
                            args.opt_iters)
    out = _out_dir(args)
    write_csv(out / "trajectory.csv", TRAJ_COLUMNS, _traj_rows(traj), [_objective_line(traj, cfg, pipeline)])
    write_manifest(out, "export-traj", scenario_text=dumps_scenario(cfg), params=cfg.params,
                   seeds=[cfg.seed], outputs=["trajectory.csv"], extra={"pipeline": pipeline})
    return EXIT_OK


def _field_rows(grid, risk):
    rows = []
    for y in range(grid.height):
        for x in range(grid.width):
            wx, wy = grid.to_world((x, y))
            rows.append((float(wx), float(wy), float(risk.value[y, x]),
                         float(risk.grad[y, x, 0]), float(risk.grad[y, x, 1])))
    return rows


def cmd_export_field(args):
    cfg = load_config(args.scenario, args.overrides)
    out = _out_dir(args)
    cols = ("x", "y", "value", "grad_x", "grad_y")
    outputs = ["field_static.csv"]
    static = bake_risk_grid(cfg.map, cfg.obstacles, cfg.params.k1)
    write_csv(out / "field_static.csv", cols, _field_rows(cfg.map, static))
    if args.moving:
        moved = tuple(dataclasses.replace(o, velocity=o.trigger.post_velocity) if o.trigger else o
                      for o in cfg.obstacles)
        moving = bake_risk_grid(cfg.map, moved, cfg.params.k1)
        write_csv(out / "field_moving.csv", cols, _field_rows(cfg.map, moving))
        outputs.append("field_moving.csv")
    write_manifest(out, "export-field", scenario_text=dumps_scenario(cfg), params=cfg.params,
                   seeds=[cfg.seed], outputs=outputs)
    return EXIT_OK


def cmd_compare(args):
    cfg = load_config(args.scenario, args.overrides)
    occ = cfg.occupancy
    rows = []
    for name in ("A*", "R-A*"):
        try:
            if name == "A*":
                path = astar_baseline(occ, cfg.start, cfg.goal, cfg.map.resolution)
            else:
                risk = bake_risk_grid(cfg.map, cfg.obstacles, cfg.params.k1)
                path = r_astar(occ, risk, cfg.obstacles, cfg.start, cfg.goal, SearchParams.from_planner(cfg.params))
            m = path_metrics(path, cfg.obstacles)
            rows.append((name, f"{m['length']:.2f}", f"{m['min_high_risk_clearance']:.2f}"))
        except NoPathError:
            rows.append((name, "failed", "failed"))
    print(f"{'method':<8}{'length':>10}{'min clearance':>16}")
    for name, length, clr in rows:
        print(f"{name:<8}{length:>10}{clr:>16}")
    if all(r[1] == "failed" for r in rows):
        return EXIT_NO_PATH
    return EXIT_OK


def _pipelines(arg):
    return list(PIPELINES) if arg == "all" else [arg]


def _trial_dict(seed, pipeline, res):
    return {"seed": seed, "pipeline": pipeline, "success": res.success, "path_length": res.path_length,
            "min_clearance": res.min_clearance, "planning_ms": res.planning_time,
            "flight_s": res.flight_time, "collision_t": res.collision_time, "reason": res.reason}


DATA_COLUMNS = tuple(c for c in TRIAL_COLUMNS if c != "planning_ms") + ("reason",)


def _write_trials(out, rows):
    write_csv(out / "trials.csv", DATA_COLUMNS, [[r[c] for c in DATA_COLUMNS] for r in rows])
    write_csv(out / "timings.csv", ("seed", "pipeline", "planning_ms"),
              [(r["seed"], r["pipeline"], r["planning_ms"]) for r in rows])


def _print_table(summaries):
    print(f"{'pipeline':<15}{'trials':>7}{'success_rate':>14}{'planning_ms':>13}{'flight_s':>10}")
    for s in summaries:
        print(f"{s['pipeline']:<15}{s['trials']:>7}{s['success_rate']:>14.3f}"
              f"{s['mean_planning_ms']:>13.2f}{s['mean_flight_s']:>10.2f}")


def _settings(args):
    return SimSettings(opt_iters=args.opt_iters, budget=args.budget)


def cmd_simulate(args):
    if args.scenario:
        cfg = load_config(args.scenario, args.overrides)
        source = args.scenario
    else:
        cfg = FAMILIES[args.family](args.seed, params=_params_from_overrides(args.overrides))
        source = f"family:{args.family}"
    out = _out_dir(args)
    rows = []
    for pipeline in _pipelines(args.pipeline):
        res = run_trial(cfg, pipeline, settings=_settings(args))
        rows.append(_trial_dict(cfg.seed, pipeline, res))
        status = "success" if res.success else f"failure ({res.reason})"
        print(f"{pipeline}: {status}; length {res.path_length:.2f}, min clearance {res.min_clearance:.2f}, "
              f"flight {res.flight_time:.2f} s")
    _write_trials(out, rows)
    write_manifest(out, "simulate", scenario_text=dumps_scenario(cfg), params=cfg.params, seeds=[cfg.seed],
                   outputs=["trials.csv", "timings.csv"], extra={"source": source})
    return EXIT_OK


def cmd_batch(args):
    params = _params_from_overrides(args.overrides)
    out = _out_dir(args)
    rows, summaries = [], []
    for pipeline in _pipelines(args.pipeline):
        report = run_batch(_Factory(args.family, params), pipeline, args.trials, base_seed=args.seed,
                           settings=_settings(args), workers=args.workers)
        rows.extend(report.rows)
        summaries.append(report.summary())
    _write_trials(out, rows)
    det = [{k: v for k, v in s.items() if k != "mean_planning_ms"} for s in summaries]
    Path(out, "summary.json").write_text(json.dumps({"family": args.family, "pipelines": det},
                                                    indent=2, sort_keys=True) + "\n")
    write_manifest(out, "batch", params=params, seeds=list(range(args.seed, args.seed + args.trials)),
                   outputs=["trials.csv", "timings.csv", "summary.json"],
                   extra={"family": args.family, "trials": args.trials,
                          "mean_planning_ms": {s["pipeline"]: s["mean_planning_ms"] for s in summaries}})
    _print_table(summaries)
    return EXIT_OK


@dataclasses.dataclass(frozen=True)
class _Factory:
    # picklable seed -> scenario callable for worker processes
    family: str
    params: PlannerParams

    def __call__(self, seed):
        return FAMILIES[self.family](seed, params=self.params)


def cmd_gen_map(args):
    params = _params_from_overrides(args.overrides)
    try:
        cfg = generate_random_map(args.width, args.height, args.n_static, args.n_risky, args.seed, params)
    except PlacementError as err:
        raise InputError(str(err)) from None
    text = dumps_scenario(cfg)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out-dir", default="out")
    common.add_argument("--pipeline", choices=(*PIPELINES, "all"), default="full")
    common.add_argument("--trials", type=int, default=40)
    common.add_argument("--opt-iters", type=int, default=SimSettings.opt_iters)
    common.add_argument("overrides", nargs="*", metavar="key=value",
                        help="dotted-path overrides such as params.lambda=5.0")

    parser = argparse.ArgumentParser(prog="riskplan", description="Risk-aware grid search and trajectory planning.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, scenario=True):
        p = sub.add_parser(name, parents=[common], help=help_text)
        if scenario:
            p.add_argument("--scenario", required=True)
        p.set_defaults(func=func)
        return p

    add("plan", cmd_plan, "bake, search, shift and optimize once")
    p = add("simulate", cmd_simulate, "fly one scenario", scenario=False)
    p.add_argument("--scenario")
    p.add_argument("--family", choices=sorted(FAMILIES), default="crossing")
    p.add_argument("--budget", type=float, default=SimSettings.budget)
    p = add("batch", cmd_batch, "seeded trials over a scenario family", scenario=False)
    p.add_argument("--family", choices=sorted(FAMILIES), default="crossing")
    p.add_argument("--budget", type=float, default=SimSettings.budget)
    p.add_argument("--workers", type=int, default=1)
    add("compare", cmd_compare, "A* vs R-A* length and clearance")
    p = add("export-field", cmd_export_field, "dump the baked risk field")
    p.add_argument("--moving", action="store_true", help="also dump the field after all triggers fire")
    add("export-traj", cmd_export_traj, "dump a sampled trajectory")
    p = add("gen-map", cmd_gen_map, "write a random scenario", scenario=False)
    p.add_argument("--width", type=int, default=50)
    p.add_argument("--height", type=int, default=50)
    p.add_argument("--n-static", type=int, default=8)
    p.add_argument("--n-risky", type=int, default=2)
    p.add_argument("--out")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as err:
        print(f"error: invalid scenario: {err}", file=sys.stderr)
        return EXIT_INPUT
    except (InputError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except NoPathError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NO_PATH
    except OptimizerError as err:
        print(f"error: optimizer failed: {err}", file=sys.stderr)
        return EXIT_OPTIMIZER


if __name__ == "__main__":
    sys.exit(main())
