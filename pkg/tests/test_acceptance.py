"""End-to-end acceptance checks, one test per criterion.

Each test records a single pass/fail line (shown in the terminal summary)
and asserts its tolerance and wall-clock budget.
"""

import heapq
import json
import math
import time

import numpy as np
import pytest

from riskplan.cli import main
from riskplan.riskfield import RiskEvaluator, bake_risk_grid, dynamic_risk, static_risk
from riskplan.scenario import GridMap, Obstacle, ObstacleClass, PlacementError, generate_random_map
from riskplan.search import NoPathError, SearchParams, astar_baseline, path_metrics, r_astar
from riskplan.sim import FAMILIES, SimSettings, canonical_triggered_scenario, run_batch, run_search_protocol
from riskplan.spline import (
    BSplineTrajectory, ObjectiveWeights, init_shift_control_points, optimize, overspeed_instance,
    threading_instance, total_objective,
)
from riskplan.search import min_clearance

OC = ObstacleClass
SQ2 = math.sqrt(2.0)


def _fd(f, p, h):
    p = np.asarray(p, dtype=float)
    out = np.zeros(2)
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        out[i] = (f(p + e) - f(p - e)) / (2 * h)
    return out


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def test_c01_field_gradients(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_s = worst_d = 0.0
    for _ in range(1000):
        sig = rng.uniform(0.3, 3.0, 2)
        o = Obstacle(1, OC.STATIONARY_STRUCTURE, tuple(rng.uniform(-5, 5, 2)), tuple(sig),
                     weight=float(rng.uniform(0.5, 3)))
        # keep within 3 sigma so the value is far from underflow
        p = np.asarray(o.mu) + rng.uniform(-3, 3, 2) * sig
        g = static_risk(p, o).gradient
        num = _fd(lambda q: static_risk(q, o).value, p, 1e-5 * sig.min())
        if np.linalg.norm(g) > 1e-12:
            worst_s = max(worst_s, _rel(g, num))

        m = Obstacle(2, OC.CONTINUOUSLY_DYNAMIC, tuple(rng.uniform(-5, 5, 2)), (1.0, 1.0),
                     velocity=tuple(rng.uniform(-2, 2, 2)), weight=float(rng.uniform(0.5, 3)))
        k1 = float(rng.uniform(0, 2))
        r = rng.uniform(0.5, 6.0)
        ang = rng.uniform(0, 2 * math.pi)
        p = np.asarray(m.mu) + r * np.array([math.cos(ang), math.sin(ang)])
        g = dynamic_risk(p, m, k1).gradient
        num = _fd(lambda q: dynamic_risk(q, m, k1).value, p, 1e-6 * r)
        worst_d = max(worst_d, _rel(g, num))
    elapsed = time.perf_counter() - t0
    ok = worst_s < 1e-5 and worst_d < 1e-4 and elapsed < 5
    criterion(1, "field gradients", ok,
              f"max rel err static {worst_s:.1e}, dynamic {worst_d:.1e}, {elapsed:.2f} s")
    assert ok


def test_c02_objective_gradient(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(5, 21))
        q = np.cumsum(rng.uniform(0.2, 0.9, (n, 2)) * [1, 0.5], axis=0) + rng.normal(0, 0.3, (n, 2))
        traj = BSplineTrajectory(q, float(rng.uniform(0.3, 0.8)))
        obs = []
        for k in range(int(rng.integers(0, 5))):
            mu = tuple(q[int(rng.integers(0, n))] + rng.normal(0, 1.0, 2))
            if rng.random() < 0.5:
                obs.append(Obstacle(k + 1, OC.STATIONARY_STRUCTURE, mu, tuple(rng.uniform(0.5, 1.5, 2))))
            else:
                obs.append(Obstacle(k + 1, OC.CONTINUOUSLY_DYNAMIC, mu, (1.0, 1.0),
                                    velocity=tuple(rng.uniform(-1, 1, 2))))
        ev = RiskEvaluator(obs, min_radius=0.5)
        w = ObjectiveWeights(r_thresh=1e-9)
        grad = total_objective(traj, w, obs, ev).gradient
        h = 1e-6 * max(1.0, float(np.abs(q).max()))
        num = np.zeros_like(q)
        for i in range(3, n - 3):
            for j in range(2):
                a, b = q.copy(), q.copy()
                a[i, j] += h
                b[i, j] -= h
                num[i, j] = (total_objective(traj.with_points(a), w, obs, ev).value
                             - total_objective(traj.with_points(b), w, obs, ev).value) / (2 * h)
        sl = traj.free_slice()
        if sl.stop > sl.start:
            worst = max(worst, float(np.linalg.norm(grad[sl] - num[sl]) / max(np.linalg.norm(num[sl]), 1e-8)))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed < 30
    criterion(2, "objective gradient", ok, f"max rel err {worst:.1e} over 100 trajectories, {elapsed:.2f} s")
    assert ok


def test_c03_search_degeneracy(criterion):
    t0 = time.perf_counter()
    equal = total = seed = 0
    while total < 200:
        try:
            cfg = generate_random_map(50, 50, 8, 2, seed)
        except PlacementError:
            seed += 1
            continue
        seed += 1
        risk = bake_risk_grid(cfg.map, cfg.obstacles)
        a = astar_baseline(cfg.occupancy, cfg.start, cfg.goal)
        r = r_astar(cfg.occupancy, risk, cfg.obstacles, cfg.start, cfg.goal, SearchParams(lam=0.0, alpha=0.0))
        equal += a.cells == r.cells
        total += 1
    elapsed = time.perf_counter() - t0
    ok = equal == total and elapsed < 20
    criterion(3, "search degeneracy", ok, f"{equal}/{total} identical paths, {elapsed:.2f} s")
    assert ok


def _dijkstra(occ, start, goal):
    h, w = occ.shape
    dist = {start: 0.0}
    heap = [(0.0, start)]
    while heap:
        d, (x, y) = heapq.heappop(heap)
        if (x, y) == goal:
            return d
        if d > dist[(x, y)]:
            continue
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                nx, ny = x + dx, y + dy
                if (dx or dy) and 0 <= nx < w and 0 <= ny < h and not occ[ny, nx]:
                    if dx and dy and (occ[y, nx] or occ[ny, x]):
                        continue
                    nd = d + (SQ2 if dx and dy else 1.0)
                    if nd < dist.get((nx, ny), math.inf):
                        dist[(nx, ny)] = nd
                        heapq.heappush(heap, (nd, (nx, ny)))
    return None


def test_c04_astar_optimality(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    agree = connected = 0
    n_maps = 600
    for _ in range(n_maps):
        occ = rng.random((8, 8)) < rng.uniform(0.0, 0.45)
        free = np.argwhere(~occ)
        if len(free) < 2:
            agree += 1
            continue
        i, j = rng.choice(len(free), 2, replace=False)
        start, goal = tuple(free[i][::-1]), tuple(free[j][::-1])
        ref = _dijkstra(occ, start, goal)
        try:
            got = astar_baseline(occ, start, goal).length
        except NoPathError:
            got = None
        if ref is None:
            agree += got is None
        else:
            connected += 1
            agree += got is not None and abs(got - ref) < 1e-9
    elapsed = time.perf_counter() - t0
    ok = agree == n_maps and elapsed < 10
    criterion(4, "A* optimality oracle", ok,
              f"{agree}/{n_maps} agree ({connected} connected, {n_maps - connected} disconnected), {elapsed:.2f} s")
    assert ok


def test_c05_static_table(criterion):
    t0 = time.perf_counter()
    overhead, clr_r, clr_a = [], [], []
    seed = 0
    while len(overhead) < 100:
        try:
            cfg = generate_random_map(50, 50, 8, 2, seed)
        except PlacementError:
            seed += 1
            continue
        seed += 1
        risk = bake_risk_grid(cfg.map, cfg.obstacles, cfg.params.k1)
        a = astar_baseline(cfg.occupancy, cfg.start, cfg.goal)
        r = r_astar(cfg.occupancy, risk, cfg.obstacles, cfg.start, cfg.goal, SearchParams.from_planner(cfg.params))
        ma, mr = path_metrics(a, cfg.obstacles), path_metrics(r, cfg.obstacles)
        overhead.append(mr["length"] / ma["length"] - 1.0)
        clr_r.append(mr["min_high_risk_clearance"])
        clr_a.append(ma["min_high_risk_clearance"])
    elapsed = time.perf_counter() - t0
    oh, cr, ca = float(np.median(overhead)), float(np.median(clr_r)), float(np.median(clr_a))
    ok = oh <= 0.10 and cr >= 2.0 and ca <= 1.2 and elapsed < 60
    criterion(5, "static search table", ok,
              f"median overhead {100 * oh:.1f}%, clearance R-A* {cr:.2f} vs A* {ca:.2f}, {elapsed:.2f} s")
    assert ok


def test_c06_dynamic_table(criterion):
    t0 = time.perf_counter()
    cfg = canonical_triggered_scenario()
    r = run_search_protocol(cfg, "rastar")
    a = run_search_protocol(cfg, "astar")
    elapsed = time.perf_counter() - t0
    ok = r.min_clearance >= 1.5 and a.min_clearance == 0.0 and elapsed < 5
    criterion(6, "dynamic search table", ok,
              f"R-A* clearance {r.min_clearance:.2f} (reached={r.reached}), A* {a.min_clearance:.2f}, "
              f"{elapsed:.2f} s")
    assert ok


def test_c07_optimizer_contracts(criterion):
    t0 = time.perf_counter()
    w = ObjectiveWeights()
    traj, obs = threading_instance()
    traj = init_shift_control_points(traj, RiskEvaluator(obs), w.r_thresh, w.r_d)
    out, rep1 = optimize(traj, w, obs)
    clearance = min_clearance(out.control_points, obs)
    fast, rep2 = optimize(overspeed_instance(), w, [], max_iters=2000)
    vmax = float(np.hypot(*fast.velocity_points.T).max())
    mono = all(np.all(np.diff(r.history) <= 0) for r in (rep1, rep2))
    elapsed = time.perf_counter() - t0
    ok = clearance >= w.s_f - 0.05 and vmax <= w.v_m + 1e-3 and mono and elapsed < 10
    criterion(7, "optimizer contracts", ok,
              f"threading clearance {clearance:.3f}, over-speed max |V| {vmax:.3f}, J non-increasing {mono}, "
              f"{elapsed:.2f} s")
    assert ok


def test_c08_pipeline_ordering(criterion):
    t0 = time.perf_counter()
    settings = SimSettings()
    rates = {}
    for family in ("crossing", "occluded_corner"):
        for pipeline in ("full", "search_only", "risk_disabled"):
            rates[family, pipeline] = run_batch(FAMILIES[family], pipeline, 40, settings=settings).success_rate
    elapsed = time.perf_counter() - t0
    ok = elapsed < 300
    parts = []
    for family in ("crossing", "occluded_corner"):
        f, s, r = (rates[family, p] for p in ("full", "search_only", "risk_disabled"))
        ok &= f >= 0.90 and 0.6 <= s <= 0.95 and r <= 0.50 and f >= s >= r
        parts.append(f"{family} {f:.2f}/{s:.2f}/{r:.2f}")
    criterion(8, "pipeline ordering", ok, f"{', '.join(parts)} (full/search_only/risk_disabled), {elapsed:.1f} s")
    assert ok


def test_c09_anisotropy(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(909)
    # half-cell grid so mu +- alpha * v_hat lands on cell centres for axis directions
    grid = GridMap(41, 41, 0.5)
    checks = fails = 0
    axes = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    for _ in range(100):
        d = np.array(axes[int(rng.integers(0, 4))], dtype=float)
        speed = float(rng.uniform(0.1, 2.0))
        k1 = float(rng.uniform(0.05, 3.0))
        mu = (10.0, 10.0)
        o = Obstacle(1, OC.CONTINUOUSLY_DYNAMIC, mu, (1.0, 1.0), velocity=tuple(speed * d),
                     weight=float(rng.uniform(0.5, 3.0)), k1=k1)
        baked = bake_risk_grid(grid, [o])
        # random direction too, through the same kernel the bake uses
        ang = rng.uniform(0, 2 * math.pi)
        o2 = Obstacle(2, OC.CONTINUOUSLY_DYNAMIC, mu, (1.0, 1.0),
                      velocity=(speed * math.cos(ang), speed * math.sin(ang)), k1=k1)
        ev = RiskEvaluator([o2])
        v2 = np.array([math.cos(ang), math.sin(ang)])
        for alpha in (0.5, 1.0, 2.0, 4.0):
            ahead = grid.to_cell(np.add(mu, alpha * d))
            behind = grid.to_cell(np.subtract(mu, alpha * d))
            fails += not baked.value[ahead[1], ahead[0]] > baked.value[behind[1], behind[0]]
            vals, _ = ev.batch(np.array([np.add(mu, alpha * v2), np.subtract(mu, alpha * v2)]))
            fails += not vals[0] > vals[1]
            checks += 2
    elapsed = time.perf_counter() - t0
    ok = fails == 0 and elapsed < 5
    criterion(9, "anisotropy", ok, f"{checks - fails}/{checks} ahead > behind, {elapsed:.2f} s")
    assert ok


def test_c10_determinism(criterion, tmp_path):
    t0 = time.perf_counter()
    args = ["batch", "--family", "crossing", "--trials", "4", "--pipeline", "all", "--seed", "3"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seeds"] == [3, 4, 5, 6]
    assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
    same = all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
               for n in ("trials.csv", "summary.json"))
    elapsed = time.perf_counter() - t0
    ok = same and elapsed < 60
    criterion(10, "determinism", ok, f"trials.csv and summary.json byte-identical: {same}, {elapsed:.1f} s")
    assert ok
