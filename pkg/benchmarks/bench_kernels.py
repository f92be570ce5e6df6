"""Time the hot kernels on both backends.

Run ``python benchmarks/bench_kernels.py``.  The compiled loop kernels are
compared with their vectorised numpy twins, and the search kernels with
their uncompiled Python originals.  Under ``RISKPLAN_BACKEND=numpy`` nothing
is compiled, so both columns measure plain Python.
"""

import argparse
import timeit

import numpy as np

from riskplan import _accel, kernels
from riskplan.riskfield import ObstacleArrays, bake_risk_grid
from riskplan.scenario import generate_random_map
from riskplan.search import SearchParams


def _py(f):
    return getattr(f, "py_func", f)


def _best(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    cfg = generate_random_map(50, 50, 8, 2, seed=7)
    arrays = ObstacleArrays.from_obstacles(cfg.obstacles, 1.0)
    mu, sig, w, vel, k1, moving = (np.ascontiguousarray(a) for a in (
        arrays.mu, arrays.sigma, arrays.weight, arrays.velocity, arrays.k1, arrays.moving))
    pts = np.ascontiguousarray(cfg.map.cell_centers().reshape(-1, 2))
    occ = np.ascontiguousarray(cfg.occupancy)
    risk = bake_risk_grid(cfg.map, cfg.obstacles)
    sp = SearchParams()
    mmu, mvel, mw, mk = (np.ascontiguousarray(a) for a in arrays.movers())
    gx, gy = np.ascontiguousarray(risk.grad[..., 0]), np.ascontiguousarray(risk.grad[..., 1])
    s, g = cfg.start, cfg.goal
    o = cfg.obstacles[0]
    few = np.ascontiguousarray(pts[:12])

    cases = [
        ("risk field, 2500 cells",
         lambda: kernels.risk_points_loop(pts, mu, sig, w, vel, k1, moving, 0.0, 0.5),
         lambda: kernels.risk_points_numpy(pts, mu, sig, w, vel, k1, moving, 0.0, 0.5), 20),
        ("ellipse distance, 2500 points",
         lambda: kernels.ellipse_distance_loop(pts, o.mu[0], o.mu[1], o.sigma[0], o.sigma[1]),
         lambda: kernels.ellipse_distance_numpy(pts, o.mu[0], o.mu[1], o.sigma[0], o.sigma[1]), 20),
        ("ellipse distance, 12 points",
         lambda: kernels.ellipse_distance_loop(few, o.mu[0], o.mu[1], o.sigma[0], o.sigma[1]),
         lambda: kernels.ellipse_distance_numpy(few, o.mu[0], o.mu[1], o.sigma[0], o.sigma[1]), 500),
        ("plain A*, 50x50",
         lambda: kernels.astar_kernel(occ, s[0], s[1], g[0], g[1], 1.0),
         lambda: _py(kernels.astar_kernel)(occ, s[0], s[1], g[0], g[1], 1.0), 3),
        ("R-A*, 50x50",
         lambda: kernels.rastar_kernel(occ, risk.value, gx, gy, s[0], s[1], g[0], g[1], 1.0, sp.lam, sp.alpha,
                                       mmu, mvel, mw, mk, sp.n_ref, sp.epsilon, sp.rho_dyn),
         lambda: _py(kernels.rastar_kernel)(occ, risk.value, gx, gy, s[0], s[1], g[0], g[1], 1.0, sp.lam,
                                            sp.alpha, mmu, mvel, mw, mk, sp.n_ref, sp.epsilon, sp.rho_dyn), 3),
    ]
    label = "njit ms" if _accel.USE_NUMBA else "loop ms"
    print(f"backend: {_accel.BACKEND}  (reference: vectorised numpy, or uncompiled Python for the searches)")
    print(f"{'kernel':<32}{label:>13}{'reference ms':>14}{'ratio':>10}")
    for name, fast, ref, number in cases:
        fast()  # compile outside the timing
        tf = _best(fast, args.repeat, number) * 1e3
        tr = _best(ref, args.repeat, number) * 1e3
        print(f"{name:<32}{tf:>13.3f}{tr:>14.3f}{tr / tf:>9.1f}x")


if __name__ == "__main__":
    main()
