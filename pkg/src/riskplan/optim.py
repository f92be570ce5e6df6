"""Limited-memory BFGS with a backtracking (Armijo) line search."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class OptimizerError(RuntimeError):
    pass


@dataclass
class OptimizeReport:
    iterations: int = 0
    evaluations: int = 0
    status: str = "max_iters"
    history: list = field(default_factory=list)
    steepest_descent_steps: int = 0


def _two_loop(g, s_hist, y_hist):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    s, y = s_hist[-1], y_hist[-1]
    q *= (s @ y) / (y @ y)
    for (s, y), a in zip(zip(s_hist, y_hist), reversed(alphas)):
        rho = 1.0 / (y @ s)
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def lbfgs(fun, x0, *, max_iters=200, grad_tol=1e-6, memory=8, c1=1e-4,
          stall_tol=1e-12, stall_iters=3, max_backtracks=60):
    """Minimise ``fun(x) -> (f, grad)`` from ``x0``.

    Every accepted step satisfies the sufficient-decrease condition, so the
    recorded history is non-increasing.  When the quasi-Newton direction is
    not a descent direction the memory is dropped and a steepest-descent
    step is taken instead.
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g = fun(x)
    report = OptimizeReport(evaluations=1, history=[float(f)])
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise OptimizerError("invalid initial trajectory: non-finite objective")
    s_hist, y_hist = [], []
    stalled = 0
    for it in range(max_iters):
        if x.size == 0 or np.max(np.abs(g)) <= grad_tol:
            report.status = "converged"
            break
        if s_hist:
            d = _two_loop(g, s_hist, y_hist)
            slope = g @ d
            if not slope < 0:
                s_hist.clear()
                y_hist.clear()
        if not s_hist:
            d = -g / max(1.0, float(np.linalg.norm(g)))
            slope = g @ d
            report.steepest_descent_steps += 1

        step = 1.0
        for _ in range(max_backtracks):
            x_new = x + step * d
            f_new, g_new = fun(x_new)
            report.evaluations += 1
            if np.isfinite(f_new) and f_new <= f + c1 * step * slope:
                break
            step *= 0.5
        else:
            report.status = "line_search"
            break

        s = x_new - x
        y = g_new - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            s_hist.append(s)
            y_hist.append(y)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)

        decrease = f - f_new
        x, f, g = x_new, f_new, g_new
        report.history.append(float(f))
        report.iterations = it + 1
        if decrease <= stall_tol * max(1.0, abs(f)):
            stalled += 1
            if stalled >= stall_iters:
                report.status = "stalled"
                break
        else:
            stalled = 0
    else:
        report.status = "max_iters"
    return x, f, g, report
