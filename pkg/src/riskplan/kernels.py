"""Hot numeric kernels.

Every kernel exists as a numba-compiled loop and as a numpy (or plain
Python) fallback; ``RISKPLAN_BACKEND`` picks one at import time.  Callers
only use the public names at the bottom of the module.

Grid arrays are indexed ``[y, x]``; world coordinates of cell ``(x, y)``
are ``(x * res, y * res)``.
"""

import heapq
import math

import numpy as np

from ._accel import USE_NUMBA, maybe_njit

_STATIC_NORM = 1.0 / math.sqrt((2.0 * math.pi) ** 3)

# 8-connected moves as (dx, dy, step length)
_MOVES = np.array(
    [[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [1, -1], [-1, 1], [-1, -1]],
    dtype=np.int64,
)
_SQRT2 = math.sqrt(2.0)


# --------------------------------------------------------------------------
# risk field
# --------------------------------------------------------------------------

@maybe_njit
def _risk_points_loop(pts, mu, sig, weight, vel, k1, moving, min_r, near_r):
    n = pts.shape[0]
    m = mu.shape[0]
    value = np.zeros(n)
    grad = np.zeros((n, 2))
    near = np.zeros(n, dtype=np.bool_)
    singular = np.zeros(n, dtype=np.bool_)
    for a in range(n):
        px = pts[a, 0]
        py = pts[a, 1]
        val = 0.0
        gx = 0.0
        gy = 0.0
        for j in range(m):
            dx = px - mu[j, 0]
            dy = py - mu[j, 1]
            if moving[j]:
                vx = vel[j, 0]
                vy = vel[j, 1]
                rr = dx * dx + dy * dy
                if rr < near_r * near_r:
                    near[a] = True
                if rr < min_r * min_r:
                    if rr == 0.0:
                        vn = math.sqrt(vx * vx + vy * vy)
                        dx = min_r * vx / vn
                        dy = min_r * vy / vn
                    else:
                        s = min_r / math.sqrt(rr)
                        dx = dx * s
                        dy = dy * s
                    rr = dx * dx + dy * dy
                if rr == 0.0:
                    singular[a] = True
                    continue
                rn = math.sqrt(rr)
                vr = vx * dx + vy * dy
                r = weight[j] / rr * math.exp(k1[j] * vr / rn)
                val += r
                gx += r * (-2.0 * dx / rr + k1[j] * (vx / rn - vr * dx / (rr * rn)))
                gy += r * (-2.0 * dy / rr + k1[j] * (vy / rn - vr * dy / (rr * rn)))
            else:
                ivx = 1.0 / (sig[j, 0] * sig[j, 0])
                ivy = 1.0 / (sig[j, 1] * sig[j, 1])
                r = weight[j] * _STATIC_NORM / (sig[j, 0] * sig[j, 1]) * math.exp(
                    -0.5 * (dx * dx * ivx + dy * dy * ivy)
                )
                val += r
                gx += -r * dx * ivx
                gy += -r * dy * ivy
        value[a] = val
        grad[a, 0] = gx
        grad[a, 1] = gy
    return value, grad, near, singular


def _risk_points_numpy(pts, mu, sig, weight, vel, k1, moving, min_r, near_r):
    n = pts.shape[0]
    value = np.zeros(n)
    grad = np.zeros((n, 2))
    near = np.zeros(n, dtype=bool)
    singular = np.zeros(n, dtype=bool)
    for j in range(mu.shape[0]):
        dx = pts[:, 0] - mu[j, 0]
        dy = pts[:, 1] - mu[j, 1]
        if moving[j]:
            vx, vy = vel[j, 0], vel[j, 1]
            rr = dx * dx + dy * dy
            near |= rr < near_r * near_r
            clamp = rr < min_r * min_r
            if clamp.any():
                zero = clamp & (rr == 0.0)
                vn = math.sqrt(vx * vx + vy * vy)
                scale = np.where(zero, 1.0, min_r / np.sqrt(np.where(zero, 1.0, rr)))
                dx = np.where(clamp, dx * scale, dx)
                dy = np.where(clamp, dy * scale, dy)
                if zero.any():
                    dx = np.where(zero, min_r * vx / vn, dx)
                    dy = np.where(zero, min_r * vy / vn, dy)
                rr = dx * dx + dy * dy
            bad = rr == 0.0
            singular |= bad
            rr = np.where(bad, 1.0, rr)
            rn = np.sqrt(rr)
            vr = vx * dx + vy * dy
            r = weight[j] / rr * np.exp(k1[j] * vr / rn)
            r = np.where(bad, 0.0, r)
            value += r
            grad[:, 0] += r * (-2.0 * dx / rr + k1[j] * (vx / rn - vr * dx / (rr * rn)))
            grad[:, 1] += r * (-2.0 * dy / rr + k1[j] * (vy / rn - vr * dy / (rr * rn)))
        else:
            ivx = 1.0 / (sig[j, 0] * sig[j, 0])
            ivy = 1.0 / (sig[j, 1] * sig[j, 1])
            r = weight[j] * _STATIC_NORM / (sig[j, 0] * sig[j, 1]) * np.exp(
                -0.5 * (dx * dx * ivx + dy * dy * ivy)
            )
            value += r
            grad[:, 0] += -r * dx * ivx
            grad[:, 1] += -r * dy * ivy
    return value, grad, near, singular


# --------------------------------------------------------------------------
# signed distance to an axis-aligned ellipse boundary
# --------------------------------------------------------------------------

@maybe_njit
def _ellipse_q1(e0, e1, y0, y1):
    # closest boundary point for e0 >= e1 > 0, y0, y1 >= 0 (Eberly's bisection)
    if y1 > 0.0:
        if y0 > 0.0:
            z0 = y0 / e0
            z1 = y1 / e1
            g = z0 * z0 + z1 * z1 - 1.0
            if g != 0.0:
                r0 = (e0 / e1) ** 2
                n0 = r0 * z0
                s0 = z1 - 1.0
                s1 = 0.0 if g < 0.0 else math.sqrt(n0 * n0 + z1 * z1) - 1.0
                s = 0.0
                for _ in range(200):
                    s = 0.5 * (s0 + s1)
                    if s == s0 or s == s1:
                        break
                    t0 = n0 / (s + r0)
                    t1 = z1 / (s + 1.0)
                    gs = t0 * t0 + t1 * t1 - 1.0
                    if gs > 0.0:
                        s0 = s
                    elif gs < 0.0:
                        s1 = s
                    else:
                        break
                return r0 * y0 / (s + r0), y1 / (s + 1.0)
            return y0, y1
        return 0.0, e1
    numer = e0 * y0
    denom = e0 * e0 - e1 * e1
    if numer < denom:
        xd = numer / denom
        return e0 * xd, e1 * math.sqrt(max(0.0, 1.0 - xd * xd))
    return e0, 0.0


@maybe_njit
def _ellipse_distance_loop(pts, cx, cy, a, b):
    n = pts.shape[0]
    dist = np.empty(n)
    grad = np.empty((n, 2))
    swap = b > a
    e0 = b if swap else a
    e1 = a if swap else b
    for i in range(n):
        ux = pts[i, 0] - cx
        uy = pts[i, 1] - cy
        if swap:
            ux, uy = uy, ux
        y0 = abs(ux)
        y1 = abs(uy)
        inside = (y0 / e0) ** 2 + (y1 / e1) ** 2 < 1.0
        x0, x1 = _ellipse_q1(e0, e1, y0, y1)
        d0 = y0 - x0
        d1 = y1 - x1
        d = math.sqrt(d0 * d0 + d1 * d1)
        if d > 0.0:
            n0 = d0 / d
            n1 = d1 / d
            if inside:
                n0 = -n0
                n1 = -n1
                d = -d
        else:
            n0 = x0 / (e0 * e0)
            n1 = x1 / (e1 * e1)
            nn = math.sqrt(n0 * n0 + n1 * n1)
            n0 /= nn
            n1 /= nn
        if ux < 0.0:
            n0 = -n0
        if uy < 0.0:
            n1 = -n1
        if swap:
            n0, n1 = n1, n0
        dist[i] = d
        grad[i, 0] = n0
        grad[i, 1] = n1
    return dist, grad


def _ellipse_distance_numpy(pts, cx, cy, a, b):
    swap = b > a
    e0, e1 = (b, a) if swap else (a, b)
    ux = pts[:, 0] - cx
    uy = pts[:, 1] - cy
    if swap:
        ux, uy = uy, ux
    y0 = np.abs(ux)
    y1 = np.abs(uy)
    inside = (y0 / e0) ** 2 + (y1 / e1) ** 2 < 1.0

    x0 = np.empty_like(y0)
    x1 = np.empty_like(y1)
    gen = (y1 > 0.0) & (y0 > 0.0)
    on_minor = (y1 > 0.0) & ~gen
    on_major = y1 <= 0.0

    # general position: bisection on the same secular equation as the loop kernel
    z0 = y0[gen] / e0
    z1 = y1[gen] / e1
    g = z0 * z0 + z1 * z1 - 1.0
    r0 = (e0 / e1) ** 2
    n0 = r0 * z0
    s0 = z1 - 1.0
    s1 = np.where(g < 0.0, 0.0, np.sqrt(n0 * n0 + z1 * z1) - 1.0)
    s = 0.5 * (s0 + s1)
    done = np.zeros(s.shape, dtype=bool)
    for _ in range(200):
        s = np.where(done, s, 0.5 * (s0 + s1))
        done |= (s == s0) | (s == s1)
        if done.all():
            break
        t0 = n0 / (s + r0)
        t1 = z1 / (s + 1.0)
        gs = t0 * t0 + t1 * t1 - 1.0
        s0 = np.where(~done & (gs > 0.0), s, s0)
        s1 = np.where(~done & (gs < 0.0), s, s1)
        done |= gs == 0.0
    s = np.where(g == 0.0, 0.0, s)
    x0[gen] = np.where(g == 0.0, y0[gen], r0 * y0[gen] / (s + r0))
    x1[gen] = np.where(g == 0.0, y1[gen], y1[gen] / (s + 1.0))

    x0[on_minor] = 0.0
    x1[on_minor] = e1

    numer = e0 * y0[on_major]
    denom = e0 * e0 - e1 * e1
    xd = np.where(numer < denom, numer / denom if denom > 0 else 1.0, 1.0)
    x0[on_major] = np.where(numer < denom, e0 * xd, e0)
    x1[on_major] = np.where(numer < denom, e1 * np.sqrt(np.maximum(0.0, 1.0 - xd * xd)), 0.0)

    d0 = y0 - x0
    d1 = y1 - x1
    d = np.sqrt(d0 * d0 + d1 * d1)
    pos = d > 0.0
    safe = np.where(pos, d, 1.0)
    m0 = x0 / (e0 * e0)
    m1 = x1 / (e1 * e1)
    mn = np.sqrt(m0 * m0 + m1 * m1)
    mn = np.where(mn > 0.0, mn, 1.0)
    n0 = np.where(pos, d0 / safe, m0 / mn)
    n1 = np.where(pos, d1 / safe, m1 / mn)
    flip = pos & inside
    n0 = np.where(flip, -n0, n0)
    n1 = np.where(flip, -n1, n1)
    d = np.where(flip, -d, d)
    n0 = np.where(ux < 0.0, -n0, n0)
    n1 = np.where(uy < 0.0, -n1, n1)
    if swap:
        n0, n1 = n1, n0
    return d, np.stack([n0, n1], axis=1)


# --------------------------------------------------------------------------
# grid search
# --------------------------------------------------------------------------

@maybe_njit
def _guidance_scalar(gx, gy, dax, day, cx, cy, nx, ny,
                     mov_mu, mov_vel, mov_w, mov_k1, n_ref, eps, rho):
    # pick the mover in range of the candidate node with the largest risk at p_curr
    best = -1
    best_r = -1.0
    for j in range(mov_mu.shape[0]):
        ox = nx - mov_mu[j, 0]
        oy = ny - mov_mu[j, 1]
        if ox * ox + oy * oy > rho * rho:
            continue
        rx = cx - mov_mu[j, 0]
        ry = cy - mov_mu[j, 1]
        rr = rx * rx + ry * ry
        if rr == 0.0:
            rval = math.inf
        else:
            rn = math.sqrt(rr)
            rval = mov_w[j] / rr * math.exp(
                mov_k1[j] * (mov_vel[j, 0] * rx + mov_vel[j, 1] * ry) / rn
            )
        if rval > best_r:
            best_r = rval
            best = j
    if best >= 0:
        vx = mov_vel[best, 0]
        vy = mov_vel[best, 1]
        vn = math.sqrt(vx * vx + vy * vy)
        rx = cx - mov_mu[best, 0]
        ry = cy - mov_mu[best, 1]
        delta = (rx * vx + ry * vy) / (vn + eps)
        if delta > 0.0 and vn > 0.0:
            n_last = abs(rx * vy - ry * vx) / vn
            if n_last >= n_ref:
                return vx * dax + vy * day
    return gx * dax + gy * day


@maybe_njit
def _astar_kernel(occ, sx, sy, tx, ty, res):
    h_, w_ = occ.shape
    size = h_ * w_
    g = np.full(size, np.inf)
    f = np.full(size, np.inf)
    parent = np.full(size, -1, dtype=np.int64)
    closed = np.zeros(size, dtype=np.bool_)
    start = sy * w_ + sx
    goal = ty * w_ + tx
    g[start] = 0.0
    h0 = res * math.sqrt(float((sx - tx) * (sx - tx) + (sy - ty) * (sy - ty)))
    f[start] = h0
    heap = [(h0, h0, sy, sx)]
    expansions = 0
    while len(heap) > 0:
        fc, hc, cy, cx = heapq.heappop(heap)
        cur = cy * w_ + cx
        if closed[cur] or fc != f[cur]:
            continue
        if cur == goal:
            return True, parent, g, expansions
        closed[cur] = True
        expansions += 1
        for k in range(8):
            dx = _MOVES[k, 0]
            dy = _MOVES[k, 1]
            nx = cx + dx
            ny = cy + dy
            if nx < 0 or ny < 0 or nx >= w_ or ny >= h_:
                continue
            if occ[ny, nx]:
                continue
            if dx != 0 and dy != 0 and (occ[cy, nx] or occ[ny, cx]):
                continue
            nxt = ny * w_ + nx
            if closed[nxt]:
                continue
            step = _SQRT2 if (dx != 0 and dy != 0) else 1.0
            gt = g[cur] + step * res
            if gt < g[nxt]:
                g[nxt] = gt
                parent[nxt] = cur
                hn = res * math.sqrt(float((nx - tx) * (nx - tx) + (ny - ty) * (ny - ty)))
                fn = gt + hn
                f[nxt] = fn
                heapq.heappush(heap, (fn, hn, ny, nx))
    return False, parent, g, expansions


@maybe_njit
def _rastar_kernel(occ, risk, grad_x, grad_y, sx, sy, tx, ty, res, lam, alpha,
                   mov_mu, mov_vel, mov_w, mov_k1, n_ref, eps, rho):
    h_, w_ = occ.shape
    size = h_ * w_
    g = np.full(size, np.inf)
    f = np.full(size, np.inf)
    hv = np.zeros(size)
    gv = np.zeros(size)
    parent = np.full(size, -1, dtype=np.int64)
    closed = np.zeros(size, dtype=np.bool_)
    start = sy * w_ + sx
    goal = ty * w_ + tx
    g[start] = 0.0
    h0 = res * math.sqrt(float((sx - tx) * (sx - tx) + (sy - ty) * (sy - ty)))
    hv[start] = h0
    f[start] = h0 + lam * risk[sy, sx]
    heap = [(f[start], h0, sy, sx)]
    expansions = 0
    while len(heap) > 0:
        fc, hc, cy, cx = heapq.heappop(heap)
        cur = cy * w_ + cx
        if closed[cur] or fc != f[cur]:
            continue
        if cur == goal:
            return True, parent, g, hv, gv, f, expansions
        closed[cur] = True
        expansions += 1
        for k in range(8):
            dx = _MOVES[k, 0]
            dy = _MOVES[k, 1]
            nx = cx + dx
            ny = cy + dy
            if nx < 0 or ny < 0 or nx >= w_ or ny >= h_:
                continue
            if occ[ny, nx]:
                continue
            if dx != 0 and dy != 0 and (occ[cy, nx] or occ[ny, cx]):
                continue
            nxt = ny * w_ + nx
            if closed[nxt]:
                continue
            step = _SQRT2 if (dx != 0 and dy != 0) else 1.0
            gt = g[cur] + step * res
            if gt < g[nxt]:
                g[nxt] = gt
                parent[nxt] = cur
                hn = res * math.sqrt(float((nx - tx) * (nx - tx) + (ny - ty) * (ny - ty)))
                gnext = _guidance_scalar(
                    grad_x[ny, nx], grad_y[ny, nx], dx * res, dy * res,
                    cx * res, cy * res, nx * res, ny * res,
                    mov_mu, mov_vel, mov_w, mov_k1, n_ref, eps, rho,
                )
                fn = gt + hn + lam * risk[ny, nx] + alpha * gnext
                hv[nxt] = hn
                gv[nxt] = gnext
                f[nxt] = fn
                heapq.heappush(heap, (fn, hn, ny, nx))
    return False, parent, g, hv, gv, f, expansions


# --------------------------------------------------------------------------
# public entry points
# --------------------------------------------------------------------------

if USE_NUMBA:
    risk_points = _risk_points_loop
    ellipse_distance = _ellipse_distance_loop
else:
    risk_points = _risk_points_numpy
    ellipse_distance = _ellipse_distance_numpy

guidance_scalar = _guidance_scalar
astar_kernel = _astar_kernel
rastar_kernel = _rastar_kernel

# loop variants stay importable so the benchmark can compare both paths
risk_points_loop = _risk_points_loop
risk_points_numpy = _risk_points_numpy
ellipse_distance_loop = _ellipse_distance_loop
ellipse_distance_numpy = _ellipse_distance_numpy
