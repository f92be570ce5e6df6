import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riskplan import kernels
from riskplan.riskfield import (
    SingularityError, bake_risk_grid, direction_factor, dynamic_risk, guidance_term, static_risk,
    total_risk,
)
from riskplan.scenario import GridMap, Obstacle, ObstacleClass

OC = ObstacleClass
C0 = (2 * math.pi) ** -1.5


def static(mu=(0.0, 0.0), sigma=(1.0, 1.0), k=1.0, oid=1):
    return Obstacle(oid, OC.STATIONARY_STRUCTURE, mu, sigma, weight=k)


def mover(mu=(0.0, 0.0), v=(1.0, 0.0), k=1.0, oid=2, k1=None):
    return Obstacle(oid, OC.CONTINUOUSLY_DYNAMIC, mu, (1.0, 1.0), velocity=v, weight=k, k1=k1)


def fd_grad(f, p, h=1e-5):
    p = np.asarray(p, dtype=float)
    g = np.zeros(2)
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        g[i] = (f(p + e) - f(p - e)) / (2 * h)
    return g


def test_static_center_value():
    s = static_risk((0, 0), static())
    assert s.value == pytest.approx(C0, rel=1e-12)
    assert s.value == pytest.approx(0.063494, abs=1e-6)
    np.testing.assert_array_equal(s.gradient, [0.0, 0.0])


def test_static_unit_offset():
    s = static_risk((1, 0), static())
    assert s.value == pytest.approx(math.exp(-0.5) * C0, rel=1e-12)
    np.testing.assert_allclose(s.gradient, [-s.value, 0.0], rtol=1e-12)


def test_static_weight_linear():
    a = static_risk((0.3, -0.7), static(k=1.0))
    b = static_risk((0.3, -0.7), static(k=2.0))
    assert b.value == pytest.approx(2 * a.value, rel=1e-14)
    np.testing.assert_allclose(b.gradient, 2 * a.gradient, rtol=1e-14)


def test_dynamic_inverse_square_when_k1_zero():
    s = dynamic_risk((2, 0), mover(v=(0.3, 0.9)), k1=0.0)
    assert s.value == pytest.approx(0.25)
    np.testing.assert_allclose(s.gradient, [-0.25, 0.0], rtol=1e-12)


def test_dynamic_perpendicular():
    assert dynamic_risk((0, 2), mover(), k1=1.0).value == pytest.approx(0.25)


def test_dynamic_ahead_exceeds_behind():
    assert dynamic_risk((1, 0), mover(), 1.0).value > dynamic_risk((-1, 0), mover(), 1.0).value


def test_dynamic_singular():
    with pytest.raises(SingularityError, match="singular evaluation at obstacle center"):
        dynamic_risk((0, 0), mover(), 1.0)


def test_dynamic_min_radius_clamps():
    near = dynamic_risk((0.1, 0.0), mover(), 1.0, min_radius=0.5).value
    at = dynamic_risk((0.5, 0.0), mover(), 1.0).value
    assert near == pytest.approx(at)


def test_legacy_gradient_differs_from_exact():
    exact = dynamic_risk((1.5, 0.7), mover(), 1.0)
    legacy = dynamic_risk((1.5, 0.7), mover(), 1.0, legacy_gradient=True)
    assert exact.value == legacy.value
    assert not np.allclose(exact.gradient, legacy.gradient)
    fd = fd_grad(lambda p: dynamic_risk(p, mover(), 1.0).value, (1.5, 0.7))
    np.testing.assert_allclose(exact.gradient, fd, rtol=1e-6)


def test_per_obstacle_k1_override():
    o = mover(k1=0.0)
    assert dynamic_risk((1, 0), o, k1=5.0).value == pytest.approx(1.0)


def test_total_risk_sums():
    assert total_risk((1, 1), []).value == 0.0
    one = static(mu=(0.5, 0.2))
    assert total_risk((1, 1), [one]).value == static_risk((1, 1), one).value
    two = total_risk((1, 1), [one, static(mu=(0.5, 0.2), oid=2)])
    assert two.value == pytest.approx(2 * static_risk((1, 1), one).value, rel=1e-15)
    mix = [one, mover(mu=(3, 3))]
    t = total_risk((1, 1), mix)
    assert t.value == pytest.approx(static_risk((1, 1), one).value + dynamic_risk((1, 1), mix[1], 1.0).value)


def test_direction_factor_examples():
    o = mover(mu=(0, 0), v=(1, 0))
    d = direction_factor((2, 0), o, epsilon=1e-6)
    assert d.delta == pytest.approx(2.0, abs=1e-5) and d.n_last == pytest.approx(0.0)
    assert direction_factor((0, 0), o).delta == 0.0
    d = direction_factor((0, 3), o)
    assert d.delta == 0.0 and d.n_last == pytest.approx(3.0)
    degenerate = direction_factor((1, 1), static())
    assert degenerate.delta == 0.0 and degenerate.degenerate


def test_direction_sign_invariant_under_speed_scale():
    for p in [(2, 1), (-1, 4), (0.5, -3)]:
        a = direction_factor(p, mover(v=(0.4, -0.2)))
        b = direction_factor(p, mover(v=(4.0, -2.0)))
        assert np.sign(a.delta) == np.sign(b.delta)
        assert a.n_last == pytest.approx(b.n_last)


def test_guidance_flat_field_zero():
    for d in [(1, 0), (1, 1), (0, -1)]:
        assert guidance_term(np.add((5, 5), d), (5, 5), []) == 0.0


def test_guidance_uphill_positive():
    obs = [static(mu=(10, 5), sigma=(3, 3))]
    # stepping toward the obstacle climbs the field
    assert guidance_term((6, 5), (5, 5), obs) > 0
    assert guidance_term((4, 5), (5, 5), obs) < 0


def test_guidance_behind_vs_ahead_of_mover():
    # robot far off the mover's line, ahead of it: stepping along v costs |v||d|
    o = mover(mu=(0, 0), v=(1, 0))
    g = guidance_term((6, 5), (5, 5), [o], n_ref=4.0)
    assert g == pytest.approx(1.0)
    assert guidance_term((4, 5), (5, 5), [o], n_ref=4.0) == pytest.approx(-1.0)


def test_guidance_rear_bypass_choice():
    # exhaustive neighbour enumeration: cheapest guidance opposes v
    o = mover(mu=(2, 2), v=(1, 0))
    cur = (5, 7)
    costs = {}
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            if dx or dy:
                costs[(dx, dy)] = guidance_term((cur[0] + dx, cur[1] + dy), cur, [o], n_ref=4.0)
    best = min(costs, key=costs.get)
    assert best[0] == -1


def test_bake_matches_total_risk_exactly():
    grid = GridMap(12, 9)
    obs = [static(mu=(3.3, 4.1), sigma=(1.5, 0.8)), mover(mu=(8.2, 2.7), v=(-0.4, 0.6)),
           Obstacle(3, OC.TEMPORARILY_STATIC, (6.0, 6.0), (1.0, 1.2), weight=3.0)]
    risk = bake_risk_grid(grid, obs)
    for y in range(grid.height):
        for x in range(grid.width):
            if risk.clamped[y, x]:
                continue
            s = total_risk(grid.to_world((x, y)), obs)
            assert risk.value[y, x] == s.value
            assert np.array_equal(risk.grad[y, x], s.gradient)


def test_bake_empty_and_argmax():
    grid = GridMap(10, 10)
    assert not bake_risk_grid(grid, []).value.any()
    risk = bake_risk_grid(grid, [static(mu=(6.2, 3.9), sigma=(1.0, 2.0))])
    y, x = np.unravel_index(np.argmax(risk.value), risk.value.shape)
    assert (x, y) == (6, 4)


def test_bake_clamps_mover_center():
    grid = GridMap(10, 10)
    risk = bake_risk_grid(grid, [mover(mu=(5.0, 5.0))])
    assert risk.clamped[5, 5] and risk.clamped.sum() == 1
    neighbours = risk.value[4:7, 4:7].copy()
    neighbours[1, 1] = -1
    assert risk.value[5, 5] == neighbours.max()
    np.testing.assert_array_equal(risk.grad[5, 5], [0, 0])


def test_backends_agree():
    rng = np.random.default_rng(4)
    pts = rng.uniform(-5, 5, (200, 2))
    mu = rng.uniform(-3, 3, (4, 2))
    sig = rng.uniform(0.5, 2, (4, 2))
    w = rng.uniform(0.5, 3, 4)
    vel = rng.uniform(-1, 1, (4, 2))
    k1 = np.ones(4)
    moving = np.array([True, False, True, False])
    a = kernels.risk_points_loop(pts, mu, sig, w, vel, k1, moving, 0.5, 0.0)
    b = kernels.risk_points_numpy(pts, mu, sig, w, vel, k1, moving, 0.5, 0.0)
    np.testing.assert_allclose(a[0], b[0], rtol=1e-13)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-12, atol=1e-15)


finite = st.floats(-6, 6, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(px=finite, py=finite, mx=finite, my=finite, sx=st.floats(0.3, 3), sy=st.floats(0.3, 3),
       k=st.floats(0.1, 5))
def test_static_gradient_fd(px, py, mx, my, sx, sy, k):
    o = static(mu=(mx, my), sigma=(sx, sy), k=k)
    s = static_risk((px, py), o)
    fd = fd_grad(lambda p: static_risk(p, o).value, (px, py), h=1e-5 * max(sx, sy))
    scale = max(np.linalg.norm(s.gradient), 1e-3 * s.value / min(sx, sy), 1e-300)
    assert np.linalg.norm(s.gradient - fd) / scale < 1e-5


@settings(max_examples=200, deadline=None)
@given(ang=st.floats(0, 2 * math.pi), r=st.floats(0.5, 6), vx=st.floats(-2, 2), vy=st.floats(-2, 2),
       k1=st.floats(0, 2))
def test_dynamic_gradient_fd(ang, r, vx, vy, k1):
    o = mover(v=(vx, vy))
    p = (r * math.cos(ang), r * math.sin(ang))
    s = dynamic_risk(p, o, k1)
    fd = fd_grad(lambda q: dynamic_risk(q, o, k1).value, p, h=1e-5 * r)
    assert np.linalg.norm(s.gradient - fd) / np.linalg.norm(s.gradient) < 1e-4


@settings(max_examples=100, deadline=None)
@given(ang=st.floats(0, 2 * math.pi), sx=st.floats(0.3, 3), sy=st.floats(0.3, 3))
def test_static_monotone_decay(ang, sx, sy):
    o = static(sigma=(sx, sy))
    d = np.array([math.cos(ang), math.sin(ang)])
    values = [static_risk(t * d, o).value for t in np.linspace(0, 3, 30)]
    assert all(b < a for a, b in zip(values, values[1:]) if a > 1e-300)


@settings(max_examples=100, deadline=None)
@given(vx=st.floats(-2, 2), vy=st.floats(-2, 2), k1=st.floats(0.05, 3), alpha=st.floats(0.1, 8))
def test_anisotropy(vx, vy, k1, alpha):
    speed = math.hypot(vx, vy)
    if speed < 1e-3:
        return
    o = mover(mu=(1.0, -2.0), v=(vx, vy))
    vhat = np.array([vx, vy]) / speed
    ahead = dynamic_risk(np.add(o.mu, alpha * vhat), o, k1).value
    behind = dynamic_risk(np.subtract(o.mu, alpha * vhat), o, k1).value
    assert ahead > behind
