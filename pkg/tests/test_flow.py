import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.linalg import expm

from saddle_exit import Ball, Box, LevelSet, project_L, spectral_data
from saddle_exit.dynsys import VectorFieldModel
from saddle_exit.errors import NoCrossing, NonmonotoneTable, TangentialIntersection
from saddle_exit.flow import (
    StepControl,
    boundary_hits,
    flow_for,
    h_constants,
    integrate_flow,
    unstable_curve_point,
)
from saddle_exit.models import (
    PolynomialField,
    build_model,
    cubic_exit_abscissa,
    cubic_manifold_height,
    linear_model,
    registry_model,
)

RK4 = StepControl(method="rk4", h=1e-3)


def _one_d_linear():
    f = PolynomialField([[{"coef": 1.0, "powers": [1]}]], 1)
    return build_model(f, Box([-1.0], [1.0]))


@pytest.mark.parametrize("step", [StepControl(), RK4])
def test_exit_time_one_d_linear(step):
    res = integrate_flow(_one_d_linear(), [1e-3], step=step)
    assert res.exit_time == pytest.approx(math.log(1e3), abs=1e-8)
    assert res.exit_point[0] == pytest.approx(1.0, abs=1e-10)


def test_stable_axis_never_exits(linear):
    m, _ = linear
    res = integrate_flow(m, [0.0, 0.5], t_max=30.0)
    assert not res.exited and res.exit_time == math.inf


@pytest.mark.parametrize("step", [StepControl(), RK4])
def test_cubic_exit_time_matches_quadrature(step):
    m = registry_model("cubic-saddle", Ball(0.5, dim=2), {"coupling": 0.0})
    ref, _ = quad(lambda x: 1.0 / (x - x**3), 0.1, 0.5, epsabs=1e-14, epsrel=1e-13)
    res = integrate_flow(m, [0.1, 0.0], step=step)
    assert res.exit_time == pytest.approx(ref, abs=1e-8)
    assert abs(m.domain.g(res.exit_point)) <= 1e-10


def test_exit_point_on_boundary_random_starts(cubic, rng):
    m, _ = cubic
    for _ in range(20):
        x0 = rng.uniform(-0.3, 0.3, size=2)
        res = integrate_flow(m, x0, t_max=60.0)
        if res.exited:
            assert abs(m.domain.g(res.exit_point)) <= 1e-10
            assert res.exit_time > 0


@settings(max_examples=15, deadline=None)
@given(x=st.tuples(st.floats(-0.3, 0.3), st.floats(-0.3, 0.3)),
       t=st.floats(0.0, 1.0), s=st.floats(0.0, 1.0))
def test_flow_property(x, t, s):
    m = registry_model("cubic-saddle", Ball(10.0, dim=2))
    step = StepControl(rtol=1e-10)
    a = flow_for(m, x, t + s, step)
    b = flow_for(m, flow_for(m, x, t, step), s, step)
    assert np.allclose(a, b, rtol=10 * 1e-10 * 10, atol=1e-10)


def test_linear_flow_matches_expm():
    A = np.array([[1.0, 2.0, 0.0], [0.0, -1.0, 1.0], [0.0, -1.0, -0.5]])
    m = linear_model(A, Ball(1e3, dim=3))
    x = np.array([0.3, -0.2, 0.1])
    step = StepControl(rtol=1e-12)
    for t in (0.5, 1.0, 2.5, 5.0):
        assert np.allclose(flow_for(m, x, t, step), expm(A * t) @ x, rtol=1e-8)


def test_curve_linear_saddle(linear):
    m, s = linear
    assert np.allclose(unstable_curve_point(m, s, 0.1), [0.1, 0.0], atol=1e-12)
    assert np.allclose(unstable_curve_point(m, s, 0.1, sign=-1), [-0.1, 0.0], atol=1e-12)


def test_curve_quadratic_graph():
    # b = (x, -y + x^2) has the invariant graph y = x^2 / 3
    f = PolynomialField([[{"coef": 1, "powers": [1, 0]}],
                         [{"coef": -1, "powers": [0, 1]}, {"coef": 1, "powers": [2, 0]}]], 2)
    m = build_model(f, Ball(1.0, dim=2))
    s = spectral_data(m)
    d = 0.05
    p = unstable_curve_point(m, s, d)
    assert p[0] == pytest.approx(d, abs=1e-14)
    assert abs(p[1] - d * d / 3) <= 1e-3 * d * d


def test_curve_cubic_closed_form(cubic):
    m, s = cubic
    for d in (0.05, 0.02):
        p = unstable_curve_point(m, s, d)
        assert p[1] == pytest.approx(cubic_manifold_height(d), rel=1e-3)


def test_curve_delta_too_large_rejected(cubic):
    m, s = cubic
    with pytest.raises(ValueError):
        unstable_curve_point(m, s, 0.4)


def test_no_crossing_when_domain_too_small():
    m = registry_model("linear-saddle", Ball(0.05, dim=2))
    s = spectral_data(m)
    with pytest.raises(NoCrossing):
        unstable_curve_point(m, s, 0.1, check_delta=False)


def test_boundary_hits_linear_ball(linear):
    m, s = linear
    c = boundary_hits(m, s)
    assert np.allclose(c.q_plus, [1, 0], atol=1e-10)
    assert np.allclose(c.q_minus, [-1, 0], atol=1e-10)
    assert c.transversality_plus > 0


def test_boundary_hits_linear_box():
    m = registry_model("linear-saddle", Box([-2, -1], [2, 1]))
    c = boundary_hits(m, spectral_data(m))
    assert np.allclose(c.q_plus, [2, 0], atol=1e-10)
    assert np.allclose(c.q_minus, [-2, 0], atol=1e-10)


def test_boundary_hits_cubic_uncoupled():
    m = registry_model("cubic-saddle", Ball(0.5, dim=2), {"coupling": 0.0})
    c = boundary_hits(m, spectral_data(m))
    assert np.allclose(c.q_plus, [0.5, 0], atol=1e-10)
    assert np.allclose(c.q_minus, [-0.5, 0], atol=1e-10)


def test_boundary_hits_cubic_coupled(cubic):
    m, s = cubic
    c = boundary_hits(m, s)
    xs = cubic_exit_abscissa(0.5)
    assert np.allclose(c.q_plus, [xs, cubic_manifold_height(xs)], atol=1e-9)
    assert np.allclose(c.q_minus, [-xs, cubic_manifold_height(xs)], atol=1e-9)


def test_transverse_deviation_is_quadratic(cubic):
    m, s = cubic
    c = boundary_hits(m, s)
    C, ok = c.transverse_constant(s)
    assert ok and 0.2 < C < 0.5   # height ~ delta^2 / 3
    for d, p in c.gamma_samples.items():
        assert np.linalg.norm(project_L(s, p)) <= C * d * d * (1 + 1e-6) + 1e-12


def test_tangential_intersection_detected():
    # boundary y = (x - 1)^3 is tangent to the x-axis (the unstable curve) at (1, 0)
    g = lambda x: (x[..., 0] - 1.0) ** 3 - x[..., 1]
    dom = LevelSet(g, 2, diameter=4.0)
    f = PolynomialField([[{"coef": 1, "powers": [1, 0]}], [{"coef": -1, "powers": [0, 1]}]], 2)
    m = VectorFieldModel(f, dom, 2, f.jacobian, Ball(10.0, dim=2))
    with pytest.raises(TangentialIntersection):
        boundary_hits(m, spectral_data(m))


@pytest.mark.parametrize("lam,R,h", [(1.0, 1.0, 0.0), (2.0, 1.0, 0.0), (2.0, math.e, 0.5)])
def test_h_linear_closed_form(lam, R, h):
    m = registry_model("linear-saddle", Ball(R, dim=2), {"lam": lam})
    s = spectral_data(m)
    hc = h_constants(m, s)
    assert hc.h_plus == pytest.approx(h, abs=1e-7)
    assert hc.h_minus == pytest.approx(h, abs=1e-7)


def test_h_one_d_cubic():
    f = PolynomialField([[{"coef": 1, "powers": [1]}, {"coef": -1, "powers": [3]}]], 1)
    m = build_model(f, Box([-0.5], [0.5]))
    s = spectral_data(m)
    hc = h_constants(m, s)
    ref = math.log(0.5) - 0.5 * math.log(0.75)
    assert hc.h_plus == pytest.approx(ref, abs=1e-6)
    assert hc.h_minus == pytest.approx(ref, abs=1e-6)


def test_h_cubic_saddle_and_error_model(cubic):
    m, s = cubic
    hc = h_constants(m, s)
    xs = cubic_exit_abscissa(0.5)
    ref = math.log(xs) - 0.5 * math.log(1 - xs * xs)
    assert abs(hc.h_plus - ref) <= 1e-4 and abs(hc.h_minus - ref) <= 1e-4
    assert abs(hc.h_plus - ref) <= 10 * hc.h_plus_error + 1e-9
    a = np.array([v for _, v in hc.raw_table["plus"]])
    for k in (-3, -2):
        assert abs(a[k + 1] - hc.h_plus) <= 0.7 * abs(a[k] - hc.h_plus)


def test_nonmonotone_table_rejected(cubic):
    m, s = cubic
    # a grid with wildly uneven ratios breaks the linear error model
    with pytest.raises(NonmonotoneTable):
        h_constants(m, s, grid=[0.05, 0.049, 1e-4, 0.99e-4], noise_floor=0.0)
