import math

import numpy as np
import pytest

from saddle_exit import Ball, NoiseStream, spectral_data
from saddle_exit.errors import NoCrossing, NonFinite, OutsideDomain
from saddle_exit.mc import gronwall_check, run_batch
from saddle_exit.models import PolynomialField, build_model, linear_model, registry_model
from saddle_exit.sde import (
    LinearizedPath,
    classify_side,
    coupled_batch,
    exit_batch,
    linearized_batch,
    simulate_exit,
    simulate_linearized,
    simulate_path,
    tau_linear_threshold,
)


def bilinear_model():
    # b = (x + x y, -y): along the stable axis the x-rate is 1 + y(t)
    f = PolynomialField([[{"coef": 1, "powers": [1, 0]}, {"coef": 1, "powers": [1, 1]}],
                         [{"coef": -1, "powers": [0, 1]}]], 2)
    return build_model(f, Ball(1.0, dim=2))


def test_zero_noise_from_curve_point(linear):
    m, s = linear
    res = simulate_exit(m, s, [0.1, 0.0], 0.0, h=1e-3)
    assert res.tau == pytest.approx(math.log(10), abs=2e-3)
    assert np.allclose(res.exit_point, [1, 0], atol=1e-9)
    assert res.side == 1 and not res.capped


def test_exit_time_window(linear):
    m, s = linear
    smp = run_batch(m, s, None, np.zeros(2), 1e-4, 2000, 17)
    tau = np.array([x.tau for x in smp])
    L = math.log(1e4)
    assert np.mean((tau >= L - 5) & (tau <= L + 12)) >= 0.99
    assert all(x.tau > 0 and x.side in (-1, 0, 1) for x in smp)


def test_same_noise_bit_identical(linear):
    m, s = linear
    a = simulate_exit(m, s, np.zeros(2), 1e-3, noise=NoiseStream(7, 3))
    b = simulate_exit(m, s, np.zeros(2), 1e-3, noise=NoiseStream(7, 3))
    assert a.tau == b.tau and np.array_equal(a.exit_point, b.exit_point)


def test_batch_matches_single_paths(cubic):
    m, s = cubic
    batch = exit_batch(m, np.zeros(2), 1e-3, 1e-3, 5, np.arange(12), 60.0)
    for i in (0, 5, 11):
        one = simulate_exit(m, s, np.zeros(2), 1e-3, h=1e-3, noise=NoiseStream(5, i), t_cap=60.0)
        assert one.tau == batch.tau[i]
        assert np.array_equal(one.exit_point, batch.exit_point[i])


def test_threads_do_not_change_samples(cubic):
    m, s = cubic
    runs = [run_batch(m, s, None, np.zeros(2), 1e-3, 2100, 9, threads=t) for t in (1, 4, 16)]
    for r in runs[1:]:
        assert [x.tau for x in r] == [x.tau for x in runs[0]]
        assert all(np.array_equal(a.exit_point, b.exit_point) for a, b in zip(r, runs[0]))


def test_exit_point_near_boundary(cubic):
    m, _ = cubic
    b = exit_batch(m, np.zeros(2), 1e-2, 1e-3, 1, np.arange(200), 60.0)
    assert np.all(np.abs(m.domain.g(b.exit_point)) <= 1e-3 * 0.5)


def test_capped_paths(linear):
    m, s = linear
    res = simulate_exit(m, s, np.zeros(2), 1e-6, t_cap=2.0)
    assert res.capped and res.tau == 2.0 and res.side == 0


def test_leaving_enclosure_is_nonfinite():
    m = registry_model("linear-saddle", Ball(1.0, dim=2), enclosure=Ball(1.0001, dim=2))
    s = spectral_data(m)
    with pytest.raises(NonFinite):
        simulate_exit(m, s, [0.99, 0.0], 1.0, h=0.01, noise=NoiseStream(0, 1))


def test_start_outside_rejected(linear):
    m, s = linear
    with pytest.raises(OutsideDomain):
        simulate_exit(m, s, [2.0, 0.0], 1e-3)


def test_strong_order_on_refined_noise(linear):
    m, _ = linear
    h = 2e-3
    coarse = exit_batch(m, np.zeros(2), 1e-3, h, 4, np.arange(300), 60.0, refine=2)
    fine = exit_batch(m, np.zeros(2), 1e-3, h / 2, 4, np.arange(300), 60.0)
    diff = np.abs(coarse.tau - fine.tau)
    assert np.median(diff) <= math.sqrt(h)
    # additive noise: the error is in fact first order
    assert np.median(diff) <= 2 * h


def test_simulate_path_stops_at_exit(cubic):
    m, _ = cubic
    p = simulate_path(m, np.zeros(2), 1e-2, 1e-3, NoiseStream(2, 0), 40.0)
    assert p.stopped
    assert abs(m.domain.g(p.exit_point)) <= 1e-3 * 0.5
    assert np.all(m.domain.g(p.states[:-1]) < 0)


def test_classify_side():
    s = spectral_data(np.diag([1.0, -1.0]))
    pts = np.array([[1.0, 0.0], [-0.9, 0.1], [0.0, 1.0]])
    sides = classify_side(pts, s, np.array([1.0, 0.0]), np.array([-1.0, 0.0]), radius=0.5)
    assert sides.tolist() == [1, -1, 0]
    assert classify_side(pts[:2], s).tolist() == [1, -1]


def test_linearized_zero_noise_is_reference_orbit(cubic):
    m, s = cubic
    path = simulate_linearized(m, s, [0.0, 0.3], 0.0, 1e-3, NoiseStream(0, 0), 2.0)
    assert np.all(path.Y[0] == 0)
    assert np.array_equal(path.X_tilde, path.reference)
    assert path.reference[-1, 1] == pytest.approx(0.3 * math.exp(-2.0), rel=1e-9)


@pytest.mark.parametrize("t", [1.0, 2.0])
def test_variance_of_linear_coordinate(t):
    m = linear_model(np.diag([1.0, -2.0]), Ball(1.0, dim=2))
    s = spectral_data(m)
    n = 100_000
    _, Y, _ = linearized_batch(m, s, np.zeros(2), 2e-3, 31, np.arange(n), t, record_times=[t],
                               scaled=True)
    c = Y[:, 0] @ s.ell
    var = c.var(ddof=1)
    se = math.sqrt((np.mean((c - c.mean()) ** 4) - var**2) / n)
    assert abs(var - (math.exp(2 * t) - 1) / 2) <= 3 * se


def test_tau_linear_threshold_surrogates():
    s = spectral_data(np.diag([1.0, -1.0]))
    t = np.linspace(0, 10, 10_001)
    Y = np.exp(t)[:, None] * s.v
    p = LinearizedPath(t, Y, np.zeros_like(Y))
    assert tau_linear_threshold(p, s, 1e-3, 0.1) == pytest.approx(math.log(100), abs=1e-6)
    p2 = LinearizedPath(t, 0.5 * Y, np.zeros_like(Y))
    assert tau_linear_threshold(p2, s, 1e-3, 0.1) == pytest.approx(math.log(200), abs=1e-6)
    with pytest.raises(NoCrossing):
        tau_linear_threshold(p2, s, 1e-9, 0.1)


def test_scaled_linear_coordinate_stabilizes():
    m = bilinear_model()
    s = spectral_data(m)
    ts = np.arange(0.0, 12.0, 1.0)
    _, Y, _ = linearized_batch(m, s, [0.0, 0.5], 1e-3, 3, np.arange(200), 12.0,
                               record_times=ts, scaled=True)
    Nt = np.exp(-s.lam * ts)[None, :] * (Y @ s.ell)
    inc = np.mean(np.abs(np.diff(Nt, axis=1)), axis=0)
    late = inc[3:]   # beyond 5 / gap
    assert np.all(np.diff(np.log(late)) < 0)
    rate = -np.polyfit(ts[4:], np.log(late), 1)[0]
    assert rate > 0.5


def test_growth_of_Y_bounded():
    m = registry_model("cubic-saddle", Ball(0.5, dim=2))
    s = spectral_data(m)
    ts = np.linspace(0, 20, 41)
    _, Y, _ = linearized_batch(m, s, [0.0, 0.3], 2e-3, 8, np.arange(100), 20.0,
                               record_times=ts, scaled=True)
    mx = np.max(np.linalg.norm(Y, axis=2), axis=0) * np.exp(-(s.lam + 0.1) * ts)
    assert np.all(np.isfinite(mx))
    assert np.max(mx[ts >= 10]) <= np.max(mx[ts <= 10])
    assert np.polyfit(ts[ts >= 5], np.log(mx[ts >= 5]), 1)[0] <= 0


def test_coupled_linear_field_exact(linear):
    m, s = linear
    res = coupled_batch(m, s, np.zeros(2), 1e-3, 1e-3, 2, np.arange(50), [0.1, 0.05], 15.0)
    ok = np.isfinite(res.tau)
    assert ok.all()
    assert np.max(np.abs(res.X_at - res.Xt_at)) <= 1e-12


def test_gronwall_bound(cubic):
    m, _ = cubic
    rep = gronwall_check(m, np.array([0.0, 0.3]), 1e-2, 1e-3, 12, n=100)
    assert rep.passed and rep.n == 100
