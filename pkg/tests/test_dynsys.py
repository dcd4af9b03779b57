import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from saddle_exit import Ball, Box, LevelSet, find_fixed_point, project_L, project_v, spectral_data
from saddle_exit.dynsys import VectorFieldModel, fd_jacobian
from saddle_exit.errors import LeadingEigenvalueNotSimpleReal, NoConvergence, OutsideDomain
from saddle_exit.models import (
    Polynomial,
    PolynomialField,
    cubic_saddle,
    linear_model,
    make_field,
    registry_model,
)


def test_ball_g_is_distance_minus_radius(rng):
    b = Ball(1.5, dim=3)
    x = rng.normal(size=(50, 3))
    assert np.allclose(b.g(x), np.linalg.norm(x, axis=1) - 1.5, atol=1e-15)
    assert b.g(np.zeros(3)) < 0
    assert b.diameter == 3.0


def test_box_gradient_points_out_of_nearest_face():
    box = Box([-2, -1], [2, 1])
    assert box.g(np.array([1.9, 0.0])) == pytest.approx(-0.1)
    assert np.allclose(box.grad(np.array([1.9, 0.0])), [1, 0])
    assert np.allclose(box.grad(np.array([0.0, -0.95])), [0, -1])


def test_level_set_fd_gradient_matches_analytic():
    ls = LevelSet(lambda x: (x**2).sum(axis=-1) - 1.0, dim=2)
    x = np.array([0.3, -0.4])
    assert np.allclose(ls.grad(x), 2 * x, atol=1e-7)
    assert ls.diameter == pytest.approx(2.0, rel=1e-6)


def test_fd_jacobian_matches_polynomial(rng):
    f = cubic_saddle(1.0)
    x = rng.uniform(-0.5, 0.5, size=2)
    assert np.allclose(fd_jacobian(f, x), f.jacobian(x), atol=1e-8)


def test_polynomial_rejects_high_degree():
    with pytest.raises(ValueError):
        Polynomial([{"coef": 1.0, "powers": [5, 0]}], 2)


def test_polynomial_table_round_trip():
    f = make_field("spiral-stable-3d", {"coupling": 0.5})
    g = PolynomialField.from_table(f.to_table())
    x = np.random.default_rng(0).normal(size=(7, 3))
    assert np.array_equal(f(x), g(x))


def test_fixed_point_linear():
    m = registry_model("linear-saddle", Ball(1.0, dim=2))
    assert np.allclose(find_fixed_point(m, [0.1, 0.1]), 0, atol=1e-14)


def test_fixed_point_cubic():
    m = registry_model("cubic-saddle", Ball(1.0, dim=2))
    assert np.allclose(find_fixed_point(m, [0.05, 0.05]), 0, atol=1e-12)


def test_fixed_point_guess_outside_domain_rejected():
    m = registry_model("cubic-saddle", Ball(1.0, dim=2))
    with pytest.raises(OutsideDomain):
        find_fixed_point(m, [0.9, 0.9])


def test_fixed_point_other_root_found_from_inside_large_domain():
    # Newton from (0.9, 0.9) converges to the other equilibrium (1, 1)
    m = registry_model("cubic-saddle", Ball(3.0, dim=2))
    p = find_fixed_point(m, [0.9, 0.9])
    assert np.allclose(p, [1.0, 1.0], atol=1e-12)


def test_fixed_point_no_convergence():
    # x^2 + 1 has no real root
    f = PolynomialField([[{"coef": 1, "powers": [2]}, {"coef": 1, "powers": [0]}]], 1)
    m = VectorFieldModel(f, Ball(10.0, dim=1), 1, f.jacobian, Ball(1e6, dim=1))
    with pytest.raises(NoConvergence):
        find_fixed_point(m, [0.5], max_iter=20)


def test_spectral_diagonal():
    s = spectral_data(np.diag([1.0, -2.0]))
    assert s.lam == 1.0
    assert np.allclose(s.v, [1, 0]) and np.allclose(s.ell, [1, 0])
    assert s.gap == pytest.approx(3.0) and s.mu == pytest.approx(2.0)


def test_spectral_nonnormal():
    s = spectral_data(np.array([[1.0, 1.0], [0.0, -1.0]]))
    assert s.lam == pytest.approx(1.0)
    assert np.allclose(s.v, [1, 0], atol=1e-14)
    assert np.allclose(s.ell, [1, 0.5], atol=1e-14)
    assert s.gap == pytest.approx(2.0)


def test_spectral_symmetric_swap():
    s = spectral_data(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert s.lam == pytest.approx(1.0)
    assert np.allclose(s.v, np.array([1, 1]) / np.sqrt(2))
    assert np.allclose(s.ell, np.array([1, 1]) / np.sqrt(2))
    assert s.gap == pytest.approx(2.0)


def test_sign_convention_first_nonzero_positive():
    s = spectral_data(np.array([[-1.0, 0.0], [0.0, 2.0]]))
    assert np.allclose(s.v, [0, 1])


@pytest.mark.parametrize("A", [
    [[1.0, -2.0], [2.0, 1.0]],          # complex leading pair
    [[1.0, 0.0], [0.0, 1.0]],           # repeated
    [[-1.0, 0.0], [0.0, -2.0]],         # no positive eigenvalue
    [[1.0, 0.0], [0.0, 1.0 - 1e-10]],   # gap below tolerance
])
def test_spectral_rejections(A):
    with pytest.raises(LeadingEigenvalueNotSimpleReal):
        spectral_data(np.array(A))


def test_spectral_from_model_uses_jacobian(cubic):
    _, s = cubic
    assert s.lam == 1.0 and s.mu == 1.0


def test_projections_examples():
    s = spectral_data(np.diag([1.0, -2.0]))
    assert np.allclose(project_v(s, [3, 4]), [3, 0])
    assert np.allclose(project_L(s, [3, 4]), [0, 4])
    assert np.allclose(project_v(s, s.v), s.v)
    s2 = spectral_data(np.array([[1.0, 1.0], [0.0, -1.0]]))
    assert np.allclose(project_v(s2, [0, 1]), [0.5, 0])


def _random_saddle(seed, d):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(d, d))
    ev = np.linalg.eigvals(A)
    top = ev[np.argmax(ev.real)]
    if abs(top.imag) > 1e-6:
        # shift a real rank-one direction to dominate
        u = rng.normal(size=d)
        A = A + (np.max(np.abs(ev)) + 1.0) * np.outer(u, u) / (u @ u)
    return A


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), d=st.integers(2, 6))
def test_projection_algebra(seed, d):
    A = _random_saddle(seed, d)
    try:
        s = spectral_data(A)
    except LeadingEigenvalueNotSimpleReal:
        return
    x = np.random.default_rng(seed + 1).normal(size=(20, d))
    pv, pl = project_v(s, x), project_L(s, x)
    assert np.allclose(project_v(s, pv), pv, atol=1e-10)
    assert np.allclose(project_L(s, pl), pl, atol=1e-10)
    assert np.allclose(project_v(s, pl), 0, atol=1e-10)
    assert np.allclose(pv + pl, x, atol=1e-12)
    nA = np.linalg.norm(A, 2)
    assert np.linalg.norm(A @ s.v - s.lam * s.v) <= 1e-10 * nA
    assert np.linalg.norm(A.T @ s.ell - s.lam * s.ell) <= 1e-10 * nA * np.linalg.norm(s.ell)
    assert abs(s.ell @ s.v - 1) <= 1e-12 and abs(np.linalg.norm(s.v) - 1) <= 1e-12
    assert s.gap > 0


def test_expm_on_v_grows_at_lambda():
    A = np.array([[1.0, 1.0, 0.0], [0.0, -1.0, 2.0], [0.0, -2.0, -1.0]])
    s = spectral_data(A)
    for t in np.linspace(0, 5, 11):
        w = expm(A * t) @ s.v
        assert np.allclose(w, np.exp(s.lam * t) * s.v, rtol=1e-8)


def test_expm_on_L_grows_slower_than_gap():
    A = np.array([[1.0, 1.0, 0.0], [0.0, -1.0, 2.0], [0.0, -2.0, -1.0]])
    s = spectral_data(A)
    u = project_L(s, np.random.default_rng(3).normal(size=(5, 3)))
    ts = np.linspace(0, 1, 11)
    C2 = max(np.linalg.norm(expm(A * t) @ ui) / (np.exp((s.lam - s.gap / 2) * t) * np.linalg.norm(ui))
             for t in ts for ui in u)
    for t in np.linspace(0, 20, 41):
        for ui in u:
            assert np.linalg.norm(expm(A * t) @ ui) <= C2 * np.exp((s.lam - s.gap / 2) * t) * np.linalg.norm(ui)


def test_linear_model_jacobian_constant():
    A = np.array([[2.0, 1.0], [0.0, -1.0]])
    m = linear_model(A, Ball(1.0, dim=2))
    x = np.ones((4, 2))
    assert np.array_equal(m.jacobian(x), np.broadcast_to(A, (4, 2, 2)))
    assert np.allclose(m.b(x), x @ A.T)


def test_shifted_model_moves_fixed_point():
    m = registry_model("cubic-saddle", Ball(3.0, dim=2))
    ms = m.shifted([1.0, 1.0])
    assert np.allclose(ms.b(np.zeros(2)), 0)
    assert ms.domain.g(np.zeros(2)) < 0
    # J(1,1) = [[-2, 0], [2, -1]] is a stable node, not a saddle
    with pytest.raises(LeadingEigenvalueNotSimpleReal):
        spectral_data(ms)


def test_lipschitz_constant_cubic(cubic):
    m, _ = cubic
    # |J| over the ball of radius 0.5 is at most about sqrt(1 + 1) near the rim
    L = m.lipschitz_constant()
    assert 1.0 <= L <= 2.0
