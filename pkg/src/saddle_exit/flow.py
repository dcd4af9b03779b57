"""Deterministic flow: boundary exits, the unstable curve and the h± constants."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .dynsys import SpectralData, VectorFieldModel, project_L
from .errors import (
    LeftEnclosure,
    NoCrossing,
    NoExit,
    NonmonotoneTable,
    StepTooLarge,
    TangentialIntersection,
)


@dataclass(frozen=True)
class StepControl:
    """Integrator choice: fixed-step ``"rk4"`` or adaptive ``"adaptive"`` (DOP853)."""

    method: str = "adaptive"
    h: float = 1e-3
    rtol: float = 1e-9
    atol: float = 1e-15

    def __post_init__(self):
        if self.method not in ("rk4", "adaptive"):
            raise ValueError(f"unknown step method {self.method!r}")


DEFAULT_STEP = StepControl()


@dataclass
class FlowResult:
    exit_time: float
    exit_point: np.ndarray | None
    times: np.ndarray | None = None
    states: np.ndarray | None = None

    @property
    def exited(self) -> bool:
        return math.isfinite(self.exit_time)


def rk4_step(f, x, h):
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _run_until(model, x0, t_max, event, step, tol_event, record):
    """Integrate until ``event(x)`` turns nonnegative, U is left, or t_max.

    Returns ``(t, x, times, states)`` with ``t = inf`` when no event occurs.
    """
    x0 = np.asarray(x0, dtype=float)
    b = model.b
    gU = model.enclosure.g
    if step.method == "rk4":
        return _run_rk4(b, gU, x0, t_max, event, step.h, tol_event, record)

    ev = lambda t, x: event(x)
    ev.terminal, ev.direction = True, 1.0
    leave = lambda t, x: gU(x)
    leave.terminal, leave.direction = True, 1.0
    try:
        sol = solve_ivp(lambda t, x: b(x), (0.0, t_max), x0, method="DOP853",
                        rtol=step.rtol, atol=step.atol, events=(ev, leave))
    except RuntimeError:
        # event root finding can stall on very flat (near-tangential) crossings
        return _run_rk4(b, gU, x0, t_max, event, step.h, tol_event, record)
    times, states = (sol.t, sol.y.T) if record else (None, None)
    if sol.t_events[0].size:
        t_e = float(sol.t_events[0][0])
        x_e = sol.y_events[0][0]
        t_e, x_e = _polish_event(b, event, t_e, x_e, tol_event, model.dim)
        return t_e, x_e, times, states
    if sol.t_events[1].size:
        raise LeftEnclosure(f"trajectory from {x0.tolist()} left U before reaching the target")
    if sol.status < 0:
        raise StepTooLarge(sol.message)
    return math.inf, sol.y[:, -1], times, states


def _polish_event(b, event, t, x, tol, d):
    # first-order flow corrections t -> t - e / (grad e . b)
    for _ in range(8):
        e = event(x)
        if abs(e) <= tol:
            return t, x
        fx = b(x)
        grad = np.array([(event(x + 1e-7 * u) - event(x - 1e-7 * u)) / 2e-7 for u in np.eye(d)])
        rate = grad @ fx
        if rate == 0:
            break
        dt = -e / rate
        x = rk4_step(b, x, dt)
        t += dt
    if abs(event(x)) <= tol:
        return t, x
    raise StepTooLarge(f"event residual {event(x):.3g} above tolerance {tol:g}")


def _run_rk4(b, gU, x, t_max, event, h, tol_event, record):
    t = 0.0
    times, states = ([t], [x]) if record else (None, None)
    n_steps = int(math.ceil(t_max / h))
    for _ in range(n_steps):
        x_new = rk4_step(b, x, h)
        e_new = event(x_new)
        if not np.isfinite(e_new):
            raise StepTooLarge("non-finite state during RK4 integration")
        if e_new >= 0:
            e_old = event(x)
            phi = lambda theta: event(rk4_step(b, x, theta * h))
            if e_old >= 0 or phi(1.0) < 0:
                raise StepTooLarge("could not bracket the crossing inside the last step")
            try:
                theta = brentq(phi, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
                x_e = rk4_step(b, x, theta * h)
            except RuntimeError:
                x_e = None
            if x_e is None or abs(event(x_e)) > tol_event:
                # bisection fallback on the bracket
                lo, hi = 0.0, 1.0
                for _ in range(200):
                    mid = 0.5 * (lo + hi)
                    if phi(mid) < 0:
                        lo = mid
                    else:
                        hi = mid
                    if abs(phi(hi)) <= tol_event:
                        break
                theta = hi
                x_e = rk4_step(b, x, theta * h)
                if abs(event(x_e)) > tol_event:
                    raise StepTooLarge("bisection failed to reach the event tolerance")
            if record:
                times.append(t + theta * h)
                states.append(x_e)
            return t + theta * h, x_e, _arr(times), _arr(states)
        if gU(x_new) > 0:
            raise LeftEnclosure("trajectory left U before reaching the target")
        x = x_new
        t += h
        if record:
            times.append(t)
            states.append(x)
    return math.inf, x, _arr(times), _arr(states)


def _arr(a):
    return None if a is None else np.asarray(a)


def integrate_flow(model: VectorFieldModel, x0, t_max: float = 100.0,
                   step: StepControl = DEFAULT_STEP, tol_exit: float = 1e-10,
                   record: bool = False) -> FlowResult:
    """Flow ``x0`` until it first hits the boundary of G.

    Returns ``exit_time = inf`` (and the final state in ``exit_point``) when
    no exit happens before ``t_max``.
    """
    t, x, times, states = _run_until(model, x0, t_max, model.domain.g, step, tol_exit, record)
    return FlowResult(t, x, times, states)


def flow_for(model: VectorFieldModel, x0, t: float, step: StepControl = DEFAULT_STEP):
    """``S^t x0`` ignoring the boundary of G (enclosure still enforced)."""
    if t == 0:
        return np.asarray(x0, dtype=float)
    if step.method == "rk4":
        n = max(1, int(math.ceil(t / step.h)))
        x = np.asarray(x0, dtype=float)
        for _ in range(n):
            x = rk4_step(model.b, x, t / n)
        return x
    sol = solve_ivp(lambda s, x: model.b(x), (0.0, t), np.asarray(x0, dtype=float),
                    method="DOP853", rtol=step.rtol, atol=step.atol)
    return sol.y[:, -1]


# ---------------------------------------------------------------- unstable curve

def default_delta_max(model: VectorFieldModel, s: SpectralData) -> float:
    """Largest delta with ``delta * |J'(0)| / gap < 0.1``."""
    d = model.dim
    hstep = 1e-4
    curv = 0.0
    for j in range(d):
        e = np.zeros(d)
        e[j] = hstep
        dJ = (model.jacobian(e) - model.jacobian(-e)) / (2 * hstep)
        curv = max(curv, float(np.linalg.norm(dJ, 2)))
    rate = s.gap if math.isfinite(s.gap) else s.lam
    bound = 0.5 * model.domain.diameter
    return bound if curv == 0 else min(bound, 0.1 * rate / curv)


def unstable_curve_point(model: VectorFieldModel, s: SpectralData, delta: float, sign: int = 1,
                         t_relax: float | None = None, step: StepControl = DEFAULT_STEP,
                         tol: float = 1e-13, check_delta: bool = True) -> np.ndarray:
    """The point ``gamma(sign * delta)`` of the unstable curve.

    The curve is reached by relaxation: seed at ``sign * delta_seed * v`` with
    ``delta_seed = delta * exp(-lam * t_relax)`` and flow forward until the
    v-coordinate reaches ``sign * delta``. The transverse seeding error is
    contracted by roughly ``exp(-gap * t_relax)``.

    The curve is assumed C^2; only the ``O(delta^2)`` transverse deviation
    is checked (see :meth:`UnstableCurveData.transverse_constant`).
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if check_delta and delta > default_delta_max(model, s):
        raise ValueError(f"delta={delta:g} exceeds the validity radius of the curve approximation")
    sign = 1 if sign > 0 else -1
    if t_relax is None:
        t_relax = 5.0 / s.gap if math.isfinite(s.gap) else 0.0
    seed = sign * delta * math.exp(-s.lam * t_relax) * s.v
    if t_relax == 0:
        return seed
    ell = s.ell
    target = lambda x: sign * (x @ ell) - delta
    stop = lambda x: max(target(x), model.domain.g(x))
    t_max = 10.0 * t_relax + 50.0 / s.lam
    t, x, _, _ = _run_until(model, seed, t_max, stop, step, tol * max(delta, 1e-300), False)
    if not math.isfinite(t) or abs(target(x)) > tol * max(1.0, delta) * 10:
        raise NoCrossing(f"v-coordinate never reached {sign * delta:g} inside G")
    return x


@dataclass
class UnstableCurveData:
    q_plus: np.ndarray
    q_minus: np.ndarray
    transversality_plus: float
    transversality_minus: float
    gamma_samples: dict = field(default_factory=dict)

    def transverse_constant(self, s: SpectralData):
        """Fit ``|Pi_L gamma(delta)| <= C delta^2`` on the two largest |delta|.

        Returns ``(C, ok)`` where ``ok`` says the bound holds on the rest of
        the sample grid (with a 1e-12 absolute floor for rounding).
        """
        deltas = sorted({abs(k) for k in self.gamma_samples}, reverse=True)
        dev = lambda d: max(np.linalg.norm(project_L(s, self.gamma_samples[k]))
                            for k in (d, -d) if k in self.gamma_samples)
        C = max(dev(d) / d**2 for d in deltas[:2])
        ok = all(dev(d) <= C * d**2 * (1 + 1e-6) + 1e-12 for d in deltas[2:])
        return C, ok


def geometric_grid(delta0: float = 1e-2, K: int = 6, ratio: float = 0.5):
    return [delta0 * ratio**k for k in range(K + 1)]


def boundary_hits(model: VectorFieldModel, s: SpectralData, delta_ref: float = 1e-2,
                  grid=None, step: StepControl = DEFAULT_STEP, t_max: float | None = None,
                  tol_trans: float = 1e-6) -> UnstableCurveData:
    """Follow the unstable curve from ``gamma(±delta_ref)`` to the boundary of G."""
    if t_max is None:
        t_max = 200.0 / s.lam
    grid = geometric_grid(delta_ref) if grid is None else list(grid)
    samples = {}
    for sign in (1, -1):
        for d in grid:
            samples[sign * d] = unstable_curve_point(model, s, d, sign, step=step)
        if delta_ref not in grid:
            samples[sign * delta_ref] = unstable_curve_point(model, s, delta_ref, sign, step=step)
    hits = {}
    for sign in (1, -1):
        res = integrate_flow(model, samples[sign * delta_ref], t_max, step)
        if not res.exited:
            raise NoExit(f"unstable curve on side {sign:+d} did not reach the boundary by t={t_max:g}")
        q = res.exit_point
        bq = model.b(q)
        gq = model.domain.grad(q)
        trans = abs(float(gq @ bq))
        if trans <= tol_trans * np.linalg.norm(bq) * np.linalg.norm(gq):
            raise TangentialIntersection(f"unstable curve meets the boundary tangentially at {q.tolist()}")
        hits[sign] = (q, trans)
    return UnstableCurveData(hits[1][0], hits[-1][0], hits[1][1], hits[-1][1], samples)


@dataclass
class HConstants:
    h_plus: float
    h_minus: float
    h_plus_error: float
    h_minus_error: float
    raw_table: dict

    @property
    def extrapolation_error_estimate(self) -> float:
        return max(self.h_plus_error, self.h_minus_error)


def _check_linear_decay(a, grid, floor):
    """Differences of a(delta_k) must shrink roughly like the grid ratio."""
    diffs = np.abs(np.diff(a))
    for k in range(len(diffs) - 1):
        if diffs[k] <= floor or diffs[k + 1] <= floor:
            continue
        expected = grid[k + 1] / grid[k]
        ratio = diffs[k + 1] / diffs[k]
        if not expected / 4 <= ratio <= expected * 4:
            return False
    return True


def h_constants(model: VectorFieldModel, s: SpectralData, curve: UnstableCurveData | None = None,
                grid=None, step: StepControl = DEFAULT_STEP, t_max: float | None = None,
                noise_floor: float = 1e-8) -> HConstants:
    """Extrapolate ``h± = lim (ln(delta)/lam + T^G(gamma(±delta)))``.

    ``a(delta) - h`` is O(delta) along a geometric grid, so a first-order
    Richardson step on the two smallest deltas removes the leading error.
    The reported error is ``|a(delta_K) - a(delta_{K-1})|``.
    """
    grid = geometric_grid() if grid is None else sorted(grid, reverse=True)
    if t_max is None:
        t_max = 200.0 / s.lam
    samples = {} if curve is None else curve.gamma_samples
    out, table = {}, {}
    for sign, label in ((1, "plus"), (-1, "minus")):
        a = []
        for d in grid:
            start = samples.get(sign * d)
            if start is None:
                start = unstable_curve_point(model, s, d, sign, step=step)
            res = integrate_flow(model, start, t_max, step)
            if not res.exited:
                raise NoExit(f"flow from gamma({sign * d:g}) did not exit G")
            a.append(math.log(d) / s.lam + res.exit_time)
        a = np.array(a)
        if not _check_linear_decay(a, grid, noise_floor):
            raise NonmonotoneTable(f"a(delta) on side {label} is outside the asymptotic regime: {a}")
        r = grid[-1] / grid[-2]
        h = (a[-1] - r * a[-2]) / (1.0 - r)
        out[label] = (h, abs(a[-1] - a[-2]))
        table[label] = [(float(d), float(v)) for d, v in zip(grid, a)]
    return HConstants(out["plus"][0], out["minus"][0], out["plus"][1], out["minus"][1], table)
