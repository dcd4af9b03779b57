"""Euler-Maruyama simulation of ``dX = b(X) dt + eps dW`` and its linearization.

All engines are vectorized over a batch of trajectories but every operation
is elementwise per trajectory, and noise comes from :mod:`saddle_exit.noise`,
so a trajectory's result does not depend on which batch it ran in.

Two schemes are available for the equation in variations
``dY = A(t) Y dt + dW``:

* plain Euler-Maruyama, step for step the same discretization as the
  nonlinear simulator, used for coupled (same-noise) comparisons;
* ``scaled=True``: Euler-Maruyama on ``U = exp(-lam t) Y``, whose noise
  weight ``exp(-lam (t + h/2))`` integrates the growing direction without
  the ``(1 + lam h)^n`` versus ``exp(lam t)`` drift of the plain scheme.
  Used for reading off N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynsys import SpectralData, VectorFieldModel, project_L
from .errors import NoCrossing, NonFinite, OutsideDomain
from .noise import CHUNK, STREAM_SDE, NoiseStream, batch_normals

BLOCK = 1024


def default_step(lam: float) -> float:
    return min(1e-3, 1e-2 / lam)


def default_t_cap(eps: float, lam: float) -> float:
    return 4.0 * math.log(1.0 / eps) / lam + 50.0 / lam


def _increments(seed, indices, n0, count, d, h, refine, stream):
    z = batch_normals(seed, indices, n0 * refine, count * refine, d, stream)
    z = z.reshape(len(indices), count, refine, d)
    if refine > 1:
        z = z.sum(axis=2)
    else:
        z = z[:, :, 0, :]
    return math.sqrt(h / refine) * z


def _blocks(indices):
    indices = np.asarray(indices, dtype=np.int64)
    for k in range(0, len(indices), BLOCK):
        yield slice(k, k + BLOCK), indices[k:k + BLOCK]


def _matvec(A, y):
    # explicit column sum: keeps results independent of batch shape
    out = A[:, 0] * y[:, :1]
    for j in range(1, y.shape[1]):
        out = out + A[:, j] * y[:, j:j + 1]
    return out


# ---------------------------------------------------------------- exit sampling

@dataclass
class ExitSample:
    trajectory_index: int
    eps: float
    tau: float
    exit_point: np.ndarray
    side: int
    capped: bool
    seed: int
    nonfinite: bool = False


@dataclass
class ExitBatch:
    """Column-oriented exit records for a batch of trajectories."""

    indices: np.ndarray
    tau: np.ndarray
    exit_point: np.ndarray
    capped: np.ndarray
    nonfinite: np.ndarray


def exit_batch(model: VectorFieldModel, x0, eps: float, h: float, seed: int, indices,
               t_cap: float, refine: int = 1, stream: int = STREAM_SDE,
               crossing_iters: int = 4) -> ExitBatch:
    """First exits from G of Euler-Maruyama paths started at ``x0``.

    The crossing inside the last step is located by regula falsi on the
    segment between the two Euler states; exit time and point use the same
    fraction of the step. Paths still inside at ``t_cap`` are marked capped.
    """
    indices = np.asarray(indices, dtype=np.int64)
    d = model.dim
    x0 = np.asarray(x0, dtype=float)
    if model.domain.g(x0) >= 0:
        raise OutsideDomain(f"start point {x0.tolist()} is not inside G")
    B = len(indices)
    tau = np.full(B, np.nan)
    pts = np.full((B, d), np.nan)
    capped = np.zeros(B, dtype=bool)
    bad = np.zeros(B, dtype=bool)
    for sl, idx in _blocks(indices):
        t, p, c, nf = _exit_block(model, x0, eps, h, seed, idx, t_cap, refine, stream, crossing_iters)
        tau[sl], pts[sl], capped[sl], bad[sl] = t, p, c, nf
    return ExitBatch(indices, tau, pts, capped, bad)


def _exit_block(model, x0, eps, h, seed, indices, t_cap, refine, stream, iters):
    b, g, gU = model.b, model.domain.g, model.enclosure.g
    d = model.dim
    B = len(indices)
    tau = np.full(B, np.nan)
    pts = np.full((B, d), np.nan)
    capped = np.zeros(B, dtype=bool)
    bad = np.zeros(B, dtype=bool)
    n_max = int(math.ceil(t_cap / h - 1e-9))
    active = np.arange(B)
    x = np.tile(x0, (B, 1))
    gx = g(x)
    n = 0
    while active.size and n < n_max:
        cnt = min(CHUNK, n_max - n)
        dW = _increments(seed, indices[active], n, cnt, d, h, refine, stream)
        for j in range(cnt):
            xn = x + h * b(x) + eps * dW[:, j]
            gn = g(xn)
            hit = gn >= 0
            broken = ~np.isfinite(gn)
            if hit.any() or broken.any():
                broken |= hit & (gU(xn) > 0)
                hit &= ~broken
                if hit.any():
                    theta = _crossing_fraction(g, x[hit], xn[hit], gx[hit], gn[hit], iters)
                    ids = active[hit]
                    tau[ids] = (n + j + theta) * h
                    pts[ids] = x[hit] + theta[:, None] * (xn[hit] - x[hit])
                if broken.any():
                    ids = active[broken]
                    bad[ids] = True
                    tau[ids] = (n + j + 1) * h
                    pts[ids] = xn[broken]
                keep = ~(hit | broken)
                active, x, gx, dW = active[keep], xn[keep], gn[keep], dW[keep]
                if not active.size:
                    break
            else:
                x, gx = xn, gn
        n += cnt
    if active.size:
        capped[active] = True
        tau[active] = t_cap
        pts[active] = x
    return tau, pts, capped, bad


def _crossing_fraction(g, x, xn, g0, g1, iters):
    lo = np.zeros(len(x))
    hi = np.ones(len(x))
    glo, ghi = g0.copy(), g1.copy()
    theta = glo / (glo - ghi)
    for _ in range(iters):
        gt = g(x + theta[:, None] * (xn - x))
        below = gt < 0
        lo = np.where(below, theta, lo)
        glo = np.where(below, gt, glo)
        hi = np.where(below, hi, theta)
        ghi = np.where(below, ghi, gt)
        denom = glo - ghi
        theta = np.where(denom != 0, lo + (hi - lo) * glo / np.where(denom != 0, denom, 1.0), hi)
    return np.clip(theta, 0.0, 1.0)


def classify_side(points, s: SpectralData, q_plus=None, q_minus=None, radius=None):
    """Label exit points +1/-1 by the nearer of q±, 0 when both are farther than ``radius``.

    Without q± the sign of the v-coordinate is used.
    """
    points = np.asarray(points, dtype=float)
    if q_plus is None:
        return np.sign(points @ s.ell).astype(int)
    dp = np.linalg.norm(points - q_plus, axis=-1)
    dm = np.linalg.norm(points - q_minus, axis=-1)
    side = np.where(dp <= dm, 1, -1)
    if radius is not None:
        side = np.where(np.minimum(dp, dm) > radius, 0, side)
    side = np.where(np.isfinite(dp) & np.isfinite(dm), side, 0)
    return side.astype(int)


def simulate_exit(model: VectorFieldModel, s: SpectralData, x0, eps: float,
                  h: float | None = None, noise: NoiseStream | None = None,
                  t_cap: float | None = None, q_plus=None, q_minus=None,
                  refine: int = 1) -> ExitSample:
    """One exit sample ``(tau, H)`` of the nonlinear SDE.

    Paths reaching ``t_cap`` come back with ``capped=True`` rather than an
    error; a state that leaves U or becomes non-finite raises NonFinite.
    """
    h = default_step(s.lam) if h is None else h
    noise = NoiseStream(0, 0) if noise is None else noise
    if t_cap is None:
        t_cap = default_t_cap(eps, s.lam) if eps > 0 else 100.0 / s.lam
    res = exit_batch(model, x0, eps, h, noise.seed, [noise.trajectory_index], t_cap,
                     refine, noise.stream)
    if res.nonfinite[0]:
        raise NonFinite(f"trajectory {noise.trajectory_index} left U or overflowed")
    radius = None if q_plus is None else model.domain.diameter / 4
    side = 0 if res.capped[0] else int(classify_side(res.exit_point, s, q_plus, q_minus, radius)[0])
    return ExitSample(noise.trajectory_index, eps, float(res.tau[0]), res.exit_point[0],
                      side, bool(res.capped[0]), noise.seed)


@dataclass
class SdePath:
    times: np.ndarray
    states: np.ndarray
    stopped: bool
    tau: float
    exit_point: np.ndarray | None
    wiener: np.ndarray | None = None


def em_paths(model: VectorFieldModel, x0, eps: float, h: float, seed: int, indices,
             t_end: float, refine: int = 1, stream: int = STREAM_SDE):
    """Full Euler-Maruyama paths without stopping, plus the driving W.

    Returns ``(times, X, W)`` with shapes ``(n+1,)``, ``(B, n+1, d)``,
    ``(B, n+1, d)``. Intended for short horizons.
    """
    d = model.dim
    n = int(math.ceil(t_end / h - 1e-9))
    idx = np.asarray(indices, dtype=np.int64)
    dW = _increments(seed, idx, 0, n, d, h, refine, stream)
    X = np.empty((len(idx), n + 1, d))
    X[:, 0] = np.asarray(x0, dtype=float)
    x = X[:, 0].copy()
    for k in range(n):
        x = x + h * model.b(x) + eps * dW[:, k]
        X[:, k + 1] = x
    W = np.concatenate([np.zeros((len(idx), 1, d)), np.cumsum(dW, axis=1)], axis=1)
    return np.arange(n + 1) * h, X, W


def simulate_path(model: VectorFieldModel, x0, eps: float, h: float, noise: NoiseStream,
                  t_end: float) -> SdePath:
    """A recorded path, stopped at the first exit from G if one happens."""
    times, X, W = em_paths(model, x0, eps, h, noise.seed, [noise.trajectory_index], t_end,
                           stream=noise.stream)
    X, W = X[0], W[0]
    gv = model.domain.g(X)
    out = np.flatnonzero(gv >= 0)
    if not out.size:
        return SdePath(times, X, False, math.inf, None, W)
    k = out[0]
    theta = gv[k - 1] / (gv[k - 1] - gv[k])
    point = X[k - 1] + theta * (X[k] - X[k - 1])
    return SdePath(times[:k + 1], X[:k + 1], True, (k - 1 + theta) * h, point, W[:k + 1])


# ---------------------------------------------------------------- linearization

def reference_orbit(model: VectorFieldModel, x0, h: float, n_steps: int,
                    origin_tol: float = 1e-7) -> np.ndarray:
    """RK4 samples of ``S^{t_n} x0`` on the grid ``t_n = n h``.

    Once the orbit is within ``origin_tol`` of the fixed point it is set to 0
    exactly; past that point a numerically integrated stable-manifold orbit
    would only drift away along the unstable direction.
    """
    x = np.asarray(x0, dtype=float).copy()
    out = np.zeros((n_steps + 1, model.dim))
    if np.linalg.norm(x) <= origin_tol:
        return out
    out[0] = x
    b = model.b
    for k in range(n_steps):
        k1 = b(x)
        k2 = b(x + 0.5 * h * k1)
        k3 = b(x + 0.5 * h * k2)
        k4 = b(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if np.linalg.norm(x) <= origin_tol:
            break
        out[k + 1] = x
    return out


@dataclass
class LinearizedPath:
    """``Y`` on the grid ``times`` and the reference orbit ``S^t x0``."""

    times: np.ndarray
    Y: np.ndarray
    reference: np.ndarray
    eps: float = 0.0

    @property
    def X_tilde(self):
        return self.reference + self.eps * self.Y


def linearized_batch(model: VectorFieldModel, s: SpectralData, x0, h: float, seed: int,
                     indices, t_end: float, record_times=None, scaled: bool = False,
                     refine: int = 1, stream: int = STREAM_SDE):
    """Equation in variations along ``S^t x0`` for a batch of noise streams.

    Returns ``(times, Y, ref)``: recorded times ``(R,)``, ``Y`` of shape
    ``(B, R, d)`` and the reference orbit ``(R, d)``. Without
    ``record_times`` every step is recorded.
    """
    d = model.dim
    n = int(math.ceil(t_end / h - 1e-9))
    ref = reference_orbit(model, x0, h, n)
    A = model.jacobian(ref)
    if scaled:
        A = A - s.lam * np.eye(d)
    if record_times is None:
        rec = np.arange(n + 1)
    else:
        rec = np.clip(np.rint(np.asarray(record_times, dtype=float) / h).astype(int), 0, n)
    idx_all = np.asarray(indices, dtype=np.int64)
    Y = np.empty((len(idx_all), len(rec), d))
    for sl, idx in _blocks(idx_all):
        Y[sl] = _linear_block(A, s.lam, h, seed, idx, n, rec, scaled, refine, stream, d)
    times = rec * h
    if scaled:
        Y *= np.exp(s.lam * times)[None, :, None]
    if not np.all(np.isfinite(Y)):
        raise NonFinite("Y overflowed; shorten t_end")
    return times, Y, ref[rec]


def _linear_block(A, lam, h, seed, indices, n, rec, scaled, refine, stream, d):
    B = len(indices)
    out = np.empty((B, len(rec), d))
    y = np.zeros((B, d))
    want = {}
    for r, k in enumerate(rec):
        want.setdefault(int(k), []).append(r)
    for r in want.get(0, []):
        out[:, r] = y
    k = 0
    while k < n:
        cnt = min(CHUNK, n - k)
        dW = _increments(seed, indices, k, cnt, d, h, refine, stream)
        for j in range(cnt):
            m = k + j
            if scaled:
                y = y + h * _matvec(A[m], y) + math.exp(-lam * (m + 0.5) * h) * dW[:, j]
            else:
                y = y + h * _matvec(A[m], y) + dW[:, j]
            for r in want.get(m + 1, ()):
                out[:, r] = y
        k += cnt
    return out


def simulate_linearized(model: VectorFieldModel, s: SpectralData, x0, eps: float, h: float,
                        noise: NoiseStream, t_end: float, scaled: bool = False) -> LinearizedPath:
    """One path of the linearization ``X~ = S^t x0 + eps Y`` with ``Y(0) = 0``."""
    times, Y, ref = linearized_batch(model, s, x0, h, noise.seed, [noise.trajectory_index],
                                     t_end, scaled=scaled, stream=noise.stream)
    return LinearizedPath(times, Y[0], ref, eps)


def tau_linear_threshold(path: LinearizedPath, s: SpectralData, eps: float, delta: float) -> float:
    """First time ``eps |<ell, Y(t)>|`` reaches ``delta``, interpolated within the step."""
    c = eps * np.abs(path.Y @ s.ell)
    k = np.flatnonzero(c >= delta)
    if not k.size:
        raise NoCrossing(f"eps*|<ell,Y>| never reached {delta:g} by t={path.times[-1]:g}")
    k = k[0]
    if k == 0:
        return float(path.times[0])
    theta = (delta - c[k - 1]) / (c[k] - c[k - 1])
    return float(path.times[k - 1] + theta * (path.times[k] - path.times[k - 1]))


# ---------------------------------------------------------------- coupled runs

@dataclass
class CoupledResult:
    """Per-delta records of coupled nonlinear / linearized runs.

    ``tau[k]`` is the linear threshold time for ``deltas[k]`` (NaN when not
    reached); ``X_at``/``Xt_at`` the nonlinear and linearized states there;
    ``YL_at`` is ``eps * Pi_L Y`` there; ``N_hat`` the N estimate at ``t_read``.
    """

    deltas: np.ndarray
    tau: np.ndarray
    X_at: np.ndarray
    Xt_at: np.ndarray
    YL_at: np.ndarray
    N_hat: np.ndarray


def coupled_batch(model: VectorFieldModel, s: SpectralData, x0, eps: float, h: float, seed: int,
                  indices, deltas, t_end: float, t_read: float | None = None,
                  scaled: bool = False, stream: int = STREAM_SDE) -> CoupledResult:
    """Advance ``X_eps`` and ``X~_eps`` on the same Wiener increments."""
    d = model.dim
    deltas = np.asarray(deltas, dtype=float)
    n = int(math.ceil(t_end / h - 1e-9))
    n_read = n if t_read is None else min(n, int(round(t_read / h)))
    ref = reference_orbit(model, x0, h, n)
    A = model.jacobian(ref)
    if scaled:
        A = A - s.lam * np.eye(d)
    idx_all = np.asarray(indices, dtype=np.int64)
    B, K = len(idx_all), len(deltas)
    res = CoupledResult(deltas, np.full((K, B), np.nan), np.full((K, B, d), np.nan),
                        np.full((K, B, d), np.nan), np.full((K, B, d), np.nan), np.full(B, np.nan))
    for sl, idx in _blocks(idx_all):
        _coupled_block(model, s, x0, eps, h, seed, idx, deltas, n, n_read, ref, A, scaled,
                       stream, res, sl)
    return res


def _coupled_block(model, s, x0, eps, h, seed, indices, deltas, n, n_read, ref, A, scaled,
                   stream, res, sl):
    d = model.dim
    B = len(indices)
    lam = s.lam
    x = np.tile(np.asarray(x0, dtype=float), (B, 1))
    y = np.zeros((B, d))
    done = np.zeros((len(deltas), B), dtype=bool)
    c_old = np.zeros(B)
    rows = np.arange(sl.start, sl.start + B)
    k = 0
    while k < n:
        cnt = min(CHUNK, n - k)
        dW = _increments(seed, indices, k, cnt, d, h, 1, stream)
        for j in range(cnt):
            m = k + j
            xn = x + h * model.b(x) + eps * dW[:, j]
            if scaled:
                yn = y + h * _matvec(A[m], y) + math.exp(-lam * (m + 0.5) * h) * dW[:, j]
                grow = math.exp(lam * (m + 1) * h)
            else:
                yn = y + h * _matvec(A[m], y) + dW[:, j]
                grow = 1.0
            c_new = eps * grow * np.abs(yn @ s.ell)
            for q, delta in enumerate(deltas):
                hit = (~done[q]) & (c_new >= delta)
                if hit.any():
                    theta = (delta - c_old[hit]) / (c_new[hit] - c_old[hit])
                    t_hit = (m + theta) * h
                    y_prev = y[hit] * (math.exp(lam * m * h) if scaled else 1.0)
                    y_hit = y_prev + theta[:, None] * (yn[hit] * grow - y_prev)
                    ref_hit = ref[m] + theta[:, None] * (ref[m + 1] - ref[m])
                    r = rows[hit]
                    res.tau[q, r] = t_hit
                    res.Xt_at[q, r] = ref_hit + eps * y_hit
                    res.X_at[q, r] = x[hit] + theta[:, None] * (xn[hit] - x[hit])
                    res.YL_at[q, r] = eps * project_L(s, y_hit)
                    done[q, hit] = True
            if m + 1 == n_read:
                yr = yn * grow
                res.N_hat[rows] = math.exp(-lam * (m + 1) * h) * (yr @ s.ell)
            x, y, c_old = xn, yn, c_new
        k += cnt
        if done.all() and k >= n_read:
            break
