"""Parameters and distribution of the limiting exit law.

With ``u(t) = exp(lam (h - t)) / sigma`` the conditional (per side) law of
the centered exit time ``tau - ln(1/eps)/lam`` has

    F(t) = 2 (1 - Phi(u(t))),    f(t) = 2 lam u(t) phi(u(t)),

and the exit side is +1 or -1 with probability 1/2 each.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson, solve_ivp
from scipy.stats import norm

from .dynsys import SpectralData, VectorFieldModel
from .errors import NotOnStableManifold, TailNotConverged
from .noise import CHUNK, STREAM_LIMIT_LAW, NoiseStream, chunk_normals
from .sde import LinearizedPath


def sigma_at_origin(s: SpectralData) -> float:
    """Closed-form scale at the fixed point: ``|ell| / sqrt(2 lam)``.

    Equals ``(2 lam)^(-1/2)`` when v is orthogonal to the complementary
    invariant subspace (e.g. symmetric A), where ``|ell| = 1``.
    """
    return float(np.linalg.norm(s.ell) / math.sqrt(2.0 * s.lam))


def sigma_via_adjoint(model: VectorFieldModel, s: SpectralData, x0=None,
                      T_horizon: float | None = None, rtol: float = 1e-8,
                      origin_tol: float = 1e-9, return_error: bool = False):
    """Scale ``sigma = sqrt(E N^2)`` of the Gaussian limit N for a start ``x0``.

    N is the stochastic integral of the kernel
    ``k(r) = lim_t exp(-lam t) Phi_r(t)^T ell``, obtained in one backward
    sweep of the adjoint equation. The sweep uses the rescaled variable
    ``psi(r) = exp(lam r) k(r)``, which solves
    ``psi' = lam psi - A(r)^T psi`` with ``psi(T) = ell``, so that

        sigma^2 = int_0^T |psi(r)|^2 exp(-2 lam r) dr + |psi(T)|^2 exp(-2 lam T) / (2 lam).

    Past the time the orbit ``S^r x0`` reaches ``origin_tol`` it is taken to
    be 0, which makes the tail term exact. The integral uses composite
    Simpson; its error estimate is the Richardson difference against the
    half-resolution grid.

    Raises NotOnStableManifold if the orbit has not reached ``origin_tol``
    by ``T_horizon`` (default ``30/mu``, or ``30/lam`` without stable
    directions).
    """
    d = model.dim
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    lam = s.lam
    if T_horizon is None:
        T_horizon = 30.0 / (s.mu if s.mu is not None else lam)
    A0 = s.A

    t_clamp = 0.0
    orbit = None
    if np.linalg.norm(x0) > origin_tol:
        if s.mu is None:
            raise NotOnStableManifold("A has no stable directions; only x0 = 0 is admissible")
        reach = lambda t, x: np.linalg.norm(x) - origin_tol
        reach.terminal, reach.direction = True, -1.0
        sol = solve_ivp(lambda t, x: model.b(x), (0.0, T_horizon), x0, method="DOP853",
                        rtol=1e-12, atol=1e-15, events=reach, dense_output=True)
        if not sol.t_events[0].size:
            raise NotOnStableManifold(
                f"|S^t x0| = {np.linalg.norm(sol.y[:, -1]):.3g} at t = {T_horizon:g}; "
                f"x0 is not on the stable manifold")
        t_clamp = float(sol.t_events[0][0])
        orbit = sol.sol

    def A_of(r):
        if orbit is None or r >= t_clamp:
            return A0
        return model.jacobian(orbit(r))

    rhs = lambda r, psi: lam * psi - A_of(r).T @ psi
    max_step = t_clamp / 20 if orbit is not None else np.inf
    back = solve_ivp(rhs, (T_horizon, 0.0), s.ell.astype(float), method="DOP853",
                     rtol=1e-12, atol=1e-14, dense_output=True, max_step=max_step)

    n = 2 * int(math.ceil(T_horizon * lam / 0.01 / 2))
    for _ in range(8):
        r = np.linspace(0.0, T_horizon, n + 1)
        psi = back.sol(r)
        f = np.sum(psi * psi, axis=0) * np.exp(-2.0 * lam * r)
        fine = simpson(f, x=r)
        coarse = simpson(f[::2], x=r[::2])
        err = abs(fine - coarse) / 15.0
        if err <= 0.1 * rtol * fine:
            break
        n *= 2
    else:
        raise TailNotConverged(f"Simpson quadrature error {err:.3g} above target")
    # beyond T the orbit sits at the origin, so psi stays at ell and the tail is exact
    tail = float(s.ell @ s.ell) * math.exp(-2.0 * lam * T_horizon) / (2.0 * lam)
    sigma = math.sqrt(fine + tail)
    sigma_err = err / (2.0 * sigma) + origin_tol
    if return_error:
        return sigma, sigma_err
    return sigma


def estimate_N(path: LinearizedPath, s: SpectralData, t_read: float) -> float:
    """``exp(-lam t_read) <ell, Y(t_read)>``, the per-path realization of N."""
    k = int(np.argmin(np.abs(path.times - t_read)))
    return float(math.exp(-s.lam * path.times[k]) * (path.Y[k] @ s.ell))


def default_t_read(s: SpectralData) -> float:
    gap = s.gap if math.isfinite(s.gap) else s.lam
    return max(15.0 / gap, 10.0 / s.lam)


@dataclass(frozen=True, eq=False)
class ExitLawParams:
    q_plus: np.ndarray
    q_minus: np.ndarray
    h_plus: float
    h_minus: float
    sigma: float
    lam: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")

    def h(self, side: int) -> float:
        return self.h_plus if side > 0 else self.h_minus

    def q(self, side: int) -> np.ndarray:
        return self.q_plus if side > 0 else self.q_minus


class LimitLaw:
    """The limit ``1/2 delta_{q+} x mu_{h+,sigma} + 1/2 delta_{q-} x mu_{h-,sigma}``."""

    def __init__(self, params: ExitLawParams):
        self.params = params

    def _u(self, side, t):
        p = self.params
        return np.exp(p.lam * (p.h(side) - np.asarray(t, dtype=float))) / p.sigma

    def cdf(self, side: int, t):
        """Conditional CDF of the centered exit time given the side."""
        return 2.0 * norm.sf(self._u(side, t))

    def density(self, side: int, t):
        u = self._u(side, t)
        return 2.0 * self.params.lam * u * norm.pdf(u)

    def mixture_cdf(self, t):
        return 0.5 * (self.cdf(1, t) + self.cdf(-1, t))

    def ppf(self, side: int, prob):
        prob = np.asarray(prob, dtype=float)
        p = self.params
        u = norm.isf(prob / 2.0)
        return p.h(side) - np.log(p.sigma * u) / p.lam

    def median(self, side: int = 1) -> float:
        return float(self.ppf(side, 0.5))

    def time_from_standard_normal(self, z):
        """Map draws of the standard normal to ``(side, centered time)``."""
        z = np.asarray(z, dtype=float)
        p = self.params
        side = np.where(z > 0, 1, -1)
        h = np.where(side > 0, p.h_plus, p.h_minus)
        return side, h - np.log(p.sigma * np.abs(z)) / p.lam


def sample_limit_law(law: LimitLaw, noise: NoiseStream):
    """One draw ``(side, T)``: side = sign of a standard normal Z, ``T = h_side - ln(sigma|Z|)/lam``."""
    z = chunk_normals(noise.seed, noise.trajectory_index, 0, 1, STREAM_LIMIT_LAW)[0, 0]
    side, t = law.time_from_standard_normal(z)
    return int(side), float(t)


def sample_limit_law_many(law: LimitLaw, n: int, seed: int):
    """``n`` draws, reproducible from ``seed`` (counter-based, chunk per block of draws)."""
    blocks = -(-n // CHUNK)
    z = np.concatenate([chunk_normals(seed, b, 0, 1, STREAM_LIMIT_LAW)[:, 0] for b in range(blocks)])[:n]
    return law.time_from_standard_normal(z)
