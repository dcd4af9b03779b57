"""Vector fields, domains and the spectral data of the linearization at 0.

Everything downstream works in coordinates where the fixed point sits at the
origin. Fields and domain functions are vectorized over leading axes: a
field maps an array of shape ``(..., d)`` to ``(..., d)`` and a Jacobian maps
it to ``(..., d, d)`` with ``J[..., i, j] = d b_i / d x_j``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    ConfigError,
    LeadingEigenvalueNotSimpleReal,
    NoConvergence,
    OutsideDomain,
)

_FD_STEP = np.finfo(float).eps ** (1.0 / 3.0)


class Domain:
    """A closed region ``{g <= 0}`` with ``g < 0`` strictly inside."""

    kind = "abstract"

    def g(self, x):
        raise NotImplementedError

    def grad(self, x):
        return _fd_gradient(self.g, x)

    def contains(self, x):
        return np.asarray(self.g(x)) < 0

    @property
    def diameter(self) -> float:
        raise NotImplementedError

    def shifted(self, p) -> "Domain":
        raise NotImplementedError

    def enlarged(self, factor: float) -> "Domain":
        """A larger domain of the same kind, used as the default enclosure."""
        raise NotImplementedError


class Ball(Domain):
    kind = "ball"

    def __init__(self, radius: float, center=None, dim: int | None = None):
        if radius <= 0:
            raise ConfigError(f"ball radius must be positive, got {radius}")
        self.radius = float(radius)
        if center is None:
            if dim is None:
                raise ConfigError("Ball needs either a center or a dimension")
            center = np.zeros(dim)
        self.center = np.asarray(center, dtype=float)

    def g(self, x):
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self.center, axis=-1) - self.radius

    def grad(self, x):
        z = np.asarray(x, dtype=float) - self.center
        r = np.linalg.norm(z, axis=-1, keepdims=True)
        return z / np.where(r > 0, r, 1.0)

    @property
    def diameter(self):
        return 2.0 * self.radius

    def shifted(self, p):
        return Ball(self.radius, self.center - np.asarray(p, dtype=float))

    def enlarged(self, factor):
        return Ball(self.radius * factor, self.center)

    def __repr__(self):
        return f"Ball(radius={self.radius}, center={self.center.tolist()})"


class Box(Domain):
    kind = "box"

    def __init__(self, lower, upper):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if self.lower.shape != self.upper.shape or np.any(self.upper <= self.lower):
            raise ConfigError("box bounds must have equal shapes and lower < upper")

    def g(self, x):
        x = np.asarray(x, dtype=float)
        return np.max(np.maximum(self.lower - x, x - self.upper), axis=-1)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        faces = np.concatenate([self.lower - x, x - self.upper], axis=-1)
        k = np.argmax(faces, axis=-1)
        d = self.lower.size
        out = np.zeros(x.shape)
        sign = np.where(k < d, -1.0, 1.0)
        np.put_along_axis(out, (k % d)[..., None], sign[..., None], axis=-1)
        return out

    @property
    def diameter(self):
        return float(np.linalg.norm(self.upper - self.lower))

    def shifted(self, p):
        p = np.asarray(p, dtype=float)
        return Box(self.lower - p, self.upper - p)

    def enlarged(self, factor):
        c = 0.5 * (self.lower + self.upper)
        half = 0.5 * (self.upper - self.lower) * factor
        return Box(c - half, c + half)

    def __repr__(self):
        return f"Box(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


class LevelSet(Domain):
    """Region ``{func(x) <= 0}``; gradient by central differences.

    The diameter is estimated by bisection along rays from the origin, which
    is exact for star-shaped regions and a lower bound otherwise; pass
    ``diameter`` to override it.
    """

    kind = "level-set"

    def __init__(self, func: Callable, dim: int, diameter: float | None = None,
                 offset=None, r_max: float = 1e3):
        self.func = func
        self.dim = int(dim)
        self.offset = np.zeros(self.dim) if offset is None else np.asarray(offset, dtype=float)
        self.r_max = r_max
        self._diameter = diameter

    def g(self, x):
        return self.func(np.asarray(x, dtype=float) + self.offset)

    @property
    def diameter(self):
        if self._diameter is None:
            self._diameter = 2.0 * _max_ray_radius(self.g, self.dim, self.r_max)
        return self._diameter

    def shifted(self, p):
        return LevelSet(self.func, self.dim, self._diameter,
                        self.offset + np.asarray(p, dtype=float), self.r_max)

    def enlarged(self, factor):
        return Ball(factor * self.diameter, np.zeros(self.dim))


def _max_ray_radius(g, dim, r_max, n_dirs=256):
    rng = np.random.default_rng(0)
    dirs = np.concatenate([np.eye(dim), -np.eye(dim), rng.standard_normal((n_dirs, dim))])
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    lo = np.zeros(len(dirs))
    hi = np.full(len(dirs), float(r_max))
    if np.any(g(hi[:, None] * dirs) < 0):
        raise ConfigError("level-set domain appears unbounded")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        inside = g(mid[:, None] * dirs) < 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return float(hi.max())


def _fd_gradient(f, x):
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    step = _FD_STEP * np.maximum(1.0, np.linalg.norm(x, axis=-1, keepdims=True))
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        cols.append((f(x + step * e) - f(x - step * e)) / (2 * step[..., 0]))
    return np.stack(cols, axis=-1)


def fd_jacobian(field: Callable, x) -> np.ndarray:
    """Central-difference Jacobian with step ``eps**(1/3) * max(1, |x|)``."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    step = _FD_STEP * np.maximum(1.0, np.linalg.norm(x, axis=-1, keepdims=True))
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        cols.append((field(x + step * e) - field(x - step * e)) / (2 * step))
    return np.stack(cols, axis=-1)


class VectorFieldModel:
    """A vector field ``b`` with its Jacobian, study domain G and enclosure U.

    Parameters
    ----------
    field : callable
        Vectorized map ``(..., d) -> (..., d)``.
    domain : Domain
        The region G whose exit is studied.
    jacobian : callable, optional
        Analytic Jacobian; central differences are used when omitted.
    enclosure : Domain, optional
        The region U on which the field is trusted. Defaults to G enlarged by
        a factor of 2.
    """

    def __init__(self, field: Callable, domain: Domain, dim: int,
                 jacobian: Callable | None = None, enclosure: Domain | None = None,
                 name: str = "custom", lipschitz: float | None = None):
        self.dim = int(dim)
        self.field = field
        self._jacobian = jacobian
        self.domain = domain
        self.enclosure = domain.enlarged(2.0) if enclosure is None else enclosure
        self.name = name
        self._lipschitz = lipschitz

    def b(self, x):
        return self.field(np.asarray(x, dtype=float))

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        if self._jacobian is None:
            return fd_jacobian(self.field, x)
        return self._jacobian(x)

    @property
    def has_analytic_jacobian(self):
        return self._jacobian is not None

    def shifted(self, p) -> "VectorFieldModel":
        """The same model in coordinates where ``p`` becomes the origin."""
        p = np.asarray(p, dtype=float)
        field = self.field
        jac = self._jacobian
        return VectorFieldModel(
            lambda x: field(x + p),
            self.domain.shifted(p),
            self.dim,
            None if jac is None else (lambda x: jac(x + p)),
            self.enclosure.shifted(p),
            self.name,
        )

    def lipschitz_constant(self, n_samples: int = 4096, seed: int = 0) -> float:
        """Largest spectral norm of the Jacobian over sample points of G."""
        if self._lipschitz is None:
            pts = sample_domain(self.domain, self.dim, n_samples, seed)
            self._lipschitz = float(np.max(np.linalg.norm(self.jacobian(pts), ord=2, axis=(-2, -1))))
        return self._lipschitz

    def __repr__(self):
        return f"VectorFieldModel(name={self.name!r}, dim={self.dim}, domain={self.domain!r})"


def sample_domain(domain: Domain, dim: int, n: int, seed: int = 0) -> np.ndarray:
    """Uniform rejection samples from a domain (bounding cube of its diameter)."""
    rng = np.random.default_rng(seed)
    half = domain.diameter
    out = []
    count = 0
    while count < n:
        pts = rng.uniform(-half, half, size=(4 * n, dim))
        pts = pts[domain.contains(pts)]
        out.append(pts)
        count += len(pts)
    return np.concatenate(out)[:n]


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Leading eigen-structure of ``A = J(0)``.

    ``v`` is the unit right eigenvector for ``lam`` (first nonzero coordinate
    positive), ``ell`` the left eigenvector scaled so ``<ell, v> = 1``.
    ``gap`` is ``lam`` minus the largest real part among the other
    eigenvalues (``inf`` in one dimension) and ``mu`` the decay rate of the
    slowest stable direction, or ``None`` when A has no stable eigenvalue.
    """

    A: np.ndarray
    lam: float
    v: np.ndarray
    ell: np.ndarray
    gap: float
    mu: float | None
    eigenvalues: np.ndarray

    def coordinate(self, x):
        """The coefficient ``<ell, x>`` of the projection onto span{v}."""
        return np.asarray(x, dtype=float) @ self.ell


def project_v(s: SpectralData, x):
    x = np.asarray(x, dtype=float)
    return (x @ s.ell)[..., None] * s.v


def project_L(s: SpectralData, x):
    x = np.asarray(x, dtype=float)
    return x - project_v(s, x)


def find_fixed_point(model: VectorFieldModel, guess, tol: float | None = None,
                     max_iter: int = 50) -> np.ndarray:
    """Newton iteration for ``b(p) = 0`` starting from ``guess`` in G."""
    x = np.asarray(guess, dtype=float).copy()
    if model.domain.g(x) >= 0:
        raise OutsideDomain(f"initial guess {x.tolist()} is not inside G")
    if tol is None:
        tol = 1e-12 * max(1.0, float(np.linalg.norm(model.jacobian(x), 2)))
    for _ in range(max_iter):
        fx = model.b(x)
        if np.linalg.norm(fx) <= tol:
            return x
        try:
            x = x - np.linalg.solve(model.jacobian(x), fx)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence("singular Jacobian during Newton iteration") from exc
        if not np.all(np.isfinite(x)) or model.enclosure.g(x) > 0:
            raise OutsideDomain(f"Newton iterate {x.tolist()} left the enclosure U")
    if np.linalg.norm(model.b(x)) <= tol:
        return x
    raise NoConvergence(f"Newton did not reach |b| <= {tol:g} in {max_iter} iterations")


def _null_vector(M):
    # right singular vector of the smallest singular value
    _, _, vh = np.linalg.svd(M)
    return vh[-1].real


def spectral_data(model_or_matrix, tol_gap: float = 1e-8, tol_imag: float = 1e-10) -> SpectralData:
    """Spectral data of ``A = J(0)``; accepts a model or the matrix itself."""
    if isinstance(model_or_matrix, VectorFieldModel):
        A = np.asarray(model_or_matrix.jacobian(np.zeros(model_or_matrix.dim)), dtype=float)
    else:
        A = np.atleast_2d(np.asarray(model_or_matrix, dtype=float))
    d = A.shape[0]
    eigs = np.linalg.eigvals(A)
    k = int(np.argmax(eigs.real))
    top = eigs[k]
    scale = max(1.0, float(np.linalg.norm(A, 2)))
    if abs(top.imag) > tol_imag * scale:
        raise LeadingEigenvalueNotSimpleReal(
            f"leading eigenvalue {top} is complex; a simple real positive eigenvalue is required")
    lam = float(top.real)
    if lam <= 0:
        raise LeadingEigenvalueNotSimpleReal(
            f"leading eigenvalue {lam:g} is not positive; the fixed point is not unstable")
    others = np.delete(eigs, k)
    gap = float(lam - others.real.max()) if d > 1 else np.inf
    if gap <= tol_gap:
        raise LeadingEigenvalueNotSimpleReal(
            f"leading eigenvalue {lam:g} is not simple and strictly dominant (gap {gap:.3g})")
    neg = others.real[others.real < 0]
    mu = float(-neg.max()) if neg.size else None

    I = np.eye(d)
    v = _null_vector(A - lam * I)
    v /= np.linalg.norm(v)
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    if v[nz[0]] < 0:
        v = -v
    ell = _null_vector(A.T - lam * I)
    ell = ell / (ell @ v)
    return SpectralData(A=A, lam=lam, v=v, ell=ell, gap=gap, mu=mu, eigenvalues=eigs)
