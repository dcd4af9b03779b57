"""Polynomial vector fields and the built-in model registry.

Custom fields are given as coefficient tables, one list of monomials per
component, so configs stay plain data::

    {"dim": 2,
     "components": [[{"coef": 1.0, "powers": [1, 0]}, {"coef": -1.0, "powers": [3, 0]}],
                    [{"coef": -1.0, "powers": [0, 1]}]]}

Each built-in model also has a "truth card": closed-form values of q±, h±
and sigma at the origin where these are known, used by ``verify``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq

from .dynsys import Ball, Box, Domain, VectorFieldModel
from .errors import ConfigError

MAX_DEGREE = 4


class Polynomial:
    """A scalar polynomial in d variables, vectorized over leading axes."""

    def __init__(self, terms, dim: int):
        self.dim = dim
        self.coefs = []
        self.powers = []
        for term in terms:
            powers = tuple(int(p) for p in term["powers"])
            if len(powers) != dim or min(powers, default=0) < 0:
                raise ConfigError(f"monomial powers {powers} do not match dimension {dim}")
            if sum(powers) > MAX_DEGREE:
                raise ConfigError(f"monomial degree {sum(powers)} exceeds {MAX_DEGREE}")
            self.coefs.append(float(term["coef"]))
            self.powers.append(powers)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for c, p in zip(self.coefs, self.powers):
            out = out + c * _monomial(x, p)
        return out

    def derivative(self, j: int) -> "Polynomial":
        terms = []
        for c, p in zip(self.coefs, self.powers):
            if p[j] > 0:
                q = list(p)
                q[j] -= 1
                terms.append({"coef": c * p[j], "powers": q})
        return Polynomial(terms, self.dim)

    def to_terms(self):
        return [{"coef": c, "powers": list(p)} for c, p in zip(self.coefs, self.powers)]


def _monomial(x, powers):
    out = np.ones(x.shape[:-1])
    for j, p in enumerate(powers):
        if p:
            out = out * x[..., j] ** p
    return out


class PolynomialField:
    """Vector field with polynomial components and exact Jacobian."""

    def __init__(self, components, dim: int):
        if len(components) != dim:
            raise ConfigError(f"expected {dim} field components, got {len(components)}")
        self.dim = dim
        self.components = [Polynomial(c, dim) for c in components]
        self._partials = [[p.derivative(j) for j in range(dim)] for p in self.components]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([p(x) for p in self.components], axis=-1)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        rows = [np.stack([dp(x) for dp in row], axis=-1) for row in self._partials]
        return np.stack(rows, axis=-2)

    def to_table(self):
        return {"dim": self.dim, "components": [p.to_terms() for p in self.components]}

    @classmethod
    def from_table(cls, table):
        try:
            return cls(table["components"], int(table["dim"]))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed polynomial table: {exc}") from exc


def _mono(coef, *powers):
    return {"coef": float(coef), "powers": list(powers)}


def linear_saddle(lam=1.0, mu=1.0):
    return PolynomialField([[_mono(lam, 1, 0)], [_mono(-mu, 0, 1)]], 2)


def cubic_saddle(coupling=1.0):
    """``b = (x - x^3, -y + coupling * x^2)``."""
    comps = [[_mono(1, 1, 0), _mono(-1, 3, 0)], [_mono(-1, 0, 1)]]
    if coupling:
        comps[1].append(_mono(coupling, 2, 0))
    return PolynomialField(comps, 2)


def spiral_stable_3d(lam=1.0, mu=1.0, omega=2.0, coupling=0.0):
    """Unstable x-direction over a stable focus in (y, z)."""
    comps = [
        [_mono(lam, 1, 0, 0)],
        [_mono(-mu, 0, 1, 0), _mono(-omega, 0, 0, 1)],
        [_mono(omega, 0, 1, 0), _mono(-mu, 0, 0, 1)],
    ]
    if coupling:
        comps[1].append(_mono(coupling, 2, 0, 0))
    return PolynomialField(comps, 3)


REGISTRY = {
    "linear-saddle": (linear_saddle, {"lam": 1.0, "mu": 1.0}),
    "cubic-saddle": (cubic_saddle, {"coupling": 1.0}),
    "spiral-stable-3d": (spiral_stable_3d, {"lam": 1.0, "mu": 1.0, "omega": 2.0, "coupling": 0.0}),
}


def make_field(name: str, params: dict | None = None) -> PolynomialField:
    if name not in REGISTRY:
        raise ConfigError(f"unknown model {name!r}; choose from {sorted(REGISTRY)}")
    factory, defaults = REGISTRY[name]
    params = dict(params or {})
    unknown = set(params) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown parameters for {name}: {sorted(unknown)}")
    return factory(**{**defaults, **params})


def build_model(field: PolynomialField, domain: Domain, enclosure: Domain | None = None,
                name: str = "custom") -> VectorFieldModel:
    return VectorFieldModel(field, domain, field.dim, field.jacobian, enclosure, name)


def registry_model(name: str, domain: Domain, params: dict | None = None,
                   enclosure: Domain | None = None) -> VectorFieldModel:
    return build_model(make_field(name, params), domain, enclosure, name)


# ---------------------------------------------------------------- truth cards

def cubic_manifold_height(x):
    """Graph ``y = phi(x)`` of the unstable curve of ``(x - x^3, -y + x^2)``.

    Solves ``phi'(x) (x - x^3) = -phi + x^2`` with ``phi(0) = 0``.
    """
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    small = ax < 1e-4
    safe = np.where(small, 1.0, ax)
    exact = 1.0 - np.sqrt(1.0 - safe**2) * np.arcsin(safe) / safe
    series = ax**2 / 3.0 + 2.0 * ax**4 / 15.0
    return np.where(small, series, exact)


def cubic_exit_abscissa(radius, coupling=1.0):
    """Positive root of ``x^2 + (coupling * phi(x))^2 = radius^2``."""
    if not 0 < radius < 1:
        raise ValueError("closed form needs 0 < radius < 1")
    f = lambda x: x * x + (coupling * cubic_manifold_height(x)) ** 2 - radius**2
    return brentq(f, 1e-12, radius, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def truth_card(name: str, params: dict | None, domain: Domain) -> dict | None:
    """Closed-form limit-law parameters for built-in models, or None."""
    _, defaults = REGISTRY[name]
    p = {**defaults, **(params or {})}
    centered_ball = isinstance(domain, Ball) and np.allclose(domain.center, 0)
    if name in ("linear-saddle", "spiral-stable-3d") and (name == "linear-saddle" or p["coupling"] == 0):
        lam = p["lam"]
        d = 2 if name == "linear-saddle" else 3
        if centered_ball:
            xp, xm = domain.radius, domain.radius
        elif isinstance(domain, Box) and np.all(domain.lower[1:] < 0) and np.all(domain.upper[1:] > 0):
            xp, xm = domain.upper[0], -domain.lower[0]
        else:
            return None
        e = np.zeros(d)
        e[0] = 1.0
        return {
            "q_plus": (xp * e).tolist(), "q_minus": (-xm * e).tolist(),
            "h_plus": math.log(xp) / lam, "h_minus": math.log(xm) / lam,
            "sigma_origin": (2 * lam) ** -0.5,
            "provenance": "closed-form linear flow along the x-axis; sigma from Ito isometry",
        }
    if name == "cubic-saddle" and centered_ball and domain.radius < 1:
        c = p["coupling"]
        xs = cubic_exit_abscissa(domain.radius, c)
        h = math.log(xs) - 0.5 * math.log1p(-xs * xs)
        y = float(c * cubic_manifold_height(xs))
        return {
            "q_plus": [xs, y], "q_minus": [-xs, y],
            "h_plus": h, "h_minus": h,
            "sigma_origin": 2 ** -0.5,
            "provenance": "1-D reduction x' = x - x^3 integrated in closed form; "
                          "curve height from the invariance equation",
        }
    return None


def linear_model(A, domain: Domain, enclosure: Domain | None = None) -> VectorFieldModel:
    """``b(x) = A x`` with its constant Jacobian."""
    A = np.array(A, dtype=float)
    d = A.shape[0]
    field = lambda x: np.asarray(x, dtype=float) @ A.T
    jac = lambda x: np.broadcast_to(A, np.shape(x)[:-1] + (d, d)).copy()
    return VectorFieldModel(field, domain, d, jac, enclosure, "linear")
