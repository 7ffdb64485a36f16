"""Prescribed blow-up surfaces t = psi(x) on a periodic grid.

psi is always given in closed form (a named family plus parameters), so every
partial derivative is evaluated exactly instead of being differenced.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np
import sympy as sp

from .errors import AssumptionViolation, ConfigError, ShapeViolation

MAX_STORED_ORDER = 4


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on a box centred at the origin."""

    n: int = 1
    points: int = 256
    lengths: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ConfigError(f"spatial dimension must be 1 or 2, got {self.n}")
        if self.points < 8:
            raise ConfigError("need at least 8 points per axis")
        if self.lengths is None:
            object.__setattr__(self, "lengths", (2 * math.pi,) * self.n)
        if len(self.lengths) != self.n or min(self.lengths) <= 0:
            raise ConfigError(f"bad box lengths {self.lengths}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.n

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / self.points for L in self.lengths)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis(self, i: int) -> np.ndarray:
        L = self.lengths[i]
        return -L / 2 + np.arange(self.points) * (L / self.points)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        axes = [self.axis(i) for i in range(self.n)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.n, self.points * factor, self.lengths)

    def describe(self) -> dict:
        return {"n": self.n, "points": self.points, "lengths": list(self.lengths)}


def _multi_indices(n: int, order: int):
    for total in range(1, order + 1):
        for combo in itertools.combinations_with_replacement(range(n), total):
            alpha = [0] * n
            for c in combo:
                alpha[c] += 1
            yield tuple(alpha)


# ---------------------------------------------------------------------------
# analytic families


class SurfaceGenerator:
    """Closed-form psi. Subclasses implement ``derivative`` for any multi-index."""

    family = "abstract"
    periodic = True

    def derivative(self, coords, alpha: tuple[int, ...]) -> np.ndarray:
        raise NotImplementedError

    def value(self, coords) -> np.ndarray:
        return self.derivative(coords, (0,) * len(coords))

    def scaled(self, lam: float) -> "SurfaceGenerator":
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Zero(SurfaceGenerator):
    family = "zero"

    def derivative(self, coords, alpha):
        return np.zeros_like(coords[0])

    def scaled(self, lam):
        return self

    def describe(self):
        return {"family": self.family}


@dataclass(frozen=True)
class CosineWell(SurfaceGenerator):
    """psi = -lam * sum_i (1 - cos(x_i - c_i)); vanishes only at the centre."""

    lam: float
    center: tuple[float, ...] = ()

    family = "cosine_well"

    def derivative(self, coords, alpha):
        n = len(coords)
        center = self.center or (0.0,) * n
        nonzero = [i for i, a in enumerate(alpha) if a]
        if len(nonzero) > 1:
            return np.zeros_like(coords[0])
        if not nonzero:
            return -self.lam * sum(1 - np.cos(x - c) for x, c in zip(coords, center))
        i = nonzero[0]
        m = alpha[i]
        # d^m/dx^m cos(x) = cos(x + m pi/2)
        return self.lam * np.cos(coords[i] - center[i] + m * np.pi / 2)

    def scaled(self, lam):
        return CosineWell(self.lam * lam, self.center)

    def describe(self):
        return {"family": self.family, "lam": self.lam, "center": list(self.center)}


@dataclass(frozen=True)
class CosineSeries(SurfaceGenerator):
    """psi = const + sum_m a_m cos(k_m . x + phi_m) with integer wavevectors."""

    const: float = 0.0
    terms: tuple[tuple[float, tuple[int, ...], float], ...] = ()

    family = "cosine_series"

    def derivative(self, coords, alpha):
        out = np.zeros_like(coords[0])
        if not any(alpha):
            out = out + self.const
        order = sum(alpha)
        for amp, kvec, phase in self.terms:
            factor = amp * math.prod(k**a for k, a in zip(kvec, alpha))
            if factor == 0:
                continue
            arg = sum(k * x for k, x in zip(kvec, coords)) + phase
            out = out + factor * np.cos(arg + order * np.pi / 2)
        return out

    def scaled(self, lam):
        return CosineSeries(
            self.const * lam, tuple((a * lam, k, p) for a, k, p in self.terms)
        )

    def describe(self):
        return {
            "family": self.family,
            "const": self.const,
            "terms": [[a, list(k), p] for a, k, p in self.terms],
        }


class Bump(SurfaceGenerator):
    """psi = -lam * (1 - B(|x - c| / R)), B(r) = exp(1 - 1/(1 - r^2)) on r < 1.

    Smooth with compact support; derivatives come from sympy and are cached.
    """

    family = "bump"

    def __init__(self, lam: float, radius: float = 1.0, center: tuple[float, ...] = ()):
        self.lam = float(lam)
        self.radius = float(radius)
        self.center = tuple(center)
        self._cache: dict[tuple, Any] = {}

    def __eq__(self, other):
        return isinstance(other, Bump) and self.describe() == other.describe()

    def __hash__(self):
        return hash((self.lam, self.radius, self.center))

    def _compiled(self, n: int, alpha):
        key = (n, alpha)
        if key not in self._cache:
            xs = sp.symbols(f"x0:{n}", real=True)
            q = sum(x**2 for x in xs) / sp.Float(self.radius) ** 2
            b = sp.exp(1 - 1 / (1 - q))
            expr = b
            for i, a in enumerate(alpha):
                if a:
                    expr = sp.diff(expr, xs[i], a)
            self._cache[key] = sp.lambdify(xs, expr, "numpy")
        return self._cache[key]

    def derivative(self, coords, alpha):
        n = len(coords)
        center = self.center or (0.0,) * n
        shifted = [x - c for x, c in zip(coords, center)]
        r2 = sum(s**2 for s in shifted) / self.radius**2
        inside = r2 < 1.0 - 1e-12
        out = np.zeros_like(coords[0])
        fn = self._compiled(n, tuple(alpha))
        with np.errstate(all="ignore"):
            vals = fn(*[s[inside] for s in shifted])
        out[inside] = vals
        if not any(alpha):
            return -self.lam * (1.0 - out)
        return self.lam * out

    def scaled(self, lam):
        new = Bump(self.lam * lam, self.radius, self.center)
        new._cache = self._cache
        return new

    def describe(self):
        return {
            "family": self.family,
            "lam": self.lam,
            "radius": self.radius,
            "center": list(self.center),
        }


@dataclass(frozen=True)
class Linear(SurfaceGenerator):
    """psi = slope . x + offset. Not periodic; only useful to exercise validation."""

    slope: tuple[float, ...]
    offset: float = 0.0

    family = "linear"
    periodic = False

    def derivative(self, coords, alpha):
        order = sum(alpha)
        if order == 0:
            return self.offset + sum(a * x for a, x in zip(self.slope, coords))
        if order == 1:
            return np.full_like(coords[0], self.slope[alpha.index(1)])
        return np.zeros_like(coords[0])

    def scaled(self, lam):
        return Linear(tuple(lam * a for a in self.slope), lam * self.offset)

    def describe(self):
        return {"family": self.family, "slope": list(self.slope), "offset": self.offset}


def generator_from_descriptor(desc: dict) -> SurfaceGenerator:
    """Build a generator from a plain dict such as ``{"family": "cosine_well", "lam": 0.1}``."""
    desc = dict(desc)
    family = desc.pop("family", None)
    if family is None:
        raise ConfigError("surface descriptor needs a 'family'")
    try:
        if family == "zero":
            return Zero()
        if family == "cosine_well":
            return CosineWell(float(desc["lam"]), tuple(desc.get("center", ())))
        if family == "cosine_series":
            terms = tuple(
                (float(a), tuple(int(k) for k in np.atleast_1d(kv)), float(p))
                for a, kv, p in desc.get("terms", ())
            )
            return CosineSeries(float(desc.get("const", 0.0)), terms)
        if family == "bump":
            return Bump(
                float(desc["lam"]),
                float(desc.get("radius", 1.0)),
                tuple(desc.get("center", ())),
            )
        if family == "linear":
            return Linear(tuple(np.atleast_1d(desc["slope"]).astype(float)), float(desc.get("offset", 0.0)))
    except KeyError as exc:
        raise ConfigError(f"surface family {family!r} missing parameter {exc}") from None
    raise ConfigError(f"unknown surface family {family!r}")


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BlowupSurface:
    grid: GridSpec
    generator: SurfaceGenerator
    psi: np.ndarray
    derivs: dict = field(repr=False)
    gamma: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.grid.n

    def d(self, *alpha: int) -> np.ndarray:
        """Exact partial derivative of psi for the multi-index ``alpha``."""
        alpha = tuple(alpha)
        if not any(alpha):
            return self.psi
        if alpha in self.derivs:
            return self.derivs[alpha]
        return self.generator.derivative(self.grid.coords, alpha)

    @cached_property
    def grad_psi(self) -> tuple[np.ndarray, ...]:
        return tuple(self.d(*_unit(self.n, i)) for i in range(self.n))

    @cached_property
    def laplacian_psi(self) -> np.ndarray:
        return sum(self.d(*_unit(self.n, i, 2)) for i in range(self.n))

    @property
    def max_slope(self) -> float:
        return float(np.sqrt(sum(g**2 for g in self.grad_psi)).max())

    def norm(self, sigma: float = 8.0) -> float:
        from .spectral import sobolev_norm

        return sobolev_norm(self.psi, sigma, self.grid)

    def describe(self) -> dict:
        return self.generator.describe()


def _unit(n, i, order=1):
    alpha = [0] * n
    alpha[i] = order
    return tuple(alpha)


def check_admissible(psi: np.ndarray, grad: tuple[np.ndarray, ...]) -> None:
    slope = np.sqrt(sum(g**2 for g in grad))
    if not np.all(np.isfinite(psi)) or slope.max() >= 1.0:
        raise AssumptionViolation(f"sup|grad psi| = {slope.max():.6g} must be < 1")
    if np.abs(psi).max() >= 1.0:
        raise AssumptionViolation(f"sup|psi| = {np.abs(psi).max():.6g} must be < 1")


def build_surface(generator: SurfaceGenerator, grid: GridSpec) -> BlowupSurface:
    coords = grid.coords
    psi = generator.value(coords)
    derivs = {a: generator.derivative(coords, a) for a in _multi_indices(grid.n, MAX_STORED_ORDER)}
    grad = tuple(derivs[_unit(grid.n, i)] for i in range(grid.n))
    check_admissible(psi, grad)
    gamma = 1.0 - sum(g**2 for g in grad)
    return BlowupSurface(grid, generator, psi, derivs, gamma)


def scale_surface(s: BlowupSurface, lam: float) -> BlowupSurface:
    if lam < 0:
        raise ConfigError("scale factor must be nonnegative")
    return build_surface(s.generator.scaled(lam), s.grid)


def zero_set_indicator(s: BlowupSurface, tol: float = 1e-12) -> np.ndarray:
    """Boolean mask of the discrete set K = {|psi| <= tol}; psi must be <= 0."""
    if s.psi.max() > tol:
        raise ShapeViolation(f"psi reaches {s.psi.max():.3g} > 0; the construction needs psi <= 0")
    return np.abs(s.psi) <= tol
