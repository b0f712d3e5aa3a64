"""Interval domain, uniform cell grid, compact cores and exterior quadrature."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .errors import ContractError, ParameterError, QuadratureError
from .stable_core import StableParams, levy_density, levy_tail_mass

MIN_CELLS = 4
MIN_ORDER = 8


@dataclass(frozen=True)
class IntervalDomain:
    """Bounded open interval ``(l, r)``."""

    l: float
    r: float

    def __post_init__(self):
        l, r = float(self.l), float(self.r)
        if not (math.isfinite(l) and math.isfinite(r) and l < r):
            raise ParameterError(f"domain needs finite l < r, got ({self.l!r}, {self.r!r})")
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "r", r)

    @property
    def length(self) -> float:
        return self.r - self.l

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.l + self.r)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (self.l < x) & (x < self.r)

    def distance_to_boundary(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.minimum(np.abs(x - self.l), np.abs(x - self.r))


@dataclass(frozen=True)
class Grid:
    """Uniform partition of the domain into ``n`` cells of width ``h``."""

    domain: IntervalDomain
    n: int
    centers: np.ndarray
    h: float

    @property
    def edges(self) -> np.ndarray:
        e = self.domain.l + np.arange(self.n + 1) * self.h
        e[-1] = self.domain.r
        return e

    def cell_of(self, y) -> np.ndarray:
        """Index of the cell containing ``y``; points on an interior edge go to the lower cell."""
        y = np.asarray(y, dtype=float)
        s = self.n * (y - self.domain.l) / self.domain.length
        near = np.round(s)
        s = np.where(np.abs(s - near) < 1e-9, near, s)
        idx = np.ceil(s).astype(int) - 1
        return np.clip(idx, 0, self.n - 1)

    def nearest_center(self, x: float) -> int:
        """Index of the center closest to ``x``; ties go to the lower index."""
        dist = np.abs(self.centers - x)
        return int(np.flatnonzero(dist <= dist.min() + 1e-12 * self.h)[0])

    def cells_in(self, a: float, b: float) -> np.ndarray:
        """Indices of cells whose centers lie in ``[a, b]``."""
        return np.flatnonzero((self.centers >= a - 1e-12) & (self.centers <= b + 1e-12))

    def overlap(self, a: float, b: float) -> np.ndarray:
        """Length of ``cell_i  n  [a, b]`` for every cell."""
        e = self.edges
        return np.clip(np.minimum(e[1:], b) - np.maximum(e[:-1], a), 0.0, None)


def build_grid(domain: IntervalDomain, n: int) -> Grid:
    if int(n) != n or n < MIN_CELLS:
        raise ParameterError(f"grid needs at least {MIN_CELLS} cells, got {n!r}")
    n = int(n)
    h = domain.length / n
    centers = domain.l + (np.arange(n) + 0.5) * h
    centers.setflags(write=False)
    return Grid(domain=domain, n=n, centers=centers, h=h)


def compact_core(domain: IntervalDomain, margin: float) -> IntervalDomain:
    """The closed core ``[l + margin, r - margin]``, returned as an interval."""
    half = domain.length / 2.0
    if not (0.0 < margin < half):
        raise ParameterError(f"margin must lie in (0, {half}), got {margin!r}")
    return IntervalDomain(domain.l + margin, domain.r - margin)


@dataclass(frozen=True)
class GridFunction:
    """Cell values on a grid plus an exterior extension ``z -> u(z)`` on the complement."""

    grid: Grid
    values: np.ndarray
    exterior: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @classmethod
    def zero_extended(cls, grid: Grid, values) -> "GridFunction":
        return cls(grid, np.asarray(values, dtype=float), lambda z: np.zeros_like(np.asarray(z, dtype=float)))


@dataclass(frozen=True)
class ExteriorQuadrature:
    """Nodes and ``dz`` weights covering ``(-inf, l] u [r, inf)``.

    Each side is split into geometrically graded panels in the distance to the
    boundary, with Gauss-Legendre nodes per panel, and a far-field panel in the
    variable ``u = dist^{-alpha}`` that maps the unbounded tail onto a finite
    interval.  ``sum(weights * f(nodes))`` approximates ``int_{D^c} f(z) dz``.
    """

    domain: IntervalDomain
    alpha: float
    order: int
    nodes: np.ndarray
    weights: np.ndarray
    side: np.ndarray  # -1 for the left tail, +1 for the right tail
    distance: np.ndarray
    defect: float

    def integrate(self, values) -> float:
        return float(np.sum(self.weights * values))

    def tail_mass(self, p: StableParams, x) -> np.ndarray:
        """Quadrature value of ``nu(x, D^c)`` for each point ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return levy_density(p, x[:, None], self.nodes[None, :]) @ self.weights


# distances (in units of |D|) where graded panels start and where the far panel begins
_NEAR = 2.0 ** -44
_FAR = 2.0 ** 7


@lru_cache(maxsize=64)
def _one_sided_rule(alpha: float, order: int):
    """Nodes (distances from the boundary, unit domain length) and weights for one tail."""
    g, w = np.polynomial.legendre.leggauss(order)
    dist, wts = [], []
    # [0, _NEAR]
    dist.append(0.5 * _NEAR * (g + 1.0))
    wts.append(0.5 * _NEAR * w)
    a = _NEAR
    while a < _FAR:
        b = 2.0 * a
        dist.append(a + 0.5 * (b - a) * (g + 1.0))
        wts.append(0.5 * (b - a) * w)
        a = b
    # far tail: u = dist^{-alpha} on (0, _FAR^{-alpha}]
    umax = _FAR ** (-alpha)
    u = 0.5 * umax * (g + 1.0)
    wu = 0.5 * umax * w
    dist.append(u ** (-1.0 / alpha))
    wts.append(wu * u ** (-1.0 / alpha - 1.0) / alpha)
    return np.concatenate(dist), np.concatenate(wts)


def _probe_points(domain: IntervalDomain) -> np.ndarray:
    ks = np.arange(1, 17)
    offs = domain.length * 2.0 ** (-ks.astype(float))
    pts = np.concatenate([domain.l + offs, domain.r - offs, [domain.midpoint]])
    return np.unique(pts[domain.contains(pts)])


def exterior_quadrature(domain: IntervalDomain, p: StableParams, order: int = 16,
                        tol: float = 1e-8) -> ExteriorQuadrature:
    """Build the exterior rule and verify it against the exact tail mass.

    The accuracy check compares ``nu(x, D^c)`` with the closed form at points
    approaching the boundary geometrically down to ``|D| 2^-16``.
    """
    if int(order) != order or order < MIN_ORDER:
        raise ParameterError(f"quadrature order must be an integer >= {MIN_ORDER}, got {order!r}")
    dist, wts = _one_sided_rule(p.alpha, int(order))
    dist = dist * domain.length
    wts = wts * domain.length
    nodes = np.concatenate([domain.l - dist[::-1], domain.r + dist])
    weights = np.concatenate([wts[::-1], wts])
    side = np.concatenate([-np.ones_like(dist), np.ones_like(dist)])
    distance = np.concatenate([dist[::-1], dist])
    for arr in (nodes, weights, side, distance):
        arr.setflags(write=False)
    quad = ExteriorQuadrature(domain, p.alpha, int(order), nodes, weights, side, distance, defect=np.nan)
    pts = _probe_points(domain)
    exact = levy_tail_mass(p, pts, domain.l, domain.r)
    defect = float(np.max(np.abs(quad.tail_mass(p, pts) - exact) / exact))
    if not defect <= tol:
        raise QuadratureError(f"exterior quadrature defect {defect:.3e} exceeds {tol:.1e}", defect)
    object.__setattr__(quad, "defect", defect)
    return quad


def quadrature_defect(quad: ExteriorQuadrature, p: StableParams, points) -> float:
    """Max relative error of the quadrature tail mass at ``points``."""
    points = np.atleast_1d(np.asarray(points, dtype=float))
    if not np.all(quad.domain.contains(points)):
        raise ContractError("defect points must lie inside the domain")
    exact = levy_tail_mass(p, points, quad.domain.l, quad.domain.r)
    return float(np.max(np.abs(quad.tail_mass(p, points) - exact) / exact))
