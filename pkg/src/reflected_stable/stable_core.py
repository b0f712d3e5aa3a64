"""Closed-form primitives of the isotropic alpha-stable law.

Everything here is pure: the Levy density and its exact cell integrals,
the heat-kernel comparability band, stable increments drawn by the
Chambers-Mallows-Stuck construction, and the pointwise fractional
Laplacian of piecewise-constant grid data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import ContractError, ParameterError, SingularityError

# Loose comparability constants for the heat-kernel band (smoke test only).
ENVELOPE_LOWER = 0.05
ENVELOPE_UPPER = 20.0


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha < 2.0) or not math.isfinite(alpha):
        raise ParameterError(f"alpha must lie in the open interval (0, 2), got {alpha!r}")
    return alpha


def normalizing_constant(d: int, alpha: float) -> float:
    """Return ``c_{d,alpha} = 2^a G((d+a)/2) / (pi^{d/2} |G(-a/2)|)``.

    ``|Gamma(-alpha/2)|`` is rewritten with the reflection formula as
    ``pi / (sin(pi alpha/2) Gamma(1 + alpha/2))`` so that every Gamma call has
    a positive argument and the vanishing factor near ``alpha -> 2`` is the
    explicit sine.
    """
    alpha = _check_alpha(alpha)
    if int(d) != d or d < 1:
        raise ParameterError(f"dimension must be a positive integer, got {d!r}")
    log_c = (
        alpha * math.log(2.0)
        + gammaln((d + alpha) / 2.0)
        + gammaln(1.0 + alpha / 2.0)
        - (d / 2.0 + 1.0) * math.log(math.pi)
    )
    return math.exp(log_c) * math.sin(math.pi * alpha / 2.0)


@dataclass(frozen=True)
class StableParams:
    """Dimension, stability index and the matching normalizing constant."""

    alpha: float
    d: int = 1
    c: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "alpha", _check_alpha(self.alpha))
        object.__setattr__(self, "c", normalizing_constant(self.d, self.alpha))

    @property
    def exponent(self) -> float:
        """Decay exponent ``d + alpha`` of the Levy density."""
        return self.d + self.alpha


def levy_density(p: StableParams, x, y):
    """Jump intensity ``c |x - y|^{-d-alpha}``; symmetric in its arguments."""
    dist = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    if np.any(dist == 0.0):
        raise SingularityError("levy_density is singular on the diagonal x == y")
    out = p.c * dist ** (-p.exponent)
    return float(out) if out.ndim == 0 else out


def _antiderivative(p: StableParams, x, y):
    # F(y) = -(c/alpha) |y - x|^{-alpha} sign(y - x); F(+-inf) = 0.
    diff = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        mag = np.where(np.isinf(diff), 0.0, np.abs(diff) ** (-p.alpha))
        return -(p.c / p.alpha) * mag * np.sign(diff)


def levy_mass_interval(p: StableParams, x: float, a: float, b: float, pv_exclude: bool = False) -> float:
    """Exact ``int_a^b nu(x, y) dy`` in one dimension.

    ``a`` and ``b`` may be infinite.  If ``x`` lies inside ``[a, b]`` the
    integral diverges; with ``pv_exclude=True`` that cell is treated as the
    principal-value self-cell and contributes zero.
    """
    if p.d != 1:
        raise ParameterError("levy_mass_interval is implemented for d = 1 only")
    if not a < b:
        raise ContractError(f"need a < b, got a={a!r}, b={b!r}")
    if a <= x <= b:
        if pv_exclude:
            return 0.0
        raise SingularityError(f"x={x!r} lies in the integration cell [{a!r}, {b!r}]")
    return float(_antiderivative(p, x, b) - _antiderivative(p, x, a))


def levy_tail_mass(p: StableParams, x, l: float, r: float):
    """Exact ``nu(x, (-inf, l] u [r, inf))`` for ``l < x < r`` (vectorized)."""
    x = np.asarray(x, dtype=float)
    out = (p.c / p.alpha) * ((x - l) ** (-p.alpha) + (r - x) ** (-p.alpha))
    return float(out) if out.ndim == 0 else out


def cell_mass_matrix(p: StableParams, x: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Matrix of ``nu(x_i, [e_j, e_{j+1}])``; cells containing ``x_i`` get 0.

    Rows index the evaluation points, columns the cells cut by ``edges``.
    """
    F = _antiderivative(p, x[:, None], edges[None, :])
    M = F[:, 1:] - F[:, :-1]
    inside = (edges[None, :-1] <= x[:, None]) & (x[:, None] <= edges[None, 1:])
    M[inside] = 0.0
    return M


def standard_stable(alpha: float, rng: np.random.Generator, size=None):
    """Standard symmetric alpha-stable draws with characteristic function ``exp(-|xi|^alpha)``."""
    alpha = _check_alpha(alpha)
    v = rng.uniform(-math.pi / 2.0, math.pi / 2.0, size=size)
    if alpha == 1.0:
        return np.tan(v)
    w = rng.standard_exponential(size=size)
    return (
        np.sin(alpha * v)
        / np.cos(v) ** (1.0 / alpha)
        * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha)
    )


def sample_stable_increment(p: StableParams, t: float, rng: np.random.Generator, size=None):
    """Draw from ``p_t`` as ``t^{1/alpha} S`` with ``S`` standard symmetric stable."""
    if p.d != 1:
        raise ParameterError("sampling is implemented for d = 1 only")
    if not t > 0:
        raise ParameterError(f"t must be positive, got {t!r}")
    return t ** (1.0 / p.alpha) * standard_stable(p.alpha, rng, size)


def heat_kernel_envelope(p: StableParams, t: float, x: float,
                         c_lo: float = ENVELOPE_LOWER, c_hi: float = ENVELOPE_UPPER):
    """Sanity band ``(c_lo m, c_hi m)`` with ``m = min(t^{-d/a}, t |x|^{-d-a})``."""
    if not t > 0:
        raise ParameterError(f"t must be positive, got {t!r}")
    m = t ** (-p.d / p.alpha)
    if x != 0:
        m = min(m, t * abs(x) ** (-p.exponent))
    return c_lo * m, c_hi * m


def fractional_laplacian_apply(p: StableParams, grid_function, x_index: int, quadrature=None) -> float:
    """Principal-value fractional Laplacian of piecewise-constant data at a cell center.

    ``grid_function`` is a :class:`~reflected_stable.domain_grid.GridFunction`
    carrying cell values and an exterior extension.  The self-cell is dropped;
    the other cells are integrated exactly and the exterior term goes through
    the grid's exterior quadrature.
    """
    from .domain_grid import exterior_quadrature

    exterior = getattr(grid_function, "exterior", None)
    if exterior is None:
        raise ContractError("fractional_laplacian_apply needs an exterior extension")
    grid = grid_function.grid
    u = np.asarray(grid_function.values, dtype=float)
    xi = grid.centers[x_index]
    row = cell_mass_matrix(p, np.array([xi]), grid.edges)[0]
    interior = float(np.dot(u - u[x_index], row))
    if quadrature is None:
        quadrature = exterior_quadrature(grid.domain, p)
    z = quadrature.nodes
    vals = np.asarray(exterior(z), dtype=float)
    dens = levy_density(p, xi, z)
    return interior + float(np.sum(quadrature.weights * dens * (vals - u[x_index])))
