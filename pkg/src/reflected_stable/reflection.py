"""Return kernels ``mu(z, dy)``: restart laws on D for exits to z in D^c.

Four variants are built in: a point mass, the uniform law on a compact
core, the interior-jump kernel ``nu(z, dy)|_D / nu(z, D)`` and convex
mixtures of these.  Each kernel is bound to its domain at construction.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .domain_grid import Grid, IntervalDomain, compact_core
from .errors import ContractError, ParameterError, TightnessError
from .stable_core import StableParams, _antiderivative

log = logging.getLogger(__name__)


def _as_exterior(domain: IntervalDomain, z) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if np.any(domain.contains(z)):
        raise ContractError("return kernels are defined for z outside D (or on its boundary)")
    return z


def _inside(domain: IntervalDomain, y):
    # keep draws strictly inside D after floating-point rounding
    y = np.minimum(np.maximum(y, np.nextafter(domain.l, domain.r)), np.nextafter(domain.r, domain.l))
    return y


class ReflectionKernel:
    """Common interface of the return kernels."""

    domain: IntervalDomain
    tag: str = "abstract"

    def sample(self, z: float, rng: np.random.Generator) -> float:
        return float(self.sample_batch(np.atleast_1d(z), rng)[0])

    def sample_batch(self, z, rng: np.random.Generator) -> np.ndarray:
        """One independent draw per entry of ``z``."""
        raise NotImplementedError

    def interval_mass(self, z, a: float, b: float) -> np.ndarray:
        """``mu(z, [a, b] n D)`` for each exterior point ``z``."""
        raise NotImplementedError

    def project(self, z, grid: Grid) -> np.ndarray:
        """Cell masses ``mu(z, cell_j)``: one row per exterior point."""
        raise NotImplementedError

    def intrinsic_margin(self) -> Optional[float]:
        """Margin of a core carrying all the mass for every z, if one exists."""
        return None

    def is_symmetric(self) -> bool:
        """True if the kernel commutes with reflection about the domain midpoint."""
        return False

    def to_config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Dirac(ReflectionKernel):
    """Restart at the fixed point ``y0`` regardless of the exit position."""

    domain: IntervalDomain
    y0: float
    tag = "dirac"

    def __post_init__(self):
        if not self.domain.contains(self.y0):
            raise ParameterError(f"Dirac restart point {self.y0!r} must lie in D")

    def sample_batch(self, z, rng):
        z = _as_exterior(self.domain, z)
        return np.full(z.shape, float(self.y0))

    def interval_mass(self, z, a, b):
        z = _as_exterior(self.domain, z)
        return np.full(z.shape, 1.0 if a <= self.y0 <= b else 0.0)

    def project(self, z, grid):
        z = _as_exterior(self.domain, z)
        out = np.zeros((z.size, grid.n))
        out[:, int(grid.cell_of(self.y0))] = 1.0
        return out

    def intrinsic_margin(self):
        half = self.domain.length / 2.0
        return min(float(self.domain.distance_to_boundary(self.y0)), 0.9 * half)

    def is_symmetric(self):
        return abs(self.y0 - self.domain.midpoint) < 1e-14 * self.domain.length

    def to_config(self):
        return {"tag": self.tag, "y0": self.y0}


@dataclass(frozen=True)
class UniformCore(ReflectionKernel):
    """Restart uniformly on the compact core ``[l + margin, r - margin]``."""

    domain: IntervalDomain
    margin: float
    tag = "uniform_core"

    def __post_init__(self):
        compact_core(self.domain, self.margin)

    @property
    def core(self) -> IntervalDomain:
        return compact_core(self.domain, self.margin)

    def sample_batch(self, z, rng):
        z = _as_exterior(self.domain, z)
        H = self.core
        return rng.uniform(H.l, H.r, size=z.shape)

    def interval_mass(self, z, a, b):
        z = _as_exterior(self.domain, z)
        H = self.core
        frac = max(0.0, min(b, H.r) - max(a, H.l)) / H.length
        return np.full(z.shape, frac)

    def project(self, z, grid):
        z = _as_exterior(self.domain, z)
        H = self.core
        row = grid.overlap(H.l, H.r) / H.length
        return np.broadcast_to(row, (z.size, grid.n)).copy()

    def intrinsic_margin(self):
        return float(self.margin)

    def is_symmetric(self):
        return True

    def to_config(self):
        return {"tag": self.tag, "margin": self.margin}


@dataclass(frozen=True)
class InteriorJump(ReflectionKernel):
    """Restart according to ``nu(z, dy)`` restricted to D and normalized.

    On the boundary itself ``nu(z, D)`` is infinite; the kernel is extended
    there by its weak limit from outside, which concentrates at z.  Draws at
    ``z`` in the boundary are therefore nudged to the nearest float inside D.
    Note that this family is not tight: ``mu(z, H) -> 0`` as ``z`` approaches
    the boundary for every compact ``H``.
    """

    domain: IntervalDomain
    params: StableParams
    tag = "interior_jump"

    def _dist(self, z):
        # distance from z to the near and far ends of D
        z = _as_exterior(self.domain, z)
        right = z >= self.domain.r
        near = np.where(right, z - self.domain.r, self.domain.l - z)
        return z, right, near, near + self.domain.length

    def sample_batch(self, z, rng):
        z, right, near, far = self._dist(z)
        a = self.params.alpha
        u = rng.uniform(size=z.shape)
        with np.errstate(divide="ignore"):
            lo, hi = near ** (-a), far ** (-a)
            # inverse CDF of the jump length s in (near, far), density ~ s^{-1-a}
            s = (lo - u * (lo - hi)) ** (-1.0 / a)
        s = np.where(near == 0.0, 0.0, s)
        y = np.where(right, z - s, z + s)
        return _inside(self.domain, y)

    def interval_mass(self, z, a, b):
        z, right, near, far = self._dist(z)
        a, b = max(a, self.domain.l), min(b, self.domain.r)
        if not a < b:
            return np.zeros(z.shape)
        num = _antiderivative(self.params, z, b) - _antiderivative(self.params, z, a)
        den = _antiderivative(self.params, z, self.domain.r) - _antiderivative(self.params, z, self.domain.l)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = num / den
        # boundary limit: all mass at z
        at_bdry = near == 0.0
        if np.any(at_bdry):
            out[at_bdry] = ((a <= z[at_bdry]) & (z[at_bdry] <= b)).astype(float)
        return out

    def project(self, z, grid):
        z, right, near, far = self._dist(z)
        e = grid.edges
        F = _antiderivative(self.params, z[:, None], e[None, :])
        cells = np.abs(F[:, 1:] - F[:, :-1])
        total = cells.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = cells / total
        at_bdry = near == 0.0
        if np.any(at_bdry):
            out[at_bdry] = 0.0
            out[at_bdry & right, grid.n - 1] = 1.0
            out[at_bdry & ~right, 0] = 1.0
        return out

    def is_symmetric(self):
        return True

    def to_config(self):
        return {"tag": self.tag}


@dataclass(frozen=True)
class Mixture(ReflectionKernel):
    """Convex combination of return kernels."""

    domain: IntervalDomain
    components: tuple  # of (weight, ReflectionKernel)
    tag = "mixture"

    def __post_init__(self):
        if not self.components:
            raise ParameterError("a mixture needs at least one component")
        w = np.array([c[0] for c in self.components], dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ParameterError(f"mixture weights must be nonnegative and sum to 1, got {w.tolist()}")
        for _, k in self.components:
            if k.domain != self.domain:
                raise ParameterError("mixture components must share the domain")

    @property
    def weights(self) -> np.ndarray:
        return np.array([c[0] for c in self.components], dtype=float)

    def sample_batch(self, z, rng):
        z = _as_exterior(self.domain, z)
        which = rng.choice(len(self.components), size=z.shape, p=self.weights)
        out = np.empty(z.shape)
        for i, (_, k) in enumerate(self.components):
            sel = which == i
            if np.any(sel):
                out[sel] = k.sample_batch(z[sel], rng)
        return out

    def interval_mass(self, z, a, b):
        return sum(w * k.interval_mass(z, a, b) for w, k in self.components)

    def project(self, z, grid):
        return sum(w * k.project(z, grid) for w, k in self.components)

    def intrinsic_margin(self):
        margins = [k.intrinsic_margin() for _, k in self.components]
        if any(m is None for m in margins):
            return None
        return min(margins)

    def is_symmetric(self):
        return all(k.is_symmetric() for _, k in self.components)

    def to_config(self):
        return {"tag": self.tag,
                "components": [dict(weight=w, **k.to_config()) for w, k in self.components]}


def kernel_from_config(cfg: dict, domain: IntervalDomain, params: StableParams) -> ReflectionKernel:
    """Build a kernel from ``{"tag": ..., **params}``; unknown keys are rejected."""
    cfg = dict(cfg)
    tag = cfg.pop("tag", None)
    expected = {"dirac": {"y0"}, "uniform_core": {"margin"}, "interior_jump": set(),
                "mixture": {"components"}}
    if tag not in expected:
        raise ParameterError(f"unknown reflection tag {tag!r}; expected one of {sorted(expected)}")
    if set(cfg) != expected[tag]:
        raise ParameterError(f"reflection {tag!r} takes keys {sorted(expected[tag])}, got {sorted(cfg)}")
    if tag == "dirac":
        return Dirac(domain, float(cfg["y0"]))
    if tag == "uniform_core":
        return UniformCore(domain, float(cfg["margin"]))
    if tag == "interior_jump":
        return InteriorJump(domain, params)
    comps = []
    for c in cfg["components"]:
        c = dict(c)
        if "weight" not in c:
            raise ParameterError("each mixture component needs a weight")
        w = float(c.pop("weight"))
        comps.append((w, kernel_from_config(c, domain, params)))
    return Mixture(domain, tuple(comps))


def mu_sample(k: ReflectionKernel, z: float, rng: np.random.Generator) -> float:
    """One draw from ``mu(z, .)``; always strictly inside D."""
    return k.sample(z, rng)


def mu_grid_projection(k: ReflectionKernel, z, grid: Grid) -> np.ndarray:
    """Probability vector of cell masses of ``mu(z, .)`` (2-D for array ``z``)."""
    out = k.project(z, grid)
    return out[0] if np.ndim(z) == 0 else out


@dataclass(frozen=True)
class TightnessCertificate:
    eps: float
    H: IntervalDomain
    inf_mass: float
    margin: float
    worst_z: float
    probes: int


def tightness_probes(domain: IntervalDomain, boundary_probe_count: int = 20) -> np.ndarray:
    """Exterior probe points: geometric approach to each endpoint plus far field."""
    ell = domain.length
    near = 2.0 ** -np.arange(1, boundary_probe_count + 1, dtype=float)
    far = np.array([1.0, 2.0, 5.0, 10.0])
    d = np.concatenate([near, far]) * ell
    return np.concatenate([domain.l - d, domain.r + d])


def check_tightness(k: ReflectionKernel, eps: float, boundary_probe_count: int = 20) -> TightnessCertificate:
    """Find a core ``H = [l+m, r-m]`` with ``inf_z mu(z, H) >= 1 - eps`` over the probe set.

    A kernel with an intrinsic core (Dirac, UniformCore, mixtures of those)
    is certified on that core directly.  Otherwise margins are tried from
    large to small.  The probe set is finite; a certificate is a statement
    about those points only.
    """
    if not (0.0 < eps < 1.0):
        raise ParameterError(f"eps must lie in (0, 1), got {eps!r}")
    D = k.domain
    z = tightness_probes(D, boundary_probe_count)
    half = D.length / 2.0
    candidates = []
    m0 = k.intrinsic_margin()
    if m0 is not None:
        candidates.append(m0)
    candidates += [0.9 * half * 2.0 ** -j for j in range(0, 60)]
    worst = (None, np.inf)
    for m in candidates:
        if not D.l < D.l + m < D.r - m < D.r:
            break
        H = compact_core(D, m)
        mass = k.interval_mass(z, H.l, H.r)
        i = int(np.argmin(mass))
        if mass[i] >= 1.0 - eps:
            return TightnessCertificate(eps, H, float(mass[i]), m, float(z[i]), z.size)
        worst = (float(z[i]), float(mass[i]))
    raise TightnessError(
        f"no core with mu(z, H) >= {1 - eps} on the probe set; worst z = {worst[0]} (mass {worst[1]:.3g})",
        worst_z=worst[0], worst_mass=worst[1])


def weak_continuity_probe(k: ReflectionKernel, grid: Grid, n_tests: int = 20, seed: int = 0) -> float:
    """Largest ratio ``|mu(z,f) - mu(z',f)| / |z - z'|`` over random 1-Lipschitz ``f``.

    Diagnostic only; the value is logged and returned, never enforced.
    """
    rng = np.random.default_rng(seed)
    z = tightness_probes(k.domain, 12)
    z = z[k.domain.distance_to_boundary(z) > 0]
    order = np.argsort(z)
    z = z[order]
    P = k.project(z, grid)
    x = grid.centers
    worst = 0.0
    for _ in range(n_tests):
        knots = rng.uniform(k.domain.l, k.domain.r, size=3)
        slopes = rng.uniform(-1, 1, size=3)
        f = np.sum(slopes[None, :] * np.abs(x[:, None] - knots[None, :]), axis=1) / 3.0
        vals = P @ f
        same_side = np.sign(z[1:] - k.domain.midpoint) == np.sign(z[:-1] - k.domain.midpoint)
        ratios = np.abs(np.diff(vals)) / np.diff(z)
        if np.any(same_side):
            worst = max(worst, float(np.max(ratios[same_side])))
    log.info("weak-continuity probe for %s: max Lipschitz ratio %.3g", k.tag, worst)
    return worst
