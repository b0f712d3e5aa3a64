"""Killed generator on a cell grid and the kernels built from it.

Cells are treated as states of a continuous-time Markov chain.  The rate
from cell ``i`` to cell ``j`` is the exact Levy mass of cell ``j`` seen from
the center of cell ``i``; the rate of leaving the domain is the quadrature
value of ``nu(x_i, D^c)``.  Heat kernels are matrix exponentials, the Green
matrix is ``-L^{-1}``, and the reflected kernel is assembled from the
Duhamel series, whose first term is computed exactly and whose higher terms
use product integration in time.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import toeplitz

from .domain_grid import ExteriorQuadrature, Grid, exterior_quadrature
from .errors import ConsistencyError, ContractError, ParameterError, QuadratureError, SeriesError
from .reflection import ReflectionKernel, TightnessCertificate, check_tightness, mu_grid_projection
from .stable_core import StableParams, cell_mass_matrix, levy_density, levy_tail_mass
from .uniformization import expm, expm_and_integral, first_passage_block, product_weights

log = logging.getLogger(__name__)

KILL_TOL = 1e-8
J_TOL = 1e-6
SURVIVAL_TOL = 1e-8
# absolute room for time-discretization error in series row sums
SERIES_ALLOWANCE = 1e-3
# series terms whose largest row mass falls below this are numerically zero
TERM_FLOOR = 1e-18
# Poisson tail for conservative generators; a 1e-12 tail leaks that much mass per step
MARKOV_TAIL = 1e-16


@dataclass(frozen=True)
class KilledGenerator:
    grid: Grid
    params: StableParams
    L: np.ndarray
    kill: np.ndarray
    quadrature: ExteriorQuadrature
    kill_defect: float

    @property
    def n(self) -> int:
        return self.grid.n


@dataclass(frozen=True)
class HeatKernelMatrix:
    t: float
    P: np.ndarray


@dataclass(frozen=True)
class PhiKernel:
    """``Phi_s = P(s) J`` on a time grid, plus the exact cumulative return mass."""

    times: np.ndarray
    Phi: np.ndarray  # (m, n, n)
    J: np.ndarray
    cumulative_mass: np.ndarray  # (m, n): int_0^{s_i} phi(s, x, D) ds


@dataclass(frozen=True)
class TransitionKernelMatrix:
    t: float
    K: np.ndarray
    series_depth: Optional[int]
    truncation_bound: float
    depth_evaluated: Optional[int] = None
    time_steps: Optional[int] = None
    eta: Optional[float] = None
    term_mass: tuple = field(default_factory=tuple)

    @property
    def row_sum_defect(self) -> float:
        return float(np.max(np.abs(self.K.sum(axis=1) - 1.0)))


def build_killed_generator(grid: Grid, p: StableParams, quadrature_order: int = 16) -> KilledGenerator:
    """Assemble ``L`` with exact off-diagonal cell masses and quadrature killing rates."""
    if p.d != 1:
        raise ParameterError("the grid generator is one-dimensional")
    quad = exterior_quadrature(grid.domain, p, order=quadrature_order)
    x = np.asarray(grid.centers)
    # uniform grid: masses depend on |i - j| only, so build from the first row
    M = toeplitz(cell_mass_matrix(p, x[:1], grid.edges)[0])
    kill = quad.tail_mass(p, x)
    exact = levy_tail_mass(p, x, grid.domain.l, grid.domain.r)
    defect = float(np.max(np.abs(kill - exact) / exact))
    if defect > KILL_TOL:
        raise QuadratureError(f"killing-rate defect {defect:.3e} exceeds {KILL_TOL:.0e}", defect)
    L = M.copy()
    L[np.diag_indices(grid.n)] = -(M.sum(axis=1) + kill)
    for a in (L, kill):
        a.setflags(write=False)
    return KilledGenerator(grid, p, L, kill, quad, defect)


def heat_kernel(g: KilledGenerator, t: float) -> HeatKernelMatrix:
    if not t > 0:
        raise ParameterError(f"t must be positive, got {t!r}")
    return HeatKernelMatrix(float(t), expm(g.L, t))


def green_function(g: KilledGenerator) -> np.ndarray:
    """Expected occupation times ``G[i, j]`` of cell ``j`` before exit, started at cell ``i``."""
    G = -np.linalg.inv(g.L)
    if not np.all(np.isfinite(G)):
        raise np.linalg.LinAlgError("killed generator is numerically singular")
    return G


def mean_exit_time(g: KilledGenerator, G: Optional[np.ndarray] = None) -> np.ndarray:
    G = green_function(g) if G is None else G
    return G.sum(axis=1)


@dataclass(frozen=True)
class PoissonKernel:
    x_index: int
    nodes: np.ndarray
    weights: np.ndarray
    density: np.ndarray

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights * self.density))


def poisson_kernel(g: KilledGenerator, x_index: int, nodes=None, weights=None,
                   G: Optional[np.ndarray] = None) -> PoissonKernel:
    """Exit-position density ``sum_v G[x, v] nu(x_v, z)`` at exterior points ``z``.

    Defaults to the generator's exterior quadrature nodes, so ``total_mass``
    is the quadrature of the density over the complement.
    """
    if nodes is None:
        nodes, weights = g.quadrature.nodes, g.quadrature.weights
    nodes = np.atleast_1d(np.asarray(nodes, dtype=float))
    if np.any(g.grid.domain.contains(nodes)):
        raise ContractError("Poisson kernel nodes must lie outside the domain")
    G = green_function(g) if G is None else G
    dens = G[x_index] @ levy_density(g.params, g.grid.centers[:, None], nodes[None, :])
    w = np.full(nodes.shape, np.nan) if weights is None else np.asarray(weights, dtype=float)
    return PoissonKernel(int(x_index), nodes, w, dens)


@dataclass(frozen=True)
class SurvivalResult:
    t: float
    direct: np.ndarray
    via_exit: np.ndarray
    discrepancy: float


def survival_probability(g: KilledGenerator, t: float, x_index=None, tol: float = SURVIVAL_TOL):
    """Survival ``P(t) 1`` checked against ``1 - int_0^t P(s) kill ds``.

    Returns a :class:`SurvivalResult` with whole vectors; when ``x_index`` is
    given the direct value at that cell is returned as a float instead.
    """
    if not t > 0:
        raise ParameterError(f"t must be positive, got {t!r}")
    P, W = expm_and_integral(g.L, t)
    direct = P.sum(axis=1)
    via_exit = 1.0 - W @ g.kill
    disc = float(np.max(np.abs(direct - via_exit)))
    if disc > tol:
        raise ConsistencyError(f"survival routes disagree by {disc:.3e} at t={t}")
    res = SurvivalResult(float(t), direct, via_exit, disc)
    if x_index is None:
        return res
    return float(direct[x_index])


def uniform_survival(g: KilledGenerator, H_cells: np.ndarray, T: float) -> float:
    """``min`` over the given cells of the survival probability at ``T``."""
    if len(H_cells) == 0:
        raise ContractError("core contains no cell centers; refine the grid")
    return float(np.min(expm(g.L, T).sum(axis=1)[H_cells]))


def reflection_matrix(g: KilledGenerator, k: ReflectionKernel, tol: float = J_TOL) -> np.ndarray:
    """``J[v, w] = int_{D^c} nu(x_v, z) mu(z, cell_w) dz`` by exterior quadrature."""
    q = g.quadrature
    V = levy_density(g.params, g.grid.centers[:, None], q.nodes[None, :]) * q.weights[None, :]
    J = V @ mu_grid_projection(k, q.nodes, g.grid)
    defect = float(np.max(np.abs(J.sum(axis=1) - g.kill) / g.kill))
    if defect > tol:
        raise QuadratureError(f"reflection matrix row-sum defect {defect:.3e} exceeds {tol:.0e}", defect)
    return J


def phi_kernel(g: KilledGenerator, k: ReflectionKernel, time_grid: Sequence[float],
               J: Optional[np.ndarray] = None) -> PhiKernel:
    s = np.asarray(time_grid, dtype=float)
    if s.ndim != 1 or s.size == 0 or s[0] <= 0 or np.any(np.diff(s) <= 0):
        raise ContractError("time grid must be positive and strictly increasing")
    J = reflection_matrix(g, k) if J is None else J
    n = g.n
    Phi = np.empty((s.size, n, n))
    cum = np.empty((s.size, n))
    P = np.eye(n)
    mass = np.zeros(n)
    prev = 0.0
    for i, si in enumerate(s):
        E, W = expm_and_integral(g.L, si - prev)
        mass = mass + P @ (W @ g.kill)
        P = P @ E
        Phi[i] = P @ J
        cum[i] = mass
        prev = si
    return PhiKernel(s, Phi, J, cum)


def gamma_kernel(g: KilledGenerator, k: ReflectionKernel, J: Optional[np.ndarray] = None,
                 tol: float = KILL_TOL) -> np.ndarray:
    """Conservative generator ``L + J`` with the diagonal reset so rows sum to zero."""
    J = reflection_matrix(g, k) if J is None else J
    A = g.L + J
    defect = float(np.max(np.abs(A.sum(axis=1))))
    if defect > tol * max(1.0, float(np.max(g.kill))):
        raise QuadratureError(f"reflected generator row-sum defect {defect:.3e}", defect)
    Lg = A.copy()
    np.fill_diagonal(Lg, 0.0)
    np.fill_diagonal(Lg, -Lg.sum(axis=1))
    return Lg


def exp_route_kernel(Lg: np.ndarray, t: float, tol: float = MARKOV_TAIL) -> TransitionKernelMatrix:
    """Reflected kernel from the conservative generator directly."""
    if not t > 0:
        raise ParameterError(f"t must be positive, got {t!r}")
    return TransitionKernelMatrix(float(t), expm(Lg, t, tol), series_depth=None, truncation_bound=0.0)


def series_eta(g: KilledGenerator, k: ReflectionKernel, T: float, eps: float = 0.5,
               cert: Optional[TightnessCertificate] = None) -> float:
    """``eta = min_H survival(T) * inf_z mu(z, H)``, a valid lower bound on the return-then-survive mass."""
    cert = check_tightness(k, eps) if cert is None else cert
    cells = g.grid.cells_in(cert.H.l, cert.H.r)
    if cells.size == 0:
        return 0.0
    return uniform_survival(g, cells, T) * cert.inf_mass


def truncation_bound(eta: float, depth: int) -> float:
    return float((1.0 - eta / 2.0) ** (depth // 2))


def _wide(stack: np.ndarray) -> np.ndarray:
    # (m, n, n) -> (n, m*n) with block k holding stack[k]
    m, n, _ = stack.shape
    return stack.transpose(1, 0, 2).reshape(n, m * n)


def _unwide(wide: np.ndarray, m: int) -> np.ndarray:
    n = wide.shape[0]
    return wide.reshape(n, m, n).transpose(1, 0, 2)


def duhamel_series(g: KilledGenerator, k: ReflectionKernel, t: float, depth: int = 40,
                   time_steps: int = 64, J: Optional[np.ndarray] = None, eta: Optional[float] = None,
                   allowance: float = SERIES_ALLOWANCE, all_times: bool = False):
    """Sum ``k_t = sum_{j <= depth} S^j p^D`` on a uniform time grid.

    The first reflection ``S p^D`` uses the exact convolution block over each
    step.  Higher terms integrate the piecewise-linear interpolant of the
    previous term against ``P(u) J`` exactly in ``u`` (product trapezoid).
    Every weight is a nonnegative matrix, so each term stays nonnegative.

    With ``all_times`` the kernels at every grid time ``t j / time_steps`` are
    returned as a list, otherwise only the kernel at ``t``.
    """
    if int(depth) != depth or depth < 1:
        raise ParameterError(f"depth must be a positive integer, got {depth!r}")
    if int(time_steps) != time_steps or time_steps < 16:
        raise ParameterError(f"time_steps must be an integer >= 16, got {time_steps!r}")
    if not t > 0:
        raise ParameterError(f"t must be positive, got {t!r}")
    m, n = int(time_steps), g.n
    tau = t / m
    J = reflection_matrix(g, k) if J is None else J
    E = expm(g.L, tau)
    P = np.empty((m + 1, n, n))
    P[0] = np.eye(n)
    for j in range(1, m + 1):
        P[j] = P[j - 1] @ E
    A0, B0 = product_weights(g.L, tau)
    Z = first_passage_block(g.L, J, tau)
    AJ, BJ = A0 @ J, B0 @ J
    WZ = P[:m] @ Z
    WA = P[:m] @ AJ
    WB = P[:m] @ BJ

    total = _wide(P).copy()
    term = _wide(P)
    masses = [float(np.max(P.sum(axis=2)))]
    used = 0
    for d in range(1, int(depth) + 1):
        new = np.zeros((n, (m + 1) * n))
        for j in range(m):
            hi = (m - j) * n
            if d == 1:
                new[:, (j + 1) * n:] += WZ[j] @ term[:, :hi]
            else:
                new[:, (j + 1) * n:] += WA[j] @ term[:, n:hi + n] + WB[j] @ term[:, :hi]
        total += new
        term = new
        used = d
        mass = float(np.max(_unwide(new, m + 1).sum(axis=2)))
        masses.append(mass)
        if mass < TERM_FLOOR:
            break
    if eta is None:
        eta = series_eta(g, k, t)
    bound = truncation_bound(eta, int(depth))
    Ks = _unwide(total, m + 1)
    defect = float(np.max(np.abs(Ks[m].sum(axis=1) - 1.0)))
    if defect > bound + allowance:
        raise SeriesError(f"row-sum defect {defect:.3e} exceeds bound {bound:.3e} + {allowance:.0e}")
    log.debug("duhamel series t=%g depth=%d evaluated=%d defect=%.3e", t, depth, used, defect)

    def _wrap(i):
        return TransitionKernelMatrix(t * i / m, Ks[i].copy(), int(depth), bound, used, m, eta, tuple(masses))

    if all_times:
        return [_wrap(i) for i in range(1, m + 1)]
    return _wrap(m)


def duhamel_residual(K: np.ndarray, P: np.ndarray, SK: np.ndarray) -> float:
    """``||K - P - S[K]||_inf`` for precomputed ``S[K]``."""
    return float(np.max(np.abs(K - P - SK).sum(axis=1)))


def chapman_kolmogorov_defect(half: np.ndarray, full: np.ndarray) -> float:
    """Matrix infinity-norm of ``K_{t/2} K_{t/2} - K_t``."""
    return float(np.max(np.abs(half @ half - full).sum(axis=1)))


def exit_law(g: KilledGenerator, x_index: int, edges, G: Optional[np.ndarray] = None) -> np.ndarray:
    """Exit-position masses ``P_D(x, [e_j, e_{j+1}])`` integrated exactly in ``z``.

    Bins inside D get zero.
    """
    G = green_function(g) if G is None else G
    M = cell_mass_matrix(g.params, np.asarray(g.grid.centers), np.asarray(edges, dtype=float))
    inside = (np.asarray(edges)[:-1] < g.grid.domain.r) & (np.asarray(edges)[1:] > g.grid.domain.l)
    M[:, inside] = 0.0
    return G[x_index] @ M


def occupation_between(g: KilledGenerator, s0: float, s1: float, G: Optional[np.ndarray] = None) -> np.ndarray:
    """``int_{s0}^{s1} P(s) ds``; ``s1`` may be infinite."""
    if not 0.0 <= s0 < s1:
        raise ContractError(f"need 0 <= s0 < s1, got ({s0!r}, {s1!r})")
    upper = (green_function(g) if G is None else G) if np.isinf(s1) else expm_and_integral(g.L, s1)[1]
    if s0 == 0.0:
        return upper
    return upper - expm_and_integral(g.L, s0)[1]


def ikeda_watanabe_mass(g: KilledGenerator, x_index: int, I, A, B, G: Optional[np.ndarray] = None) -> float:
    """``int_I ds int_A dv int_B dz p^D_s(x, v) nu(v, z)`` on the grid.

    ``A`` selects the cells whose centers it contains; ``B`` must lie in D^c.
    """
    (s0, s1), (a0, a1), (b0, b1) = I, A, B
    D = g.grid.domain
    if b0 < D.r and b1 > D.l:
        raise ContractError("exit box B must lie outside D")
    cells = g.grid.cells_in(a0, a1)
    W = occupation_between(g, s0, s1, G)
    rate = cell_mass_matrix(g.params, np.asarray(g.grid.centers)[cells], np.array([b0, b1]))[:, 0]
    return float(W[x_index, cells] @ rate)
