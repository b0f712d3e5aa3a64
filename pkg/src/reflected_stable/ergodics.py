"""Long-time behaviour of the reflected chain: stationary law, Doeblin constants, TV decay."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, ContractionError, ConvergenceError, ParameterError

JITTER = 1e-12
TV_FLOOR = 1e-12


def _matrix(K) -> np.ndarray:
    return np.asarray(getattr(K, "K", K), dtype=float)


def _check_probability(nu, n: int) -> np.ndarray:
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (n,):
        raise ContractError(f"distribution must have shape ({n},), got {nu.shape}")
    if np.any(nu < 0) or abs(nu.sum() - 1.0) > 1e-12:
        raise ContractError("distribution must be nonnegative and sum to 1")
    return nu


def adjoint_step(K, nu) -> np.ndarray:
    """``nu K``: the law after one step when started from ``nu``."""
    K = _matrix(K)
    return _check_probability(nu, K.shape[0]) @ K


def tv_distance(a, b) -> float:
    return 0.5 * float(np.abs(np.asarray(a) - np.asarray(b)).sum())


@dataclass(frozen=True)
class StationaryDensity:
    pi: np.ndarray
    residual: float
    delta_t: Optional[float]
    iterations: int
    eigen_defect: float


def _power(K: np.ndarray, nu: np.ndarray, tol: float, max_iter: int):
    inc = np.inf
    for it in range(1, max_iter + 1):
        nxt = nu @ K
        nxt /= nxt.sum()
        inc = float(np.abs(nxt - nu).sum())
        nu = nxt
        if inc < tol:
            return nu, it
    raise ConvergenceError(f"power iteration reached {max_iter} steps (last increment {inc:.3e})", inc)


def stationary_density(K, tol: float = 1e-13, max_iter: int = 100_000) -> StationaryDensity:
    """Power iteration from the uniform law, cross-checked by a left eigenvector."""
    t = getattr(K, "t", None)
    K = _matrix(K)
    n = K.shape[0]
    if np.max(np.abs(K.sum(axis=1) - 1.0)) > 1e-8:
        raise ContractError("stationary_density needs a Markov matrix (row sums 1)")
    pi, its = _power(K, np.full(n, 1.0 / n), tol, max_iter)
    w, V = np.linalg.eig(K.T)
    v = np.real(V[:, np.argmin(np.abs(w - 1.0))])
    v = v / v.sum()
    residual = float(np.abs(pi @ K - pi).sum())
    return StationaryDensity(pi, residual, t, its, float(np.abs(v - pi).sum()))


def uniqueness_probe(K, pi, n_starts: int = 10, seed: int = 0, tol: float = 1e-13,
                     max_iter: int = 100_000) -> float:
    """Largest L1 distance to ``pi`` of power iterations started from random laws."""
    K = _matrix(K)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for nu in rng.dirichlet(np.ones(K.shape[0]), size=n_starts):
        out, _ = _power(K, nu, tol, max_iter)
        worst = max(worst, float(np.abs(out - pi).sum()))
    return worst


@dataclass(frozen=True)
class DoeblinCertificate:
    t: Optional[float]
    H_cells: np.ndarray
    delta: float
    eps: float
    pairwise_l1_max: float
    core_mass_later: Optional[float] = None

    @property
    def dobrushin_rate(self) -> float:
        """Certified exponential rate ``-log(1 - eps/2) / t``."""
        return float(-np.log1p(-self.eps / 2.0) / self.t)


def doeblin_constants(K, H_cells, h: float, K_later=None) -> DoeblinCertificate:
    """Minorization constants of a transition matrix over the core cells.

    ``delta`` is the smallest density ``K[x, y] / h`` over all rows ``x`` and
    core cells ``y``; ``eps = 2 delta |H|``.  The largest pairwise L1 distance
    between rows is measured directly.  ``K_later`` (a later-time kernel) gives
    the smallest core mass ``K_later(x, H)``.
    """
    t = getattr(K, "t", None)
    K = _matrix(K)
    H_cells = np.asarray(H_cells, dtype=int)
    if H_cells.size == 0:
        raise ContractError("core has no cells")
    delta = float(np.min(K[:, H_cells]) / h)
    if not delta > 0:
        raise ParameterError(f"kernel density vanishes on the core (delta = {delta:.3e})")
    eps = 2.0 * delta * H_cells.size * h
    worst = 0.0
    for i in range(K.shape[0] - 1):
        worst = max(worst, float(np.max(np.abs(K[i + 1:] - K[i]).sum(axis=1))))
    later = None
    if K_later is not None:
        later = float(np.min(_matrix(K_later)[:, H_cells].sum(axis=1)))
    return DoeblinCertificate(t, H_cells, delta, eps, worst, later)


@dataclass(frozen=True)
class DecayFit:
    times: np.ndarray
    distances: np.ndarray
    M: float
    omega: float
    r_squared: float
    points: int


def _fit(times, d) -> DecayFit:
    mask = d > TV_FLOOR
    if mask.sum() < 3:
        return DecayFit(times, d, np.nan, np.nan, np.nan, int(mask.sum()))
    x, y = times[mask], np.log(d[mask])
    slope, intercept = np.polyfit(x, y, 1)
    pred = intercept + slope * x
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(times, d, float(np.exp(intercept)), float(-slope), r2, int(mask.sum()))


def tv_convergence(K, pi, nu0_list: Sequence, horizon: float, delta_t: Optional[float] = None):
    """TV distance to ``pi`` along ``nu0 K^m`` and a log-linear fit per start.

    Points at or below ``1e-12`` are left out of the fit.  The first entry of
    each table is ``t = 0``, which is also left out since the decay only
    becomes geometric after the first step.
    """
    dt = delta_t if delta_t is not None else getattr(K, "t", None)
    if dt is None or not dt > 0:
        raise ParameterError("time step of the kernel is unknown; pass delta_t")
    steps = int(round(horizon / dt))
    if steps < 1 or abs(steps * dt - horizon) > 1e-9 * horizon:
        raise ParameterError("horizon must be a positive multiple of the time step")
    K = _matrix(K)
    pi = np.asarray(pi, dtype=float)
    times = dt * np.arange(steps + 1)
    fits = []
    for nu in nu0_list:
        nu = _check_probability(nu, K.shape[0])
        d = np.empty(steps + 1)
        for m in range(steps + 1):
            d[m] = tv_distance(nu, pi)
            nu = nu @ K
        if np.any(np.diff(d) > JITTER):
            i = int(np.argmax(np.diff(d)))
            raise ContractionError(f"TV distance increased at step {i + 1}: {d[i]:.3e} -> {d[i + 1]:.3e}")
        f = _fit(times[1:], d[1:])
        fits.append(DecayFit(times, d, f.M, f.omega, f.r_squared, f.points))
    return fits
