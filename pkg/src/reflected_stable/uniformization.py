"""Matrix exponentials of (sub-)generator matrices by uniformization.

With ``q >= max_i -L_ii`` the matrix ``Q = I + L/q`` is entrywise
nonnegative and ``exp(tL) = sum_k Poisson(k; qt) Q^k``.  Every quantity
below is a nonnegative combination of powers of ``Q``, so nonnegativity
and sub-stochasticity survive up to rounding.  Long horizons are split
into ``2^s`` equal pieces and recombined by squaring.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.stats import poisson

DEFAULT_TAIL = 1e-12
_CHUNK = 32.0


def uniformization_rate(L: np.ndarray) -> float:
    return float(max(-np.min(np.diag(L)), 0.0))


def _truncation(lam: float, tol: float) -> int:
    """Smallest ``K`` with ``P(N > K) <= tol`` for ``N ~ Poisson(lam)``, plus a small pad."""
    if lam == 0.0:
        return 0
    # scipy's isf is unreliable for tails far below machine epsilon; bisect on sf instead
    lo = int(lam)
    step = max(1, int(math.sqrt(lam)))
    hi = lo + step
    while poisson.sf(hi, lam) > tol:
        lo, hi = hi, hi + step
        step *= 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if poisson.sf(mid, lam) > tol:
            lo = mid
        else:
            hi = mid
    return hi + 2


def _horner(Q: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    n = Q.shape[0]
    out = coeffs[-1] * np.eye(n)
    for c in coeffs[-2::-1]:
        out = out @ Q
        out[np.diag_indices(n)] += c
    return out


def _split(q: float, t: float):
    s = 0 if q * t <= _CHUNK else int(math.ceil(math.log2(q * t / _CHUNK)))
    return s, t / 2.0 ** s


def expm(L: np.ndarray, t: float, tol: float = DEFAULT_TAIL) -> np.ndarray:
    """``exp(tL)`` with neglected Poisson mass below ``tol``."""
    return expm_and_integral(L, t, tol, integral=False)[0]


def expm_and_integral(L: np.ndarray, t: float, tol: float = DEFAULT_TAIL, integral: bool = True):
    """Return ``(exp(tL), int_0^t exp(sL) ds)``; the integral is ``None`` unless requested."""
    n = L.shape[0]
    q = uniformization_rate(L)
    if q == 0.0 or t == 0.0:
        return np.eye(n), (t * np.eye(n) if integral else None)
    s, tau = _split(q, t)
    Q = np.eye(n) + L / q
    lam = q * tau
    kk = np.arange(_truncation(lam, tol / 2.0 ** s) + 1)
    E = _horner(Q, poisson.pmf(kk, lam))
    W = _horner(Q, poisson.sf(kk, lam) / q) if integral else None
    for _ in range(s):
        if integral:
            W = W + E @ W
        E = E @ E
    return E, W


def product_weights(L: np.ndarray, tau: float, tol: float = DEFAULT_TAIL):
    """Hat-function weights of ``exp(uL)`` on ``[0, tau]``.

    Returns ``A = int_0^tau exp(uL)(1 - u/tau) du`` and
    ``B = int_0^tau exp(uL)(u/tau) du``, both nonnegative.
    """
    n = L.shape[0]
    q = uniformization_rate(L)
    if q == 0.0:
        return 0.5 * tau * np.eye(n), 0.5 * tau * np.eye(n)
    Q = np.eye(n) + L / q
    lam = q * tau
    kk = np.arange(_truncation(lam, tol * 1e-2) + 2)
    whole = poisson.sf(kk, lam) / q
    first = (kk + 1) * poisson.sf(kk + 1, lam) / (q * q * tau)
    return _horner(Q, whole - first), _horner(Q, first)


def first_passage_block(L: np.ndarray, J: np.ndarray, tau: float, tol: float = DEFAULT_TAIL) -> np.ndarray:
    """``int_0^tau exp(vL) J exp((tau - v)L) dv``.

    This is the upper-right block of ``exp(tau [[L, J], [0, L]])``, evaluated
    by uniformizing the block matrix without forming it.
    """
    n = L.shape[0]
    q = max(uniformization_rate(L), 1e-300)
    s, step = _split(q, tau)
    Q = np.eye(n) + L / q
    Jq = J / q
    lam = q * step
    coeffs = poisson.pmf(np.arange(_truncation(lam, tol / 2.0 ** s) + 1), lam)
    X = coeffs[-1] * np.eye(n)
    Y = np.zeros((n, n))
    for c in coeffs[-2::-1]:
        Y = X @ Jq + Y @ Q
        X = X @ Q
        X[np.diag_indices(n)] += c
    for _ in range(s):
        Y = X @ Y + Y @ X
        X = X @ X
    return Y
