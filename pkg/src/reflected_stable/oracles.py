"""Closed-form reference values for the killed process on an interval."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import gamma

from .domain_grid import IntervalDomain


def mean_exit_time(domain: IntervalDomain, alpha: float, x):
    """``E^x tau_D = ((x - l)(r - x))^{alpha/2} / Gamma(1 + alpha)`` in one dimension."""
    x = np.asarray(x, dtype=float)
    return ((x - domain.l) * (domain.r - x)) ** (alpha / 2.0) / gamma(1.0 + alpha)


def poisson_kernel(domain: IntervalDomain, alpha: float, x, z):
    """Exit-position density of the stable process from ``x`` in D to ``z`` outside."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    ratio = ((x - domain.l) * (domain.r - x)) / ((z - domain.l) * (z - domain.r))
    return math.sin(math.pi * alpha / 2.0) / math.pi * ratio ** (alpha / 2.0) / np.abs(x - z)


def characteristic_function(alpha: float, t: float, xi):
    return np.exp(-t * np.abs(np.asarray(xi, dtype=float)) ** alpha)


def cauchy_quartiles(t: float):
    """Quartiles of the alpha = 1 increment over time ``t`` (Cauchy with scale ``t``)."""
    return -t, t
