"""Euler walks of the killed and reflected processes.

Each step adds an exact stable increment of duration ``h``; an exit is
detected the first time the walk lands outside D.  Paths are processed in
fixed-size blocks, each with its own generator spawned from
``(seed, block_index)``, so a run is bit-reproducible and blocks could be
farmed out independently.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .domain_grid import Grid, IntervalDomain
from .errors import ContractError, ParameterError
from .reflection import ReflectionKernel
from .stable_core import StableParams, standard_stable

log = logging.getLogger(__name__)

BLOCK = 1 << 14


@dataclass(frozen=True)
class PathConfig:
    step: float = 1e-4
    t_max: float = 1.0
    max_reflections: int = 10 ** 6  # per unit time
    seed: int = 0

    def __post_init__(self):
        if not (self.step > 0 and math.isfinite(self.step)):
            raise ParameterError(f"step must be positive, got {self.step!r}")
        if not self.t_max > 0:
            raise ParameterError(f"t_max must be positive, got {self.t_max!r}")
        if int(self.max_reflections) != self.max_reflections or self.max_reflections < 1:
            raise ParameterError("max_reflections must be a positive integer")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ParameterError("seed must be a 64-bit unsigned integer")

    def check_against(self, p: StableParams, domain: IntervalDomain):
        limit = 1e-2 * domain.length ** p.alpha
        if self.step > limit:
            raise ParameterError(f"step {self.step} exceeds 1e-2 * |D|^alpha = {limit:.3g}")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.t_max / self.step - 1e-9))


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(block),)))


def _blocks(paths: int):
    for b, start in enumerate(range(0, paths, BLOCK)):
        yield b, start, min(start + BLOCK, paths)


def _check_start(domain: IntervalDomain, x0, paths: int) -> np.ndarray:
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (paths,)).copy()
    if not np.all(domain.contains(x0)):
        raise ContractError("starting points must lie inside D")
    return x0


@dataclass(frozen=True)
class KilledBatch:
    """First-exit data; ``tau`` is ``inf`` for paths still inside at ``t_max``."""

    tau: np.ndarray
    pre_exit: np.ndarray
    exit: np.ndarray
    config: PathConfig

    @property
    def exited(self) -> np.ndarray:
        return np.isfinite(self.tau)

    @property
    def paths(self) -> int:
        return self.tau.size


def simulate_killed(x0, p: StableParams, domain: IntervalDomain, cfg: PathConfig, paths: int) -> KilledBatch:
    """Run ``paths`` independent walks from ``x0`` until first exit or ``t_max``."""
    if int(paths) != paths or paths < 1:
        raise ParameterError(f"paths must be a positive integer, got {paths!r}")
    cfg.check_against(p, domain)
    x0 = _check_start(domain, x0, paths)
    tau = np.full(paths, np.inf)
    pre = np.full(paths, np.nan)
    ext = np.full(paths, np.nan)
    scale = cfg.step ** (1.0 / p.alpha)
    l, r = domain.l, domain.r
    for b, lo, hi in _blocks(paths):
        rng = block_rng(cfg.seed, b)
        idx = np.arange(lo, hi)
        x = x0[lo:hi]
        k = 0
        while idx.size and k < cfg.n_steps:
            k += 1
            y = x + scale * standard_stable(p.alpha, rng, idx.size)
            out = (y <= l) | (y >= r)
            if out.any():
                hit = idx[out]
                tau[hit] = k * cfg.step
                pre[hit] = x[out]
                ext[hit] = y[out]
                keep = ~out
                idx, x = idx[keep], y[keep]
            else:
                x = y
    return KilledBatch(tau, pre, ext, cfg)


@dataclass(frozen=True)
class ReflectedPathRecord:
    exit_times: np.ndarray
    pre_exit_positions: np.ndarray
    exit_positions: np.ndarray
    restart_positions: np.ndarray
    final_position: float
    flagged: bool = False


@dataclass(frozen=True)
class ReflectedBatch:
    """Final positions plus every reflection event, grouped by path in time order."""

    final: np.ndarray
    reflections: np.ndarray
    flagged: np.ndarray
    event_path: np.ndarray
    event_time: np.ndarray
    event_pre: np.ndarray
    event_exit: np.ndarray
    event_restart: np.ndarray
    config: PathConfig

    @property
    def paths(self) -> int:
        return self.final.size

    @property
    def accumulation_rate(self) -> float:
        """Fraction of paths that hit the reflection cap."""
        return float(self.flagged.mean())

    def record(self, i: int) -> ReflectedPathRecord:
        lo, hi = np.searchsorted(self.event_path, [i, i + 1])
        sl = slice(lo, hi)
        return ReflectedPathRecord(self.event_time[sl].copy(), self.event_pre[sl].copy(),
                                   self.event_exit[sl].copy(), self.event_restart[sl].copy(),
                                   float(self.final[i]), bool(self.flagged[i]))


def _reflected_block(x, k: ReflectionKernel, p: StableParams, domain: IntervalDomain, step: float,
                     n_steps: int, rng: np.random.Generator, keep_events: bool, snap_every: int = 0):
    scale = step ** (1.0 / p.alpha)
    l, r = domain.l, domain.r
    count = np.zeros(x.size, dtype=np.int64)
    events = []
    snaps = []
    for s in range(1, n_steps + 1):
        y = x + scale * standard_stable(p.alpha, rng, x.size)
        out = (y <= l) | (y >= r)
        if out.any():
            where = np.flatnonzero(out)
            z = y[where]
            restart = k.sample_batch(z, rng)
            if keep_events:
                events.append((where, np.full(where.size, s * step), x[where], z, restart))
            count[where] += 1
            y[where] = restart
        x = y
        if snap_every and s % snap_every == 0:
            snaps.append(x.copy())
    return x, count, events, snaps


def simulate_reflected(x0, k: ReflectionKernel, p: StableParams, cfg: PathConfig, paths: int) -> ReflectedBatch:
    """Walks that restart from ``mu(Y_tau, .)`` at each exit, run to ``t_max``.

    The clock does not advance at a restart; the step that detected the exit
    counts in full.
    """
    if int(paths) != paths or paths < 1:
        raise ParameterError(f"paths must be a positive integer, got {paths!r}")
    domain = k.domain
    cfg.check_against(p, domain)
    x0 = _check_start(domain, x0, paths)
    final = np.empty(paths)
    refl = np.zeros(paths, dtype=np.int64)
    cols = [[] for _ in range(5)]
    for b, lo, hi in _blocks(paths):
        x, count, events, _ = _reflected_block(x0[lo:hi], k, p, domain, cfg.step, cfg.n_steps,
                                               block_rng(cfg.seed, b), keep_events=True)
        final[lo:hi] = x
        refl[lo:hi] = count
        for ev in events:
            cols[0].append(ev[0] + lo)
            for j in range(1, 5):
                cols[j].append(ev[j])
    arrays = [np.concatenate(c) if c else np.empty(0) for c in cols]
    arrays[0] = arrays[0].astype(np.int64)
    order = np.argsort(arrays[0], kind="stable")
    arrays = [a[order] for a in arrays]
    cap = cfg.max_reflections * cfg.t_max
    flagged = refl > cap
    if flagged.any():
        log.warning("%d paths exceeded the reflection cap %g", int(flagged.sum()), cap)
    return ReflectedBatch(final, refl, flagged, *arrays, config=cfg)


def histogram(values, edges) -> np.ndarray:
    """Probability vector of ``values`` over bins ``[e_i, e_{i+1})``."""
    counts, _ = np.histogram(values, bins=edges)
    return counts / max(len(values), 1)


def tv_noise(probs, samples: int, reps: int = 200, seed: int = 0) -> tuple:
    """Mean and standard deviation of the TV distance between an empirical law of
    ``samples`` draws and the law ``probs`` itself, by multinomial resampling."""
    probs = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    probs = probs / probs.sum()
    rng = np.random.default_rng(seed)
    tv = 0.5 * np.abs(rng.multinomial(samples, probs, size=reps) / samples - probs).sum(axis=1)
    return float(tv.mean()), float(tv.std())


@dataclass(frozen=True)
class BoxResult:
    box: tuple
    frequency: float
    mass: float
    z: float


def empirical_ikeda_watanabe(batch: KilledBatch, boxes: Sequence[tuple], masses: Sequence[float]):
    """Compare ``P(tau in I, Y_{tau-} in A, Y_tau in B)`` with deterministic masses.

    Each box is ``(I, A, B)`` with each entry a ``(lo, hi)`` pair; intervals
    are half-open ``[lo, hi)``.  The z-score uses the binomial standard
    deviation at the deterministic mass.
    """
    out = []
    n = batch.paths
    for box, m in zip(boxes, masses):
        (i0, i1), (a0, a1), (b0, b1) = box
        hit = ((batch.tau >= i0) & (batch.tau < i1) & (batch.pre_exit >= a0) & (batch.pre_exit < a1)
               & (batch.exit >= b0) & (batch.exit < b1))
        f = float(hit.mean())
        sd = math.sqrt(max(m * (1.0 - m), 1e-300) / n)
        out.append(BoxResult(tuple(box), f, float(m), (f - m) / sd))
    return out


def empirical_stationary(k: ReflectionKernel, p: StableParams, cfg: PathConfig, burn_in: float,
                         samples: int, stride: float, edges, chains: int = 2000) -> np.ndarray:
    """Occupation histogram over ``edges`` of ``chains`` long reflected walks.

    Each chain starts at the domain midpoint, runs ``burn_in`` and then records
    its position every ``stride`` until ``samples`` positions are collected in
    total.
    """
    if samples < chains:
        raise ParameterError("need at least one sample per chain")
    domain = k.domain
    cfg.check_against(p, domain)
    per_chain = int(math.ceil(samples / chains))
    burn_steps = int(round(burn_in / cfg.step))
    stride_steps = int(round(stride / cfg.step))
    if stride_steps < 1:
        raise ParameterError("stride must be at least one step")
    rng = block_rng(cfg.seed, 0)
    x = np.full(chains, domain.midpoint)
    x, _, _, _ = _reflected_block(x, k, p, domain, cfg.step, burn_steps, rng, keep_events=False)
    _, _, _, snaps = _reflected_block(x, k, p, domain, cfg.step, per_chain * stride_steps, rng,
                                      keep_events=False, snap_every=stride_steps)
    values = np.concatenate(snaps)[:samples]
    return histogram(values, edges)


def exit_bins(domain: IntervalDomain, levels: int = 8) -> np.ndarray:
    """Bin edges on D^c: geometric in the distance to the boundary on each side."""
    ell = domain.length
    d = np.concatenate([[0.0], ell * 2.0 ** -np.arange(levels, -4, -1, dtype=float)])
    left = domain.l - d[::-1]
    right = domain.r + d
    return np.concatenate([[-np.inf], left, right, [np.inf]])


def exit_histogram(batch: KilledBatch, edges) -> np.ndarray:
    """Exit-position law over exterior bins; the bin straddling D carries no mass."""
    z = batch.exit[batch.exited]
    return histogram(z, edges)
