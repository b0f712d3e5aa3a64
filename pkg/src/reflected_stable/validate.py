"""The validation suite: one named check per acceptance property.

Heavy objects (generators, series kernels, Monte Carlo batches) are built
once in a :class:`Context` and shared between checks.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from scipy.stats import ks_2samp

from . import ergodics as er
from . import montecarlo as mc
from . import oracles
from . import resolvent as rs
from . import semigroup as sg
from .config import RunConfig
from .domain_grid import build_grid, compact_core
from .errors import ReflectedStableError
from .reflection import UniformCore
from .stable_core import StableParams, sample_stable_increment, standard_stable

log = logging.getLogger(__name__)

PASS, FAIL, INFO = "pass", "fail", "info"

CK_TOL = 3e-3
SERIES_FINAL_TOL = 1e-3
MARKOV_SLACK = 1e-8
POISSON_NORM_TOL = 1e-4
EXIT_TIME_TOL = 1e-2
RESOLVENT_IDENTITY_TOL = 1e-9
RENEWAL_TOL = 1e-10
MARKOV_RESOLVENT_TOL = 1e-9
R2_MIN = 0.99
PAIRWISE_SLACK = 1e-10
STATIONARY_TOL = 1e-10
UNIQUENESS_TOL = 1e-8
DELTA_INDEPENDENCE_TOL = 1e-6
SYMMETRY_TOL = 1e-9
MEAN_EXIT_TOL = 0.03
EXIT_LAW_TV = 0.02
IW_Z = 4.0
K1_TV = 0.03
STATIONARY_TV = 0.05
KS_LEVEL = 0.01
QUARTILE_TOL = 0.01

REFINEMENT = (100, 200, 400)
MARGINS = (0.2, 0.1, 0.05, 0.025)
TV_HORIZON = 15.0
SAMPLER_DRAWS = 1_000_000


@dataclass
class CheckResult:
    check: str
    status: str
    value: Any
    tolerance: Any
    note: str = ""


@dataclass
class RunReport:
    entries: List[CheckResult] = field(default_factory=list)

    def add(self, *args, **kw) -> CheckResult:
        r = CheckResult(*args, **kw)
        self.entries.append(r)
        return r

    @property
    def failed(self) -> List[str]:
        return [e.check for e in self.entries if e.status == FAIL]

    @property
    def passed(self) -> bool:
        return not self.failed

    def get(self, name: str) -> CheckResult:
        for e in self.entries:
            if e.check == name:
                return e
        raise KeyError(name)

    def to_json(self) -> list:
        return [asdict(e) for e in self.entries]


def _status(ok: bool) -> str:
    return PASS if ok else FAIL


def _inf_norm(A) -> float:
    return float(np.max(np.abs(A).sum(axis=1)))


def _seed(cfg: RunConfig, offset: int) -> int:
    return (cfg.seed + offset) % 2 ** 64


def _decreasing(seq) -> bool:
    return bool(np.all(np.diff(np.asarray(seq, dtype=float)) < 0))


def probe_functions(x) -> Dict[str, np.ndarray]:
    """Right-hand sides for the generator and boundary checks."""
    x = np.asarray(x, dtype=float)
    return {"x": x, "x2": x ** 2, "x3": x ** 3, "cos": np.cos(np.pi * x / 2.0), "exp": np.exp(x)}


def bvp_source(name: str, grid) -> np.ndarray:
    x = grid.centers
    if name == "left_indicator":
        return (x < grid.domain.midpoint).astype(float)
    return probe_functions(x)[name]


class Context:
    """Lazily built shared objects for one configuration."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.k = cfg.kernel()
        self.p = cfg.params
        self.D = cfg.interval

    @cached_property
    def grid(self):
        return self.cfg.grid()

    @cached_property
    def g(self):
        return sg.build_killed_generator(self.grid, self.p, self.cfg.quadrature_order)

    @cached_property
    def J(self):
        return sg.reflection_matrix(self.g, self.k)

    @cached_property
    def Lg(self):
        return sg.gamma_kernel(self.g, self.k, self.J)

    @cached_property
    def G(self):
        return sg.green_function(self.g)

    @cached_property
    def x0(self) -> int:
        return int(self.grid.cell_of(self.D.midpoint))

    @cached_property
    def eta(self) -> float:
        return sg.series_eta(self.g, self.k, 1.0)

    @cached_property
    def ladder(self):
        m = self.cfg.time_steps
        return tuple(sorted({max(16, m // 4), max(16, m // 2), m}))

    @cached_property
    def series(self) -> Dict[int, list]:
        """Series kernels at every grid time in (0, 1] for each ladder step count."""
        out = {}
        for m in self.ladder:
            out[m] = sg.duhamel_series(self.g, self.k, 1.0, depth=self.cfg.depth, time_steps=m, J=self.J,
                                       eta=self.eta, all_times=True)
        return out

    @property
    def K1(self):
        return self.series[self.cfg.time_steps][-1]

    def series_at(self, t: float):
        ks = self.series[self.cfg.time_steps]
        i = int(round(t * self.cfg.time_steps)) - 1
        if not (0 <= i < len(ks) and abs(ks[i].t - t) < 1e-12):
            raise ValueError(f"t = {t} is not on the series time grid")
        return ks[i]

    @cached_property
    def exp_K1(self):
        return sg.exp_route_kernel(self.Lg, 1.0)

    def exp_kernel(self, t: float):
        return sg.exp_route_kernel(self.Lg, t)

    @cached_property
    def killed_batch(self) -> mc.KilledBatch:
        cfg = mc.PathConfig(step=self.cfg.h, t_max=50.0 * self.D.length ** self.p.alpha, seed=_seed(self.cfg, 0))
        return mc.simulate_killed(self.grid.centers[self.x0], self.p, self.D, cfg, self.cfg.paths)

    @cached_property
    def reflected_batch(self) -> mc.ReflectedBatch:
        cfg = mc.PathConfig(step=self.cfg.h, t_max=1.0, seed=_seed(self.cfg, 1))
        return mc.simulate_reflected(self.grid.centers[self.x0], self.k, self.p, cfg, self.cfg.paths)


# --- individual checks ------------------------------------------------------


def check_markov_mass(ctx: Context, rep: RunReport):
    K = ctx.K1
    bound = K.truncation_bound + MARKOV_SLACK
    rep.add("markov_mass", _status(K.row_sum_defect <= bound), K.row_sum_defect, bound,
            f"eta={K.eta:.4g}; depth {K.series_depth}, {K.depth_evaluated} terms above 1e-18")


def check_series_vs_exp(ctx: Context, rep: RunReport):
    errs = [_inf_norm(ctx.series[m][-1].K - ctx.exp_K1.K) for m in ctx.ladder]
    halving = all(b <= 0.5 * a for a, b in zip(errs, errs[1:]))
    ok = halving and len(errs) == 3 and errs[-1] < SERIES_FINAL_TOL
    rep.add("series_vs_exp", _status(ok), errs, {"final": SERIES_FINAL_TOL, "ratio": 0.5},
            f"time_steps {list(ctx.ladder)}")


def check_chapman_kolmogorov(ctx: Context, rep: RunReport):
    half = ctx.series_at(0.5).K
    d = sg.chapman_kolmogorov_defect(half, ctx.K1.K)
    rep.add("chapman_kolmogorov", _status(d <= CK_TOL), d, CK_TOL, "||K_.5 K_.5 - K_1||_inf, series kernels")


def check_poisson_normalization(ctx: Context, rep: RunReport):
    D, p = ctx.D, ctx.p
    l1 = []
    norm_defect = None
    for n in REFINEMENT:
        gr = build_grid(D, n)
        g = sg.build_killed_generator(gr, p, ctx.cfg.quadrature_order)
        G = sg.green_function(g)
        i0 = int(gr.cell_of(D.midpoint))
        pk = sg.poisson_kernel(g, i0, G=G)
        ref = oracles.poisson_kernel(D, p.alpha, gr.centers[i0], pk.nodes)
        l1.append(float(np.sum(pk.weights * np.abs(pk.density - ref))))
        if n == REFINEMENT[-1]:
            xs = D.midpoint + np.array([0.0, -0.25, 0.25]) * D.length
            norm_defect = max(abs(sg.poisson_kernel(g, int(gr.cell_of(x)), G=G).total_mass - 1.0) for x in xs)
    ok = norm_defect <= POISSON_NORM_TOL and _decreasing(l1)
    rep.add("poisson_normalization", _status(ok), {"normalization": norm_defect, "l1": l1},
            {"normalization": POISSON_NORM_TOL, "l1": "decreasing"}, f"n {list(REFINEMENT)}")


def check_exit_time_oracle(ctx: Context, rep: RunReport):
    D, p = ctx.D, ctx.p
    errs = []
    for n in REFINEMENT:
        gr = build_grid(D, n)
        g = sg.build_killed_generator(gr, p, ctx.cfg.quadrature_order)
        i0 = int(gr.cell_of(D.midpoint))
        et = sg.mean_exit_time(g)[i0]
        errs.append(float(abs(et - oracles.mean_exit_time(D, p.alpha, gr.centers[i0]))))
    ok = _decreasing(errs) and errs[-1] < EXIT_TIME_TOL
    rep.add("exit_time_oracle", _status(ok), errs, EXIT_TIME_TOL, f"|G1 - oracle| at the midpoint cell, n {list(REFINEMENT)}")


def check_resolvent_suite(ctx: Context, rep: RunReport):
    lams = sorted(ctx.cfg.lambdas)
    bundles = [rs.resolvent_series(ctx.g, ctx.k, lam, J=ctx.J) for lam in lams]
    radii = [b.spectral_radius_est for b in bundles]
    ident = max([rs.resolvent_identity_defect(a, b) for a, b in zip(bundles, bundles[1:])], default=0.0)
    renewal = max(rs.renewal_defect(b) for b in bundles)
    markov = max(b.markov_defect for b in bundles)
    ok = ident <= RESOLVENT_IDENTITY_TOL and renewal <= RENEWAL_TOL and max(radii) < 1.0 and markov <= MARKOV_RESOLVENT_TOL
    rep.add("resolvent_suite", _status(ok),
            {"identity": ident, "renewal": renewal, "spectral_radius": radii, "markov": markov},
            {"identity": RESOLVENT_IDENTITY_TOL, "renewal": RENEWAL_TOL, "spectral_radius": 1.0,
             "markov": MARKOV_RESOLVENT_TOL}, f"lambda {lams}")


def check_generator_residual(ctx: Context, rep: RunReport):
    res: Dict[str, list] = {}
    for n in REFINEMENT:
        gr = build_grid(ctx.D, n)
        g = sg.build_killed_generator(gr, ctx.p, ctx.cfg.quadrature_order)
        Lg = sg.gamma_kernel(g, ctx.k)
        for name, f in probe_functions(gr.centers).items():
            u = np.linalg.solve(np.eye(n) - Lg, f)
            # u = R_1 f, so A u = u - f
            res.setdefault(name, []).append(rs.generator_residual(u, u - f, g, ctx.k))
    ok = all(_decreasing(v) for v in res.values())
    rep.add("generator_residual", _status(ok), res, "decreasing in n",
            f"u = R_1 f, max residual on cells at distance >= |D|/4 from the boundary, n {list(REFINEMENT)}")


def check_boundary_trace(ctx: Context, rep: RunReport):
    f = bvp_source("left_indicator", ctx.grid)
    u = rs.solve_reflected_bvp(ctx.g, ctx.k, 1.0, f, J=ctx.J).u
    margins = [m * ctx.D.length / 2.0 for m in MARGINS]
    d = rs.boundary_trace_check(u, ctx.k, ctx.grid, margins)
    rep.add("boundary_trace", _status(_decreasing(d)), d.tolist(), "strictly decreasing",
            f"u = R_1 of the left-half indicator, margins {margins}")


def _point_masses(n: int):
    return [np.eye(n)[i] for i in (0, n // 2, n - 1)]


def check_doeblin_and_tv(ctx: Context, rep: RunReport):
    n = ctx.grid.n
    H = compact_core(ctx.D, ctx.D.length / 4.0)
    cells = ctx.grid.cells_in(H.l, H.r)
    cert = er.doeblin_constants(ctx.series_at(0.5), cells, ctx.grid.h, K_later=ctx.K1)
    K = ctx.exp_kernel(ctx.cfg.delta)
    pi = er.stationary_density(K).pi
    fits = er.tv_convergence(K, pi, _point_masses(n), TV_HORIZON)
    omega = min(f.omega for f in fits)
    r2 = min(f.r_squared for f in fits)
    rate = cert.dobrushin_rate
    pair_tol = 2.0 - cert.eps + PAIRWISE_SLACK
    ok = (cert.delta > 0 and cert.pairwise_l1_max <= pair_tol and omega > 0 and r2 >= R2_MIN
          and omega >= rate)
    rep.add("doeblin_and_tv", _status(ok),
            {"delta": cert.delta, "pairwise_l1": cert.pairwise_l1_max, "omega": omega, "r_squared": r2,
             "dobrushin_rate": rate},
            {"pairwise_l1": pair_tol, "r_squared": R2_MIN, "omega": f">= {rate:.4g}"},
            f"H = [{H.l:g}, {H.r:g}], t = 0.5 series kernel; fits on K_{ctx.cfg.delta:g} from point masses "
            f"at cells 0, {n // 2}, {n - 1} over t <= {TV_HORIZON:g}")


def check_stationarity(ctx: Context, rep: RunReport):
    dt = ctx.cfg.delta
    K = ctx.exp_kernel(dt)
    st = er.stationary_density(K)
    uniq = er.uniqueness_probe(K, st.pi, n_starts=10, seed=_seed(ctx.cfg, 4))
    st2 = er.stationary_density(ctx.exp_kernel(2.0 * dt))
    indep = float(np.abs(st.pi - st2.pi).sum())
    sym_k = UniformCore(ctx.D, ctx.D.length / 4.0)
    Ks = sg.exp_route_kernel(sg.gamma_kernel(ctx.g, sym_k), dt)
    ps = er.stationary_density(Ks).pi
    sym = float(np.abs(ps - ps[::-1]).sum())
    ok = st.residual <= STATIONARY_TOL and uniq <= UNIQUENESS_TOL and indep <= DELTA_INDEPENDENCE_TOL and sym <= SYMMETRY_TOL
    rep.add("stationarity", _status(ok),
            {"residual": st.residual, "uniqueness": uniq, "delta_independence": indep, "symmetry": sym},
            {"residual": STATIONARY_TOL, "uniqueness": UNIQUENESS_TOL,
             "delta_independence": DELTA_INDEPENDENCE_TOL, "symmetry": SYMMETRY_TOL},
            f"Delta {dt:g} vs {2 * dt:g}; symmetric setup uses a uniform return law on the middle half")


def iw_boxes(D) -> list:
    m = D.midpoint
    boxes = []
    for I in [(0.0, 0.25), (0.25, 1.0), (1.0, np.inf)]:
        for A in [(D.l, m), (m, D.r)]:
            for B in [(-np.inf, D.l), (D.r, np.inf)]:
                boxes.append((I, A, B))
    return boxes


def check_mc_cross_validation(ctx: Context, rep: RunReport):
    t0 = time.perf_counter()
    D, x0 = ctx.D, ctx.x0
    kb = ctx.killed_batch
    tau = kb.tau[kb.exited]
    target = float(oracles.mean_exit_time(D, ctx.p.alpha, D.midpoint))
    mean_err = abs(float(tau.mean()) - target) if tau.size == kb.paths else math.inf
    edges = mc.exit_bins(D)
    det = sg.exit_law(ctx.g, x0, edges, ctx.G)
    exit_tv = er.tv_distance(mc.exit_histogram(kb, edges), det)
    exit_sd = mc.tv_noise(det, kb.paths, seed=_seed(ctx.cfg, 5))[1]
    boxes = iw_boxes(D)
    masses = [sg.ikeda_watanabe_mass(ctx.g, x0, *b, G=ctx.G) for b in boxes]
    zmax = max(abs(r.z) for r in mc.empirical_ikeda_watanabe(kb, boxes, masses))

    rb = ctx.reflected_batch
    row = ctx.K1.K[x0]
    row = np.clip(row, 0.0, None) / row.sum()
    k1_tv = er.tv_distance(mc.histogram(rb.final, ctx.grid.edges), row)
    k1_sd = mc.tv_noise(row, rb.paths, seed=_seed(ctx.cfg, 6))[1]

    pi = er.stationary_density(ctx.exp_kernel(ctx.cfg.delta)).pi
    bins = max(ctx.grid.n // 2, 1)
    coarse = np.add.reduceat(pi, np.linspace(0, ctx.grid.n, bins + 1).astype(int)[:-1])
    stat_edges = np.linspace(D.l, D.r, bins + 1)
    emp = mc.empirical_stationary(ctx.k, ctx.p, mc.PathConfig(step=ctx.cfg.h, seed=_seed(ctx.cfg, 2)),
                                  burn_in=5.0, samples=ctx.cfg.paths, stride=0.5, edges=stat_edges)
    stat_tv = er.tv_distance(emp, coarse)
    elapsed = time.perf_counter() - t0

    ok = (mean_err <= MEAN_EXIT_TOL and exit_tv <= EXIT_LAW_TV + 3 * exit_sd and zmax <= IW_Z
          and k1_tv <= K1_TV + 3 * k1_sd and stat_tv <= STATIONARY_TV)
    rep.add("mc_cross_validation", _status(ok),
            {"mean_exit_error": mean_err, "exit_law_tv": exit_tv, "iw_max_z": zmax, "k1_tv": k1_tv,
             "stationary_tv": stat_tv},
            {"mean_exit_error": MEAN_EXIT_TOL, "exit_law_tv": EXIT_LAW_TV + 3 * exit_sd, "iw_max_z": IW_Z,
             "k1_tv": K1_TV + 3 * k1_sd, "stationary_tv": STATIONARY_TV},
            f"{kb.paths} paths, h={ctx.cfg.h:g}, start at cell {x0} center; {elapsed:.0f} s")


def check_sampler_suite(ctx: Context, rep: RunReport):
    rng = np.random.default_rng(_seed(ctx.cfg, 3))
    a, t = ctx.p.alpha, 1.0
    X = sample_stable_increment(ctx.p, t, rng, SAMPLER_DRAWS)
    zs = []
    for xi in (0.5, 1.0, 2.0):
        c = np.cos(xi * X)
        zs.append(float((c.mean() - oracles.characteristic_function(a, t, xi)) / (c.std() / math.sqrt(c.size))))
    s = 0.25
    inc = sample_stable_increment(ctx.p, s, rng, 100_000)
    ref = s ** (1.0 / a) * standard_stable(a, rng, 100_000)
    ks_p = float(ks_2samp(inc, ref).pvalue)
    cauchy = sample_stable_increment(StableParams(1.0), t, rng, SAMPLER_DRAWS)
    q = np.quantile(cauchy, [0.25, 0.75])
    qerr = float(np.max(np.abs(q - np.array(oracles.cauchy_quartiles(t)))))
    zmax = max(abs(z) for z in zs)
    ok = zmax <= 3.0 and ks_p > KS_LEVEL and qerr <= QUARTILE_TOL
    rep.add("sampler_suite", _status(ok), {"cf_max_z": zmax, "ks_pvalue": ks_p, "quartile_error": qerr},
            {"cf_max_z": 3.0, "ks_pvalue": f"> {KS_LEVEL}", "quartile_error": QUARTILE_TOL},
            f"CF at xi 0.5, 1, 2 with {SAMPLER_DRAWS} draws; quartiles of the alpha = 1 increment")


CHECKS: Dict[str, Callable[[Context, RunReport], None]] = {
    "markov_mass": check_markov_mass,
    "series_vs_exp": check_series_vs_exp,
    "chapman_kolmogorov": check_chapman_kolmogorov,
    "poisson_normalization": check_poisson_normalization,
    "exit_time_oracle": check_exit_time_oracle,
    "resolvent_suite": check_resolvent_suite,
    "generator_residual": check_generator_residual,
    "boundary_trace": check_boundary_trace,
    "doeblin_and_tv": check_doeblin_and_tv,
    "stationarity": check_stationarity,
    "mc_cross_validation": check_mc_cross_validation,
    "sampler_suite": check_sampler_suite,
}


def run_validation(cfg: RunConfig, only: Optional[List[str]] = None, ctx: Optional[Context] = None) -> RunReport:
    """Run the named checks (all by default).  A check that raises is reported as failed."""
    ctx = Context(cfg) if ctx is None else ctx
    rep = RunReport()
    for name in only or list(CHECKS):
        t0 = time.perf_counter()
        try:
            CHECKS[name](ctx, rep)
        except ReflectedStableError as e:
            rep.add(name, FAIL, None, None, f"{type(e).__name__}: {e}")
        log.info("%s done in %.1f s", name, time.perf_counter() - t0)
    rep.add("quadrature_defect", INFO, ctx.g.kill_defect, sg.KILL_TOL, "exterior rule vs exact tail mass")
    return rep
