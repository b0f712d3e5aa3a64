import math

import numpy as np
import pytest
import scipy.linalg

from reflected_stable import semigroup as sg
from reflected_stable import uniformization as un
from reflected_stable.domain_grid import build_grid
from reflected_stable.errors import ParameterError
from reflected_stable.oracles import mean_exit_time as exit_oracle
from reflected_stable.reflection import Dirac
from reflected_stable.stable_core import StableParams, levy_mass_interval, levy_tail_mass


def _inf(A):
    return float(np.max(np.abs(A).sum(axis=1)))


# --- uniformization ---------------------------------------------------------


@pytest.fixture(scope="module")
def subgen():
    rng = np.random.default_rng(3)
    A = rng.uniform(0, 1, (12, 12))
    np.fill_diagonal(A, 0)
    L = A.copy()
    np.fill_diagonal(L, -A.sum(axis=1) - rng.uniform(0.1, 1, 12))
    return L


@pytest.mark.parametrize("t", [0.01, 0.7, 5.0, 60.0])
def test_expm_matches_scipy(subgen, t):
    assert np.max(np.abs(un.expm(subgen, t) - scipy.linalg.expm(t * subgen))) < 1e-11


def test_expm_integral(subgen):
    t = 2.3
    P, W = un.expm_and_integral(subgen, t)
    # L W = P - I for the integral of the semigroup
    assert np.max(np.abs(subgen @ W - (P - np.eye(12)))) < 1e-11


def test_product_weights_sum_to_integral(subgen):
    tau = 0.3
    A0, B0 = un.product_weights(subgen, tau)
    W = un.expm_and_integral(subgen, tau)[1]
    assert np.max(np.abs(A0 + B0 - W)) < 1e-12
    assert np.all(A0 >= 0) and np.all(B0 >= 0)


def test_tiny_tolerance_truncation():
    assert un._truncation(50.0, 1e-16) > 50


# --- killed generator -------------------------------------------------------


def test_generator_structure(small, cauchy):
    g = small
    x, e = g.grid.centers, g.grid.edges
    assert np.array_equal(g.L, g.L.T)
    assert np.max(np.abs(g.L.sum(axis=1) + g.kill)) < 1e-12
    assert g.L[3, 10] == pytest.approx(levy_mass_interval(cauchy, x[3], e[10], e[11]), rel=1e-12)
    off = g.L - np.diag(np.diag(g.L))
    assert np.all(off >= 0)


def test_kill_rate_oracle(D, cauchy):
    g = sg.build_killed_generator(build_grid(D, 201), cauchy)
    assert g.kill[100] == pytest.approx(2 / math.pi, rel=1e-8)
    exact = levy_tail_mass(cauchy, g.grid.centers, -1.0, 1.0)
    assert np.max(np.abs(g.kill - exact) / exact) < 1e-8


def test_heat_kernel_properties(small):
    P = sg.heat_kernel(small, 0.5).P
    assert np.all(P >= 0)
    rows = P.sum(axis=1)
    assert np.all(rows < 1)
    P1 = sg.heat_kernel(small, 1.0).P
    assert _inf(P @ P - P1) < 1e-9


def test_heat_kernel_small_time(small):
    # at n = 50 the t/h ratio keeps this below 1e-4; it grows with n
    assert _inf(sg.heat_kernel(small, 1e-6).P - np.eye(small.n)) < 1e-4


def test_green_function(small, D, cauchy):
    G = sg.green_function(small)
    assert np.all(G >= 0)
    assert np.max(np.abs(G - G.T)) < 1e-12 * np.max(G)


def test_exit_time_converges(D, cauchy):
    errs = []
    for n in (50, 100, 200):
        g = sg.build_killed_generator(build_grid(D, n), cauchy)
        i = int(g.grid.cell_of(0.0))
        errs.append(abs(sg.mean_exit_time(g)[i] - exit_oracle(D, 1.0, g.grid.centers[i])))
    assert errs[0] > errs[1] > errs[2]


def test_poisson_kernel_symmetric_and_normalized(D, cauchy):
    g = sg.build_killed_generator(build_grid(D, 51), cauchy)
    pk = sg.poisson_kernel(g, 25)
    assert pk.total_mass == pytest.approx(1.0, abs=1e-10)
    z = np.array([1.01, 1.5, 3.0, 40.0])
    a = sg.poisson_kernel(g, 25, nodes=z).density
    b = sg.poisson_kernel(g, 25, nodes=-z).density
    assert np.allclose(a, b, rtol=1e-12)


def test_survival(small):
    res = sg.survival_probability(small, 0.1)
    assert res.discrepancy < 1e-8
    assert sg.survival_probability(small, 1.0).discrepancy < 1e-8
    s = [sg.survival_probability(small, t, 10) for t in (0.1, 0.5, 1.0, 2.0)]
    assert all(a >= b for a, b in zip(s, s[1:]))
    cells = small.grid.cells_in(-0.5, 0.5)
    assert sg.uniform_survival(small, cells, 1.0) > 0


def test_reflection_matrix_rows(small, kernels):
    for k in kernels.values():
        J = sg.reflection_matrix(small, k)
        assert np.all(J >= 0)
        assert np.max(np.abs(J.sum(axis=1) - small.kill) / small.kill) < 1e-8


def test_dirac_return_is_rank_one(small, D):
    J = sg.reflection_matrix(small, Dirac(D, 0.0))
    e = np.zeros(small.n)
    e[int(small.grid.cell_of(0.0))] = 1.0
    assert np.allclose(J, np.outer(small.kill, e), rtol=1e-8, atol=0)


def test_phi_kernel_mass_balance(small, kernels):
    times = np.array([0.1, 0.25, 0.5, 1.0])
    ph = sg.phi_kernel(small, kernels["jump"], times)
    for i, t in enumerate(times):
        surv = sg.survival_probability(small, t).direct
        assert np.max(np.abs(surv + ph.cumulative_mass[i] - 1.0)) < 1e-10
        assert np.allclose(ph.Phi[i].sum(axis=1), sg.heat_kernel(small, t).P @ small.kill, rtol=1e-7)


def test_gamma_kernel(small, kernels):
    k = kernels["dirac"]
    Lg = sg.gamma_kernel(small, k)
    assert np.max(np.abs(Lg.sum(axis=1))) < 1e-10
    c = int(small.grid.cell_of(0.0))
    extra = Lg - small.L
    np.fill_diagonal(extra, 0.0)
    others = np.arange(small.n) != c
    # every killed row sends its whole exit rate to the restart cell
    assert np.allclose(extra[others, c], small.kill[others], rtol=1e-8)
    extra[:, c] = 0.0
    assert np.all(extra == 0.0)
    K = sg.exp_route_kernel(Lg, 1.0).K
    assert np.max(np.abs(K.sum(axis=1) - 1)) < 1e-10


@pytest.fixture(scope="module")
def series(small, kernels):
    k = kernels["jump"]
    return {m: sg.duhamel_series(small, k, 1.0, depth=40, time_steps=m, all_times=True) for m in (16, 32)}


def test_series_mass_within_bound(series):
    K = series[32][-1]
    assert K.row_sum_defect <= K.truncation_bound + 1e-8
    assert np.all(K.K >= 0)


def test_series_dominates_killed_kernel(series, small):
    K = series[32][-1].K
    assert np.all(K - sg.heat_kernel(small, 1.0).P >= -1e-15)


def test_series_depth_monotone(small, kernels):
    k = kernels["jump"]
    d10 = sg.duhamel_series(small, k, 1.0, depth=10, time_steps=16)
    d40 = sg.duhamel_series(small, k, 1.0, depth=40, time_steps=16)
    assert d40.row_sum_defect <= d10.row_sum_defect
    d2 = sg.duhamel_series(small, k, 1.0, depth=2, time_steps=16, allowance=1.0)
    assert d10.row_sum_defect < d2.row_sum_defect


def test_series_converges_to_exp_route(series, small, kernels):
    ref = sg.exp_route_kernel(sg.gamma_kernel(small, kernels["jump"]), 1.0).K
    e16 = _inf(series[16][-1].K - ref)
    e32 = _inf(series[32][-1].K - ref)
    assert e32 < e16


def test_chapman_kolmogorov(series, small, kernels):
    ks = series[32]
    assert sg.chapman_kolmogorov_defect(ks[15].K, ks[31].K) < 3e-3
    Lg = sg.gamma_kernel(small, kernels["jump"])
    half, full = sg.exp_route_kernel(Lg, 0.5).K, sg.exp_route_kernel(Lg, 1.0).K
    assert sg.chapman_kolmogorov_defect(half, full) < 1e-10


def test_series_parameter_checks(small, kernels):
    with pytest.raises(ParameterError):
        sg.duhamel_series(small, kernels["dirac"], 1.0, time_steps=8)
    with pytest.raises(ParameterError):
        sg.duhamel_series(small, kernels["dirac"], -1.0)


def test_ikeda_watanabe_total(small):
    i = 25
    total = sum(sg.ikeda_watanabe_mass(small, i, (0.0, np.inf), (-1.0, 1.0), B) for B in
                [(-np.inf, -1.0), (1.0, np.inf)])
    assert total == pytest.approx(1.0, abs=1e-8)
    split = sum(sg.ikeda_watanabe_mass(small, i, I, (-1.0, 1.0), (1.0, np.inf)) for I in
                [(0.0, 0.3), (0.3, np.inf)])
    assert split == pytest.approx(sg.ikeda_watanabe_mass(small, i, (0.0, np.inf), (-1.0, 1.0), (1.0, np.inf)),
                                  rel=1e-10)


def test_exit_law_bins(small):
    edges = np.array([-np.inf, -3.0, -1.0, 1.0, 2.0, np.inf])
    law = sg.exit_law(small, 25, edges)
    assert law[2] == 0.0
    assert law.sum() == pytest.approx(1.0, abs=1e-10)
