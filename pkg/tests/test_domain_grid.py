import math

import numpy as np
import pytest

from reflected_stable.domain_grid import (
    IntervalDomain,
    build_grid,
    compact_core,
    exterior_quadrature,
    quadrature_defect,
)
from reflected_stable.errors import ContractError, ParameterError
from reflected_stable.stable_core import StableParams, levy_tail_mass


def test_four_cells(D):
    g = build_grid(D, 4)
    assert np.allclose(g.centers, [-0.75, -0.25, 0.25, 0.75])
    assert g.h == 0.5


def test_cells_tile_domain(D):
    g = build_grid(D, 200)
    assert g.h == pytest.approx(0.01)
    assert np.diff(g.edges).sum() == pytest.approx(D.length, abs=1e-14)
    assert g.edges[0] == D.l and g.edges[-1] == D.r


def test_tie_goes_to_lower_cell(D):
    g = build_grid(D, 4)
    assert int(g.cell_of(0.0)) == 1
    assert int(g.cell_of(-0.6)) == 0


def test_bad_domains():
    with pytest.raises(ParameterError):
        IntervalDomain(1.0, -1.0)
    with pytest.raises(ParameterError):
        build_grid(IntervalDomain(-1, 1), 2)


def test_compact_core(D):
    H = compact_core(D, 0.25)
    assert (H.l, H.r) == (-0.75, 0.75)
    assert D.l < H.l and H.r < D.r
    tiny = compact_core(D, 1e-12)
    assert tiny.length == pytest.approx(D.length, abs=1e-11)
    with pytest.raises((ParameterError, ContractError)):
        compact_core(D, 1.0)


def test_quadrature_total_mass(D):
    p = StableParams(1.0)
    q = exterior_quadrature(D, p)
    assert q.tail_mass(p, 0.0)[0] == pytest.approx(2 / math.pi, rel=1e-8)


@pytest.mark.parametrize("alpha", [0.3, 1.0, 1.7])
def test_quadrature_matches_tails_on_grid(D, alpha):
    p = StableParams(alpha)
    q = exterior_quadrature(D, p)
    g = build_grid(D, 200)
    exact = levy_tail_mass(p, g.centers, D.l, D.r)
    assert np.max(np.abs(q.tail_mass(p, g.centers) - exact) / exact) < 1e-8
    near = D.r - g.h / 2
    assert quadrature_defect(q, p, [near]) < 1e-6


def test_quadrature_refinement_monotone(D):
    p = StableParams(0.8)
    pts = np.linspace(-0.99, 0.99, 37)
    defects = [quadrature_defect(exterior_quadrature(D, p, order=o, tol=1.0), p, pts) for o in (8, 16, 32)]
    assert defects[1] <= defects[0] and defects[2] <= defects[1] + 1e-15


def test_quadrature_order_validated(D):
    with pytest.raises(ParameterError):
        exterior_quadrature(D, StableParams(1.0), order=2)
