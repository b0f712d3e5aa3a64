import math

import numpy as np
import pytest

from reflected_stable.domain_grid import build_grid
from reflected_stable.errors import ContractError, ParameterError, TightnessError
from reflected_stable.reflection import (
    Dirac,
    InteriorJump,
    Mixture,
    UniformCore,
    check_tightness,
    kernel_from_config,
    mu_grid_projection,
    mu_sample,
    weak_continuity_probe,
)
from reflected_stable.stable_core import StableParams


def test_dirac_samples(D, rng):
    k = Dirac(D, 0.0)
    assert all(mu_sample(k, z, rng) == 0.0 for z in (-5.0, -1.0, 1.0, 1.0001, 30.0))


def test_uniform_core_mean(D, rng):
    k = UniformCore(D, 0.25)
    y = k.sample_batch(np.full(10 ** 5, 1.5), rng)
    assert np.all((y >= -0.75) & (y <= 0.75))
    assert abs(y.mean()) <= 3 * y.std() / math.sqrt(y.size)


def test_interior_jump_mass_ratio(D, cauchy, rng):
    k = InteriorJump(D, cauchy)
    y = k.sample_batch(np.full(10 ** 5, 1.5), rng)
    assert np.all(D.contains(y))
    right, left = np.sum(y > 0), np.sum(y < 0)
    ratio = right / left
    # exact: int_0^1 (1.5 - y)^-2 dy / int_-1^0 (1.5 - y)^-2 dy = (4/3) / (4/15)
    p = (4 / 3) / (4 / 3 + 4 / 15)
    n = y.size
    # delta method for r = p_hat / (1 - p_hat)
    sd = math.sqrt(p * (1 - p) / n) / (1 - p) ** 2
    assert abs(ratio - 5.0) <= 3 * sd


def test_interior_jump_interval_mass_closed_form(D, cauchy):
    k = InteriorJump(D, cauchy)
    assert k.interval_mass(np.array([1.5]), 0.0, 1.0)[0] == pytest.approx(5 / 6, rel=1e-12)
    assert k.interval_mass(np.array([-1.5]), -1.0, 0.0)[0] == pytest.approx(5 / 6, rel=1e-12)


def test_samples_never_on_boundary(D, cauchy, rng):
    k = InteriorJump(D, cauchy)
    y = k.sample_batch(1.0 + np.geomspace(1e-12, 1e3, 1000), rng)
    assert np.all(D.contains(y))


def test_dirac_projection_tie(D):
    P = mu_grid_projection(Dirac(D, 0.0), 2.0, build_grid(D, 4))
    assert np.array_equal(P, [0, 1, 0, 0])


def test_uniform_projection(D):
    g = build_grid(D, 4)
    P = mu_grid_projection(UniformCore(D, 0.25), -3.0, g)
    # H = [-0.75, 0.75]; cells of width 0.5 overlap 0.25, 0.5, 0.5, 0.25
    assert np.allclose(P, np.array([0.25, 0.5, 0.5, 0.25]) / 1.5, atol=1e-15)


def test_projection_normalized(D, cauchy):
    g = build_grid(D, 200)
    P = mu_grid_projection(InteriorJump(D, cauchy), np.array([-7.0, -1.0 - 1e-9, 1.5, 1.0 + 1e-3]), g)
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(P >= 0)


def test_projection_rejects_interior_point(D, cauchy):
    with pytest.raises(ContractError):
        mu_grid_projection(InteriorJump(D, cauchy), 0.3, build_grid(D, 10))


def test_tightness_intrinsic(D):
    c = check_tightness(Dirac(D, 0.0), 0.5)
    assert c.H.l < 0.0 < c.H.r and c.inf_mass == 1.0
    c = check_tightness(UniformCore(D, 0.25), 0.1)
    assert (c.H.l, c.H.r) == (-0.75, 0.75) and c.inf_mass == 1.0


def _jump_mass(z, a, b):
    # mu(z, [a, b]) for alpha = 1 on (-1, 1): normalized integral of (z - y)^-2
    z = abs(z)
    return (1 / (z - b) - 1 / (z - a)) / (1 / (z - 1) - 1 / (z + 1))


def test_tightness_interior_jump_on_probe_set(D, cauchy):
    c = check_tightness(InteriorJump(D, cauchy), 0.25)
    assert c.inf_mass >= 0.75
    assert c.inf_mass == pytest.approx(_jump_mass(c.worst_z, c.H.l, c.H.r), rel=1e-9)


class _EdgeHeavy(UniformCore):
    """Stub whose core mass never exceeds one half."""

    def intrinsic_margin(self):
        return None

    def interval_mass(self, z, a, b):
        return np.full(np.shape(z), 0.5)


def test_tightness_failure_reports_worst_probe(D):
    with pytest.raises(TightnessError) as e:
        check_tightness(_EdgeHeavy(D, 0.25), 0.1)
    assert e.value.worst_mass == 0.5


def test_mixture(D, cauchy, rng):
    k = Mixture(D, ((0.5, Dirac(D, 0.0)), (0.5, UniformCore(D, 0.25))))
    g = build_grid(D, 4)
    assert np.allclose(mu_grid_projection(k, 3.0, g), 0.5 * np.array([0, 1, 0, 0]) + 0.5 * np.array([1, 2, 2, 1]) / 6)
    y = k.sample_batch(np.full(20000, 2.0), rng)
    assert abs(np.mean(y == 0.0) - 0.5) < 0.02
    with pytest.raises(ParameterError):
        Mixture(D, ((0.7, Dirac(D, 0.0)), (0.7, Dirac(D, 0.1))))


def test_kernel_from_config(D, cauchy):
    assert kernel_from_config({"tag": "dirac", "y0": 0.2}, D, cauchy) == Dirac(D, 0.2)
    mix = kernel_from_config({"tag": "mixture", "components": [
        {"tag": "dirac", "y0": 0, "weight": 0.25}, {"tag": "interior_jump", "weight": 0.75}]}, D, cauchy)
    assert isinstance(mix, Mixture)
    for bad in ({"tag": "neumann"}, {"tag": "dirac"}, {"tag": "dirac", "y0": 0, "x": 1},
                {"tag": "dirac", "y0": 1.0}, {"tag": "uniform_core", "margin": 1.5}):
        with pytest.raises(ParameterError):
            kernel_from_config(bad, D, cauchy)


def test_round_trip_config(D, cauchy, kernels):
    for k in kernels.values():
        assert kernel_from_config(k.to_config(), D, cauchy) == k


def test_weak_continuity_is_finite(D, kernels):
    g = build_grid(D, 100)
    for k in kernels.values():
        assert math.isfinite(weak_continuity_probe(k, g))
