import math

import numpy as np
import pytest
from scipy.integrate import quad

from anisocone.radial import (IntegrabilityError, RadialProfile, cumulative, graded_grid, radial_quadrature,
                              radial_quadrature_with_error)


def test_grid_is_geometric():
    r = graded_grid(1e-3, 1e3, 1.05)
    assert r[0] == pytest.approx(1e-3) and r[-1] == pytest.approx(1e3)
    q = r[1:] / r[:-1]
    assert np.all(q <= 1.05 + 1e-12)


def test_gamma_two():
    r = graded_grid()
    assert radial_quadrature(RadialProfile(r, np.exp(-r)), 1) == pytest.approx(1.0, abs=1e-8)


def test_rational_profile_against_adaptive_oracle():
    r = graded_grid()
    val, err = radial_quadrature_with_error(RadialProfile(r, (1 + r * r) ** -3.0), 2)
    oracle = quad(lambda s: s * s * (1 + s * s) ** -3, 0, np.inf, epsabs=1e-14, epsrel=1e-13)[0]
    assert oracle == pytest.approx(math.pi / 16, rel=1e-12)
    assert abs(val - oracle) <= max(err, 1e-12)


@pytest.mark.parametrize("decay, exponent", [(4.0, 2.0), (3.0, 1.0), (6.0, 4.5)])
def test_power_tail_is_integrated(decay, exponent):
    r = graded_grid(1e-4, 1e2, 1.01)
    u = (1 + r * r) ** (-decay / 2)
    val, err = radial_quadrature_with_error(RadialProfile(r, u, decay=decay), exponent)
    oracle = quad(lambda s: s ** exponent * (1 + s * s) ** (-decay / 2), 0, np.inf, epsabs=1e-14,
                  epsrel=1e-12, limit=200)[0]
    assert abs(val - oracle) <= 10 * err + 1e-12 * oracle


def test_divergent_tail_raises():
    r = graded_grid(1e-4, 1e2, 1.01)
    with pytest.raises(IntegrabilityError):
        radial_quadrature(RadialProfile(r, 1 / (1 + r), decay=1.0), 2)


def test_cumulative_is_monotone_and_ends_at_total():
    r = graded_grid()
    g = np.exp(-r * r)
    c = cumulative(r, g, 2)
    assert np.all(np.diff(c) >= 0)
    assert c[-1] == pytest.approx(math.sqrt(math.pi) / 4, rel=1e-8)
