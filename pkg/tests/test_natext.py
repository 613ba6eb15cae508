import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import integrate

from scfdyn.natext import (C0, LOG_NORM, Y_MAX, Y_MIN, NatExtPoint, box_measure_mu_bar,
                           density_mu, density_mu_bar, density_mu_tilde, double_cover_step,
                           marginal_mu_bar, mu_cdf, mu_interval, nat_step,
                           preimage_measure_mu_bar)
from scfdyn.scalar import SQRT3
from scfdyn.scf import Digit, TerminatedError, dual_reconstruct, x_star

from oracles import mu_bar_box_quadrature, mu_quadrature


def test_nat_step_examples():
    x1, y1 = nat_step(x_star(), 0)
    assert x1 == 4 - 1 / x_star() and y1 == Fraction(-1, 4)
    x1, y1 = nat_step(0.4, 0)
    assert math.isclose(x1, 0.5) and y1 == Fraction(1, 2)


def test_nat_step_drives_y_to_periodic_dual_point():
    x, y = x_star(), Fraction(0)
    for _ in range(20):
        x, y = nat_step(x, y)
    assert x == x_star()
    # backward endpoint of the period: dual word (3,1)_o (2,-1)_e repeated
    ref = dual_reconstruct([Digit(3, 1, "o"), Digit(2, -1, "e")] * 30, 0.0)
    assert abs(float(y) - ref) < 1e-12


def test_double_cover_sign_bookkeeping():
    p = double_cover_step(NatExtPoint(x_star(), 0, 1))
    assert p.j == 1 and p.y == Fraction(-1, 4)
    p = double_cover_step(NatExtPoint(0.4, 0, 1))
    assert (math.isclose(p.x, 0.5), p.y, p.j) == (True, 0.5, -1)
    # -eps over one period is (+1)(-1): j flips every period, period 4 in total
    p, js = NatExtPoint(x_star(), Fraction(0), 1), []
    for _ in range(8):
        p = double_cover_step(p)
        js.append(p.j)
    assert js == [1, -1, -1, 1, 1, -1, -1, 1]


def test_nat_step_terminates_on_cusp():
    with pytest.raises(TerminatedError):
        nat_step(Fraction(3, 4), 0)


def test_densities_normalised():
    val, _ = integrate.quad(density_mu, 0, 1, epsabs=1e-14)
    assert abs(val - 1) < 1e-10
    val, _ = integrate.dblquad(lambda y, x: (1 + x * y) ** -2, 0, 1, Y_MIN, Y_MAX, epsabs=1e-13)
    assert abs(val - math.log(2 + math.sqrt(3))) < 1e-10
    assert abs(LOG_NORM - 1.3169579) < 1e-7
    assert density_mu(0.0) == C0 == 2 / math.log(2 + math.sqrt(3))
    assert abs(C0 - 1.518651435000414) < 1e-15
    assert density_mu_tilde(0.5, 0.2, -1) == density_mu_tilde(0.5, 0.2, 1)
    with pytest.raises(ValueError):
        density_mu_tilde(0.5, 0.2, 0)


def test_marginal_of_mu_bar_is_mu():
    x = np.linspace(0.01, 1, 50)
    assert np.allclose(marginal_mu_bar(x), density_mu(x), rtol=1e-12)
    xs = np.linspace(0.05, 0.95, 7)
    for xv in xs:
        val, _ = integrate.quad(lambda y: density_mu_bar(xv, y), Y_MIN, Y_MAX, epsabs=1e-14)
        assert abs(val - density_mu(xv)) < 1e-12


def test_mu_cdf_and_intervals_against_quadrature():
    for lo, hi in ((0, 1 / 3), (0.25, 0.5), (0.9, 1), (0.5, 0.5 + 1e-9)):
        assert abs(mu_interval(lo, hi) - mu_quadrature(lo, hi)) < 1e-13
    assert abs(mu_cdf(1.0) - 1) < 1e-15


def test_box_measure_examples():
    assert abs(box_measure_mu_bar(0, 1, Y_MIN, Y_MAX) - 1) < 1e-15
    assert box_measure_mu_bar(0, 1, 0.3, 0.3) == 0
    assert abs(box_measure_mu_bar(0, 1 / 3, Y_MIN, Y_MAX)
               - mu_bar_box_quadrature(0, 1 / 3, Y_MIN, Y_MAX)) < 1e-10


def test_box_measure_random_against_quadrature():
    rng = np.random.default_rng(8)
    for _ in range(20):
        x0, x1 = np.sort(rng.random(2))
        y0, y1 = np.sort(Y_MIN + 2 * rng.random(2))
        assert abs(box_measure_mu_bar(x0, x1, y0, y1) - mu_bar_box_quadrature(x0, x1, y0, y1)) < 1e-10


def test_preimage_measure_invariance_small_sample():
    rng = np.random.default_rng(3)
    for _ in range(10):
        x0, x1 = np.sort(rng.random(2))
        y0, y1 = np.sort(Y_MIN + 2 * rng.random(2))
        val, err = preimage_measure_mu_bar(x0, x1, y0, y1)
        assert err < 1e-9
        assert abs(val - box_measure_mu_bar(x0, x1, y0, y1)) < 1e-8


def test_preimage_of_full_domain():
    val, err = preimage_measure_mu_bar(0, 1, Y_MIN, Y_MAX)
    assert abs(val - 1) < 1e-8 and err < 1e-9


def test_empty_box():
    assert preimage_measure_mu_bar(0.5, 0.5, 0, 1) == (0.0, 0.0)
