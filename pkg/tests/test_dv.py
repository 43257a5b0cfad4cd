import math

import numpy as np
import pytest

from foldnoise.airy import AI_PRIME_AT_ZERO, YSTAR
from foldnoise.dv import dv_closed_form, dv_integral, dv_limit, positivity_scan
from foldnoise.errors import DomainError
from foldnoise.flow import slow_x

V_INF = 1.169053705229883


def test_empty_interval():
    y = -2.0
    r = dv_integral(y, slow_x(y))
    assert r.D == 0.0 and r.V == 0.0


def test_limit_far_start():
    r = dv_limit(-25.0)
    assert r.D == pytest.approx(0.75, abs=1e-6)
    assert r.V == pytest.approx(V_INF, abs=1e-6)
    assert V_INF == pytest.approx(YSTAR / 2.0, abs=1e-15)


def test_limit_at_ystar():
    r = dv_limit(YSTAR)
    assert abs(r.D) < 1e-12
    assert abs(r.V) < 1e-12


def test_limit_curve_shape():
    ys = np.arange(-6.0, YSTAR, 0.02)
    D = np.array([dv_limit(y).D for y in ys])
    V = np.array([dv_limit(y).V for y in ys])
    assert np.all(D > 0.0) and np.all(V > 0.0)
    assert np.all(np.diff(V) <= 1e-12)
    assert np.max(np.abs(np.diff(D))) < 0.05
    assert D[-1] < 1e-3 and V[-1] < 0.05


def test_limit_domain():
    with pytest.raises(DomainError):
        dv_limit(YSTAR + 0.01)


def test_section_30_plateau_for_D():
    r = dv_integral(-24.9, 30.0)
    assert r.D == pytest.approx(0.75, abs=0.02)


def test_V_gap_follows_inverse_section():
    # V_inf - V(x_fin) = 1/x_fin + O(x_fin^-2) on the slow solution
    lim = dv_limit(-24.9).V
    for xf in (30.0, 100.0, 1e3):
        gap = lim - dv_integral(-24.9, xf).V
        assert gap * xf == pytest.approx(1.0, abs=0.05)


@pytest.mark.xfail(strict=True, reason="V(30) sits 1/30 below its plateau, outside a 0.02 band")
def test_section_30_plateau_for_V_within_002():
    assert dv_integral(-24.9, 30.0).V == pytest.approx(YSTAR / 2.0, abs=0.02)


def test_convergence_in_section():
    lim = dv_limit(-2.0)
    gaps = [(abs(dv_integral(-2.0, xf).D - lim.D), abs(dv_integral(-2.0, xf).V - lim.V)) for xf in (5, 10, 30, 100, 1e3)]
    assert all(a[0] > b[0] for a, b in zip(gaps, gaps[1:]))
    assert all(a[1] > b[1] for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1][0] <= 1e-4


@pytest.mark.xfail(strict=True, reason="the V gap at x_fin = 1e3 is 1/x_fin = 1e-3")
def test_V_final_gap_1e4():
    assert abs(dv_integral(-2.0, 1e3).V - dv_limit(-2.0).V) <= 1e-4


def test_infinite_section_routes_to_limit():
    assert dv_integral(-2.0, math.inf) == dv_limit(-2.0)


def test_quadrature_matches_closed_form():
    rng = np.random.default_rng(3)
    for y in rng.uniform(-8.0, 2.0, 20):
        xf = float(rng.uniform(max(slow_x(y), 0.0) + 0.5, 60.0))
        a = dv_integral(y, xf)
        b = dv_closed_form(y, xf)
        assert a.V == pytest.approx(b.V, abs=1e-6)
        assert a.D == pytest.approx(b.D, abs=1e-6)
        assert a.D > 0.0 and a.V > 0.0


def test_positivity_scan():
    rep = positivity_scan(10.0, 2000)
    assert rep.F_positive
    assert rep.F_min > 0.0
    assert abs(rep.F_at_left) < 1e-7
    assert rep.H_at_left == pytest.approx(1.0 / (math.pi * AI_PRIME_AT_ZERO), rel=1e-9)
    assert rep.H_at_left == pytest.approx(rep.H_at_left_expected, rel=1e-9)
    assert rep.H0 < 0.0 and rep.dH0 < 0.0
    s = rep.summary()
    assert s["F_positive"] is True


def test_scan_domain():
    with pytest.raises(DomainError):
        positivity_scan(-3.0, 100)
    with pytest.raises(DomainError):
        positivity_scan(10.0, 5)
