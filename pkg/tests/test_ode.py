import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gvstar.ode import (
    DriftError,
    blowup_quadrature,
    first_integrals,
    integrate_critical,
    invariants,
    quadrature_solution,
    taylor_reference,
)


@pytest.fixture(scope="module")
def unit_profile():
    return integrate_critical(1.0, 0.0, 3.4, 1e-3)


def test_series_at_small_s(unit_profile):
    k, H = unit_profile.at(0.1)
    assert abs(k - 0.99875) <= 5e-5
    assert abs(H + 0.025) <= 5e-5


def test_series_defect_shrinks_like_fourth_power():
    prof = integrate_critical(1.0, 0.0, 0.2, 1e-4)
    dk, dH = [], []
    for x in (0.1, 0.05, 0.025):
        k, H = prof.at(x)
        tk, tH = taylor_reference(1.0, 0.0, x)
        dk.append(abs(k - tk))
        dH.append(abs(H - tH))
    for a, b in zip(dk, dk[1:]):
        assert 14 < a / b < 18
    # the x^4 coefficient of H vanishes at H0 = 0, so its defect falls faster still
    for a, b in zip(dH, dH[1:]):
        assert a / b > 14


def test_series_with_nonzero_mean_curvature():
    prof = integrate_critical(0.7, 0.4, 0.05, 1e-4)
    for x in (0.01, 0.02):
        k, H = prof.at(x)
        tk, tH = taylor_reference(0.7, 0.4, x)
        assert abs(k - tk) < 5 * x**4 and abs(H - tH) < 5 * x**4


def test_first_integral_drift():
    prof = integrate_critical(1.0, 0.0, 3.0, 1e-4)
    assert prof.drift <= 1e-10
    c1, ck = first_integrals(prof)
    assert prof.C1 == pytest.approx(1 / 16)
    assert np.max(np.abs(ck - prof.Ck)) < 1e-9


def test_invariants_formula():
    C1, Ck = invariants(2.0, 0.5)
    assert C1 == pytest.approx((0.25 + 1.0) ** 2 - 0.0625)
    assert Ck == pytest.approx(4 * 0.25 + 16 / 8)


def test_parity_for_zero_initial_mean_curvature(unit_profile):
    k, H = unit_profile.k, unit_profile.H
    np.testing.assert_allclose(k, k[::-1], atol=1e-12)
    np.testing.assert_allclose(H, -H[::-1], atol=1e-12)


def test_scaling_symmetry():
    a = integrate_critical(1.0, 0.3, 1.0, 1e-3)
    b = integrate_critical(2.0, 0.6, 0.5, 5e-4)
    np.testing.assert_allclose(b.k, 2 * a.k, rtol=1e-10)
    np.testing.assert_allclose(b.H, 2 * a.H, rtol=1e-10, atol=1e-12)


def test_existence_interval_and_blowup(unit_profile):
    assert unit_profile.blowup_s is None and unit_profile.blowup_s_backward is None
    far = integrate_critical(1.0, 0.0, 4.0, 1e-3)
    want = blowup_quadrature(1.0, 0.0)
    assert far.blowup_s >= 3.4
    assert abs(far.blowup_s - want) <= 1e-3
    assert far.blowup_s_backward == pytest.approx(-far.blowup_s, abs=1e-6)
    assert blowup_quadrature(1.0, 0.0, -1) == pytest.approx(-want)


def test_quadrature_inverse_consistency():
    prof = integrate_critical(1.0, 0.0, 1.5, 1e-4)
    for s in (0.5, 1.0, 1.5):
        k, H = prof.at(s)
        s_q, k_q = quadrature_solution(1.0, 0.0, H)
        assert abs(s_q - s) <= 1e-6
        assert abs(k_q - k) <= 1e-6


def test_straight_line_case():
    prof = integrate_critical(0.0, 0.5, 1.0, 1e-3)
    assert prof.at(1.0)[1] == pytest.approx(1 / 3, rel=1e-10)
    assert np.all(prof.k == 0)
    neg = integrate_critical(0.0, -0.5, 3.0, 1e-3, backward=False)
    assert neg.blowup_s == pytest.approx(2.0, abs=1e-4)
    assert blowup_quadrature(0.0, -0.5) == 2.0
    assert blowup_quadrature(0.0, 0.5) == math.inf


def test_backward_blowup_with_positive_mean_curvature():
    prof = integrate_critical(1.0, 1.0, 2.0, 1e-3)
    assert prof.blowup_s_backward == pytest.approx(blowup_quadrature(1.0, 1.0, -1), abs=1e-5)


def test_drift_limit_enforced():
    with pytest.raises(DriftError):
        integrate_critical(1.0, 0.0, 3.0, 0.3, drift_limit=1e-12)
    with pytest.raises(ValueError):
        integrate_critical(1.0, 0.0, 1.0, 0.0)


def test_csv_deterministic(unit_profile):
    a = unit_profile.to_csv()
    b = integrate_critical(1.0, 0.0, 3.4, 1e-3).to_csv()
    assert a == b
    assert a.splitlines()[0] == "s,k,H,C1,Ck"
    assert "\r" not in a
    with pytest.raises(KeyError):
        unit_profile.at(0.0005)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 3.0), st.floats(-1.0, 1.0))
def test_first_integrals_conserved(k0, H0):
    prof = integrate_critical(k0, H0, 0.5, 1e-3)
    c1, ck = first_integrals(prof)
    cap = 10 * max(1.0, abs(prof.C1) ** 0.25)
    ok = (np.abs(prof.k) <= cap) & (np.abs(prof.H) <= cap)
    scale = max(abs(prof.C1), (H0**2 + k0**2 / 4) ** 2)
    assert np.max(np.abs(c1[ok] - prof.C1)) <= 1e-8 * scale
    assert np.max(np.abs(ck[ok] - prof.Ck)) <= 1e-8 * max(prof.Ck, 1e-300) * 10
