import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmphase import (DomainError, FitError, InfinitySeries, Parameters, eta_from_kappa, eval_infinity,
                     eval_origin, fit_tail, infinity_coefficients, origin_coefficients, slope_field,
                     spectrum)
from mmphase.series import select_tail_window
from oracles import FROZEN, centre_manifold_rho_hat, infinity_series_sympy, origin_series_sympy


@pytest.mark.parametrize("key", list(FROZEN["origin"]))
def test_origin_coefficients_match_oracle(key):
    s = origin_coefficients(Parameters(*key), 4)
    for got, want in zip(s.coeffs, FROZEN["origin"][key]):
        assert got == pytest.approx(want, rel=1e-10, abs=1e-14)
    assert not s.resonant and s.order == 4


def test_origin_example_sigma2():
    s = origin_coefficients(Parameters(5.0, 0.8), 2)
    s1 = s.coeffs[1]
    eps, eta = 5.0, 0.8
    hand = -((s1 + 1 / eps) * s1) / (1 / eps + 3 * (1 - eta) * s1 - 2)
    assert s.coeffs[0] == 0.0
    assert abs(s1 - 4.2360680) < 1e-7
    assert s.coeffs[2] == pytest.approx(hand, rel=1e-13)
    assert abs(s.coeffs[2] + 25.3377) < 1e-4


def test_origin_matches_sympy_at_new_point():
    want = origin_series_sympy(0.3, 0.4, 4)
    got = origin_coefficients(Parameters(0.3, 0.4), 4).coeffs
    for g, w in zip(got, want):
        assert g == pytest.approx(float(w), rel=1e-10, abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 10.0), st.floats(0.05, 0.95))
def test_sigma2_sign_law(eps, eta):
    p = Parameters(eps, eta)
    k = spectrum(p).kappa
    if abs(k - 2) <= 0.05:
        return
    s2 = origin_coefficients(p, 2).coeffs[2]
    assert (s2 > 0) == (1 < k < 2)


def test_resonance_stops_recursion():
    p = Parameters(1.0, eta_from_kappa(1.0, 3.0))
    s = origin_coefficients(p, 5)
    assert s.resonant and s.order == 2
    assert all(math.isfinite(c) for c in s.coeffs[:3])
    assert all(math.isnan(c) for c in s.coeffs[3:])
    assert not s.is_defined(3) and s.is_defined(2)


def test_origin_series_substitution_order():
    # |y_N' - f(x, y_N)| = O(x^N) with N = min(4, floor(kappa))
    p = Parameters(0.6, 0.9)
    N = min(4, math.floor(spectrum(p).kappa))
    s = origin_coefficients(p, N)
    d = np.polynomial.polynomial.polyder(np.array(s.coeffs[: N + 1]))
    xs = np.geomspace(1e-4, 1e-2, 20)
    r = [abs(np.polynomial.polynomial.polyval(x, d) - slope_field(p, x, eval_origin(s, x))) for x in xs]
    slope = np.polyfit(np.log(xs), np.log(r), 1)[0]
    assert slope >= N - 0.2


def test_origin_invalid_order():
    with pytest.raises(DomainError):
        origin_coefficients(Parameters(1.0, 0.5), 0)


def test_infinity_leading_terms():
    for eps, eta in ((0.3, 0.2), (5.0, 0.8), (2.0, 0.5)):
        r = infinity_coefficients(Parameters(eps, eta), 3).coeffs
        assert r[:3] == (1.0, -1.0, 1.0)
        assert r[3] == pytest.approx(eps * eta - 1, rel=1e-14)
    assert infinity_coefficients(Parameters(5.0, 0.8), 3).coeffs[3] == pytest.approx(3.0)


@pytest.mark.parametrize("key", list(FROZEN["infinity"]))
def test_infinity_exact_rationals(key):
    eps, eta = (Fraction(v) for v in key)
    got = infinity_coefficients(Parameters(eps, eta), 8).coeffs
    assert list(got) == [Fraction(v) for v in FROZEN["infinity"][key]]


def test_infinity_matches_sympy_substitution():
    eps, eta = Fraction(7, 3), Fraction(2, 5)
    assert list(infinity_coefficients(Parameters(eps, eta), 7).coeffs) == infinity_series_sympy(eps, eta, 7)


def test_centre_manifold_cross_check():
    import sympy as sp
    rho_hat, e, n = centre_manifold_rho_hat(4)
    assert rho_hat[0] == 1
    assert sp.simplify(rho_hat[1] - (e * n - 1)) == 0
    for eps, eta in ((Fraction(5), Fraction(4, 5)), (Fraction(3, 5), Fraction(9, 10))):
        r = infinity_coefficients(Parameters(eps, eta), 4).coeffs
        sub = {e: sp.Rational(eps.numerator, eps.denominator), n: sp.Rational(eta.numerator, eta.denominator)}
        for k in (2, 3, 4):
            # Y = y - (1 - 1/x) so rhohat_k = rho_k for k >= 2
            assert sp.Rational(r[k].numerator, r[k].denominator) == rho_hat[k - 2].subs(sub)


def test_eval_origin_examples():
    s = origin_coefficients(Parameters(5.0, 0.8), 2)
    assert eval_origin(s, 0.0) == 0.0
    assert eval_origin(s, 0.01) == pytest.approx(0.03982691, abs=1e-8)
    assert eval_origin(s, np.array([0.0, 0.01])).shape == (2,)


def test_eval_infinity_examples():
    assert eval_infinity(InfinitySeries((1.0, -1.0)), 100.0) == pytest.approx(0.99)
    s = infinity_coefficients(Parameters(5.0, 0.8), 3)
    assert eval_infinity(s, 10.0) == pytest.approx(0.913, abs=1e-14)
    assert eval_infinity(s, 1e12) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        eval_infinity(s, 0.0)


def test_fit_tail_exact_power_law():
    xs = np.geomspace(1e-4, 1e-2, 20)
    fit = fit_tail(xs, 2 * xs ** 3)
    assert fit.kappa_fit == pytest.approx(3.0, abs=1e-10)
    assert fit.C == pytest.approx(2.0, rel=1e-8)
    assert fit.n_points == 20


def test_fit_tail_with_correction():
    xs = np.geomspace(1e-4, 1e-3, 20)
    fit = fit_tail(xs, xs ** 2.5 * (1 + xs))
    assert abs(fit.kappa_fit - 2.5) < 0.01


def test_fit_tail_negative_constant():
    xs = np.geomspace(1e-3, 1e-1, 10)
    fit = fit_tail(xs, -3 * xs ** 1.5)
    assert fit.C == pytest.approx(-3.0, rel=1e-10)


def test_fit_tail_rejections():
    xs = np.geomspace(1e-4, 1e-2, 20)
    with pytest.raises(FitError):
        fit_tail(xs[:7], xs[:7] ** 2)
    r = xs ** 2
    r[5] = -r[5]
    with pytest.raises(FitError):
        fit_tail(xs, r)


def test_select_tail_window_avoids_noise_floor():
    xs = np.geomspace(1e-6, 1e-2, 81)
    rng = np.random.default_rng(1)
    rs = xs ** 2.3 + 1e-13 * rng.standard_normal(xs.size)
    mask = select_tail_window(xs, rs)
    assert mask is not None
    fit = fit_tail(xs[mask], rs[mask])
    assert abs(fit.kappa_fit - 2.3) < 0.02
    assert xs[mask].min() > 1e-6
