import math

import numpy as np
import pytest

from mmphase import (DomainError, H, InsufficientPrecision, Parameters, SlowManifold,
                     UnsupportedResonance, V, alpha, antifunnel_bisect, compute_manifold,
                     eta_from_kappa, eval_infinity, infinity_coefficients, origin_coefficients,
                     origin_tail, second_derivative_limit, slope_and_curvature, spectrum,
                     uniqueness_probe, verify_fences)

PAIRS = [(5.0, 0.8), (0.6, 0.9), (1.0, 0.95), (0.1, 0.5)]


@pytest.mark.parametrize("key", PAIRS)
def test_manifold_is_sandwiched_monotone_concave(get_manifold, key):
    p = Parameters(*key)
    m = get_manifold(*key)
    rep = verify_fences(p, m)
    assert rep.passed and m.fence_margin > 0
    assert rep.min_lower > 0 and rep.min_upper > 0
    assert np.all(np.diff(m.values) > 0)
    d1, d2 = slope_and_curvature(p, m, m.grid)
    assert np.all(d1 > 0) and np.all(d2 < 0)
    assert np.all(d1 < spectrum(p).sigma)


def test_manifold_value_at_one(get_manifold):
    p = Parameters(0.6, 0.9)
    m = get_manifold(0.6, 0.9)
    assert 0.5 < m(1.0) < 0.6595
    assert alpha(p, 1.0) == pytest.approx(1 / (1 / 1.9371294 + 1), abs=1e-7)


@pytest.mark.parametrize("key", [(5.0, 0.8), (0.6, 0.9)])
def test_manifold_matches_series_at_x_max(get_manifold, key):
    m = get_manifold(*key)
    s = infinity_coefficients(Parameters(*key), 5)
    assert abs(m.values[-1] - eval_infinity(s, 1e3)) <= 10 * m.tol


def test_series_residual_decays_like_x_minus_6(get_manifold):
    m = get_manifold(5.0, 0.8)
    xs = np.geomspace(1e2, 1e3, 12)
    r = np.array([abs(m.series_residual(x, 5)) for x in xs])
    slope = np.polyfit(np.log(xs), np.log(r), 1)[0]
    assert abs(slope + 6) < 0.3


def test_evaluation_between_nodes_is_smooth(get_manifold):
    p = Parameters(0.6, 0.9)
    m = get_manifold(0.6, 0.9)
    xs = np.sqrt(m.grid[:-1] * m.grid[1:])
    # off-grid points still solve the ODE; integrate toward the origin, where
    # neighbouring solutions converge onto M
    from mmphase import integrate_phase
    sel = (xs > 1) & (xs < 3)
    c = integrate_phase(p, (3.0, m(3.0)), 1.0, rtol=1e-12, stops=xs[sel])
    assert np.max(np.abs(c(xs[sel]) - m(xs[sel]))) < 1e-9


def test_synthetic_v_curve_fails_upper_fence():
    p = Parameters(5.0, 0.8)
    grid = np.geomspace(1e-3, 1e3, 200)
    m = SlowManifold.from_values(p, grid, V(p, grid))
    rep = verify_fences(p, m)
    assert not rep.passed
    assert np.all(rep.upper < 0)


def test_synthetic_h_curve_fails_lower_fence():
    p = Parameters(5.0, 0.8)
    grid = np.geomspace(1e-3, 1e3, 200)
    rep = verify_fences(p, SlowManifold.from_values(p, grid, H(grid)))
    assert not rep.passed
    assert np.max(np.abs(rep.lower)) < 1e-15


def test_curvature_matches_finite_difference(get_manifold):
    p = Parameters(5.0, 0.8)
    m = get_manifold(5.0, 0.8)
    d1, d2 = slope_and_curvature(p, m, 1.0)
    h = 1e-4
    fd = (slope_and_curvature(p, m, 1 + h)[0] - slope_and_curvature(p, m, 1 - h)[0]) / (2 * h)
    assert d2 < 0
    assert fd == pytest.approx(d2, rel=1e-6)


def test_slope_limits(get_manifold):
    p = Parameters(0.6, 0.9)
    m = get_manifold(0.6, 0.9)
    d1_lo, _ = slope_and_curvature(p, m, m.grid[0])
    d1_hi, _ = slope_and_curvature(p, m, m.grid[-1])
    assert d1_lo == pytest.approx(spectrum(p).sigma, rel=0.05)
    assert 0 < d1_hi < 1e-5


def test_slope_outside_grid_rejected(get_manifold):
    m = get_manifold(0.6, 0.9)
    with pytest.raises(DomainError):
        slope_and_curvature(Parameters(0.6, 0.9), m, 1e4)


def test_construction_validation():
    p = Parameters(0.6, 0.9)
    with pytest.raises(DomainError):
        compute_manifold(p, x_max=10.0)
    with pytest.raises(DomainError):
        compute_manifold(p, seed_order=9)
    with pytest.raises(DomainError):
        compute_manifold(p, tol=1e-15)


def test_origin_tail_below_two(get_manifold):
    p = Parameters(1.0, 0.95)
    fit = origin_tail(p, get_manifold(1.0, 0.95, 1e-3))
    assert abs(fit.kappa_fit - spectrum(p).kappa) < 0.1


def test_origin_tail_above_two(get_manifold):
    p = Parameters(0.6, 0.9)
    fit = origin_tail(p, get_manifold(0.6, 0.9))
    assert abs(fit.kappa_fit - spectrum(p).kappa) < 0.15


def test_origin_tail_large_kappa_documented_outcome(get_manifold):
    p = Parameters(5.0, 0.8)
    try:
        fit = origin_tail(p, get_manifold(5.0, 0.8))
    except InsufficientPrecision:
        return
    assert abs(fit.kappa_fit - spectrum(p).kappa) < 0.15


def test_resonant_manifold_constructs_but_has_no_tail():
    p = Parameters(1.0, eta_from_kappa(1.0, 3.0))
    m = compute_manifold(p, n_grid=300)
    assert verify_fences(p, m).passed
    with pytest.raises(UnsupportedResonance):
        origin_tail(p, m)


def test_second_derivative_diverges_for_kappa_below_two(get_manifold):
    p = Parameters(1.0, 0.95)
    res = second_derivative_limit(p, get_manifold(1.0, 0.95, 1e-8))
    assert res.kind == "divergent" and res.expected == -math.inf


@pytest.mark.parametrize("key,x_min", [((0.6, 0.9), 1e-6), ((5.0, 0.8), 1e-5)])
def test_second_derivative_finite_limit(get_manifold, key, x_min):
    p = Parameters(*key)
    res = second_derivative_limit(p, get_manifold(*key, x_min))
    target = 2 * origin_coefficients(p, 2).coeffs[2]
    assert res.kind == "finite"
    assert res.estimate == pytest.approx(target, rel=0.05)


def test_second_derivative_needs_small_x_min(get_manifold):
    with pytest.raises(DomainError):
        second_derivative_limit(Parameters(0.6, 0.9), get_manifold(0.6, 0.9))


def test_neighbours_leave_gamma1(get_manifold):
    p = Parameters(5.0, 0.8)
    m = get_manifold(5.0, 0.8)
    pr = uniqueness_probe(p, m)
    assert pr.exits[1][0] == "alpha" and pr.exits[-1][0] == "H"
    assert pr.exits[1][1] < 100 and pr.exits[-1][1] < 100


def test_bisection_agrees_with_construction(get_manifold):
    p = Parameters(0.6, 0.9)
    m = get_manifold(0.6, 0.9)
    res = antifunnel_bisect(p, 1.0, 1e3)
    assert abs(res.y_left - m(1.0)) < 1e-8
    assert res.bracket[1] - res.bracket[0] <= 1e-14
    with pytest.raises(DomainError):
        antifunnel_bisect(p, 0.0, 1.0)
