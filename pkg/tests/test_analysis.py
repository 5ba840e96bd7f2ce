import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from mmphase import (Branch, ConcavityRow, DomainError, Expected, F, H, K, Parameters, SingularSlope,
                     V, alpha, concavity_classify, cubic_real_roots, entry_threshold, fraser_iterate,
                     gamma1_entry, h_aux, h_curve, inflection_locus, integrate_phase, isocline_slope,
                     p_aux, scan_non_entering, slope_field, spectrum, table1_audit)
from mmphase.concavity import cubic_coefficients, second_derivative
from mmphase.entry import ENTERED, INCONCLUSIVE, NOT_ENTERED
from mmphase.isoclines import Slope

P58 = Parameters(5.0, 0.8)
P69 = Parameters(0.6, 0.9)


def test_h_aux_examples():
    assert h_aux(P58, (1.0, H(1.0))) == pytest.approx(-0.25, abs=1e-15)
    for x in (0.1, 1.0, 7.0):
        assert h_aux(P69, (x, 1.0)) == pytest.approx(-x / (0.6 * 0.1), rel=1e-12)
    assert h_aux(P58, (1.0, alpha(P58, 1.0))) == pytest.approx(4.0815595, abs=1e-7)
    with pytest.raises(SingularSlope):
        h_aux(P69, (0.5, V(P69, 0.5)))


def test_second_derivative_matches_finite_difference():
    x, y = 1.3, 0.4
    d = 1e-5
    c = integrate_phase(P69, (x, y), x + 2 * d, rtol=1e-13, stops=[x + d])
    c2 = integrate_phase(P69, (x, y), x - 2 * d, rtol=1e-13, stops=[x - d])
    fd = (c.derivative(x + d) - c2.derivative(x - d)) / (2 * d)
    assert fd == pytest.approx(second_derivative(P69, (x, y)), rel=1e-6)
    assert p_aux(P69, (x, y)) > 0


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.0, 1.5), st.floats(0.1, 5.0), st.floats(0.1, 0.9))
def test_h_equals_x_times_slope_gap(x, y, eps, eta):
    # h = x (f - w') where w is the isocline through (x, y) of slope f
    p = Parameters(eps, eta)
    try:
        f = slope_field(p, x, y)
    except SingularSlope:
        return
    assume(abs(1 + eps * f) > 1e-3 and abs(y - V(p, x)) > 1e-3)
    w = isocline_slope(p, Slope(f), x)
    assert float(F(p, x, f)) == pytest.approx(y, rel=1e-9, abs=1e-12)
    h = h_aux(p, (x, y))
    assert h == pytest.approx(x * (f - w), rel=1e-8, abs=1e-10)


def test_h_derivative_along_solutions():
    # along a solution h' = 2 y y' + x p h, so at an inflection h' has the sign of y y'
    c = integrate_phase(P69, (3.0, 0.7), 0.5, rtol=1e-12)
    xs = np.linspace(0.6, 2.8, 12)
    xs = xs[(xs < c.grid[-1] - 0.01) & (np.abs(c(xs) - V(P69, xs)) > 0.05)]
    assert xs.size >= 4
    d = 1e-5
    for x in xs:
        hp = (h_aux(P69, (x + d, c(x + d))) - h_aux(P69, (x - d, c(x - d)))) / (2 * d)
        y, f = float(c(x)), slope_field(P69, x, float(c(x)))
        want = 2 * y * f + x * p_aux(P69, (x, y)) * h_aux(P69, (x, y))
        assert hp == pytest.approx(want, rel=1e-3, abs=1e-8)


def test_classify_examples(get_manifold):
    m = get_manifold(5.0, 0.8)
    r = concavity_classify(P58, (1.0, 0.3), m)
    assert r.row is ConcavityRow.BELOW_M and r.expected is Expected.DOWN
    assert r.h < 0 and r.consistent
    for p, key in ((P58, (5.0, 0.8)), (P69, (0.6, 0.9))):
        m = get_manifold(*key)
        y = V(p, 1.0) + (1 - V(p, 1.0)) / 2
        r = concavity_classify(p, (1.0, y), m)
        assert r.row is ConcavityRow.V_TO_ONE and r.expected is Expected.DOWN and r.consistent
        r = concavity_classify(p, (1.0, 1.5), m)
        assert r.row is ConcavityRow.ABOVE_ONE and r.expected is Expected.EITHER
        assert np.sign(r.observed) == np.sign(r.h)
    with pytest.raises(DomainError):
        concavity_classify(P58, (-1.0, 0.2), m)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.floats(0.1, 10))
def test_cubic_roots_match_numpy(roots, lead):
    roots = sorted(roots)
    assume(min(np.diff(roots)) > 1e-3)
    c = tuple(lead * np.poly(roots))
    got = cubic_real_roots(c)
    assert got == pytest.approx(roots, abs=1e-9)


def test_cubic_single_real_root():
    got = cubic_real_roots((1.0, 0.0, 1.0, -2.0))  # (y - 1)(y^2 + y + 2)
    assert got == pytest.approx([1.0])


def test_three_roots_one_negative_at_reference_point():
    c = cubic_coefficients(P58, 1.0)
    roots = cubic_real_roots(c)
    assert len(roots) == 3 and sum(r < 0 for r in roots) == 1
    ys = np.linspace(-2, 3, 20001)
    g = np.polyval(c, ys)
    assert np.count_nonzero(np.diff(np.sign(g))) == 3


def test_cubic_is_scaled_h():
    for x, y in ((0.3, 0.2), (1.0, 0.7), (4.0, 1.3)):
        _, den = (None, (1 - P69.eta) * y - x * (1 - y))
        g = np.polyval(cubic_coefficients(P69, x), y)
        assert g == pytest.approx(P69.eps * den * h_aux(P69, (x, y)), rel=1e-12)


def test_inflection_loci_two_branches(get_manifold):
    m = get_manifold(0.6, 0.9)
    xs = np.geomspace(0.01, 5, 200)
    L = inflection_locus(P69, xs, m)
    bx, by = L.branch_points(Branch.BETWEEN_M_ALPHA)
    ax, ay = L.branch_points(Branch.ABOVE_ONE)
    assert bx.size == xs.size and ax.size == xs.size
    assert L.branch_points(Branch.OTHER)[0].size == 0
    assert np.all((by > m(bx)) & (by < alpha(P69, bx)))
    assert np.all(np.diff(ay) > 0)
    # the upper branch starts at (0, 1)
    near = inflection_locus(P69, [1e-6, 1e-5], m).branch_points(Branch.ABOVE_ONE)[1]
    assert np.all(np.abs(near - 1) < 1e-3)
    for x, r, b in L.rows():
        assert abs(h_aux(P69, (x, r))) < 1e-9 * (1 + abs(r))
    with pytest.raises(DomainError):
        inflection_locus(P69, [1.0, 0.5])


def test_table1_audit(get_manifold):
    rep = table1_audit(P69, get_manifold(0.6, 0.9))
    assert rep.passed
    for row in rep.rows.values():
        assert row.n_samples >= 100
        if row.expected is not Expected.EITHER:
            assert row.n_match_table == row.n_checked > 0


def test_entry_for_kappa_above_two():
    r = gamma1_entry(P58, (2.0, 0.2))
    assert r.status == ENTERED and not r.exited_after_entry
    assert r.t_entry > 0


def test_entry_threshold_and_non_entering_candidates():
    p = Parameters(1.0, 0.95)
    assert entry_threshold(p) == pytest.approx(1 / 4.472136 - 0.05, abs=1e-7)
    res = scan_non_entering(p, [0.3, 0.5, 0.9])
    assert {r.status for r in res} <= {ENTERED, NOT_ENTERED, INCONCLUSIVE}
    for r in res:
        if r.status == NOT_ENTERED:
            assert r.v_crossings[-1] < r.x_star


def test_crossing_v_right_of_threshold_enters():
    p = Parameters(1.0, 0.95)
    r = gamma1_entry(p, (2.0, 0.99))
    assert r.v_crossings and r.v_crossings[0] > entry_threshold(p)
    assert r.status == ENTERED


def test_entry_rejects_negative_start():
    with pytest.raises(DomainError):
        gamma1_entry(P58, (-1.0, 0.2))


def test_fraser_first_iterate_closed_form():
    grid = np.geomspace(0.1, 10, 101)
    it = fraser_iterate(P58, h_curve(grid), 1)
    assert float(K(P58, 0.25)) == pytest.approx(1.25 / 2.25)
    assert float(it.curves[1](1.0)) == pytest.approx(0.6428571, abs=1e-7)
    x = grid
    want = x / (np.asarray(K(P58, 1 / (1 + x) ** 2)) + x)
    assert np.allclose(it.curves[1].y, want, rtol=1e-14)


def test_fraser_fixed_point(get_manifold):
    m = get_manifold(0.6, 0.9)
    grid = m.grid[(m.grid > 0.01) & (m.grid < 100)]
    from mmphase import Curve, slope_and_curvature
    d1, _ = slope_and_curvature(P69, m, grid)
    it = fraser_iterate(P69, Curve(grid, m(grid), d1), 1, reference=m)
    assert it.distances[1] < 1e-9


def test_fraser_distances_decrease(get_manifold):
    p = Parameters(0.1, 0.5)
    m = get_manifold(0.1, 0.5)
    it = fraser_iterate(p, h_curve(np.geomspace(1e-3, 1e2, 400)), 4, reference=m)
    assert np.all(np.diff(it.distances) < 0)
    assert it.table().shape == (400, 6)


def test_fraser_validation():
    with pytest.raises(DomainError):
        fraser_iterate(P58, h_curve(np.geomspace(0.1, 1, 10)), 0)
