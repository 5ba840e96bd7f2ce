"""Concavity of solution curves and the inflection loci.

Along any solution of dy/dx = f, the second derivative factors as
``y'' = p(x, y) h(x, y)`` with ``p = eta / (eps D0^2) > 0`` away from the
vertical isocline, so the sign of ``h = y (y - 1) + x f`` decides concavity.
Clearing denominators gives the cubic ``G = eps D0 h`` in y whose roots trace
the inflection loci.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

from .errors import DomainError, SingularSlope
from .isoclines import H, V, alpha
from .kinetics import Parameters, slope_field, slope_terms, spectrum

if TYPE_CHECKING:
    from .manifold import SlowManifold


def h_aux(p: Parameters, pt, gap=None) -> float:
    """h = y (y - 1) + x f(x, y).  Raises SingularSlope on V."""
    x, y = pt
    if gap is None:
        gap = 1 - y
    return -y * gap + x * slope_field(p, x, y, gap)


def p_aux(p: Parameters, pt, gap=None) -> float:
    x, y = pt
    _, den = slope_terms(p, x, y, gap)
    if den == 0:
        raise SingularSlope(f"({x}, {y}) lies on the vertical isocline")
    return p.eta / (p.eps * den * den)


def second_derivative(p: Parameters, pt, gap=None) -> float:
    return p_aux(p, pt, gap) * h_aux(p, pt, gap)


# -- concavity table ------------------------------------------------------------

class ConcavityRow(Enum):
    BELOW_M = "BelowM"
    M_TO_ALPHA = "MToAlpha"
    ALPHA_TO_V = "AlphaToV"
    V_TO_ONE = "VToOne"
    ABOVE_ONE = "AboveOne"


class Expected(Enum):
    DOWN = "concave_down"
    UP = "concave_up"
    EITHER = "either_sign_h_decides"


# Determinate rows: below M and between V and 1 are concave down, between alpha
# and V concave up.  Between M and alpha, and above 1, a solution passes
# through an inflection point, so only h can decide.
TABLE1 = {
    ConcavityRow.BELOW_M: Expected.DOWN,
    ConcavityRow.M_TO_ALPHA: Expected.EITHER,
    ConcavityRow.ALPHA_TO_V: Expected.UP,
    ConcavityRow.V_TO_ONE: Expected.DOWN,
    ConcavityRow.ABOVE_ONE: Expected.EITHER,
}


@dataclass(frozen=True)
class ConcavityReport:
    point: tuple[float, float]
    row: ConcavityRow
    expected: Expected
    h: float
    p: float
    observed: float

    @property
    def consistent(self) -> bool:
        """Observed sign agrees with the table (always true for EITHER rows)."""
        if self.expected is Expected.DOWN:
            return self.observed < 0
        if self.expected is Expected.UP:
            return self.observed > 0
        return True


def table1_row(p: Parameters, x: float, y: float, m_of_x: float, sigma: float | None = None) -> ConcavityRow:
    if y >= 1:
        return ConcavityRow.ABOVE_ONE
    if y <= m_of_x:
        return ConcavityRow.BELOW_M
    if y < alpha(p, x, sigma):
        return ConcavityRow.M_TO_ALPHA
    if y < V(p, x):
        return ConcavityRow.ALPHA_TO_V
    return ConcavityRow.V_TO_ONE


def concavity_classify(p: Parameters, pt, m: "SlowManifold") -> ConcavityReport:
    x, y = float(pt[0]), float(pt[1])
    if x < 0 or y < 0:
        raise DomainError("concavity_classify expects a point of the closed first quadrant")
    hv = h_aux(p, (x, y))
    pv = p_aux(p, (x, y))
    row = table1_row(p, x, y, float(m(x)) if x > 0 else 0.0)
    return ConcavityReport((x, y), row, TABLE1[row], hv, pv, pv * hv)


# -- inflection loci ---------------------------------------------------------------

class Branch(Enum):
    BETWEEN_M_ALPHA = "betweenMAlpha"
    ABOVE_ONE = "aboveOne"
    DISCARDED_NEGATIVE = "discardedNegative"
    OTHER = "other"


def cubic_coefficients(p: Parameters, x: float) -> tuple[float, float, float, float]:
    """Coefficients (c3, c2, c1, c0) of G(x, y) as a cubic in y."""
    eps, eta = float(p.eps), float(p.eta)
    a = 1 - eta + x
    return eps * a, -eps * (x + a), eps * x - x * (1 + x), x * x


def _poly(c, y):
    return ((c[0] * y + c[1]) * y + c[2]) * y + c[3]


def _dpoly(c, y):
    return (3 * c[0] * y + 2 * c[1]) * y + c[2]


def _refine(c, lo, hi):
    """Safeguarded Newton on a bracket [lo, hi] with a sign change."""
    glo = _poly(c, lo)
    if glo == 0:
        return lo
    if _poly(c, hi) == 0:
        return hi
    y = 0.5 * (lo + hi)
    for _ in range(200):
        g = _poly(c, y)
        if g == 0:
            return y
        if (g > 0) == (glo > 0):
            lo = y
        else:
            hi = y
        d = _dpoly(c, y)
        y_new = y - g / d if d != 0 else 0.5 * (lo + hi)
        if not lo < y_new < hi:
            y_new = 0.5 * (lo + hi)
        if abs(y_new - y) <= 4e-16 * max(1.0, abs(y_new)) or hi - lo <= 4e-16 * max(1.0, abs(y)):
            return y_new
        y = y_new
    return y


def cubic_real_roots(c) -> list[float]:
    """Real roots of c3 y^3 + c2 y^2 + c1 y + c0 (c3 != 0), ascending.

    The critical points split the line into monotone pieces; each piece whose
    end values change sign holds one root, refined by safeguarded Newton.
    """
    c3, c2, c1, c0 = c
    bound = 1 + max(abs(c2), abs(c1), abs(c0)) / abs(c3)  # Cauchy bound
    disc = c2 * c2 - 3 * c3 * c1
    knots = [-bound]
    if disc > 0:
        r = math.sqrt(disc)
        q = -(c2 + math.copysign(r, c2))
        crit = sorted({q / (3 * c3), c1 / q} if q != 0 else {-c2 / (3 * c3)})
        knots += [t for t in crit if -bound < t < bound]
    knots.append(bound)
    roots = []
    for lo, hi in zip(knots[:-1], knots[1:]):
        glo, ghi = _poly(c, lo), _poly(c, hi)
        if glo == 0:
            if not roots or roots[-1] != lo:
                roots.append(lo)
            continue
        if ghi == 0 or (glo > 0) != (ghi > 0):
            roots.append(_refine(c, lo, hi))
    if _poly(c, knots[-1]) == 0 and (not roots or roots[-1] != knots[-1]):
        roots.append(knots[-1])
    return roots


@dataclass
class InflectionLoci:
    x: np.ndarray
    roots: list[list[float]]
    branches: list[list[Branch]]
    warnings: list[str] = field(default_factory=list)

    def branch_points(self, branch: Branch) -> tuple[np.ndarray, np.ndarray]:
        xs, ys = [], []
        for x, rs, bs in zip(self.x, self.roots, self.branches):
            for r, b in zip(rs, bs):
                if b is branch:
                    xs.append(x)
                    ys.append(r)
        return np.array(xs), np.array(ys)

    def rows(self):
        for x, rs, bs in zip(self.x, self.roots, self.branches):
            for r, b in zip(rs, bs):
                yield float(x), float(r), b.value


V_FILTER = 1e-12


def inflection_locus(p: Parameters, x_grid, m: "SlowManifold | None" = None) -> InflectionLoci:
    """Roots of G(x, .) = 0 for every x in ``x_grid``, sorted into branches.

    Positive roots up to 1 are tested against the band (M(x), alpha(x)); the
    horizontal isocline stands in for M when no manifold is supplied.
    """
    xs = np.asarray(x_grid, dtype=float)
    if xs.ndim != 1 or np.any(xs <= 0) or np.any(np.diff(xs) <= 0):
        raise DomainError("x_grid must be positive and strictly increasing")
    sigma = spectrum(p).sigma
    notes = []
    all_roots, all_branches = [], []
    for x in xs:
        c = cubic_coefficients(p, x)
        roots = []
        for r in cubic_real_roots(c):
            _, den = slope_terms(p, x, r)
            if abs(den) <= V_FILTER * (1 + x):
                notes.append(f"root on V discarded at x={x!r}")
                continue
            roots.append(r)
        if len(roots) > 1 and min(np.diff(roots)) < 1e-8:
            msg = f"near-multiple inflection roots at x={x!r}"
            notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
        lower = float(m(x)) if m is not None else H(x)
        upper = alpha(p, x, sigma)
        branches = []
        for r in roots:
            if r < 0:
                branches.append(Branch.DISCARDED_NEGATIVE)
            elif r > 1:
                branches.append(Branch.ABOVE_ONE)
            elif lower < r < upper:
                branches.append(Branch.BETWEEN_M_ALPHA)
            else:
                branches.append(Branch.OTHER)
        all_roots.append(roots)
        all_branches.append(branches)
    return InflectionLoci(xs, all_roots, all_branches, notes)


# -- concavity-table audit along integrated solutions --------------------------------------

@dataclass
class RowAudit:
    row: ConcavityRow
    expected: Expected
    n_samples: int = 0
    n_checked: int = 0
    n_match_table: int = 0
    n_match_ph: int = 0

    @property
    def passed(self) -> bool:
        ok_ph = self.n_match_ph == self.n_checked
        if self.expected is Expected.EITHER:
            return ok_ph
        return ok_ph and self.n_match_table == self.n_checked

    def as_dict(self) -> dict:
        return {"row": self.row.value, "expected": self.expected.value, "n_samples": self.n_samples,
                "n_checked": self.n_checked, "n_match_table": self.n_match_table,
                "n_match_ph": self.n_match_ph, "passed": self.passed}


@dataclass
class AuditReport:
    rows: dict
    h_band: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows.values())

    def as_dict(self) -> dict:
        return {"h_band": self.h_band, "passed": self.passed,
                "rows": [r.as_dict() for r in self.rows.values()]}


def _band(p: Parameters, m: "SlowManifold", row: ConcavityRow, x: float, sigma: float):
    mx = float(m(x))
    a, v = alpha(p, x, sigma), V(p, x)
    return {
        ConcavityRow.BELOW_M: (0.0, mx),
        ConcavityRow.M_TO_ALPHA: (mx, a),
        ConcavityRow.ALPHA_TO_V: (a, v),
        ConcavityRow.V_TO_ONE: (v, 1.0),
        ConcavityRow.ABOVE_ONE: (1.0, 2.0),
    }[row]


def _fd_samples(p: Parameters, x0: float, y0: float, span: float, n_stops: int):
    """Points on the solution through (x0, y0) with y'' from central differences of y'."""
    from .integrate import integrate_phase

    stops = x0 * (1 + span * np.arange(1, n_stops + 1) / n_stops)
    c = integrate_phase(p, (x0, y0), float(stops[-1]), rtol=1e-12, atol=1e-15, stops=stops)
    nodes = np.concatenate([[x0], stops])
    nodes = nodes[nodes <= c.grid[-1]]
    pos = np.searchsorted(c.grid, nodes)
    ok = c.grid[np.minimum(pos, c.grid.size - 1)] == nodes
    nodes, pos = nodes[ok], pos[ok]
    out = []
    for i in range(1, nodes.size - 1):
        a, b = pos[i - 1], pos[i + 1]
        fd = (c.dy[b] - c.dy[a]) / (c.grid[b] - c.grid[a])
        out.append((c.grid[pos[i]], c.y[pos[i]], fd))
    return out


def table1_audit(p: Parameters, m: "SlowManifold", n_per_region: int = 100, seed: int = 0,
                 x_range: tuple[float, float] = (0.05, 5.0), h_band: float = 1e-6,
                 span: float = 0.02, n_stops: int = 10, max_starts: int = 2000) -> AuditReport:
    """Sample solutions in every concavity-table row and compare the observed concavity.

    Starts are drawn per row (log-uniform x, uniform y inside the row's band);
    each start is followed a short distance in x and every interior stop is a
    sample.  A sample counts toward the row it actually lies in, and is checked
    only when |h| > ``h_band``, away from the inflection loci.
    """
    rng = np.random.default_rng(seed)
    sigma = spectrum(p).sigma
    rows = {r: RowAudit(r, TABLE1[r]) for r in ConcavityRow}
    lo_x, hi_x = np.log(x_range[0]), np.log(x_range[1])
    starts = 0
    for target in ConcavityRow:
        while rows[target].n_samples < n_per_region:
            starts += 1
            if starts > max_starts:
                raise DomainError(f"could not collect {n_per_region} samples for row {target.value}")
            x0 = float(np.exp(rng.uniform(lo_x, hi_x)))
            lo, hi = _band(p, m, target, x0, sigma)
            y0 = lo + (hi - lo) * rng.uniform(0.05, 0.95)
            try:
                samples = _fd_samples(p, x0, y0, span, n_stops)
            except SingularSlope:
                continue
            for x, y, fd in samples:
                row = table1_row(p, x, y, float(m(x)), sigma)
                ra = rows[row]
                ra.n_samples += 1
                try:
                    hv = h_aux(p, (x, y))
                except SingularSlope:
                    continue
                if abs(hv) <= h_band:
                    continue
                ph = p_aux(p, (x, y)) * hv
                ra.n_checked += 1
                ra.n_match_ph += int(np.sign(fd) == np.sign(ph))
                if ra.expected is Expected.DOWN:
                    ra.n_match_table += int(fd < 0)
                elif ra.expected is Expected.UP:
                    ra.n_match_table += int(fd > 0)
                else:
                    ra.n_match_table += 1
    return AuditReport(rows, h_band)
