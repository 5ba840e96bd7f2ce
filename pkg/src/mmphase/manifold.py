"""Construction and verification of the slow manifold M.

M is the one solution of dy/dx = f trapped between H and alpha for all x > 0.
Integrating backward in x reverses its attractivity, so a curve started near
the truncated series at infinity is drawn onto M and stays there.

Far from the origin both M and its neighbours sit within O(1/x) of y = 1 and
the slope field is stiff (df/dy grows like x / (eps eta)).  The far field is
therefore integrated in the chart ``D = y - S_K(x)``, where ``S_K`` is the
series at infinity truncated after ``K`` terms; every term of the chart's
vector field is small there, so nothing cancels, and an implicit Radau solve
handles the stiffness.  Closer in, ``integrate_phase`` takes over.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.integrate import solve_ivp

from .concavity import h_aux, p_aux
from .errors import (ConstructionError, DomainError, FitError, InsufficientPrecision,
                     IntegrationError, UnsupportedResonance)
from .integrate import Curve, EventSpec, dopri5, integrate_phase
from .isoclines import H, alpha
from .kinetics import Parameters, slope_field, spectrum
from .series import (TailFit, fit_tail, infinity_coefficients, origin_coefficients,
                     select_tail_window)

FENCE_SLACK = -1e-9
MAX_SEED_ORDER = 8
DEFAULT_GRID = 600


def _padd(a, b, scale=1):
    n = max(len(a), len(b))
    a = list(a) + [0] * (n - len(a))
    b = list(b) + [0] * (n - len(b))
    return [u + scale * v for u, v in zip(a, b)]


def _pmul(a, b):
    out = [0] * (len(a) + len(b) - 1)
    for i, u in enumerate(a):
        for j, v in enumerate(b):
            out[i + j] += u * v
    return out


def _horner(c, X):
    acc = 0.0
    for v in reversed(c):
        acc = acc * X + v
    return acc


class _Chart:
    """Vector field for D = y - S_K(x), with polynomial pieces in X = 1/x.

    The residual of the truncated series, ``R = N_S - eps D0_S S_K'``, is
    assembled in exact rational arithmetic so its vanishing low-order
    coefficients are exact zeros rather than rounding noise.
    """

    def __init__(self, p: Parameters, K: int):
        eps, eta = Fraction(float(p.eps)), Fraction(float(p.eta))
        rho = list(infinity_coefficients(Parameters(eps, eta), K).coeffs)
        S = rho
        xU = [Fraction(1)] + [-rho[m + 1] for m in range(1, K)]  # x (1 - S_K)
        U = [Fraction(0)] + xU  # 1 - S_K
        NS = _padd(xU, S, -1)
        D0S = _padd([(1 - eta) * c for c in S], xU, -1)
        Sp = [Fraction(0)] * (K + 2)  # dS_K/dx as a polynomial in X
        for n in range(K + 1):
            Sp[n + 1] = -n * rho[n]
        R = _padd(NS, [eps * c for c in _pmul(D0S, Sp)], -1)
        self.K = K
        self.rho = [float(c) for c in rho]
        self.S = self.rho
        self.U = [float(c) for c in U]
        self.D0S = [float(c) for c in D0S]
        self.Sp = [float(c) for c in Sp]
        self.R = [float(c) for c in R]
        self.eps = float(p.eps)
        self.eta = float(p.eta)

    def _parts(self, x, D):
        X = 1.0 / x
        sp = _horner(self.Sp, X)
        num = _horner(self.R, X) - (1 + x) * D - self.eps * x * D * sp
        d0 = _horner(self.D0S, X) + x * D
        return num, d0, sp

    def dD(self, x, D):
        num, d0, _ = self._parts(x, D)
        return num / (self.eps * d0)

    def jac(self, x, D):
        num, d0, sp = self._parts(x, D)
        dnum = -(1 + x) - self.eps * x * sp
        return dnum / (self.eps * d0) - num * x / (self.eps * d0 * d0)

    def quasi_static(self, x):
        """D making the chart numerator vanish: a seed already on the slow branch."""
        X = 1.0 / x
        return _horner(self.R, X) / ((1 + x) + self.eps * x * _horner(self.Sp, X))

    def series(self, x):
        return _horner(self.S, 1.0 / x)

    def series_gap(self, x):
        return _horner(self.U, 1.0 / x)

    def slope(self, x, D):
        return _horner(self.Sp, 1.0 / x) + self.dD(x, D)


@dataclass(frozen=True)
class SlowManifold:
    """Sampled slow manifold.

    ``gap`` holds 1 - M on the grid, computed without cancellation in the far
    field, so fence margins near y = 1 stay meaningful.  ``far`` is the chart
    variable D = M - S_K on [x_join, x_max] (``None`` for synthetic curves).
    """

    p: Parameters
    curve: Curve
    gap: np.ndarray
    seed_order: int
    fence_margin: float
    tol: float = 1e-10
    x_join: float = math.inf
    far: Curve | None = None
    tail: TailFit | None = None
    chart: _Chart | None = field(default=None, repr=False, compare=False)
    near: Curve | None = field(default=None, repr=False, compare=False)

    @property
    def grid(self) -> np.ndarray:
        return self.curve.grid

    @property
    def values(self) -> np.ndarray:
        return self.curve.y

    def __call__(self, x):
        """M(x): S_K + D in the far field, the dense integrator curve nearer in."""
        xs = np.asarray(x, dtype=float)
        base = self.near if self.near is not None else self.curve
        out = np.asarray(base(xs), dtype=float)
        if self.far is not None:
            sel = xs >= self.x_join
            if np.any(sel):
                xf = xs[sel] if xs.ndim else xs
                vals = self.chart.series(xf) + self.far(xf)
                if xs.ndim:
                    out = out.copy()
                    out[sel] = vals
                else:
                    out = np.asarray(vals)
        return out if out.ndim else float(out)

    def _in_far(self, x) -> bool:
        return self.far is not None and x >= self.x_join

    def gap_at(self, x: float) -> float:
        if self._in_far(x):
            return self.chart.series_gap(x) - float(self.far(x))
        return 1.0 - float(self(x))

    def series_residual(self, x: float, N: int = 5) -> float:
        """M(x) minus the series at infinity truncated after rho_N."""
        if self._in_far(x):
            extra = sum(self.chart.rho[n] * x ** -n for n in range(N + 1, self.chart.K + 1))
            missing = 0.0
            if N > self.chart.K:
                rho = infinity_coefficients(self.p, N).coeffs
                missing = sum(float(rho[n]) * x ** -n for n in range(self.chart.K + 1, N + 1))
            return float(self.far(x)) + extra - missing
        rho = infinity_coefficients(self.p, N).coeffs
        return float(self(x)) - sum(float(c) * x ** -n for n, c in enumerate(rho))

    @classmethod
    def from_values(cls, p: Parameters, grid, y, dy=None, seed_order: int = 0) -> "SlowManifold":
        """Wrap an arbitrary sampled curve (used for synthetic fence checks)."""
        curve = Curve(grid, y, dy)
        gap = 1.0 - curve.y
        rep = _margins(p, curve.grid, gap)
        return cls(p, curve, gap, seed_order, min(rep[0].min(), rep[1].min()))


def _margins(p: Parameters, grid, gap):
    k = 1.0 / spectrum(p).sigma
    lower = 1.0 / (1.0 + grid) - gap      # M - H
    upper = gap - k / (k + grid)          # alpha - M
    return lower, upper


def join_point(p: Parameters, x_min: float, x_max: float) -> float:
    """Where the far-field chart hands over to explicit phase integration.

    Chosen so that the explicit integrator's stability-limited step count,
    roughly x_join^2 / (eps eta), stays in the low thousands.
    """
    xj = min(max(math.sqrt(2000.0 * float(p.eps) * float(p.eta)), 5.0), 50.0)
    return min(max(xj, x_min), x_max)


def compute_manifold(p: Parameters, x_min: float = 1e-3, x_max: float = 1e3, tol: float = 1e-10,
                     seed_order: int = 5, n_grid: int = DEFAULT_GRID, grid=None) -> SlowManifold:
    if grid is None:
        if not 0 < x_min < x_max:
            raise DomainError("need 0 < x_min < x_max")
        grid = np.geomspace(x_min, x_max, n_grid)
    else:
        grid = np.asarray(grid, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or grid[0] <= 0 or np.any(np.diff(grid) <= 0):
            raise DomainError("grid must be positive and strictly increasing")
        x_min, x_max = float(grid[0]), float(grid[-1])
    if x_max < 50:
        raise DomainError("x_max must be at least 50 for the series at infinity to be usable")
    if not 0 <= seed_order <= MAX_SEED_ORDER:
        raise DomainError(f"seed_order must lie in [0, {MAX_SEED_ORDER}]")
    if not 1e-13 <= tol < 1e-2:
        raise DomainError("tol must lie in [1e-13, 1e-2)")

    K = max(seed_order, 2)
    chart = _Chart(p, K)
    x_join = join_point(p, x_min, x_max)
    far_mask = grid >= x_join
    far_nodes = np.union1d(grid[far_mask], [x_join])
    D_far, dD_far = _integrate_far(chart, far_nodes, 2.0 * x_max, tol)

    y = np.empty_like(grid)
    dy = np.empty_like(grid)
    gap = np.empty_like(grid)
    idx_far = np.searchsorted(far_nodes, grid[far_mask])
    xs_f = grid[far_mask]
    D_g = D_far[idx_far]
    for i, (x, D) in enumerate(zip(xs_f, D_g)):
        j = np.flatnonzero(far_mask)[i]
        y[j] = chart.series(x) + D
        gap[j] = chart.series_gap(x) - D
        dy[j] = chart.slope(x, D)

    near = ~far_mask
    if near.any():
        y_join = chart.series(x_join) + D_far[0]
        sigma = spectrum(p).sigma
        atol = 0.1 * tol * min(1.0, sigma * x_min)
        c = integrate_phase(p, (x_join, y_join), x_min, rtol=tol, atol=atol, stops=grid[near])
        if c.truncated:
            raise ConstructionError(
                f"backward integration reached the vertical isocline at x={c.grid[0]:.6g}; "
                "the seed is not on the slow branch"
            )
        pos = np.searchsorted(c.grid, grid[near])
        if not np.array_equal(c.grid[pos], grid[near]):
            raise IntegrationError("integrator failed to land on the requested grid nodes")
        y[near] = c.y[pos]
        dy[near] = c.dy[pos]
        gap[near] = 1.0 - y[near]

    far_curve = Curve(far_nodes, D_far, dD_far) if far_nodes.size >= 2 else None
    lower, upper = _margins(p, grid, gap)
    margin = float(min(lower.min(), upper.min()))
    m = SlowManifold(p, Curve(grid, y, dy), gap, seed_order, margin, tol,
                     x_join if far_curve is not None else math.inf, far_curve, None, chart,
                     c if near.any() else None)
    if margin <= FENCE_SLACK:
        m = _restart_with_bisection(p, m, tol)
    return m


def _integrate_far(chart: _Chart, nodes, x_seed: float, tol: float):
    """D on ``nodes`` (ascending), integrated backward from ``x_seed``."""
    D0 = chart.quasi_static(x_seed)
    desc = nodes[::-1]
    sol = solve_ivp(lambda x, D: [chart.dD(x, D[0])], (x_seed, float(desc[-1])), [D0],
                    method="Radau", t_eval=desc, rtol=max(tol, 1e-13), atol=1e-300,
                    jac=lambda x, D: [[chart.jac(x, D[0])]])
    if not sol.success:
        raise IntegrationError(f"far-field integration failed: {sol.message}")
    D = sol.y[0][::-1].copy()
    dD = np.array([chart.dD(x, d) for x, d in zip(nodes, D)])
    return D, dD


# -- fences ------------------------------------------------------------------

@dataclass(frozen=True)
class FenceReport:
    grid: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    min_lower: float
    min_upper: float
    passed: bool
    slack: float = FENCE_SLACK

    def as_dict(self) -> dict:
        return {"min_lower_margin": self.min_lower, "min_upper_margin": self.min_upper,
                "passed": self.passed, "slack": self.slack, "n_points": int(self.grid.size)}


def verify_fences(p: Parameters, m: SlowManifold) -> FenceReport:
    """Margins M - H and alpha - M at every grid point.

    Passing needs every margin above the slack and, on each side, at least one
    margin clear of the slack band: a curve lying on a fence (margins at
    rounding level) is not inside it.
    """
    lower, upper = _margins(p, m.grid, m.gap)
    band = abs(FENCE_SLACK)
    ok = (lower.min() > FENCE_SLACK and upper.min() > FENCE_SLACK
          and lower.max() > band and upper.max() > band)
    return FenceReport(m.grid, lower, upper, float(lower.min()), float(upper.min()), bool(ok))


# -- derivatives ---------------------------------------------------------------

def _point(m: SlowManifold, x: float):
    if m._in_far(x):
        D = float(m.far(x))
        return m.chart.series(x) + D, m.chart.series_gap(x) - D, D
    y = float(m(x))
    return y, 1.0 - y, None


def slope_and_curvature(p: Parameters, m: SlowManifold, x):
    """(M'(x), M''(x)) from the vector field, not from differencing.

    M' = f(x, M) and M'' = p(x, M) h(x, M).
    """
    scalar = np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    lo, hi = m.grid[0], m.grid[-1]
    if np.any(xs < lo * (1 - 1e-12)) or np.any(xs > hi * (1 + 1e-12)):
        raise DomainError(f"x outside the manifold grid [{lo}, {hi}]")
    d1 = np.empty_like(xs)
    d2 = np.empty_like(xs)
    for i, xv in enumerate(xs):
        y, g, D = _point(m, xv)
        if D is None:
            d1[i] = slope_field(p, xv, y, g)
            d2[i] = p_aux(p, (xv, y), g) * h_aux(p, (xv, y), g)
        else:
            d1[i] = m.chart.slope(xv, D)
            d2[i] = p_aux(p, (xv, y), g) * (-y * g + xv * d1[i])
    if scalar:
        return float(d1[0]), float(d2[0])
    return d1, d2


# -- origin asymptotics ----------------------------------------------------------

TAIL_WINDOW_MAX = 1e-2


def origin_tail(p: Parameters, m: SlowManifold, extra_terms: int = 1) -> TailFit:
    """Fit M(x) - sum sigma_n x^n = C x^kappa near the origin.

    The subtracted polynomial runs to n = floor(kappa) + ``extra_terms``:
    the next analytic term would otherwise bias the fitted exponent, and
    sigma_n is well defined past kappa for non-resonant parameters.
    """
    sp = spectrum(p)
    if sp.resonant:
        raise UnsupportedResonance(f"kappa = {sp.kappa:.12g} is an integer; the tail C x^kappa "
                                   "is replaced by a logarithmic term")
    n_sub = int(math.floor(sp.kappa)) + max(extra_terms, 0)
    series = origin_coefficients(p, n_sub)
    if series.order < n_sub:
        raise UnsupportedResonance("origin series undefined below the subtraction order")
    sel = m.grid < TAIL_WINDOW_MAX
    if sel.sum() < 8:
        raise DomainError("need at least 8 grid points below x = 1e-2; lower x_min")
    xs = m.grid[sel]
    poly = np.zeros_like(xs)
    for c in reversed(series.coeffs[: n_sub + 1]):
        poly = poly * xs + c
    r = m.values[sel] - poly
    floor = max(1e-13, m.tol) * sp.sigma * xs
    ok = np.abs(r) > floor
    if ok.sum() < 8:
        raise InsufficientPrecision(
            f"the x^{sp.kappa:.4g} tail lies below the rounding floor (|r| < {max(1e-13, m.tol):.0e} "
            "sigma x) on all but {0} samples; the polynomial of degree {1} already matches M to "
            "working precision".format(int(ok.sum()), n_sub)
        )
    xs_ok, r_ok = xs[ok], r[ok]
    mask = select_tail_window(xs_ok, r_ok)
    if mask is None:
        raise FitError("no window where the residual follows a single power law")
    return fit_tail(xs_ok[mask], r_ok[mask])


@dataclass(frozen=True)
class SecondDerivativeLimit:
    kind: str  # "finite", "divergent" or "indeterminate"
    expected: float
    estimate: float
    x: np.ndarray
    values: np.ndarray


def second_derivative_limit(p: Parameters, m: SlowManifold, rel: float = 0.05,
                            blowup: float = 1e3) -> SecondDerivativeLimit:
    """Classify lim M''(x) as x -> 0+: 2 sigma_2 when kappa > 2, -inf when kappa < 2.

    Divergence is declared when |M''| grows monotonically past ``blowup`` on
    the dyadic samples 1e-2 2^-k; a finite limit when the extrapolated value
    lies within ``rel`` of 2 sigma_2.
    """
    sp = spectrum(p)
    if sp.resonant:
        raise UnsupportedResonance("second-derivative limit needs non-resonant parameters")
    if abs(sp.kappa - 2) <= 0.05:
        raise DomainError("kappa within 0.05 of 2: the limit is not resolvable")
    if m.grid[0] > 1e-4:
        raise DomainError("need x_min <= 1e-4 to follow M'' toward the origin")
    xs = []
    k = 0
    while 1e-2 * 2.0 ** -k >= m.grid[0]:
        xs.append(1e-2 * 2.0 ** -k)
        k += 1
    xs = np.array(xs)
    _, d2 = slope_and_curvature(p, m, xs)
    target = 2 * origin_coefficients(p, 2).coeffs[2]
    mag = np.abs(d2)
    tail = mag[len(mag) // 2:]
    if np.all(np.diff(tail) > 0) and mag[-1] > blowup and d2[-1] < 0:
        return SecondDerivativeLimit("divergent", -math.inf, float(d2[-1]), xs, d2)
    # M'' = L + A x^(kappa - 2) + ...: convergence is slow when kappa is near 2,
    # so the limit is read off a two-term least-squares fit on x <= 1e-3
    late = xs <= 1e-3 * (1 + 1e-12)
    if sp.kappa > 2 and late.sum() >= 3:
        basis = np.column_stack([np.ones(late.sum()), xs[late] ** (sp.kappa - 2)])
        (L, _), *_ = np.linalg.lstsq(basis, d2[late], rcond=None)
        if abs(L - target) <= rel * abs(target):
            return SecondDerivativeLimit("finite", target, float(L), xs, d2)
        return SecondDerivativeLimit("indeterminate", target, float(L), xs, d2)
    return SecondDerivativeLimit("indeterminate", target if sp.kappa > 2 else -math.inf,
                                 float(d2[-1]), xs, d2)


# -- antifunnel bisection and uniqueness -------------------------------------------

@dataclass(frozen=True)
class BisectionResult:
    y_left: float
    bracket: tuple[float, float]
    deepest: Curve
    exit_x: float
    iterations: int


def _exit_forward(p: Parameters, x0: float, y0: float, x_end: float, rtol: float):
    """Integrate forward in x until the solution leaves Gamma1 (or reaches x_end)."""
    sigma = spectrum(p).sigma
    eps = float(p.eps)

    def fun(x, z):
        y = z[0]
        g = 1 - y
        return np.array([(x * g - y) / (eps * ((1 - p.eta) * y - x * g))])

    evs = [EventSpec("H", lambda x, z: z[0] - H(x), terminal=True),
           EventSpec("alpha", lambda x, z: z[0] - alpha(p, x, sigma), terminal=True)]
    raw = dopri5(fun, x0, [y0], x_end, rtol, 1e-15, events=evs)
    kind = raw.events[-1][0] if raw.status == "event" else None
    xs = np.array(raw.ts)
    return kind, xs[-1], xs, np.array(raw.ys)[:, 0], np.array(raw.fs)[:, 0]


def antifunnel_bisect(p: Parameters, x_left: float, x_right: float, width: float = 1e-14,
                      rtol: float = 1e-12, max_iter: int = 200) -> BisectionResult:
    """Bisect y(x_left) in (H, alpha) on whether the forward solution exits
    through H (seed too low) or through alpha (seed too high)."""
    if not 0 < x_left < x_right:
        raise DomainError("need 0 < x_left < x_right")
    lo, hi = H(x_left), alpha(p, x_left)
    best = None
    it = 0
    while hi - lo > width and it < max_iter:
        it += 1
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        kind, x_exit, xs, ys, fs = _exit_forward(p, x_left, mid, x_right, rtol)
        if best is None or x_exit >= best[0]:
            best = (x_exit, xs, ys, fs)
        if kind == "H":
            lo = mid
        elif kind == "alpha":
            hi = mid
        else:
            lo = hi = mid
    if best is None:
        raise ConstructionError("antifunnel bisection made no progress")
    if it >= max_iter:
        raise ConstructionError(f"antifunnel bisection did not separate after {it} steps; "
                                f"bracket [{lo!r}, {hi!r}]")
    _, xs, ys, fs = best
    return BisectionResult(0.5 * (lo + hi), (lo, hi), Curve(xs, ys, fs), float(xs[-1]), it)


def _restart_with_bisection(p: Parameters, m: SlowManifold, tol: float) -> SlowManifold:
    res = antifunnel_bisect(p, float(m.grid[0]), float(m.grid[-1]))
    grid = m.grid
    use = grid <= res.exit_x
    y = m.values.copy()
    dy = m.curve.dy.copy()
    y[use] = res.deepest(grid[use])
    dy[use] = res.deepest.derivative(grid[use])
    gap = m.gap.copy()
    gap[use] = 1.0 - y[use]
    lower, upper = _margins(p, grid, gap)
    margin = float(min(lower.min(), upper.min()))
    if margin <= FENCE_SLACK:
        raise ConstructionError(
            f"slow manifold left Gamma1 (fence margin {m.fence_margin:.3e}); antifunnel bisection "
            f"from x={grid[0]:.3g} reached x={res.exit_x:.4g} with margin {margin:.3e}"
        )
    return SlowManifold(p, Curve(grid, y, dy), gap, m.seed_order, margin, tol,
                        m.x_join, m.far, None, m.chart)


@dataclass(frozen=True)
class ProbeResult:
    x0: float
    delta: float
    exits: dict  # sign -> (boundary, x_exit)


def uniqueness_probe(p: Parameters, m: SlowManifold, delta: float = 1e-6, x0: float | None = None,
                     rtol: float = 1e-12) -> ProbeResult:
    """Perturb M at x0 by +-delta and follow each curve forward in x.

    Neighbouring solutions separate from M as x grows, leaving Gamma1 through
    alpha (from above) or H (from below).
    """
    if x0 is None:
        x0 = max(float(m.grid[-1]) / 1000.0, float(m.grid[0]))
    y0 = float(m(x0))
    exits = {}
    for s in (1, -1):
        kind, x_exit, *_ = _exit_forward(p, x0, y0 + s * delta, float(m.grid[-1]), rtol)
        exits[s] = (kind, float(x_exit))
    return ProbeResult(x0, delta, exits)


def manifold_rows(p: Parameters, m: SlowManifold):
    """(x, M, M', M'') at every grid node."""
    d1, d2 = slope_and_curvature(p, m, m.grid)
    return np.column_stack([m.grid, m.values, d1, d2])
