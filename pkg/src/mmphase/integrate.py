"""Adaptive integration in time form and in phase form.

The kernel is a Dormand-Prince 5(4) pair with a PI step controller.  Dense
output between accepted steps is the cubic Hermite interpolant built from the
end-point values and slopes; event roots are located by bisection on it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .errors import DomainError, IntegrationError, SingularSlope, StiffnessFailure
from .isoclines import H, V, alpha
from .kinetics import Parameters, RateConstants, mass_action_rhs, slope_terms, spectrum

# Dormand-Prince tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = _A[6]
# fifth-order minus embedded fourth-order weights
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)

_SAFETY = 0.9
_FAC_MIN = 0.2
_FAC_MAX = 5.0
_BETA1 = 0.7 / 5
_BETA2 = 0.4 / 5
EVENT_TOL = 1e-12


def hermite(t0, y0, f0, t1, y1, f1, t):
    h = t1 - t0
    th = (t - t0) / h
    th2 = th * th
    th3 = th2 * th
    return ((2 * th3 - 3 * th2 + 1) * y0 + (th3 - 2 * th2 + th) * h * f0
            + (-2 * th3 + 3 * th2) * y1 + (th3 - th2) * h * f1)


@dataclass
class EventSpec:
    kind: str
    g: Callable[[float, np.ndarray], float]
    terminal: bool = False


@dataclass
class _Raw:
    ts: list
    ys: list
    fs: list
    events: list
    status: str
    steps: int
    rejected: int
    max_err: float


def dopri5(fun, t0: float, y0, t_end: float, rtol: float = 1e-10, atol: float = 1e-12, *,
           stops: Sequence[float] = (), events: Sequence[EventSpec] = (),
           guard: Callable[[float, np.ndarray], bool] | None = None,
           near_singular: Callable[[float, np.ndarray], bool] | None = None,
           h0: float | None = None, max_steps: int = 1_000_000,
           event_floor: float = 0.0) -> _Raw:
    """Integrate ``y' = fun(t, y)`` from ``t0`` to ``t_end``.

    Steps are clipped so that every value in ``stops`` is an accepted node.
    ``guard`` is checked at each accepted node and ends the run early
    (status ``"guard"``); ``near_singular`` turns a step-size collapse into
    the same early stop instead of a :class:`StiffnessFailure`.  Sign changes
    are ignored while ``max |y|`` is below ``event_floor``, where the state is
    indistinguishable from the absolute error tolerance.
    """
    if rtol < 1e-13:
        raise DomainError("rtol below 1e-13 is not supported")
    span = t_end - t0
    if span == 0:
        raise DomainError("zero-length integration interval")
    direction = 1.0 if span > 0 else -1.0
    y = np.array(y0, dtype=float)
    t = float(t0)
    f = np.asarray(fun(t, y), dtype=float)
    stops = sorted({float(s) for s in stops if direction * (s - t0) > 0
                    and direction * (t_end - s) > 0} | {float(t_end)}, reverse=direction < 0)
    stop_idx = 0

    def norm(e, ya, yb):
        sc = atol + rtol * np.maximum(np.abs(ya), np.abs(yb))
        return float(np.sqrt(np.mean((e / sc) ** 2)))

    if h0 is None:
        d0 = norm(y, y, y)
        d1 = norm(f, y, y)
        h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        h = min(h, abs(span))
        y1 = y + direction * h * f
        f1 = np.asarray(fun(t + direction * h, y1), dtype=float)
        d2 = norm(f1 - f, y, y) / h
        dm = max(d1, d2)
        h1 = max(1e-6, h * 1e-3) if dm <= 1e-15 else (0.01 / dm) ** 0.2
        h = min(100 * h, h1, abs(span))
    else:
        h = abs(h0)

    g_prev = [ev.g(t, y) for ev in events]
    ts, ys, fs, found = [t], [y.copy()], [f.copy()], []
    steps = rejected = 0
    err_prev = 1e-4
    max_err = 0.0
    last_reject = False
    h_floor = 1e-15 * abs(span)

    while True:
        target = stops[stop_idx]
        remaining = abs(target - t)
        landing = h >= remaining * (1 - 1e-12)
        step = remaining if landing else h
        if not landing and h > 0.9 * remaining:
            # never leave a sliver that rounds away before the stop
            step = 0.5 * remaining
        if step < max(h_floor, 8 * np.spacing(abs(t))) and not (landing and step > 0):
            if near_singular is not None and near_singular(t, y):
                return _Raw(ts, ys, fs, found, "guard", steps, rejected, max_err)
            raise StiffnessFailure(
                f"step size collapsed to {step:.3e} at t={t:.6g}; the problem is too stiff "
                "for the explicit integrator at these parameters (use phase form or larger eps)"
            )
        hs = direction * step
        k = [f]
        for i in range(1, 7):
            yi = y.copy()
            for a, kj in zip(_A[i], k):
                if a:
                    yi += hs * a * kj
            k.append(np.asarray(fun(t + _C[i] * hs, yi), dtype=float))
        y_new = y.copy()
        for b, kj in zip(_B, k[:6]):
            if b:
                y_new += hs * b * kj
        f_new = k[6]
        e = sum(hs * ec * kj for ec, kj in zip(_E, k) if ec)
        err = norm(e, y, y_new)
        if not np.isfinite(err):
            err = 1e10
        if err <= 1.0:
            steps += 1
            max_err = max(max_err, err)
            t_new = target if landing else t + hs
            cut = None
            hits = []
            live = event_floor == 0.0 or float(np.max(np.abs(y_new))) >= event_floor
            for j, ev in enumerate(events):
                g_new = ev.g(t_new, y_new)
                if live and g_prev[j] != 0 and (g_prev[j] * g_new < 0 or g_new == 0):
                    tr = _bisect_event(ev.g, t, y, f, t_new, y_new, f_new, g_prev[j])
                    hits.append((tr, j))
                g_prev[j] = g_new
            hits.sort(key=lambda it: direction * it[0])
            for tr, j in hits:
                yr = hermite(t, y, f, t_new, y_new, f_new, tr)
                found.append((events[j].kind, tr, yr))
                if events[j].terminal:
                    cut = (tr, yr)
                    break
            if cut is not None:
                tr, yr = cut
                ts.append(tr)
                ys.append(yr)
                fs.append(np.asarray(fun(tr, yr), dtype=float))
                return _Raw(ts, ys, fs, found, "event", steps, rejected, max_err)
            t, y, f = t_new, y_new, f_new
            ts.append(t)
            ys.append(y.copy())
            fs.append(f.copy())
            if landing:
                stop_idx += 1
                if stop_idx == len(stops):
                    return _Raw(ts, ys, fs, found, "done", steps, rejected, max_err)
            if guard is not None and guard(t, y):
                return _Raw(ts, ys, fs, found, "guard", steps, rejected, max_err)
            fac = _SAFETY * max(err, 1e-10) ** -_BETA1 * err_prev ** _BETA2
            fac = min(_FAC_MAX, max(_FAC_MIN, fac))
            if last_reject:
                fac = min(fac, 1.0)
            h = step * fac
            err_prev = max(err, 1e-4)
            last_reject = False
        else:
            rejected += 1
            h = step * max(_FAC_MIN, _SAFETY * err ** -0.2)
            last_reject = True
        if steps + rejected > max_steps:
            raise IntegrationError(f"exceeded {max_steps} steps at t={t:.6g}")


def _bisect_event(g, t0, y0, f0, t1, y1, f1, g0):
    a, b = t0, t1
    ga = g0
    while abs(b - a) > EVENT_TOL * max(1.0, abs(a)):
        m = 0.5 * (a + b)
        gm = g(m, hermite(t0, y0, f0, t1, y1, f1, m))
        if gm == 0:
            return m
        if (gm > 0) == (ga > 0):
            a, ga = m, gm
        else:
            b = m
    return 0.5 * (a + b)


# -- curves and trajectories ---------------------------------------------------

@dataclass(frozen=True)
class Curve:
    """A sampled graph y(x) with a C1 interpolant.

    With ``dy`` supplied the interpolant is the cubic Hermite spline through
    the given slopes; otherwise a natural cubic spline.
    """

    grid: np.ndarray
    y: np.ndarray
    dy: np.ndarray | None = None
    truncated: bool = False
    note: str = ""
    _interp: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if grid.ndim != 1 or grid.shape != y.shape or grid.size < 2:
            raise DomainError("curve needs matching 1-D grid and values with >= 2 points")
        if np.any(np.diff(grid) <= 0):
            raise DomainError("curve grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "y", y)
        if self.dy is not None:
            dy = np.asarray(self.dy, dtype=float)
            object.__setattr__(self, "dy", dy)
            interp = CubicHermiteSpline(grid, y, dy)
        else:
            interp = CubicSpline(grid, y, bc_type="natural")
        object.__setattr__(self, "_interp", interp)

    def __call__(self, x):
        return self._interp(x)

    def derivative(self, x, nu: int = 1):
        return self._interp(x, nu)


@dataclass(frozen=True)
class Event:
    kind: str
    t: float
    x: float
    y: float


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    fx: np.ndarray
    fy: np.ndarray
    events: list[Event]
    stats: dict

    def at(self, t):
        """Dense-output state at time(s) ``t`` (cubic Hermite between nodes)."""
        t = np.asarray(t, dtype=float)
        i = np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, self.t.size - 2)
        t0, t1 = self.t[i], self.t[i + 1]
        xs = hermite(t0, self.x[i], self.fx[i], t1, self.x[i + 1], self.fx[i + 1], t)
        ys = hermite(t0, self.y[i], self.fy[i], t1, self.y[i + 1], self.fy[i + 1], t)
        return xs, ys

    def events_of(self, kind: str) -> list[Event]:
        return [e for e in self.events if e.kind == kind]


EVENT_FLOOR_FACTOR = 100.0
_CROSSINGS = ("CrossH", "CrossAlpha", "CrossV", "CrossOne")


def _time_events(p: Parameters):
    sigma = spectrum(p).sigma
    return [
        EventSpec("CrossH", lambda t, z: z[1] - H(z[0])),
        EventSpec("CrossAlpha", lambda t, z: z[1] - alpha(p, z[0], sigma)),
        EventSpec("CrossV", lambda t, z: z[1] - V(p, z[0])),
        EventSpec("CrossOne", lambda t, z: z[1] - 1.0),
    ]


def integrate_time(p: Parameters, x0, t_end: float, rtol: float = 1e-10, atol: float = 1e-12,
                   stops: Sequence[float] = (), events: bool = True) -> Trajectory:
    """Integrate the scaled system in time from ``x0 = (x, y)``.

    Besides the raw isocline crossings the event log records region
    transitions: ``EnterGamma0``/``EnterGamma1`` (and the matching ``Exit``
    kinds) whenever membership of the closed regions changes.  A start already
    inside a region logs its entry at t = 0.
    """
    if not t_end > 0:
        raise DomainError("t_end must be positive")
    if p.eps < 1e-3:
        warnings.warn("eps < 1e-3: the time form is stiff for the explicit integrator; "
                      "prefer the phase-form tools", RuntimeWarning, stacklevel=2)
    eps, eta = float(p.eps), float(p.eta)

    def fun(t, z):
        x, y = z
        gap = 1.0 - y
        return np.array([(1 - eta) * y - x * gap, (x * gap - y) / eps])

    specs = _time_events(p) if events else []
    raw = dopri5(fun, 0.0, np.asarray(x0, dtype=float), t_end, rtol, atol,
                 stops=stops, events=specs, event_floor=EVENT_FLOOR_FACTOR * atol)
    ts = np.array(raw.ts)
    ys = np.array(raw.ys)
    fs = np.array(raw.fs)
    log: list[Event] = []
    if events:
        log = _region_log(p, ys[0], raw.events)
    stats = {"steps": raw.steps, "rejected": raw.rejected, "max_error_estimate": raw.max_err}
    return Trajectory(ts, ys[:, 0], ys[:, 1], fs[:, 0], fs[:, 1], log, stats)


def _region_log(p: Parameters, z0, crossings) -> list[Event]:
    sigma = spectrum(p).sigma
    x0, y0 = z0
    # side of each boundary; 0 (on the curve) counts as inside the closed set
    side = {
        "CrossH": np.sign(y0 - H(x0)),
        "CrossAlpha": np.sign(y0 - alpha(p, x0, sigma)),
        "CrossV": np.sign(y0 - V(p, x0)),
    }

    def member():
        return side["CrossH"] >= 0 and side["CrossV"] <= 0, side["CrossH"] >= 0 and side["CrossAlpha"] <= 0

    g0, g1 = member()
    g0 = g0 and x0 > 0
    g1 = g1 and x0 > 0
    log = []
    if g0:
        log.append(Event("EnterGamma0", 0.0, float(x0), float(y0)))
    if g1:
        log.append(Event("EnterGamma1", 0.0, float(x0), float(y0)))
    for kind, t, z in crossings:
        x, y = float(z[0]), float(z[1])
        log.append(Event(kind, float(t), x, y))
        if kind in side:
            side[kind] = -side[kind] if side[kind] != 0 else np.sign(_after(kind, p, x, y, sigma))
            n0, n1 = member()
            n0 = n0 and x > 0
            n1 = n1 and x > 0
            if n0 != g0:
                log.append(Event("EnterGamma0" if n0 else "ExitGamma0", float(t), x, y))
            if n1 != g1:
                log.append(Event("EnterGamma1" if n1 else "ExitGamma1", float(t), x, y))
            g0, g1 = n0, n1
    return log


def _after(kind, p, x, y, sigma):
    # only reached when the start sat exactly on a boundary; use the flow direction
    dx, dy = (1 - p.eta) * y - x * (1 - y), (x * (1 - y) - y) / p.eps
    if kind == "CrossH":
        return dy - dx / (1 + x) ** 2
    if kind == "CrossAlpha":
        k = 1 / sigma
        return dy - dx * k / (k + x) ** 2
    k = 1 - p.eta
    return dy - dx * k / (k + x) ** 2


V_GUARD = 1e-10


def integrate_phase(p: Parameters, start, x_end: float, rtol: float = 1e-10, atol: float = 1e-13,
                    stops: Sequence[float] = (), guard: float = V_GUARD) -> Curve:
    """Integrate dy/dx = f(x, y) from ``start = (x0, y0)`` to ``x_end``.

    Integration stops early, returning a curve flagged ``truncated``, when the
    solution reaches the vertical isocline (where the slope is infinite).
    The returned grid is always increasing, whichever direction was integrated.
    """
    x0, y0 = float(start[0]), float(start[1])
    num, den = slope_terms(p, x0, y0)
    if abs(den) <= guard * (1 + abs(x0)):
        raise SingularSlope(f"start ({x0}, {y0}) lies on the vertical isocline")
    eps = float(p.eps)

    def fun(x, z):
        n, d = slope_terms(p, x, z[0])
        return np.array([n / (eps * d)])

    def den_of(x, z):
        return slope_terms(p, x, z[0])[1]

    def near_v(x, z):
        return abs(den_of(x, z)) < guard * (1 + abs(x))

    def near_v_loose(x, z):
        return abs(den_of(x, z)) < 1e-6 * (1 + abs(x))

    raw = dopri5(fun, x0, [y0], x_end, rtol, atol, stops=stops,
                 events=[EventSpec("CrossV", den_of, terminal=True)],
                 guard=near_v, near_singular=near_v_loose)
    xs = np.array(raw.ts)
    ys = np.array(raw.ys)[:, 0]
    dys = np.array(raw.fs)[:, 0]
    truncated = raw.status != "done"
    # a terminal event can coincide with the last accepted node
    keep = np.concatenate([[True], (xs[1:] - xs[:-1]) * np.sign(xs[-1] - xs[0]) > 0])
    xs, ys, dys = xs[keep], ys[keep], dys[keep]
    if xs[0] > xs[-1]:
        xs, ys, dys = xs[::-1], ys[::-1], dys[::-1]
    if xs.size < 2:
        raise IntegrationError("phase integration produced fewer than two nodes")
    return Curve(xs, ys, dys, truncated=truncated,
                 note="stopped at the vertical isocline" if truncated else "")


def simulate_mass_action(rc: RateConstants, tau_end: float, c0: float = 0.0,
                         rtol: float = 1e-10, atol: float = 1e-12,
                         stops: Sequence[float] = ()):
    """Integrate the four-species system (s, e, c, p) in dimensional time.

    Returns ``(tau, states)`` with ``states[:, i]`` the species in that order;
    the enzyme starts at ``e0 - c0`` so that e + c = e0 throughout.
    """
    if rc.s0 is None:
        raise DomainError("simulate_mass_action needs s0")
    z0 = np.array([rc.s0, rc.e0 - c0, c0, 0.0])
    raw = dopri5(lambda t, z: mass_action_rhs(rc, z), 0.0, z0, tau_end, rtol, atol, stops=stops)
    return np.array(raw.ts), np.array(raw.ys)
