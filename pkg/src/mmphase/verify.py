"""The invariant suite behind ``mmphase verify``.

Each check returns a named pass/fail with a small JSON-ready detail record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .concavity import Branch, h_aux, inflection_locus, table1_audit
from .entry import ENTERED, gamma1_entry
from .errors import MMPhaseError, SingularSlope
from .isoclines import F, K, alpha, isocline_slope, Slope
from .kinetics import Parameters, eta_from_kappa, slope_field, spectrum
from .manifold import (antifunnel_bisect, compute_manifold, slope_and_curvature,
                       uniqueness_probe, verify_fences)
from .series import eval_infinity, infinity_coefficients


@dataclass
class Check:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


@dataclass
class VerificationReport:
    eps: float
    eta: float
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        return {"eps": self.eps, "eta": self.eta, "passed": self.passed,
                "checks": [c.as_dict() for c in self.checks]}


def _guarded(name, fn) -> Check:
    try:
        return fn()
    except MMPhaseError as exc:
        return Check(name, False, {"error": exc.code, "message": str(exc)})


def run_verification(p: Parameters, seed: int = 0, tol: float = 1e-10,
                     x_min: float = 1e-3, x_max: float = 1e3, n_grid: int = 600) -> VerificationReport:
    rng = np.random.default_rng(seed)
    sp = spectrum(p)
    eps, eta = float(p.eps), float(p.eta)
    checks: list[Check] = []

    def spectral():
        ok = sp.lambda_minus < -1 < sp.lambda_plus < 0 and 1 < sp.sigma < 1 / (1 - eta)
        return Check("spectral_ordering", ok, {"kappa": sp.kappa, "sigma": sp.sigma})

    def round_trip():
        err_k = abs(float(K(p, sp.sigma)) * sp.sigma - 1)
        err_eta = abs(eta_from_kappa(eps, sp.kappa) - eta)
        return Check("round_trips", err_k < 1e-12 and err_eta < 1e-12,
                     {"K_sigma_error": err_k, "eta_error": err_eta})

    checks += [_guarded("spectral_ordering", spectral), _guarded("round_trips", round_trip)]

    try:
        m = compute_manifold(p, x_min, x_max, tol, n_grid=n_grid)
    except MMPhaseError as exc:
        checks.append(Check("manifold_construction", False, {"error": exc.code, "message": str(exc)}))
        return VerificationReport(eps, eta, checks)
    grid = m.grid
    d1, d2 = slope_and_curvature(p, m, grid)

    rep = verify_fences(p, m)
    checks.append(Check("fence_sandwich", rep.passed, rep.as_dict()))
    checks.append(Check("monotone", bool(np.all(np.diff(m.values) > 0) and np.all(d1 > 0)),
                        {"min_slope": float(d1.min())}))
    checks.append(Check("concave_down", bool(np.all(d2 < 0)), {"max_second_derivative": float(d2.max())}))
    checks.append(Check("slope_bounds", bool(np.all(d1 < sp.sigma)), {"max_slope": float(d1.max())}))
    lim_ok = m.values[0] < 1e-2 if x_min <= 1e-3 else True
    lim_ok = lim_ok and abs(m.values[-1] - 1) < 2 / x_max
    checks.append(Check("limits", bool(lim_ok), {"M_x_min": float(m.values[0]),
                                                 "one_minus_M_x_max": float(m.gap[-1])}))
    fp = float(np.max(np.abs(np.asarray(F(p, grid, d1)) - m.values)))
    checks.append(Check("fraser_fixed_point", fp < 1e-9, {"max_abs_error": fp}))
    seed_err = abs(m.values[-1] - eval_infinity(infinity_coefficients(p, 5), grid[-1]))
    checks.append(Check("series_seed", seed_err <= 10 * tol, {"abs_error": seed_err}))

    def probe():
        pr = uniqueness_probe(p, m)
        limit = grid[-1] / 10
        ok = (pr.exits[1][0] == "alpha" and pr.exits[-1][0] == "H"
              and pr.exits[1][1] < limit and pr.exits[-1][1] < limit)
        return Check("uniqueness_probe", ok, {"x0": pr.x0, "exit_above": list(pr.exits[1]),
                                              "exit_below": list(pr.exits[-1])})

    def bisect():
        x_left = 1.0 if grid[0] <= 1.0 else float(grid[0])
        res = antifunnel_bisect(p, x_left, float(grid[-1]))
        diff = abs(res.y_left - m(x_left))
        return Check("antifunnel_cross_check", diff < 1e-8, {"x_left": x_left, "abs_difference": diff})

    def eq15():
        worst = 0.0
        n = 0
        while n < 200:
            x, y = rng.uniform(0.01, 5.0), rng.uniform(0.0, 1.5)
            try:
                f = slope_field(p, x, y)
                h = h_aux(p, (x, y))
            except SingularSlope:
                continue
            if abs(1 + eps * f) < 1e-6:
                continue
            w = float(F(p, x, f))
            if abs(w - y) > 1e-9 * (1 + abs(y)):
                continue
            wp = float(isocline_slope(p, Slope(f), x))
            worst = max(worst, abs(h - x * (f - wp)) / (1 + abs(h)))
            n += 1
        return Check("isocline_identity", worst < 1e-10, {"max_rel_error": worst})

    def audit():
        ar = table1_audit(p, m, seed=seed)
        return Check("table1_audit", ar.passed, ar.as_dict())

    def loci():
        xs = np.geomspace(max(grid[0], 1e-2), min(5.0, grid[-1]), 100)
        L = inflection_locus(p, xs, m)
        bx, by = L.branch_points(Branch.BETWEEN_M_ALPHA)
        inside = bool(np.all((by > m(bx)) & (by < alpha(p, bx)))) if bx.size else True
        _, above = L.branch_points(Branch.ABOVE_ONE)
        worst = 0.0
        for x, r, b in L.rows():
            if b != Branch.DISCARDED_NEGATIVE.value:
                worst = max(worst, abs(h_aux(p, (x, r))) / (1 + abs(r)))
        ok = inside and bx.size == xs.size and above.size == xs.size and worst < 1e-9
        return Check("inflection_loci", ok, {"between_points": int(bx.size), "above_one_points": int(above.size),
                                             "max_back_substitution": worst})

    def entry_sweep():
        if sp.kappa <= 2:
            return Check("gamma1_entry_sweep", True, {"skipped": "kappa <= 2: entry is not guaranteed"})
        bad = []
        for s in rng.uniform(0, 2, size=(20, 2)):
            r = gamma1_entry(p, s, horizon=100.0)
            if r.status != ENTERED or r.exited_after_entry:
                bad.append(r.as_dict())
        return Check("gamma1_entry_sweep", not bad, {"failures": bad})

    for name, fn in (("uniqueness_probe", probe), ("antifunnel_cross_check", bisect),
                     ("isocline_identity", eq15), ("table1_audit", audit),
                     ("inflection_loci", loci), ("gamma1_entry_sweep", entry_sweep)):
        checks.append(_guarded(name, fn))
    for c in checks:
        c.detail = {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                    for k, v in c.detail.items()}
    return VerificationReport(eps, eta, checks)
