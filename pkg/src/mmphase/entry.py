"""Entry of time trajectories into Gamma1 = {H <= y <= alpha}.

When kappa > 2 every trajectory eventually enters Gamma1.  When kappa < 2
some do not: they cross V to the left of the point x* where the line
y = sigma x meets V, then approach the origin from above alpha.  A crossing
of V to the right of x* guarantees entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .integrate import integrate_time
from .kinetics import Parameters, spectrum

ENTERED = "entered"
NOT_ENTERED = "not_entered"
INCONCLUSIVE = "inconclusive"


def entry_threshold(p: Parameters) -> float:
    """x* = 1/sigma - (1 - eta), where y = sigma x crosses V (may be <= 0)."""
    return 1.0 / spectrum(p).sigma - (1.0 - float(p.eta))


@dataclass(frozen=True)
class EntryResult:
    start: tuple[float, float]
    status: str
    t_entry: float | None
    exited_after_entry: bool
    v_crossings: tuple[float, ...]
    x_star: float
    kappa: float

    def as_dict(self) -> dict:
        return {
            "start": list(self.start),
            "status": self.status,
            "t_entry": self.t_entry,
            "exited_after_entry": self.exited_after_entry,
            "v_crossings_x": list(self.v_crossings),
            "x_star": self.x_star,
            "kappa": self.kappa,
        }


def gamma1_entry(p: Parameters, x0, horizon: float = 100.0, rtol: float = 1e-10,
                 atol: float = 1e-14) -> EntryResult:
    """Simulate from ``x0`` and classify whether and when it enters Gamma1.

    ``not_entered`` needs positive evidence: the trajectory crossed V left of
    x* and was never in Gamma1 during the horizon.  Anything else that fails
    to enter is ``inconclusive``.
    """
    x0 = (float(x0[0]), float(x0[1]))
    if x0[0] < 0 or x0[1] < 0:
        raise DomainError("start must lie in the closed first quadrant")
    sp = spectrum(p)
    x_star = entry_threshold(p)
    tr = integrate_time(p, x0, horizon, rtol=rtol, atol=atol)
    enters = tr.events_of("EnterGamma1")
    crossings = tuple(e.x for e in tr.events_of("CrossV"))
    if enters:
        t_in = enters[0].t
        exited = any(e.t >= t_in for e in tr.events_of("ExitGamma1"))
        return EntryResult(x0, ENTERED, t_in, exited, crossings, x_star, sp.kappa)
    if crossings and crossings[-1] < x_star:
        return EntryResult(x0, NOT_ENTERED, None, False, crossings, x_star, sp.kappa)
    return EntryResult(x0, INCONCLUSIVE, None, False, crossings, x_star, sp.kappa)


def scan_non_entering(p: Parameters, ys, x0: float = 1e-3, horizon: float = 100.0) -> list[EntryResult]:
    """Classify starts (x0, y) for each y in ``ys``; candidates sit above V near the y-axis."""
    return [gamma1_entry(p, (x0, float(y)), horizon) for y in np.asarray(ys, dtype=float)]
