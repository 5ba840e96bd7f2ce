"""Fraser-Roussel functional iteration y_{n+1}(x) = F(x, y_n'(x)).

Each iterate is the graph whose point above x lies on the isocline of slope
y_n'(x).  The slow manifold is a fixed point: M = F(x, M').
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .integrate import Curve
from .isoclines import F, H
from .kinetics import Parameters

POLE_TOL = 1e-12
SUP_WINDOW = (0.01, 10.0)


@dataclass
class FraserIterates:
    curves: list[Curve]
    distances: list[float] | None = None
    pole_points: list[np.ndarray] = field(default_factory=list)
    window: tuple[float, float] = SUP_WINDOW

    @property
    def grid(self) -> np.ndarray:
        return self.curves[0].grid

    def table(self) -> np.ndarray:
        """Columns x, y_0, ..., y_n."""
        return np.column_stack([self.grid] + [c.y for c in self.curves])


def h_curve(grid) -> Curve:
    """The horizontal isocline sampled on ``grid`` with its exact slope."""
    grid = np.asarray(grid, dtype=float)
    return Curve(grid, H(grid), 1.0 / (1.0 + grid) ** 2)


def fraser_iterate(p: Parameters, y0: Curve, n: int, reference=None,
                   window: tuple[float, float] = SUP_WINDOW) -> FraserIterates:
    """Run ``n`` steps of the iteration from ``y0``.

    Derivatives come from each iterate's C1 interpolant: the exact slopes when
    ``y0`` carries them, a natural cubic spline for every later iterate.
    Points whose slope hits the pole of K (c = -1/eps) take F = 0 and are
    recorded in ``pole_points``.  With a ``reference`` manifold, the
    sup-distance of each iterate to it over ``window`` is reported.
    """
    if n < 1:
        raise DomainError("need at least one iteration")
    grid = y0.grid
    if grid[0] <= 0:
        raise DomainError("Fraser iteration needs a positive grid")
    curves = [y0]
    poles = []
    for _ in range(n):
        d = curves[-1].derivative(grid)
        pole = np.abs(1 + p.eps * d) < POLE_TOL
        y_next = np.asarray(F(p, grid, np.where(pole, 0.0, d)), dtype=float)
        y_next[pole] = 0.0
        poles.append(grid[pole])
        curves.append(Curve(grid, y_next))
    dist = None
    if reference is not None:
        lo, hi = window
        sel = (grid >= lo) & (grid <= hi)
        if not sel.any():
            raise DomainError("distance window contains no grid points")
        ref = reference(grid[sel])
        dist = [float(np.max(np.abs(c.y[sel] - ref))) for c in curves]
    return FraserIterates(curves, dist, poles, window)
