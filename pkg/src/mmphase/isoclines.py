"""Isocline family y = x / (K(c) + x) and region bookkeeping.

Every level curve of the slope field is a hyperbola through the origin.  The
three that matter most are H (slope 0, the quasi-steady-state curve), V
(infinite slope, the rapid-equilibrium curve) and alpha, the isocline whose
slope equals the slow eigen-direction sigma.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DomainError, PoleError, SingularSlope
from .kinetics import Parameters, spectrum

BOUNDARY_TOL = 1e-13


class Isocline(Enum):
    HORIZONTAL = "H"
    VERTICAL = "V"
    ALPHA = "alpha"


@dataclass(frozen=True)
class Slope:
    """The isocline of a given slope ``c``."""

    c: float


IsoclineId = Isocline | Slope


def K(p: Parameters, c):
    """(1 + eps (1 - eta) c) / (1 + eps c); pole at c = -1/eps."""
    den = 1 + p.eps * c
    if np.any(np.asarray(den) == 0):
        raise PoleError(f"K has a pole at c = -1/eps = {-1 / p.eps}")
    return (1 + p.eps * (1 - p.eta) * c) / den


def F(p: Parameters, x, c):
    """The y-value of the slope-``c`` isocline above ``x``.

    ``F(x, -1/eps) = 0`` by convention (the exceptional isocline y = 0).
    """
    if np.ndim(c) == 0:
        if 1 + p.eps * c == 0:
            return 0.0 * x
        den = K(p, c) + x
        if np.any(np.asarray(den) == 0):
            raise SingularSlope(f"K(c) + x vanishes for c={c}, x={x}")
        return x / den
    c = np.asarray(c, dtype=float)
    x = np.broadcast_to(np.asarray(x, dtype=float), c.shape)
    pole = 1 + p.eps * c == 0
    safe_c = np.where(pole, 0.0, c)
    den = K(p, safe_c) + x
    if np.any(~pole & (den == 0)):
        raise SingularSlope("K(c) + x vanishes on part of the input")
    return np.where(pole, 0.0, x / np.where(pole, 1.0, den))


def H(x):
    return x / (1 + x)


def V(p: Parameters, x):
    return x / (1 - p.eta + x)


def alpha(p: Parameters, x, sigma: float | None = None):
    if sigma is None:
        sigma = spectrum(p).sigma
    return x / (1 / sigma + x)


def isocline_eval(p: Parameters, which: IsoclineId, x):
    if np.any(np.asarray(x) < 0):
        raise DomainError("isoclines are evaluated for x >= 0")
    if which is Isocline.HORIZONTAL:
        return H(x)
    if which is Isocline.VERTICAL:
        return V(p, x)
    if which is Isocline.ALPHA:
        return alpha(p, x)
    if isinstance(which, Slope):
        return F(p, x, which.c)
    raise TypeError(f"unknown isocline {which!r}")


def isocline_slope(p: Parameters, which: IsoclineId, x):
    """Analytic dw/dx of an isocline: k / (k + x)^2 with k its offset."""
    if which is Isocline.HORIZONTAL:
        k = 1.0
    elif which is Isocline.VERTICAL:
        k = 1 - p.eta
    elif which is Isocline.ALPHA:
        k = 1 / spectrum(p).sigma
    else:
        if 1 + p.eps * which.c == 0:
            return 0.0 * x
        k = K(p, which.c)
    return k / (k + x) ** 2


def u(p: Parameters, c):
    """c K(c); strictly increasing on c > 0 with u(sigma) = 1."""
    if np.any(np.asarray(c) <= 0):
        raise DomainError("u(c) is defined for c > 0")
    return c * K(p, c)


def isocline_residual(p: Parameters, x, w, w_prime):
    """w (w - 1) + x w'; vanishes along every isocline."""
    return w * (w - 1) + x * w_prime


class Region(Enum):
    BELOW_H = "BelowH"
    GAMMA1 = "Gamma1"
    ALPHA_TO_V = "AlphaToV"
    ON_V = "OnV"
    V_TO_ONE = "VToOne"
    AT_OR_ABOVE_ONE = "AtOrAboveOne"


@dataclass(frozen=True)
class RegionLabel:
    region: Region
    in_gamma0: bool
    in_gamma1: bool


def classify_region(p: Parameters, x, y, tol: float = BOUNDARY_TOL) -> RegionLabel:
    """Place a point of the closed first quadrant relative to H, alpha, V, 1.

    Curves belong to the closed sets Gamma0 = {H <= y <= V} and
    Gamma1 = {H <= y <= alpha}; comparisons carry an absolute slack ``tol``.
    """
    if x < 0 or y < 0:
        raise DomainError("classify_region expects a point of the closed first quadrant")
    inside = x > 0
    if y >= 1 - tol:
        return RegionLabel(Region.AT_OR_ABOVE_ONE, False, False)
    h = H(x)
    a = alpha(p, x)
    v = V(p, x)
    if y < h - tol:
        return RegionLabel(Region.BELOW_H, False, False)
    if y <= a + tol:
        return RegionLabel(Region.GAMMA1, inside, inside)
    if abs(y - v) <= tol:
        return RegionLabel(Region.ON_V, inside, False)
    if y < v:
        return RegionLabel(Region.ALPHA_TO_V, inside, False)
    return RegionLabel(Region.V_TO_ONE, False, False)
