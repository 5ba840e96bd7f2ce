"""Parameters, vector fields and the linearisation at the origin.

The scaled system is

    x' = -x + (1 - eta) y + x y
    y' = (x - y - x y) / eps

with ``x`` the scaled substrate and ``y`` the scaled complex concentration.
Functions accept plain floats; the coefficient recursions elsewhere also run
on :class:`fractions.Fraction` or ``mpmath`` numbers, so nothing here forces
a conversion to float unless a square root is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InadmissibleParameters, SingularSlope

RESONANCE_TOL = 1e-9
NEAR_RESONANCE_TOL = 1e-4

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class RateConstants:
    """Dimensional mass-action rate constants and initial loads."""

    k1: float
    k_minus1: float
    k2: float
    e0: float
    s0: float | None = None

    def __post_init__(self):
        if not self.k1 > 0:
            raise InadmissibleParameters(f"k1 must be positive, got {self.k1}")
        if not self.k2 > 0:
            raise InadmissibleParameters(f"k2 must be positive, got {self.k2}")
        if not self.k_minus1 >= 0:
            raise InadmissibleParameters(f"k_minus1 must be non-negative, got {self.k_minus1}")
        if not self.e0 > 0:
            raise InadmissibleParameters(f"e0 must be positive, got {self.e0}")
        if self.s0 is not None and not self.s0 >= 0:
            raise InadmissibleParameters(f"s0 must be non-negative, got {self.s0}")

    @property
    def Km(self) -> float:
        """Michaelis constant (k_-1 + k2) / k1."""
        return (self.k_minus1 + self.k2) / self.k1

    @property
    def Ks(self) -> float:
        """Dissociation constant k_-1 / k1."""
        return self.k_minus1 / self.k1


@dataclass(frozen=True)
class Parameters:
    eps: float
    eta: float

    def __post_init__(self):
        if not self.eps > 0:
            raise InadmissibleParameters(f"eps must be positive, got {self.eps}")
        if not 0 < self.eta < 1:
            raise InadmissibleParameters(f"eta must lie in (0, 1), got {self.eta}")


@dataclass(frozen=True)
class Scales:
    """Multipliers taking dimensional (tau, s, c) to scaled (t, x, y)."""

    t_per_tau: float
    x_per_s: float
    y_per_c: float

    def to_scaled(self, tau, s, c):
        return self.t_per_tau * tau, self.x_per_s * s, self.y_per_c * c

    def to_dimensional(self, t, x, y):
        return t / self.t_per_tau, x / self.x_per_s, y / self.y_per_c


def nondimensionalize(rc: RateConstants) -> tuple[Parameters, Scales]:
    ksum = rc.k_minus1 + rc.k2
    eta = rc.k2 / ksum
    if not eta < 1:
        raise InadmissibleParameters(
            "k_minus1 = 0 gives eta = 1, outside the admissible range 0 < eta < 1"
        )
    params = Parameters(eps=rc.k1 * rc.e0 / ksum, eta=eta)
    scales = Scales(t_per_tau=rc.k1 * rc.e0, x_per_s=rc.k1 / ksum, y_per_c=1 / rc.e0)
    return params, scales


def mass_action_rhs(rc: RateConstants, state):
    """Right-hand side for the four species (s, e, c, p)."""
    s, e, c, _ = state
    bind = rc.k1 * s * e
    return np.array([
        rc.k_minus1 * c - bind,
        (rc.k_minus1 + rc.k2) * c - bind,
        bind - (rc.k_minus1 + rc.k2) * c,
        rc.k2 * c,
    ])


# -- vector field -------------------------------------------------------------

def rhs_time(p: Parameters, x, y):
    """Time derivative ``(dx/dt, dy/dt)`` of the scaled system."""
    gap = 1 - y
    return (1 - p.eta) * y - x * gap, (x * gap - y) / p.eps


def slope_terms(p: Parameters, x, y, gap=None):
    """Numerator and (eps-free) denominator of dy/dx.

    Returns ``(num, den)`` with ``num = x - y - x y`` and
    ``den = -x + (1 - eta) y + x y``, both written through ``gap = 1 - y`` so
    callers holding a more accurate ``1 - y`` than ``1 - float(y)`` can pass
    it in.  At large ``x`` this is what keeps the slope accurate.
    """
    if gap is None:
        gap = 1 - y
    return x * gap - y, (1 - p.eta) * y - x * gap


def _den_scale(p: Parameters, x, y, gap):
    return abs(x * gap) + abs((1 - p.eta) * y)


def slope_field(p: Parameters, x, y, gap=None):
    """dy/dx = (x - y - x y) / (eps [-x + (1 - eta) y + x y]).

    Raises :class:`SingularSlope` on the vertical isocline.
    """
    scale_extra = 0.0
    if gap is None:
        gap = 1 - y
        scale_extra = abs(x * y)  # rounding of 1 - y, amplified by x
    num, den = slope_terms(p, x, y, gap)
    if abs(den) <= 8 * _EPS * (_den_scale(p, x, y, gap) + scale_extra):
        raise SingularSlope(f"({x}, {y}) lies on the vertical isocline")
    return num / (p.eps * den)


def slope_field_dy(p: Parameters, x, y, gap=None):
    """Partial derivative of the slope field with respect to y."""
    if gap is None:
        gap = 1 - y
    num, den = slope_terms(p, x, y, gap)
    return (-(1 + x) * den - num * (1 - p.eta + x)) / (p.eps * den * den)


def linearization(p: Parameters) -> np.ndarray:
    return np.array([[-1.0, 1.0 - p.eta], [1.0 / p.eps, -1.0 / p.eps]])


# -- spectrum -----------------------------------------------------------------

@dataclass(frozen=True)
class Spectrum:
    lambda_plus: float
    lambda_minus: float
    kappa: float
    sigma: float
    v_plus: tuple[float, float]
    v_minus: tuple[float, float]
    vhat_plus: tuple[float, float]
    vhat_minus: tuple[float, float]
    resonant: bool
    resonance_distance: float

    @property
    def near_resonant(self) -> bool:
        """True when integer kappa is close enough to spoil the origin series."""
        return round(self.kappa) >= 2 and self.resonance_distance < NEAR_RESONANCE_TOL

    def as_dict(self) -> dict:
        return {
            "lambda_plus": self.lambda_plus,
            "lambda_minus": self.lambda_minus,
            "kappa": self.kappa,
            "sigma": self.sigma,
            "v_plus": list(self.v_plus),
            "v_minus": list(self.v_minus),
            "vhat_plus": list(self.vhat_plus),
            "vhat_minus": list(self.vhat_minus),
            "resonant": self.resonant,
            "resonance_distance": self.resonance_distance,
            "near_resonant": self.near_resonant,
        }


def eigenvalues(eps: float, eta: float) -> tuple[float, float]:
    """Return ``(lambda_plus, lambda_minus)``.

    The discriminant is written as ``(eps - 1)^2 + 4 eps (1 - eta)``, which is
    a sum of non-negative terms, and the small-magnitude root is recovered
    from the product ``lambda_plus * lambda_minus = eta / eps`` so neither
    root suffers cancellation.
    """
    eps = float(eps)
    eta = float(eta)
    disc = (eps - 1.0) ** 2 + 4.0 * eps * (1.0 - eta)
    lam_minus = -((eps + 1.0) + math.sqrt(disc)) / (2.0 * eps)
    lam_plus = (eta / eps) / lam_minus
    return lam_plus, lam_minus


def spectrum(p: Parameters) -> Spectrum:
    eps, eta = float(p.eps), float(p.eta)
    lp, lm = eigenvalues(eps, eta)
    kappa = lm / lp
    dist = abs(kappa - round(kappa))
    return Spectrum(
        lambda_plus=lp,
        lambda_minus=lm,
        kappa=kappa,
        sigma=(lp + 1.0) / (1.0 - eta),
        v_plus=(1.0 - eta, lp + 1.0),
        v_minus=(1.0 - eta, lm + 1.0),
        vhat_plus=(1.0 / eps, lp + 1.0),
        vhat_minus=(1.0 / eps, lm + 1.0),
        resonant=bool(round(kappa) >= 2 and dist < RESONANCE_TOL),
        resonance_distance=dist,
    )


def eta_from_kappa(eps: float, kappa: float) -> float:
    """Invert the eigenvalue ratio: the eta giving ratio ``kappa`` at ``eps``."""
    if not eps > 0:
        raise InadmissibleParameters(f"eps must be positive, got {eps}")
    if not kappa >= 1:
        raise InadmissibleParameters(f"kappa must be at least 1, got {kappa}")
    eta = kappa * (eps + 1) ** 2 / (eps * (kappa + 1) ** 2)
    if not eta < 1:
        raise InadmissibleParameters(
            f"kappa={kappa} at eps={eps} gives eta={eta}, which is not below 1"
        )
    return eta


def linear_solution(p: Parameters, x0, t):
    """Exact solution of the linearised system ``z' = A z`` from ``z(0) = x0``.

    ``t`` may be a scalar or an array; the result has shape ``t.shape + (2,)``.
    """
    sp = spectrum(p)
    x0 = np.asarray(x0, dtype=float)
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape + (2,))
    for lam, v, vh in ((sp.lambda_minus, sp.v_minus, sp.vhat_minus),
                       (sp.lambda_plus, sp.v_plus, sp.vhat_plus)):
        v = np.asarray(v)
        vh = np.asarray(vh)
        c = vh @ x0 / (vh @ v)
        out += c * np.exp(lam * t)[..., None] * v
    return out
