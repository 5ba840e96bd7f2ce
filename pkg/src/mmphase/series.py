"""Power-series data for solution curves at the origin and at infinity.

At the origin every solution inside Gamma0 shares the coefficients
``sigma_0 = 0, sigma_1 = sigma, sigma_2, ...`` up to order ``floor(kappa)``,
after which a non-analytic term ``C x**kappa`` separates one solution from
another.  At infinity the slow manifold has the expansion
``sum rho_n x**-n`` with every ``rho_n`` a polynomial in (eps, eta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FitError
from .kinetics import Parameters, spectrum

MIN_FIT_POINTS = 8


@dataclass(frozen=True)
class OriginSeries:
    """Origin coefficients; entries beyond ``order`` are NaN (undefined).

    ``order`` is the highest index whose coefficient is defined.  When the
    recursion hits a vanishing denominator (integer kappa) it stops there and
    ``resonant`` is set.
    """

    coeffs: tuple
    order: int
    kappa: float
    resonant: bool
    min_denominator: float
    near_resonant: bool = False

    def is_defined(self, n: int) -> bool:
        return 0 <= n <= self.order


@dataclass(frozen=True)
class InfinitySeries:
    coeffs: tuple


@dataclass(frozen=True)
class TailFit:
    C: float
    kappa_fit: float
    fit_window: tuple[float, float]
    residual_norm: float
    n_points: int = field(default=0)


def origin_recursion(eps, eta, sigma1, N: int, resonance_tol: float = 1e-10):
    """Run the coefficient recursion with caller-supplied arithmetic.

    Works with floats, ``mpmath.mpf`` or anything else closed under + - * /.
    Returns ``(coeffs, stop, min_den)`` where ``stop`` is the first index whose
    denominator vanished (or ``None``).
    """
    inv_eps = 1 / eps
    s = [0 * sigma1, sigma1]
    min_den = math.inf
    for n in range(2, N + 1):
        den = inv_eps + (1 - eta) * (n + 1) * sigma1 - n
        min_den = min(min_den, abs(float(den)))
        if abs(float(den)) < resonance_tol * (float(inv_eps) + n):
            return s, n, min_den
        acc = ((n - 1) * sigma1 + inv_eps) * s[n - 1]
        for k in range(2, n):
            acc += ((n - k) * s[n - k] + (1 - eta) * (n - k + 1) * s[n - k + 1]) * s[k]
        s.append(-acc / den)
    return s, None, min_den


def origin_coefficients(p: Parameters, N: int) -> OriginSeries:
    if N < 1:
        raise DomainError("origin series needs N >= 1")
    sp = spectrum(p)
    s, stop, min_den = origin_recursion(float(p.eps), float(p.eta), sp.sigma, N)
    coeffs = [float(c) for c in s] + [math.nan] * (N + 1 - len(s))
    return OriginSeries(
        coeffs=tuple(coeffs),
        order=len(s) - 1,
        kappa=sp.kappa,
        resonant=stop is not None,
        min_denominator=min_den,
        near_resonant=sp.near_resonant,
    )


def infinity_coefficients(p: Parameters, N: int) -> InfinitySeries:
    """rho_0 .. rho_N.  Arithmetic follows the type of ``p.eps``/``p.eta``,
    so rational parameters give exact rational coefficients."""
    if N < 0:
        raise DomainError("infinity series needs N >= 0")
    eps, eta = p.eps, p.eta
    one = eps ** 0
    r = [one, -one, one]
    for n in range(3, N + 1):
        acc = 0 * one
        for i in range(1, n - 1):
            acc += i * r[i] * (r[n - i - 1] + (1 - eta) * r[n - i - 2])
        r.append(-r[n - 1] + eps * acc)
    return InfinitySeries(coeffs=tuple(r[: N + 1]))


def eval_origin(s: OriginSeries, x):
    x = np.asarray(x, dtype=float)
    acc = np.zeros_like(x)
    for c in reversed(s.coeffs[: s.order + 1]):
        acc = acc * x + c
    return acc if acc.ndim else float(acc)


def eval_infinity(s: InfinitySeries, x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("the series at infinity is evaluated for x > 0")
    inv = 1.0 / x
    acc = np.zeros_like(x)
    for c in reversed(s.coeffs):
        acc = acc * inv + float(c)
    return acc if acc.ndim else float(acc)


def fit_tail(xs, rs) -> TailFit:
    """Fit ``r = C x**k`` by least squares on (log x, log|r|)."""
    xs = np.asarray(xs, dtype=float)
    rs = np.asarray(rs, dtype=float)
    if xs.size < MIN_FIT_POINTS:
        raise FitError(f"need at least {MIN_FIT_POINTS} samples, got {xs.size}")
    if np.any(xs <= 0):
        raise FitError("tail samples must have x > 0")
    signs = np.sign(rs)
    if np.any(signs == 0) or np.any(signs != signs[0]):
        raise FitError("residual changes sign inside the window")
    lx = np.log(xs)
    lr = np.log(np.abs(rs))
    slope, intercept = np.polyfit(lx, lr, 1)
    resid = lr - (slope * lx + intercept)
    return TailFit(
        C=float(signs[0] * math.exp(intercept)),
        kappa_fit=float(slope),
        fit_window=(float(xs.min()), float(xs.max())),
        residual_norm=float(np.sqrt(np.mean(resid ** 2))),
        n_points=int(xs.size),
    )


def select_tail_window(xs, rs, rms_tol: float = 0.01, min_points: int = MIN_FIT_POINTS):
    """Widest dyadic window on which log|r| is straight to ``rms_tol``.

    Windows have the form ``[x_lo, x_lo * 2**k]`` with ``x_lo`` drawn from the
    sample grid.  Among windows of equal width the one nearest the origin
    wins.  Returns a boolean mask over the samples, or ``None``.
    """
    xs = np.asarray(xs, dtype=float)
    rs = np.asarray(rs, dtype=float)
    order = np.argsort(xs)
    xs_s, rs_s = xs[order], rs[order]
    span = math.log2(xs_s[-1] / xs_s[0]) if xs_s.size > 1 else 0.0
    for k in range(int(math.floor(span + 1e-12)), 0, -1):
        for i, x_lo in enumerate(xs_s):
            x_hi = x_lo * 2.0 ** k
            if x_hi > xs_s[-1] * (1 + 1e-12):
                break
            sel = (xs_s >= x_lo) & (xs_s <= x_hi * (1 + 1e-12))
            if sel.sum() < min_points:
                continue
            r = rs_s[sel]
            if np.any(r == 0) or np.any(np.sign(r) != np.sign(r[0])):
                continue
            lx, lr = np.log(xs_s[sel]), np.log(np.abs(r))
            coef = np.polyfit(lx, lr, 1)
            rms = np.sqrt(np.mean((lr - np.polyval(coef, lx)) ** 2))
            if rms <= rms_tol:
                mask = np.zeros(xs.size, dtype=bool)
                mask[order[sel]] = True
                return mask
    return None
