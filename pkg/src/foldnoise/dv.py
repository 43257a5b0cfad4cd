"""Noise corrections D and V to the mean and variance of the exit height.

For a start on the slow solution,

    E[y_tau] = y_fin + sigma^2 D / 2 + O(sigma^3),   Var[y_tau] = sigma^2 V + O(sigma^3),

with ``D = int d2T/dy2 dy`` and ``V = int (1 + dT/dy)^2 dy`` taken along the
orbit from ``y_in`` to ``y_fin``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .airy import AI_PRIME_AT_ZERO, BI_PRIME_AT_ZERO, YSTAR, airy_eval, scalar_functions
from .errors import ConvergenceError, DomainError
from .flow import derivatives_on_orbit, slow_final_y

__all__ = [
    "DVResult",
    "PositivityReport",
    "dv_integral",
    "dv_closed_form",
    "dv_limit",
    "positivity_scan",
]

EPSREL = 1e-7
EPSABS = 1e-10


@dataclass(frozen=True)
class DVResult:
    """D and V for one ``(y_in, x_fin)``; ``x_fin = inf`` marks the limit."""

    D: float
    V: float
    x_fin: float
    y_in: float
    quadrature_error_estimate: float = 0.0


@dataclass(frozen=True)
class PositivityReport:
    """Grid scan of the auxiliary functions F, G and H on ``(-y*, z_max]``."""

    z: np.ndarray
    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    dH: np.ndarray
    F_min: float
    z_at_F_min: float
    F_positive: bool
    F_at_left: float
    H_at_left: float
    H_at_left_expected: float
    H0: float
    dH0: float
    dH_sign_changes: int

    def summary(self) -> dict:
        return {
            "F_min": self.F_min,
            "z_at_F_min": self.z_at_F_min,
            "F_positive": self.F_positive,
            "F_at_left": self.F_at_left,
            "H_at_left": self.H_at_left,
            "H_at_left_expected": self.H_at_left_expected,
            "H0": self.H0,
            "dH0": self.dH0,
            "dH_sign_changes": self.dH_sign_changes,
        }


def _check_y_in(y_in):
    if not math.isfinite(y_in):
        raise DomainError("y_in must be finite")
    if y_in > YSTAR:
        raise DomainError(f"y_in must not exceed y* = {YSTAR}, got {y_in}")


def _quad(func, a, b):
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            val, err = quad(func, a, b, epsrel=EPSREL, epsabs=EPSABS, limit=200)
        except IntegrationWarning as exc:
            val, err = quad(func, a, b, epsrel=EPSREL, epsabs=EPSABS, limit=200, full_output=1)[:2]
            raise ConvergenceError(f"quadrature did not converge on [{a}, {b}]: {exc}", estimate=val) from exc
    return val, err


def dv_integral(y_in: float, x_fin: float) -> DVResult:
    """D and V by adaptive quadrature of the travel-time derivatives.

    ``x_fin = inf`` is routed to :func:`dv_limit`.

    Raises
    ------
    ConvergenceError
        If the quadrature misses its tolerance; ``estimate`` holds ``(D, V)``.
    """
    _check_y_in(y_in)
    if math.isinf(x_fin) and x_fin > 0:
        return dv_limit(y_in)
    if y_in == YSTAR:
        raise DomainError("finite x_fin needs y_in < y*")
    _, y_fin = slow_final_y(y_in, x_fin)
    if y_fin == y_in:
        return DVResult(D=0.0, V=0.0, x_fin=float(x_fin), y_in=float(y_in))

    def d_integrand(y):
        return derivatives_on_orbit(y, y_fin, x_fin).d2T_dy2

    def v_integrand(y):
        return (1.0 + derivatives_on_orbit(y, y_fin, x_fin).dT_dy) ** 2

    try:
        D, eD = _quad(d_integrand, y_in, y_fin)
        V, eV = _quad(v_integrand, y_in, y_fin)
    except ConvergenceError as exc:
        raise ConvergenceError(str(exc), estimate=exc.estimate) from exc
    return DVResult(D=D, V=V, x_fin=float(x_fin), y_in=float(y_in), quadrature_error_estimate=eD + eV)


def dv_closed_form(y_in: float, x_fin: float) -> DVResult:
    """D and V at finite ``x_fin`` through the primitives of ``f^2`` and ``f g``."""
    _check_y_in(y_in)
    if math.isinf(x_fin) and x_fin > 0:
        return dv_limit(y_in)
    _, y_fin = slow_final_y(y_in, x_fin)
    s_in = scalar_functions(-y_in)
    s_f = scalar_functions(-y_fin)
    f_f = s_f.f_val
    r_fin = x_fin * x_fin + y_fin
    dF = s_in.F_val - s_f.F_val
    dG = s_in.G_val - s_f.G_val
    D = (-s_in.f_val + s_f.f_val - 2.0 * math.pi * dG) / f_f + (2.0 * math.pi * s_f.g_val - 1.0 / r_fin) * dF / (
        f_f * f_f
    )
    V = dF / (f_f * f_f)
    return DVResult(D=D, V=V, x_fin=float(x_fin), y_in=float(y_in))


def dv_limit(y_in: float, ystar: float | None = None) -> DVResult:
    """Closed-form D and V for ``x_fin -> inf``.

    ``D = 3/4 + [2 pi (kappa F(-y_in) - G(-y_in)) - f(-y_in)] / Ai'(-y*)^2`` and
    ``V = y*/2 + F(-y_in) / Ai'(-y*)^4`` with ``kappa = Bi'(-y*)/Ai'(-y*)``.
    """
    _check_y_in(y_in)
    if ystar is None:
        ystar, ap, bp = YSTAR, AI_PRIME_AT_ZERO, BI_PRIME_AT_ZERO
    else:
        q = airy_eval(-ystar)
        ap, bp = q.dai, q.dbi
    s = scalar_functions(-y_in)
    kappa = bp / ap
    D = 0.75 + (2.0 * math.pi * (kappa * s.F_val - s.G_val) - s.f_val) / ap**2
    V = 0.5 * ystar + s.F_val / ap**4
    return DVResult(D=D, V=V, x_fin=math.inf, y_in=float(y_in))


def positivity_scan(z_max: float = 10.0, n: int = 2000) -> PositivityReport:
    """Evaluate F, G, H and H' on ``n`` points of ``(-y*, z_max]``.

    ``F = 2 pi (kappa f - g) f + Ai^2``, ``G = g - kappa f`` and
    ``H = kappa Ai - Bi`` with ``kappa = Bi'(-y*)/Ai'(-y*)``.
    """
    if not z_max > -YSTAR:
        raise DomainError("z_max must exceed -y*")
    if n < 10:
        raise DomainError("grid needs at least 10 points")
    kappa = BI_PRIME_AT_ZERO / AI_PRIME_AT_ZERO
    z = -YSTAR + (z_max + YSTAR) * np.arange(1, n + 1) / n

    def row(zz):
        q = airy_eval(zz)
        s = scalar_functions(zz)
        F = 2.0 * math.pi * (kappa * s.f_val - s.g_val) * s.f_val + q.ai**2
        return F, s.g_val - kappa * s.f_val, kappa * q.ai - q.bi, kappa * q.dai - q.dbi

    rows = np.array([row(zz) for zz in z])
    F, G, H, dH = rows.T
    k = int(np.argmin(F))
    F_left, _, H_left, _ = row(-YSTAR)
    _, _, H0, dH0 = row(0.0)
    signs = np.sign(dH[dH != 0.0])
    return PositivityReport(
        z=z,
        F=F,
        G=G,
        H=H,
        dH=dH,
        F_min=float(F[k]),
        z_at_F_min=float(z[k]),
        F_positive=bool(np.all(F > 0.0)),
        F_at_left=float(F_left),
        H_at_left=float(H_left),
        H_at_left_expected=1.0 / (math.pi * AI_PRIME_AT_ZERO),
        H0=float(H0),
        dH0=float(dH0),
        dH_sign_changes=int(np.count_nonzero(np.diff(signs))),
    )
