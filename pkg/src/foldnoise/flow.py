"""Deterministic flow of the scaled fold ``dx = (y + x^2) dt``, ``dy = dt``.

Orbits are Riccati solutions written through Airy functions,

    x(y) = (Ai'(-y) + K Bi'(-y)) / (Ai(-y) + K Bi(-y)),   y = y_in + t,

and ``K = 0`` is the slow solution, which blows up as ``y -> y*``.  The travel
time to the section ``{x = x_fin}`` and its first two derivatives with respect
to ``y_in`` at fixed ``x_in`` are available in closed form for starts on the
slow solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from .airy import YSTAR, AI_PRIME_AT_ZERO, BI_PRIME_AT_ZERO, airy_eval, scalar_functions
from .errors import DivergenceError, DomainError

__all__ = [
    "FlowPoint",
    "RiccatiSolution",
    "TravelTimeDerivatives",
    "Direction",
    "riccati_from_initial",
    "slow_solution",
    "slow_x",
    "x_det",
    "travel_time",
    "travel_time_derivatives",
    "derivatives_on_orbit",
    "slow_final_y",
    "travel_time_derivative_limits",
    "rescale",
    "trajectory",
]

_POLE_GUARD = 1e-300
_Y_SCAN_LIMIT = 190.0


@dataclass(frozen=True)
class FlowPoint:
    """A point ``(x, y)`` of the scaled phase plane."""

    x: float
    y: float

    @property
    def r(self) -> float:
        """Distance to the critical manifold, ``x^2 + y``."""
        return self.x * self.x + self.y


@dataclass(frozen=True)
class RiccatiSolution:
    """The orbit through a given initial point, labelled by its Airy mixing constant."""

    y_in: float
    K: float

    def x_at_y(self, y: float) -> float:
        return _quotient(self.K, y)

    def x_at(self, t: float) -> float:
        return _quotient(self.K, self.y_in + t)


@dataclass(frozen=True)
class TravelTimeDerivatives:
    """Travel time along the slow solution and its derivatives in ``y_in``.

    ``A`` and ``B`` are the variational coefficients, ``c_in = f(-y_in)`` and
    ``r_fin = x_fin^2 + y_fin``.  ``dT_dy`` and ``d2T_dy2`` are evaluated in a
    cancellation-free arrangement; ``dT_dy_raw`` and ``d2T_dy2_raw`` compose the
    same quantities directly from ``A``, ``B`` and ``r_fin``.
    """

    T: float
    dT_dy: float
    d2T_dy2: float
    A: float
    B: float
    c_in: float
    r_fin: float
    x_in: float
    y_in: float
    x_fin: float
    y_fin: float

    @property
    def dT_dy_raw(self) -> float:
        return -self.A / self.r_fin

    @property
    def d2T_dy2_raw(self) -> float:
        r, A = self.r_fin, self.A
        return (2.0 * self.x_fin * r - 1.0) * A * A / r**3 + 2.0 * A / r**2 - self.B / r


class Direction(str, Enum):
    TO_ORIGINAL = "to_original"
    TO_SCALED = "to_scaled"


def _quotient(K, y):
    q = airy_eval(-y)
    den = q.ai + K * q.bi
    if abs(den) < _POLE_GUARD:
        raise DivergenceError(f"orbit reaches a pole at y = {y}")
    return (q.dai + K * q.dbi) / den


def riccati_from_initial(x_in: float, y_in: float) -> RiccatiSolution:
    """Mixing constant ``K`` of the orbit through ``(x_in, y_in)``.

    Raises
    ------
    DomainError
        If the quotient has a pole at the initial point (``x_in`` infinite) or
        the inputs are not finite.
    """
    if not (math.isfinite(x_in) and math.isfinite(y_in)):
        raise DomainError("initial condition must be finite")
    q = airy_eval(-y_in)
    num = q.dai - x_in * q.ai
    den = x_in * q.bi - q.dbi
    if den == 0.0:
        raise DomainError(f"initial point ({x_in}, {y_in}) sits at a pole of the quotient")
    return RiccatiSolution(y_in=float(y_in), K=num / den)


def slow_solution(y_in: float) -> RiccatiSolution:
    return RiccatiSolution(y_in=float(y_in), K=0.0)


def slow_x(y: float) -> float:
    """The slow solution ``Ai'(-y)/Ai(-y)`` (requires ``y < y*``)."""
    if not y < YSTAR:
        raise DomainError(f"slow solution is only defined for y < y* = {YSTAR}, got {y}")
    q = airy_eval(-y)
    return q.dai / q.ai


def x_det(sol: RiccatiSolution, t: float) -> float:
    """Fast coordinate at time ``t`` along ``sol``; divergence at a pole."""
    return sol.x_at(t)


def _numerator(K, x_fin, y):
    q = airy_eval(-y)
    return (q.dai - x_fin * q.ai) + K * (q.dbi - x_fin * q.bi)


def _scan_step(y):
    # below the typical spacing of Airy zeros at -y, never above 0.1
    return min(0.1, 0.25 * math.pi / math.sqrt(max(y, 1.0)))


def _crossing_y(K, y_in, x_fin):
    # x - x_fin = N / (Ai + K Bi) and N has no poles, so the first sign change of
    # N above y_in is the first crossing of the section
    y0 = y_in
    n0 = _numerator(K, x_fin, y0)
    if n0 == 0.0:
        return y0
    while y0 < _Y_SCAN_LIMIT:
        y1 = y0 + _scan_step(y0)
        n1 = _numerator(K, x_fin, y1)
        if n1 == 0.0:
            return y1
        if (n1 > 0.0) != (n0 > 0.0):
            return brentq(
                lambda y: _numerator(K, x_fin, y), y0, y1, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200
            )
        y0, n0 = y1, n1
    raise DomainError(f"section x = {x_fin} not reached for y < {_Y_SCAN_LIMIT}")


def travel_time(x_in: float, y_in: float, x_fin: float) -> float:
    """Time for the orbit through ``(x_in, y_in)`` to first reach ``x = x_fin``.

    Parameters
    ----------
    x_in, y_in : float
        Initial point, right of the critical manifold (``x_in^2 + y_in > 0``).
    x_fin : float
        Target section, ``x_fin >= x_in``.
    """
    if x_fin == x_in:
        return 0.0
    if x_fin < x_in:
        raise DomainError(f"x_fin = {x_fin} is not reachable from x_in = {x_in}; x increases along orbits")
    if x_in * x_in + y_in <= 0.0:
        raise DomainError("initial point must lie right of the critical manifold, x_in^2 + y_in > 0")
    sol = riccati_from_initial(x_in, y_in)
    return _crossing_y(sol.K, y_in, x_fin) - y_in


def slow_final_y(y_in, x_fin):
    """Return ``(x_in, y_fin)`` for the slow solution from ``y_in`` to ``x = x_fin``."""
    x_in = slow_x(y_in)
    if x_fin < x_in:
        raise DomainError(f"x_fin = {x_fin} lies below the slow solution x_in = {x_in} at y_in = {y_in}")
    if x_fin == x_in:
        return x_in, y_in
    return x_in, _crossing_y(0.0, y_in, x_fin)


def travel_time_derivatives(y_in: float, x_fin: float) -> TravelTimeDerivatives:
    """``T``, ``dT/dy_in`` and ``d2T/dy_in^2`` for a start on the slow solution.

    With ``f_f = f(-y_fin) = Ai(-y_fin)^2 r_fin`` and ``g = Ai'Bi' - z Ai Bi``,

    ``dT/dy = c_in / f_f - 1``,

    ``d2T/dy2 = (Ai(-y_in)^2 - 2 pi c_in g(-y_in)) / f_f
    + c_in^2 (2 pi g(-y_fin) - 1/r_fin) / f_f^2``,

    which expand the variational formulas without the ``O(r_fin)`` terms that
    cancel when ``x_fin`` is large.
    """
    if not y_in < YSTAR:
        raise DomainError(f"y_in must be below y* = {YSTAR}, got {y_in}")
    x_in, y_fin = slow_final_y(y_in, x_fin)
    return derivatives_on_orbit(y_in, y_fin, x_fin, x_in=x_in)


def derivatives_on_orbit(y: float, y_fin: float, x_fin: float, x_in=None) -> TravelTimeDerivatives:
    """Same as :func:`travel_time_derivatives` when the section height is known.

    Every point of the slow solution reaches ``x_fin`` at the same ``y_fin``, so
    integrals along the orbit only need the crossing once.
    """
    q_in = airy_eval(-y)
    q_f = airy_eval(-y_fin)
    s_in = scalar_functions(-y)
    s_f = scalar_functions(-y_fin)
    if x_in is None:
        x_in = q_in.dai / q_in.ai
    c_in = s_in.f_val
    f_f = s_f.f_val
    r_fin = x_fin * x_fin + y_fin
    ai_f2 = q_f.ai * q_f.ai
    A = r_fin - c_in / ai_f2
    bi_over_ai = q_in.bi / q_in.ai - q_f.bi / q_f.ai
    B = 2.0 * r_fin * x_fin + 1.0 + (2.0 / ai_f2) * (
        -c_in * (2.0 * x_fin - x_in) - 0.5 * q_in.ai**2 + math.pi * c_in * c_in * bi_over_ai
    )
    dT = c_in / f_f - 1.0
    d2T = (q_in.ai**2 - 2.0 * math.pi * c_in * s_in.g_val) / f_f + c_in * c_in * (
        2.0 * math.pi * s_f.g_val - 1.0 / r_fin
    ) / (f_f * f_f)
    return TravelTimeDerivatives(
        T=y_fin - y,
        dT_dy=dT,
        d2T_dy2=d2T,
        A=A,
        B=B,
        c_in=c_in,
        r_fin=r_fin,
        x_in=x_in,
        y_in=float(y),
        x_fin=float(x_fin),
        y_fin=y_fin,
    )


def travel_time_derivative_limits(y_in: float) -> tuple[float, float]:
    """Limits of ``dT/dy_in`` and ``d2T/dy_in^2`` as ``x_fin -> inf`` (slow start)."""
    if not y_in <= YSTAR:
        raise DomainError(f"y_in must not exceed y* = {YSTAR}, got {y_in}")
    q = airy_eval(-y_in)
    c_in = q.dai**2 + y_in * q.ai**2
    ap = AI_PRIME_AT_ZERO
    kappa = BI_PRIME_AT_ZERO / ap
    g_in = q.dai * q.dbi + y_in * q.ai * q.bi
    d1 = c_in / ap**2 - 1.0
    d2 = (2.0 / ap**2) * (-math.pi * c_in * g_in + math.pi * c_in * c_in * kappa + 0.5 * q.ai**2)
    return d1, d2


def rescale(point: FlowPoint, eps: float, direction="to_scaled") -> FlowPoint:
    """Map between original ``(x̄, ȳ)`` and scaled ``(x, y)`` coordinates.

    ``x̄ = eps^{1/3} x`` and ``ȳ = eps^{2/3} y``.
    """
    if not (eps > 0.0 and math.isfinite(eps)):
        raise DomainError(f"eps must be positive, got {eps}")
    direction = Direction(direction)
    a = eps ** (1.0 / 3.0)
    b = eps ** (2.0 / 3.0)
    if direction is Direction.TO_ORIGINAL:
        return FlowPoint(point.x * a, point.y * b)
    return FlowPoint(point.x / a, point.y / b)


def trajectory(x_in: float, y_in: float, x_fin: float, step: float):
    """Sample the deterministic orbit from ``(x_in, y_in)`` until ``x = x_fin``.

    Returns arrays ``t, x, y``; the last sample sits exactly on the section.
    """
    if step <= 0.0:
        raise DomainError("step must be positive")
    T = travel_time(x_in, y_in, x_fin)
    sol = riccati_from_initial(x_in, y_in)
    n = int(math.floor(T / step))
    t = np.append(np.arange(n + 1) * step, T) if n * step < T else np.arange(n + 1) * step
    x = np.array([x_in] + [sol.x_at(ti) for ti in t[1:-1]] + ([x_fin] if len(t) > 1 else []))
    return t, x, y_in + t
