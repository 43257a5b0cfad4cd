"""Real Airy functions Ai, Bi, their derivatives, and derived scalar functions.

Evaluation strategy (binary64 throughout):

* ``|z| >= 9``: the large-argument asymptotic expansions (monotone for
  ``z > 0``, oscillatory for ``z < 0``), summed up to the smallest term.  At
  ``|z| = 9`` the smallest term is below ``1e-16`` relative.
* ``|z| < 9``: a Taylor expansion of ``w'' = z w`` around the nearest anchor of
  a grid with spacing 0.5.  Anchor values are built once at import by stepping
  the same Taylor recurrence outward from ``z = 0`` for the oscillatory side and
  for Bi, and inward from ``z = 10`` for the recessive Ai on the positive side,
  so every chain runs in its numerically stable direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "AiryQuartet",
    "ScalarFunctionTable",
    "airy_eval",
    "airy_array",
    "airy_largest_ai_zero",
    "scalar_functions",
    "YSTAR",
    "AI_PRIME_AT_ZERO",
    "BI_PRIME_AT_ZERO",
]

_SQRT_PI = math.sqrt(math.pi)
_MAX_ARG = 200.0
_ASYMPTOTIC_RADIUS = 9.0
_ANCHOR_STEP = 0.5
_N_ANCHORS = int(round(_ASYMPTOTIC_RADIUS / _ANCHOR_STEP))

_AI0 = 1.0 / (3.0 ** (2.0 / 3.0) * math.gamma(2.0 / 3.0))
_DAI0 = -1.0 / (3.0 ** (1.0 / 3.0) * math.gamma(1.0 / 3.0))
_BI0 = 1.0 / (3.0 ** (1.0 / 6.0) * math.gamma(2.0 / 3.0))
_DBI0 = 3.0 ** (1.0 / 6.0) / math.gamma(1.0 / 3.0)


def _expansion_coefficients(n):
    u = [1.0]
    for k in range(1, n):
        u.append(u[-1] * (6 * k - 5) * (6 * k - 3) * (6 * k - 1) / ((2 * k - 1) * 216.0 * k))
    v = [1.0] + [-(6 * k + 1) / (6 * k - 1) * u[k] for k in range(1, n)]
    return u, v


_U, _V = _expansion_coefficients(80)


@dataclass(frozen=True)
class AiryQuartet:
    """Ai, Bi, Ai' and Bi' at one real argument ``z``."""

    z: float
    ai: float
    bi: float
    dai: float
    dbi: float

    @property
    def wronskian(self) -> float:
        return self.ai * self.dbi - self.dai * self.bi


@dataclass(frozen=True)
class ScalarFunctionTable:
    """The composed functions f, F, G and g at one argument.

    ``f = Ai'^2 - z Ai^2`` (so ``f' = -Ai^2``), ``F`` is a primitive of
    ``f^2``, ``G`` a primitive of ``f g`` and ``g = Ai' Bi' - z Ai Bi``.
    """

    z: float
    f_val: float
    F_val: float
    G_val: float
    g_val: float


def _series(zeta, coeffs, sign):
    """Sum ``coeffs[k] * (sign / zeta)**k`` up to its smallest term."""
    total = 0.0
    term_prev = math.inf
    r = sign / zeta
    p = 1.0
    for c in coeffs:
        term = c * p
        if abs(term) > term_prev:
            break
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
        term_prev = abs(term)
        p *= r
    return total


def _split_series(zeta, coeffs):
    """Even/odd parts with alternating signs, as used for negative arguments."""
    even = 0.0
    odd = 0.0
    inv = 1.0 / zeta
    prev = math.inf
    for k, c in enumerate(coeffs):
        term = c * inv**k
        if abs(term) > prev:
            break
        sgn = -1.0 if (k // 2) % 2 else 1.0
        if k % 2 == 0:
            even += sgn * term
        else:
            odd += sgn * term
        if abs(term) < 1e-17 * max(abs(even), abs(odd)):
            break
        prev = abs(term)
    return even, odd


def _asymptotic_positive(z):
    zeta = 2.0 / 3.0 * z * math.sqrt(z)
    q = z**0.25
    su_neg = _series(zeta, _U, -1.0)
    sv_neg = _series(zeta, _V, -1.0)
    su_pos = _series(zeta, _U, 1.0)
    sv_pos = _series(zeta, _V, 1.0)
    decay = math.exp(-zeta) if zeta < 745.0 else 0.0
    ai = decay / (2.0 * _SQRT_PI * q) * su_neg
    dai = -q * decay / (2.0 * _SQRT_PI) * sv_neg
    if zeta < 709.0:
        grow = math.exp(zeta)
        bi = grow / (_SQRT_PI * q) * su_pos
        dbi = q * grow / _SQRT_PI * sv_pos
    else:
        bi = dbi = math.inf
    return ai, dai, bi, dbi


def _asymptotic_negative(z):
    x = -z
    zeta = 2.0 / 3.0 * x * math.sqrt(x)
    q = x**0.25
    pu, qu = _split_series(zeta, _U)
    pv, qv = _split_series(zeta, _V)
    c = math.cos(zeta - math.pi / 4.0)
    s = math.sin(zeta - math.pi / 4.0)
    ai = (c * pu + s * qu) / (_SQRT_PI * q)
    dai = q * (s * pv - c * qv) / _SQRT_PI
    bi = (-s * pu + c * qu) / (_SQRT_PI * q)
    dbi = q * (c * pv + s * qv) / _SQRT_PI
    return ai, dai, bi, dbi


def _taylor_step(z0, w1, dw1, w2, dw2, h):
    """Advance two solutions of ``w'' = z w`` from ``z0`` to ``z0 + h``."""
    # a_{n+2} = (z0 a_n + a_{n-1}) / ((n+2)(n+1)), coefficients pre-scaled by h^n
    h2 = h * h
    h3 = h2 * h
    a_m1, a0, a1 = 0.0, w1, dw1 * h
    b_m1, b0, b1 = 0.0, w2, dw2 * h
    s1 = a0 + a1
    s2 = b0 + b1
    d1 = a1
    d2 = b1
    scale = max(abs(w1), abs(dw1 * h), abs(w2), abs(dw2 * h), 1e-300)
    n = 0
    while True:
        a2 = (z0 * a0 * h2 + a_m1 * h3) / ((n + 2) * (n + 1))
        b2 = (z0 * b0 * h2 + b_m1 * h3) / ((n + 2) * (n + 1))
        s1 += a2
        s2 += b2
        d1 += (n + 2) * a2
        d2 += (n + 2) * b2
        if n > 4 and abs(a2) + abs(b2) + abs(a1) + abs(b1) < 1e-18 * scale:
            break
        if n > 200:
            break
        a_m1, a0, a1 = a0, a1, a2
        b_m1, b0, b1 = b0, b1, b2
        n += 1
    return s1, d1 / h, s2, d2 / h


def _build_anchors():
    n = _N_ANCHORS
    h = _ANCHOR_STEP
    ai = {0: (_AI0, _DAI0)}
    bi = {0: (_BI0, _DBI0)}
    # oscillatory side: both solutions stepped outward from the origin
    for k in range(0, -n, -1):
        a, da = ai[k]
        b, db = bi[k]
        a1, da1, b1, db1 = _taylor_step(k * h, a, da, b, db, -h)
        ai[k - 1] = (a1, da1)
        bi[k - 1] = (b1, db1)
    # Bi is dominant for z > 0: forward stepping is stable
    for k in range(0, n):
        b, db = bi[k]
        _, _, b1, db1 = _taylor_step(k * h, 0.0, 0.0, b, db, h)
        bi[k + 1] = (b1, db1)
    # Ai is recessive for z > 0: start from the asymptotic regime and step inward
    top = n + 2
    a, da, _, _ = _asymptotic_positive(top * h)
    chain = {top: (a, da)}
    for k in range(top, 0, -1):
        a, da = chain[k]
        a1, da1, _, _ = _taylor_step(k * h, a, da, 0.0, 0.0, -h)
        chain[k - 1] = (a1, da1)
    for k in range(1, n + 1):
        ai[k] = chain[k]
    return ai, bi, chain[0]


_ANCHOR_AI, _ANCHOR_BI, _INWARD_AI_AT_ZERO = _build_anchors()


def airy_eval(z: float) -> AiryQuartet:
    """Evaluate Ai, Bi, Ai', Bi' at a real argument ``|z| <= 200``.

    Ai underflows to 0 for large positive ``z``; Bi and Bi' overflow to
    ``inf`` once ``exp(2/3 z^{3/2})`` is not representable.
    """
    z = float(z)
    if not math.isfinite(z):
        raise DomainError(f"Airy argument must be finite, got {z!r}")
    if abs(z) > _MAX_ARG:
        raise DomainError(f"Airy argument {z} outside supported range |z| <= {_MAX_ARG}")
    if z >= _ASYMPTOTIC_RADIUS:
        ai, dai, bi, dbi = _asymptotic_positive(z)
    elif z <= -_ASYMPTOTIC_RADIUS:
        ai, dai, bi, dbi = _asymptotic_negative(z)
    else:
        k = int(round(z / _ANCHOR_STEP))
        z0 = k * _ANCHOR_STEP
        h = z - z0
        a, da = _ANCHOR_AI[k]
        b, db = _ANCHOR_BI[k]
        if abs(h) < 1e-100:
            # first order is exact here, and avoids dividing by a subnormal step
            ai, dai, bi, dbi = a + da * h, da + z0 * a * h, b + db * h, db + z0 * b * h
        else:
            ai, dai, bi, dbi = _taylor_step(z0, a, da, b, db, h)
    return AiryQuartet(z=z, ai=ai, bi=bi, dai=dai, dbi=dbi)


def airy_array(z):
    """Vectorised convenience wrapper: returns arrays ``(ai, bi, dai, dbi)``."""
    z = np.asarray(z, dtype=float)
    out = np.empty((4,) + z.shape)
    for idx, val in np.ndenumerate(z):
        q = airy_eval(val)
        out[(slice(None),) + idx] = (q.ai, q.bi, q.dai, q.dbi)
    return out[0], out[1], out[2], out[3]


def airy_largest_ai_zero() -> float:
    """Return ``y* > 0`` with ``Ai(-y*) = 0``, the largest zero of Ai negated.

    Bisection inside ``[2, 3]`` down to width ``1e-13``, then one Newton step
    using ``Ai'``.
    """
    lo, hi = 2.0, 3.0
    f_lo = airy_eval(-lo).ai
    while hi - lo > 1e-13:
        mid = 0.5 * (lo + hi)
        f_mid = airy_eval(-mid).ai
        if (f_mid > 0.0) == (f_lo > 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    y = 0.5 * (lo + hi)
    q = airy_eval(-y)
    # d/dy Ai(-y) = -Ai'(-y)
    return y + q.ai / q.dai


YSTAR = airy_largest_ai_zero()
_AT_ZERO = airy_eval(-YSTAR)
AI_PRIME_AT_ZERO = _AT_ZERO.dai
BI_PRIME_AT_ZERO = _AT_ZERO.dbi


def _compose(q: AiryQuartet) -> ScalarFunctionTable:
    z, a, da, b, db = q.z, q.ai, q.dai, q.bi, q.dbi
    z2 = z * z
    f = da * da - z * a * a
    F = (
        (z * z2 / 2.0 + 0.125) * a**4
        - z / 2.0 * a**3 * da
        - z2 * a * a * da * da
        + 0.5 * a * da**3
        + z / 2.0 * da**4
    )
    G = (
        (z * z2 / 2.0 + 0.125) * a**3 - 0.375 * z * a * a * da - z2 / 2.0 * a * da * da + 0.125 * da**3
    ) * b + (-0.125 * z * a**3 - z2 / 2.0 * a * a * da + 0.375 * a * da * da + z / 2.0 * da**3) * db
    g = da * db - z * a * b
    return ScalarFunctionTable(z=z, f_val=f, F_val=F, G_val=G, g_val=g)


def scalar_functions(z: float) -> ScalarFunctionTable:
    """f, F, G and g at ``z``, all composed from a single Airy evaluation."""
    return _compose(airy_eval(z))
