"""Counter-based normal variates for reproducible parallel Monte Carlo.

Every path owns a 64-bit key ``mix(seed ^ mix(path_index + GOLDEN))``.  The
uniform with counter ``c`` is ``mix(key + c * GOLDEN)`` (splitmix64 finaliser),
so the draw depends only on ``(seed, path_index, c)`` and never on which thread
or block computes it.  Normal pair ``k`` uses counters ``2k`` (radius) and
``2k + 1`` (angle) through Box-Muller; step ``j`` of a path reads pair ``j // 2``,
cosine branch for even ``j`` and sine branch for odd ``j``.

The logarithm and the sine/cosine are written out as polynomial kernels so the
block routine vectorises; they agree with ``math.log``/``math.cos`` to a few ulp.
"""

from __future__ import annotations

import math

import numpy as np
from numba import int64, njit, uint64

__all__ = ["BLOCK", "GOLDEN", "mix", "path_key", "fill_normals", "normal_pair_reference", "path_normals"]

BLOCK = 64
GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 1.0 / 9007199254740992.0
_LN2 = math.log(2.0)
_SQRT2 = math.sqrt(2.0)
_MASK64 = (1 << 64) - 1


@njit(inline="always", nogil=True, cache=True)
def mix(z):
    z = (z ^ (z >> uint64(30))) * _M1
    z = (z ^ (z >> uint64(27))) * _M2
    return z ^ (z >> uint64(31))


@njit(nogil=True, cache=True)
def path_key(seed, index):
    return mix(uint64(seed) ^ mix(uint64(index) + GOLDEN))


@njit(nogil=True, cache=True)
def fill_normals(keys, pair, bits, fbits, z_cos, z_sin):
    """Box-Muller pair number ``pair`` for every lane of a block.

    ``bits`` is scratch space and ``fbits`` must be its float64 view.
    """
    n = keys.shape[0]
    c0 = uint64(2) * uint64(pair)
    # radius uniform in (0, 1]: exponent/mantissa split through the bit view
    for i in range(n):
        fbits[i] = float(int64(mix(keys[i] + c0 * GOLDEN) >> uint64(11)) + 1)
    for i in range(n):
        b = bits[i]
        z_cos[i] = float(int64(b >> uint64(52)) - 1076)
        bits[i] = (b & uint64(0x000FFFFFFFFFFFFF)) | uint64(0x3FF0000000000000)
    for i in range(n):
        m = fbits[i]
        big = m > _SQRT2
        m = 0.5 * m if big else m
        e = z_cos[i] + (1.0 if big else 0.0)
        s = (m - 1.0) / (m + 1.0)
        s2 = s * s
        # log(m) = 2 atanh(s), |s| < 0.1716
        p = 1.0 / 23.0
        p = p * s2 + 1.0 / 21.0
        p = p * s2 + 1.0 / 19.0
        p = p * s2 + 1.0 / 17.0
        p = p * s2 + 1.0 / 15.0
        p = p * s2 + 1.0 / 13.0
        p = p * s2 + 1.0 / 11.0
        p = p * s2 + 1.0 / 9.0
        p = p * s2 + 1.0 / 7.0
        p = p * s2 + 1.0 / 5.0
        p = p * s2 + 1.0 / 3.0
        p = p * s2 + 1.0
        z_cos[i] = math.sqrt(-2.0 * (2.0 * s * p + e * _LN2))
    c1 = c0 + uint64(1)
    for i in range(n):
        # angle 2 pi u, reduced to quarter turns
        u = float(int64(mix(keys[i] + c1 * GOLDEN) >> uint64(11))) * (4.0 * _TWO_M53)
        qi = int64(u + 0.5)
        f = (u - float(qi)) * (math.pi / 2)
        f2 = f * f
        # Taylor polynomials on |f| <= pi/4
        sp = -1.0 / 1307674368000.0
        sp = sp * f2 + 1.0 / 6227020800.0
        sp = sp * f2 - 1.0 / 39916800.0
        sp = sp * f2 + 1.0 / 362880.0
        sp = sp * f2 - 1.0 / 5040.0
        sp = sp * f2 + 1.0 / 120.0
        sp = sp * f2 - 1.0 / 6.0
        sn = f + f * f2 * sp
        cp = 1.0 / 20922789888000.0
        cp = cp * f2 - 1.0 / 87178291200.0
        cp = cp * f2 + 1.0 / 479001600.0
        cp = cp * f2 - 1.0 / 3628800.0
        cp = cp * f2 + 1.0 / 40320.0
        cp = cp * f2 - 1.0 / 720.0
        cp = cp * f2 + 1.0 / 24.0
        cp = cp * f2 - 0.5
        cs = 1.0 + f2 * cp
        qm = float(qi & 3)
        c1_ = -sn if qm == 1.0 else cs
        s1_ = cs if qm == 1.0 else sn
        c2_ = -cs if qm == 2.0 else c1_
        s2_ = -sn if qm == 2.0 else s1_
        c3_ = sn if qm == 3.0 else c2_
        s3_ = -cs if qm == 3.0 else s2_
        r = z_cos[i]
        z_cos[i] = r * c3_
        z_sin[i] = r * s3_


def path_normals(seed: int, index: int, n: int) -> np.ndarray:
    """First ``n`` normals of one path, produced by the block kernel."""
    keys = np.array([path_key(np.uint64(seed), np.uint64(index))], dtype=np.uint64)
    bits = np.empty(1, np.uint64)
    fbits = bits.view(np.float64)
    zc = np.empty(1)
    zs = np.empty(1)
    out = np.empty(n)
    for k in range((n + 1) // 2):
        fill_normals(keys, k, bits, fbits, zc, zs)
        out[2 * k] = zc[0]
        if 2 * k + 1 < n:
            out[2 * k + 1] = zs[0]
    return out


def _mix_py(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def normal_pair_reference(seed: int, index: int, pair: int) -> tuple[float, float]:
    """Pure-Python Box-Muller pair using library ``log``, ``cos`` and ``sin``."""
    gold = int(GOLDEN)
    key = _mix_py((seed & _MASK64) ^ _mix_py((index + gold) & _MASK64))
    u1 = ((_mix_py((key + 2 * pair * gold) & _MASK64) >> 11) + 1) * _TWO_M53
    u2 = (_mix_py((key + (2 * pair + 1) * gold) & _MASK64) >> 11) * _TWO_M53
    r = math.sqrt(-2.0 * math.log(u1))
    return r * math.cos(2.0 * math.pi * u2), r * math.sin(2.0 * math.pi * u2)
