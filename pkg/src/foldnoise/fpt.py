"""First passage of ``sigma X_t`` through a decreasing boundary ``d(t)``.

``X_t`` is integrated Brownian motion, ``X_t = int_0^t W_s ds``.  The passage
density is written ``psi = b phi`` where ``phi`` is the Gaussian density of
``sigma X_t`` at ``d(t)`` and ``b`` solves a Volterra fixed-point equation whose
leading term is ``b0(t) = 3 d(t) / (2t) - d'(t)``.  An exact-step Monte Carlo
sampler of ``(W, X)`` provides an independent check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConvergenceError, DomainError
from .parallel import run_ranges
from .rng import BLOCK, fill_normals, path_key

__all__ = [
    "BoundaryCurve",
    "linear_boundary",
    "quadratic_boundary",
    "rho3",
    "phi",
    "b0",
    "betas",
    "btilde",
    "btilde_taylor",
    "r_exponent",
    "kernel",
    "FptDensityGrid",
    "solve_b",
    "fpt_moments",
    "fpt_mean_var",
    "fpt_cdf",
    "FptSample",
    "mc_integrated_bm",
    "ibm_endpoints",
    "ks_distance",
    "BridgePrediction",
    "slice_bridge_prediction",
]


@dataclass(frozen=True)
class BoundaryCurve:
    """Polynomial boundary ``d(t) = sum_k coeffs[k] (t - delta)^k``.

    Normalised so that ``d(delta) = 0`` and ``d'(delta) = -1``; ``d`` must be
    strictly decreasing on ``[0, 2 delta]``.
    """

    delta: float
    coeffs: tuple = (0.0, -1.0)

    def __post_init__(self):
        if not self.delta > 0.0:
            raise DomainError("delta must be positive")
        c = tuple(float(v) for v in self.coeffs) + (0.0,) * max(0, 2 - len(self.coeffs))
        if c[0] != 0.0 or c[1] != -1.0:
            raise DomainError("boundary must satisfy d(delta) = 0 and d'(delta) = -1")
        object.__setattr__(self, "coeffs", c)
        grid = np.linspace(0.0, 2.0 * self.delta, 2001)
        if np.any(self.deriv1(grid) >= 0.0):
            raise DomainError("boundary must be strictly decreasing on [0, 2 delta]")

    def _eval(self, c, t):
        u = np.asarray(t, dtype=float) - self.delta
        return np.polyval(c[::-1], u) if len(c) else np.zeros_like(u)

    def value(self, t):
        return self._eval(np.array(self.coeffs), t)

    def deriv1(self, t):
        c = np.array(self.coeffs)
        return self._eval(c[1:] * np.arange(1, len(c)), t)

    def deriv2(self, t):
        c = np.array(self.coeffs)
        k = np.arange(2, len(c))
        return self._eval(c[2:] * k * (k - 1), t) if len(c) > 2 else np.zeros_like(np.asarray(t, dtype=float))


def linear_boundary(delta: float) -> BoundaryCurve:
    """``d(t) = delta - t``."""
    return BoundaryCurve(delta=float(delta))


def quadratic_boundary(delta: float, a2: float) -> BoundaryCurve:
    """``d(t) = -(t - delta) + a2 (t - delta)^2`` (needs ``2 |a2| delta < 1``)."""
    return BoundaryCurve(delta=float(delta), coeffs=(0.0, -1.0, float(a2)))


def rho3(s, u, t):
    """``E[(X_u - X_s)(X_t - X_s)]`` for ``0 <= s <= u <= t``."""
    s, u, t = (np.asarray(v, dtype=float) for v in (s, u, t))
    if np.any(s < 0.0) or np.any(u < s) or np.any(t < u):
        raise DomainError("rho3 needs 0 <= s <= u <= t")
    out = 2.0 / 3.0 * s**3 - u**3 / 6.0 + 0.5 * (u * u * t - s * s * u - s * s * t)
    return out if out.ndim else float(out)


def _rho_stt(s, t):
    # rho3(s, t, t) in factored form
    return (t - s) ** 2 * (t + 2.0 * s) / 3.0


def _positive_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise DomainError("time must be positive")
    return t


def phi(t, d: BoundaryCurve, sigma: float):
    """Density of ``sigma X_t`` at ``d(t)``; underflows to 0 for small ``t``."""
    t = _positive_time(t)
    if not sigma > 0.0:
        raise DomainError("sigma must be positive")
    rho = t**3 / 3.0
    dv = d.value(t)
    out = np.exp(-dv * dv / (2.0 * sigma * sigma * rho)) / (sigma * np.sqrt(2.0 * math.pi * rho))
    return out if out.ndim else float(out)


def b0(t, d: BoundaryCurve):
    """Leading coefficient ``3 d(t) / (2t) - d'(t)``."""
    t = _positive_time(t)
    out = 1.5 * d.value(t) / t - d.deriv1(t)
    return out if out.ndim else float(out)


def _check_st(s, t):
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s <= 0.0) or np.any(t <= s):
        raise DomainError("need 0 < s < t")
    return s, t


def betas(s, t):
    """``(beta1, beta2)`` in closed form, for ``0 < s < t``."""
    s, t = _check_st(s, t)
    den = (t - s) * (4.0 * t - s)
    b1 = -3.0 * t * t / (s * den)
    b2 = 3.0 * (2.0 * t - s) / den
    if b1.ndim == 0:
        return float(b1), float(b2)
    return b1, b2


def btilde(s, t, d: BoundaryCurve):
    """``d'(t) - beta1 d(s) - beta2 d(t)``."""
    b1, b2 = betas(s, t)
    out = d.deriv1(t) - b1 * d.value(s) - b2 * d.value(t)
    return out if np.ndim(out) else float(out)


def btilde_taylor(s, t, d: BoundaryCurve, theta=None):
    """``(t-s)/(s(4t-s)) [3 d(t) - (3t - s) d'(t) + 1.5 t^2 d''(theta)]``.

    Exact for polynomial boundaries of degree two when ``theta`` is any point.
    """
    s, t = _check_st(s, t)
    th = t if theta is None else theta
    out = (t - s) / (s * (4.0 * t - s)) * (3.0 * d.value(t) - (3.0 * t - s) * d.deriv1(t) + 1.5 * t * t * d.deriv2(th))
    return out if np.ndim(out) else float(out)


def r_exponent(s, t, d: BoundaryCurve):
    """``d(s)^2/rho(s,s) - d(t)^2/rho(t,t) + (d(t) - d(s))^2/rho(s,t,t)``; ``d'(t)^2/t`` at ``s = t``."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s <= 0.0) or np.any(t < s):
        raise DomainError("need 0 < s <= t")
    diag = s == t
    ss = np.where(diag, 0.5 * t, s)
    ds, dt_ = d.value(ss), d.value(t)
    off = 3.0 * ds * ds / ss**3 - 3.0 * dt_ * dt_ / t**3 + (dt_ - ds) ** 2 / _rho_stt(ss, t)
    out = np.where(diag, d.deriv1(t) ** 2 / t, off)
    return out if out.ndim else float(out)


def kernel(s, t, d: BoundaryCurve, sigma: float):
    """Integral kernel of the fixed-point equation for ``b``, including ``1/(sigma sqrt(2 pi))``.

    Zero at ``s = 0``; the diagonal uses its removable limit
    ``[3d - 2t d' + 1.5 t^2 d''] / (3 t^{5/2}) exp(-d'^2 / (2 sigma^2 t))``.
    """
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    s, t = np.broadcast_arrays(s, t)
    out = np.zeros(s.shape)
    pref = 1.0 / (sigma * math.sqrt(2.0 * math.pi))
    diag = (s == t) & (t > 0.0)
    inner = (s > 0.0) & (s < t)
    if np.any(diag):
        td = t[diag]
        d1 = d.deriv1(td)
        out[diag] = (
            pref
            * (3.0 * d.value(td) - 2.0 * td * d1 + 1.5 * td * td * d.deriv2(td))
            / (3.0 * td**2.5)
            * np.exp(-d1 * d1 / (2.0 * sigma * sigma * td))
        )
    if np.any(inner):
        si, ti = s[inner], t[inner]
        r = r_exponent(si, ti, d)
        geo = np.sqrt((ti**3 / 3.0) / (_rho_stt(si, ti) * si**3 / 3.0))
        out[inner] = pref * geo * btilde(si, ti, d) * np.exp(-r / (2.0 * sigma * sigma))
    return out if out.ndim else float(out)


@dataclass
class FptDensityGrid:
    """Solution of the fixed-point equation on ``t_j = j T_max / n``, ``j = 1..n``."""

    t_nodes: np.ndarray
    b_vals: np.ndarray
    b0_vals: np.ndarray
    phi_vals: np.ndarray
    psi_vals: np.ndarray
    sigma: float
    delta: float
    iterations_used: int
    residual: float
    meta: dict = field(default_factory=dict)

    @property
    def h(self) -> float:
        return float(self.t_nodes[1] - self.t_nodes[0])

    def mass(self) -> float:
        return float(fpt_moments(self, 0)[0])


def _trapezoid_on_grid(h, values):
    # grid starts at t = h with an implicit zero at t = 0
    return h * (np.sum(values, axis=-1) - 0.5 * values[..., -1])


def solve_b(d: BoundaryCurve, sigma: float, grid_n: int = 400, tol: float = 1e-12, max_iter: int = 50) -> FptDensityGrid:
    """Picard iteration ``b <- b0 + int_0^t K(s, t) b(s) ds`` on a uniform grid over ``(0, 2 delta]``.

    The inner integral uses the trapezoid rule with the node ``s = 0`` where the
    kernel vanishes.  Intended for ``sigma**2 << delta``.  Once ``sigma**2``
    exceeds about ``delta / 2`` the sweep count grows and a visible part of the
    density falls beyond ``2 delta`` (mass 0.98 at ``delta = 0.1, sigma = 1``).

    Raises
    ------
    ConvergenceError
        If the sup-norm update is still above ``tol`` after ``max_iter`` sweeps;
        the last grid is attached as ``estimate``.
    """
    if not sigma > 0.0:
        raise DomainError("sigma must be positive")
    if grid_n < 50:
        raise DomainError("grid_n must be at least 50")
    T = 2.0 * d.delta
    h = T / grid_n
    t = h * np.arange(1, grid_n + 1)
    S, Tm = np.meshgrid(t, t)
    K = np.where(S <= Tm, kernel(np.minimum(S, Tm), Tm, d, sigma), 0.0)
    W = K * h
    W[np.arange(grid_n), np.arange(grid_n)] *= 0.5
    b_init = b0(t, d)
    b = b_init.copy()
    it = 0
    res = math.inf
    while it < max_iter:
        nb = b_init + W @ b
        res = float(np.max(np.abs(nb - b)))
        b = nb
        it += 1
        if res < tol:
            break
    ph = phi(t, d, sigma)
    grid = FptDensityGrid(
        t_nodes=t,
        b_vals=b,
        b0_vals=b_init,
        phi_vals=ph,
        psi_vals=b * ph,
        sigma=float(sigma),
        delta=float(d.delta),
        iterations_used=it,
        residual=res,
    )
    if res >= tol:
        raise ConvergenceError(f"Picard iteration stalled at residual {res:.3e} after {it} sweeps", estimate=grid)
    return grid


def fpt_moments(grid: FptDensityGrid, max_order: int = 2):
    """Raw moments ``int t^k psi dt`` for ``k = 0..max_order`` (trapezoid)."""
    t = grid.t_nodes
    return np.array([_trapezoid_on_grid(grid.h, t**k * grid.psi_vals) for k in range(max_order + 1)])


def fpt_mean_var(grid: FptDensityGrid):
    """Mean and variance of the normalised passage density."""
    m0, m1, m2 = fpt_moments(grid, 2)
    mean = m1 / m0
    return float(mean), float(m2 / m0 - mean * mean)


def fpt_cdf(grid: FptDensityGrid):
    """Cumulative trapezoid of ``psi`` at the grid nodes (zero at ``t = 0``)."""
    p = grid.psi_vals
    inc = 0.5 * grid.h * (p + np.concatenate([[0.0], p[:-1]]))
    return np.cumsum(inc)


@dataclass(frozen=True)
class FptSample:
    tau: np.ndarray
    hit: np.ndarray

    @property
    def n_timed_out(self) -> int:
        return int(np.count_nonzero(~self.hit))

    def mean_var(self):
        x = self.tau[self.hit]
        n = x.size
        mean = math.fsum(x) / n
        var = math.fsum((x - mean) ** 2) / (n - 1)
        return mean, var, math.sqrt(var / n)


@njit(nogil=True, cache=True)
def _poly(c, u):
    acc = 0.0
    for k in range(c.shape[0] - 1, -1, -1):
        acc = acc * u + c[k]
    return acc


@njit(inline="always", nogil=True, cache=True)
def _ibm_step(w, x, n1, n2, dt, a, bcoef, sq):
    # exact joint increment of (W, X) over one step
    for i in range(w.shape[0]):
        xn = x[i] + w[i] * dt + a * n1[i] + bcoef * n2[i]
        w[i] = w[i] + sq * n1[i]
        x[i] = xn


@njit(nogil=True, cache=True)
def _ibm_endpoint_range(seed, start, stop, dt, n_steps, w_out, x_out):
    L = BLOCK
    keys = np.empty(L, np.uint64)
    bits = np.empty(L, np.uint64)
    fbits = bits.view(np.float64)
    n1 = np.empty(L)
    n2 = np.empty(L)
    w = np.empty(L)
    x = np.empty(L)
    a = dt**1.5 / 2.0
    bcoef = dt**1.5 / (2.0 * math.sqrt(3.0))
    sq = math.sqrt(dt)
    b = start
    while b < stop:
        m = min(L, stop - b)
        for i in range(L):
            keys[i] = path_key(seed, b + i)
            w[i] = 0.0
            x[i] = 0.0
        for k in range(n_steps):
            fill_normals(keys, k, bits, fbits, n1, n2)
            _ibm_step(w, x, n1, n2, dt, a, bcoef, sq)
        for i in range(m):
            w_out[b - start + i] = w[i]
            x_out[b - start + i] = x[i]
        b += m


@njit(nogil=True, cache=True)
def _ibm_range(seed, start, stop, coeffs, delta, sigma, dt, n_max, tau, hit):
    L = BLOCK
    keys = np.empty(L, np.uint64)
    bits = np.empty(L, np.uint64)
    fbits = bits.view(np.float64)
    n1 = np.empty(L)
    n2 = np.empty(L)
    w = np.empty(L)
    x = np.empty(L)
    g = np.empty(L)
    done = np.empty(L, np.bool_)
    a = dt**1.5 / 2.0
    bcoef = dt**1.5 / (2.0 * math.sqrt(3.0))
    sq = math.sqrt(dt)
    b = start
    while b < stop:
        m = min(L, stop - b)
        for i in range(L):
            keys[i] = path_key(seed, b + i)
            w[i] = 0.0
            x[i] = 0.0
            g[i] = -_poly(coeffs, -delta)
            done[i] = i >= m
        remaining = m
        k = 0
        while remaining > 0 and k < n_max:
            fill_normals(keys, k, bits, fbits, n1, n2)
            tn = (k + 1) * dt
            dn = _poly(coeffs, tn - delta)
            _ibm_step(w, x, n1, n2, dt, a, bcoef, sq)
            for i in range(m):
                if done[i]:
                    continue
                gn = sigma * x[i] - dn
                if gn >= 0.0:
                    theta = -g[i] / (gn - g[i])
                    tau[b - start + i] = (k + theta) * dt
                    hit[b - start + i] = True
                    done[i] = True
                    remaining -= 1
                else:
                    g[i] = gn
            k += 1
        for i in range(m):
            if not done[i]:
                tau[b - start + i] = k * dt
                hit[b - start + i] = False
        b += m


def mc_integrated_bm(
    d: BoundaryCurve, sigma: float, n_paths: int, dt: float = 1e-4, seed: int = 1, t_max=None, threads=None
) -> FptSample:
    """First passage of ``sigma X_t`` through ``d`` with exact Gaussian steps of ``(W, X)``.

    Per step ``dW = sqrt(dt) N1`` and
    ``dX = W dt + dt^{3/2}/2 N1 + dt^{3/2}/(2 sqrt 3) N2``, which reproduces the
    exact covariance of the increment pair.  The crossing time is interpolated
    linearly in ``sigma X - d``.
    """
    if sigma < 0.0 or not dt > 0.0 or n_paths < 1:
        raise DomainError("need sigma >= 0, dt > 0 and n_paths >= 1")
    t_max = 4.0 * d.delta if t_max is None else float(t_max)
    n_max = int(math.ceil(t_max / dt))
    tau = np.empty(n_paths)
    hit = np.empty(n_paths, np.bool_)
    coeffs = np.array(d.coeffs, dtype=float)
    key = np.uint64(int(seed))

    def work(s, e):
        _ibm_range(key, s, e, coeffs, d.delta, float(sigma), float(dt), n_max, tau[s:e], hit[s:e])

    run_ranges(n_paths, BLOCK * 16, work, threads)
    return FptSample(tau=tau, hit=hit)


def ibm_endpoints(t: float, n_paths: int, dt: float = 1e-3, seed: int = 1, threads=None):
    """``(W_t, X_t)`` samples from the stepping used by :func:`mc_integrated_bm`."""
    n_steps = int(round(t / dt))
    if n_steps < 1 or n_paths < 1 or abs(n_steps * dt - t) > 1e-9 * t:
        raise DomainError("t must be a positive multiple of dt")
    w = np.empty(n_paths)
    x = np.empty(n_paths)
    key = np.uint64(int(seed))

    def work(s, e):
        _ibm_endpoint_range(key, s, e, float(dt), n_steps, w[s:e], x[s:e])

    run_ranges(n_paths, BLOCK * 16, work, threads)
    return w, x


def ks_distance(sample, grid: FptDensityGrid) -> float:
    """Sup distance between the empirical CDF of ``sample`` and the cumulative ``psi``."""
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    tg = np.concatenate([[0.0], grid.t_nodes])
    Fg = np.concatenate([[0.0], fpt_cdf(grid)])
    F = np.interp(x, tg, Fg)
    hi = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    return float(max(np.max(hi - F), np.max(F - lo)))


@dataclass(frozen=True)
class BridgePrediction:
    """Predicted moments of ``y_tau - y0 - T`` across one thin slice."""

    x0: float
    y0: float
    delta: float
    sigma: float
    r0: float
    T: float
    mean: float
    second_moment: float


def slice_bridge_prediction(x0: float, y0: float, delta: float, sigma: float) -> BridgePrediction:
    """Mean ``T^2 sigma^2 / (2 r0^2)`` and second moment ``T sigma^2 - T^2 sigma^2 / r0``.

    ``T`` is the deterministic travel time from ``x0`` to ``x0 + delta`` and
    ``r0 = x0^2 + y0``.
    """
    from .flow import travel_time

    r0 = x0 * x0 + y0
    if not r0 > 0.0:
        raise DomainError("slice start must lie right of the critical manifold")
    T = travel_time(x0, y0, x0 + delta)
    s2 = sigma * sigma
    return BridgePrediction(
        x0=x0,
        y0=y0,
        delta=delta,
        sigma=sigma,
        r0=r0,
        T=T,
        mean=T * T * s2 / (2.0 * r0 * r0),
        second_moment=T * s2 - T * T * s2 / r0,
    )
