"""Euler-Maruyama Monte Carlo for ``dx = (y + x^2) dt``, ``dy = dt + sigma dW``.

Paths run in lockstep blocks of :data:`~foldnoise.rng.BLOCK` lanes inside a
``nogil`` kernel; blocks are distributed over a thread pool.  Every path writes
only its own output slot and draws from its own counter-based stream, so the
results are bitwise independent of the thread count and of the block a path
lands in.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
import warnings
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from numba import njit

from .airy import YSTAR
from .errors import DomainError
from .flow import travel_time
from .parallel import run_ranges
from .rng import BLOCK, fill_normals, path_key

__all__ = [
    "Status",
    "FlowConfig",
    "HitRecord",
    "MomentSummary",
    "PathBatch",
    "SweepRow",
    "default_t_max",
    "simulate_path",
    "simulate_paths",
    "summarize",
    "run_monte_carlo",
    "sweep_statistics",
    "tube_exit_fraction",
]

_FROZEN_X = -1.0e10
_CHUNK_BLOCKS = 16


class Status(IntEnum):
    HIT = 0
    TIMED_OUT = 1
    TUBE_EXIT = 2


def default_t_max(y_in: float, sigma: float) -> float:
    return (YSTAR - y_in) + 5.0 + 10.0 * sigma


@dataclass(frozen=True)
class FlowConfig:
    """Parameters of one Monte Carlo experiment.

    ``t_max = None`` selects :func:`default_t_max`; ``tube_h0 = None`` disables
    censoring of paths that leave the tube ``|y - y_det(t)| <= h0``.
    """

    x_in: float = -5.0
    y_in: float = -24.9
    x_fin: float = 30.0
    sigma: float = 0.1
    dt: float = 1e-4
    n_paths: int = 100_000
    seed: int = 20240601
    t_max: float | None = None
    tube_h0: float | None = None

    def __post_init__(self):
        for name in ("x_in", "y_in", "x_fin", "sigma", "dt"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if self.x_in * self.x_in + self.y_in <= 0.0:
            raise DomainError("x_in^2 + y_in must be positive")
        if not self.x_fin > self.x_in:
            raise DomainError("x_fin must exceed x_in")
        if not self.dt > 0.0:
            raise DomainError("dt must be positive")
        if self.sigma < 0.0:
            raise DomainError("sigma must be non-negative")
        if int(self.n_paths) < 1:
            raise DomainError("n_paths must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must fit in 64 unsigned bits")
        if self.tube_h0 is not None and not self.tube_h0 > 0.0:
            raise DomainError("tube_h0 must be positive when set")
        if self.t_max is None:
            object.__setattr__(self, "t_max", default_t_max(self.y_in, self.sigma))
        if not self.t_max > 0.0:
            raise DomainError("t_max must be positive")

    def check_horizon(self) -> None:
        """Raise if ``t_max`` leaves less than ``10 max(sigma, sqrt(dt))`` of slack."""
        need = travel_time(self.x_in, self.y_in, self.x_fin) + 10.0 * max(self.sigma, math.sqrt(self.dt))
        if self.t_max < need:
            raise DomainError(f"t_max = {self.t_max} is below travel time plus slack ({need})")

    def replace(self, **changes) -> "FlowConfig":
        if "sigma" in changes and "t_max" not in changes:
            changes["t_max"] = None
        return dataclasses.replace(self, **changes)

    @property
    def n_steps_max(self) -> int:
        return int(math.ceil(self.t_max / self.dt - 1e-9))


@dataclass(frozen=True)
class HitRecord:
    """Exit time and height of one path at one section."""

    tau: float
    y_tau: float
    status: Status


@dataclass(frozen=True)
class PathBatch:
    """Raw per-path results, shape ``(n_paths, n_sections)``."""

    tau: np.ndarray
    y_tau: np.ndarray
    status: np.ndarray
    x_fins: np.ndarray

    def checksum(self) -> str:
        h = hashlib.sha256()
        for a in (self.tau, self.y_tau, self.status):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class MomentSummary:
    """Moments of ``y_tau`` over the paths that hit the section."""

    n_hit: int
    n_censored: int
    n_timed_out: int
    n_tube_exit: int
    mean_ytau: float
    var_ytau: float
    third_central: float
    se_mean: float
    se_var: float
    timeout_warning: bool = False


@njit(nogil=True, cache=True)
def _run_block(keys, m, x_in, y_in, x_fins, sigma, dt, n_max, h0, tau, ytau, status):
    """Advance ``m`` lanes until each hits its last section, times out or leaves the tube."""
    L = keys.shape[0]
    ns = x_fins.shape[0]
    sq = sigma * math.sqrt(dt)
    bits = np.empty(L, np.uint64)
    fbits = bits.view(np.float64)
    zc = np.empty(L)
    zs = np.empty(L)
    x = np.empty(L)
    y = np.empty(L)
    xn = np.empty(L)
    yn = np.empty(L)
    act = np.zeros(L)
    nxt = np.zeros(L, np.int64)
    for i in range(m):
        x[i] = x_in
        y[i] = y_in
        act[i] = 1.0
    for i in range(m, L):
        x[i] = _FROZEN_X
        y[i] = 0.0
    use_tube = h0 > 0.0
    active = m
    thr = x_fins[0]
    k = 0
    while active > 0 and k < n_max:
        if k % 2 == 0:
            fill_normals(keys, k // 2, bits, fbits, zc, zs)
            z = zc
        else:
            z = zs
        for i in range(L):
            xx = x[i]
            yy = y[i]
            a = act[i]
            xn[i] = xx + (yy + xx * xx) * dt * a
            yn[i] = yy + (dt + sq * z[i]) * a
        events = 0
        for i in range(L):
            events += xn[i] >= thr
        if use_tube:
            ydet = y_in + (k + 1) * dt
            for i in range(L):
                events += abs(yn[i] - ydet) * act[i] > h0
        if events > 0:
            for i in range(m):
                if act[i] == 0.0:
                    continue
                while nxt[i] < ns and xn[i] >= x_fins[nxt[i]]:
                    j = nxt[i]
                    theta = (x_fins[j] - x[i]) / (xn[i] - x[i])
                    tau[i, j] = (k + theta) * dt
                    ytau[i, j] = y[i] + theta * (yn[i] - y[i])
                    status[i, j] = 0
                    nxt[i] += 1
                if nxt[i] < ns and use_tube and abs(yn[i] - (y_in + (k + 1) * dt)) > h0:
                    for j in range(nxt[i], ns):
                        tau[i, j] = (k + 1) * dt
                        ytau[i, j] = yn[i]
                        status[i, j] = 2
                    nxt[i] = ns
                if nxt[i] == ns:
                    act[i] = 0.0
                    xn[i] = _FROZEN_X
                    yn[i] = 0.0
                    active -= 1
            thr = np.inf
            for i in range(m):
                if act[i] != 0.0 and x_fins[nxt[i]] < thr:
                    thr = x_fins[nxt[i]]
        for i in range(L):
            x[i] = xn[i]
            y[i] = yn[i]
        k += 1
    for i in range(m):
        if act[i] != 0.0:
            for j in range(nxt[i], ns):
                tau[i, j] = k * dt
                ytau[i, j] = y[i]
                status[i, j] = 1


@njit(nogil=True, cache=True)
def _run_range(seed, start, stop, x_in, y_in, x_fins, sigma, dt, n_max, h0, tau, ytau, status):
    keys = np.empty(BLOCK, np.uint64)
    b = start
    while b < stop:
        m = min(BLOCK, stop - b)
        for i in range(BLOCK):
            keys[i] = path_key(seed, b + i)
        _run_block(
            keys, m, x_in, y_in, x_fins, sigma, dt, n_max, h0, tau[b - start :], ytau[b - start :], status[b - start :]
        )
        b += m


def _simulate(config, x_fins, indices_start, n, threads):
    x_fins = np.ascontiguousarray(np.sort(np.asarray(x_fins, dtype=float)))
    if x_fins.size == 0 or np.any(x_fins <= config.x_in):
        raise DomainError("every section must lie above x_in")
    tau = np.empty((n, x_fins.size))
    ytau = np.empty((n, x_fins.size))
    status = np.empty((n, x_fins.size), np.int8)
    h0 = -1.0 if config.tube_h0 is None else float(config.tube_h0)
    seed = np.uint64(int(config.seed))

    def work(s, e):
        _run_range(
            seed,
            indices_start + s,
            indices_start + e,
            float(config.x_in),
            float(config.y_in),
            x_fins,
            float(config.sigma),
            float(config.dt),
            config.n_steps_max,
            h0,
            tau[s:e],
            ytau[s:e],
            status[s:e],
        )

    run_ranges(n, BLOCK * _CHUNK_BLOCKS, work, threads)
    return PathBatch(tau=tau, y_tau=ytau, status=status, x_fins=x_fins)


def simulate_path(config: FlowConfig, path_index: int) -> HitRecord:
    """One Euler-Maruyama path; identical to the same index inside any batch."""
    batch = _simulate(config, [config.x_fin], int(path_index), 1, 1)
    return HitRecord(tau=float(batch.tau[0, 0]), y_tau=float(batch.y_tau[0, 0]), status=Status(int(batch.status[0, 0])))


def simulate_paths(config: FlowConfig, threads: int | None = None, x_fins=None) -> PathBatch:
    """All ``config.n_paths`` paths, recording the first hit of every section in ``x_fins``."""
    if x_fins is None:
        x_fins = [config.x_fin]
    return _simulate(config, x_fins, 0, int(config.n_paths), threads)


def summarize(y_tau, status, timeout_limit: float = 0.01) -> MomentSummary:
    """Moments of ``y_tau`` over ``status == HIT``; sums are exactly rounded."""
    y_tau = np.asarray(y_tau, dtype=float)
    status = np.asarray(status)
    hit = y_tau[status == Status.HIT]
    n = int(hit.size)
    n_to = int(np.count_nonzero(status == Status.TIMED_OUT))
    n_tube = int(np.count_nonzero(status == Status.TUBE_EXIT))
    total = int(status.size)
    flag = n_to > timeout_limit * total
    if flag:
        warnings.warn(f"{n_to} of {total} paths timed out", RuntimeWarning, stacklevel=2)
    if n == 0:
        nan = math.nan
        return MomentSummary(0, n_to + n_tube, n_to, n_tube, nan, nan, nan, nan, nan, flag)
    mean = math.fsum(hit) / n
    d = hit - mean
    d2 = d * d
    m2 = math.fsum(d2) / n
    m3 = math.fsum(d2 * d) / n
    m4 = math.fsum(d2 * d2) / n
    var = m2 * n / (n - 1) if n > 1 else 0.0
    se_mean = math.sqrt(var / n)
    if n > 3:
        se_var = math.sqrt(max(m4 - (n - 3) / (n - 1) * var * var, 0.0) / n)
    else:
        se_var = math.nan
    return MomentSummary(
        n_hit=n,
        n_censored=n_to + n_tube,
        n_timed_out=n_to,
        n_tube_exit=n_tube,
        mean_ytau=mean,
        var_ytau=var,
        third_central=m3,
        se_mean=se_mean,
        se_var=se_var,
        timeout_warning=flag,
    )


def run_monte_carlo(config: FlowConfig, threads: int | None = None) -> MomentSummary:
    """Simulate ``config.n_paths`` paths and summarise ``y_tau``."""
    if config.n_paths < 100:
        raise DomainError("run_monte_carlo needs at least 100 paths")
    batch = simulate_paths(config, threads)
    return summarize(batch.y_tau[:, 0], batch.status[:, 0])


def tube_exit_fraction(config: FlowConfig, threads: int | None = None) -> float:
    """Fraction of paths censored by the tube around the deterministic ``y``."""
    if config.tube_h0 is None:
        raise DomainError("tube_exit_fraction needs tube_h0")
    batch = simulate_paths(config, threads)
    return float(np.count_nonzero(batch.status[:, 0] == Status.TUBE_EXIT)) / batch.status.shape[0]


@dataclass(frozen=True)
class SweepRow:
    """Statistics of one ``(sigma, x_fin)`` cell next to the theory values."""

    sigma: float
    x_fin: float
    y_fin: float
    n_hit: int
    n_censored: int
    mean_ytau: float
    var_ytau: float
    L_D: float
    L_V: float
    M_D: float
    M_V: float
    se_mean: float
    se_var: float
    D_theory: float
    V_theory: float

    CSV_COLUMNS = (
        "sigma",
        "x_fin",
        "n_hit",
        "n_censored",
        "mean_ytau",
        "var_ytau",
        "L_D",
        "L_V",
        "M_D",
        "M_V",
        "se_mean",
        "se_var",
        "D_theory",
        "V_theory",
    )

    @property
    def se_M_D(self) -> float:
        return 8.0 / 3.0 * self.se_mean

    @property
    def se_M_V(self) -> float:
        return 2.0 / YSTAR * self.se_var

    def csv_values(self):
        return [getattr(self, c) for c in self.CSV_COLUMNS]


def normalized_statistics(mean, var, y_fin, sigma):
    """``L_D, L_V, M_D, M_V`` for one exit-height sample.

    ``M_D = (8/3)(E y_tau - y_fin)`` and ``M_V = (2/y*) Var y_tau`` both equal
    ``sigma^2`` to leading order, since ``D -> 3/4`` and ``V -> y*/2``.
    """
    shift = mean - y_fin
    if sigma > 0.0:
        L_D = 2.0 / sigma**2 * shift
        L_V = var / sigma**2
    else:
        L_D = L_V = math.nan
    return L_D, L_V, 8.0 / 3.0 * shift, 2.0 / YSTAR * var


def sweep_statistics(config_base: FlowConfig, sigma_list, x_fin_list=None, threads=None, theory=True, progress=None):
    """One :class:`SweepRow` per ``(sigma, x_fin)``.

    All sections of one sigma come from a single set of paths.  The theory
    columns are D and V along the slow solution through ``y_in``.
    """
    from .dv import dv_integral

    if x_fin_list is None:
        x_fin_list = [config_base.x_fin]
    x_fins = sorted(float(v) for v in x_fin_list)
    sigmas = [float(s) for s in sigma_list]
    if any(not s > 0.0 for s in sigmas):
        raise DomainError("every sigma must be positive")
    if config_base.n_paths < 100:
        raise DomainError("sweep_statistics needs at least 100 paths")
    y_fins = {xf: config_base.y_in + travel_time(config_base.x_in, config_base.y_in, xf) for xf in x_fins}
    dv = {}
    for xf in x_fins:
        if theory and config_base.y_in < YSTAR:
            r = dv_integral(config_base.y_in, xf)
            dv[xf] = (r.D, r.V)
        else:
            dv[xf] = (math.nan, math.nan)
    rows = []
    for s in sigmas:
        cfg = config_base.replace(sigma=s, x_fin=max(x_fins))
        batch = simulate_paths(cfg, threads, x_fins=x_fins)
        for j, xf in enumerate(batch.x_fins):
            xf = float(xf)
            summ = summarize(batch.y_tau[:, j], batch.status[:, j])
            L_D, L_V, M_D, M_V = normalized_statistics(summ.mean_ytau, summ.var_ytau, y_fins[xf], s)
            rows.append(
                SweepRow(
                    sigma=s,
                    x_fin=xf,
                    y_fin=y_fins[xf],
                    n_hit=summ.n_hit,
                    n_censored=summ.n_censored,
                    mean_ytau=summ.mean_ytau,
                    var_ytau=summ.var_ytau,
                    L_D=L_D,
                    L_V=L_V,
                    M_D=M_D,
                    M_V=M_V,
                    se_mean=summ.se_mean,
                    se_var=summ.se_var,
                    D_theory=dv[xf][0],
                    V_theory=dv[xf][1],
                )
            )
        if progress is not None:
            progress(s)
    return rows
