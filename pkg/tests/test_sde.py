import math

import numpy as np
import pytest
from scipy import stats

from foldnoise.airy import YSTAR
from foldnoise.dv import dv_integral
from foldnoise.errors import DomainError
from foldnoise.flow import travel_time
from foldnoise.sde import (
    FlowConfig,
    Status,
    default_t_max,
    normalized_statistics,
    run_monte_carlo,
    simulate_path,
    simulate_paths,
    summarize,
    sweep_statistics,
    tube_exit_fraction,
)

Y_FIN = -24.9 + travel_time(-5.0, -24.9, 30.0)


def test_config_defaults_and_validation():
    c = FlowConfig()
    assert (c.x_in, c.y_in, c.x_fin, c.dt, c.n_paths, c.tube_h0) == (-5.0, -24.9, 30.0, 1e-4, 100_000, None)
    assert c.t_max == default_t_max(-24.9, 0.1) == pytest.approx(YSTAR + 24.9 + 5.0 + 1.0)
    c.check_horizon()
    for bad in (dict(x_in=-1.0, y_in=-2.0), dict(x_fin=-6.0), dict(dt=0.0), dict(sigma=-0.1), dict(n_paths=0), dict(tube_h0=0.0)):
        with pytest.raises(DomainError):
            FlowConfig(**bad)
    with pytest.raises(DomainError):
        FlowConfig(t_max=5.0).check_horizon()


def test_replace_resets_default_horizon():
    c = FlowConfig(sigma=0.1).replace(sigma=1.0)
    assert c.t_max == default_t_max(-24.9, 1.0)
    assert FlowConfig(t_max=50.0).replace(dt=1e-3).t_max == 50.0


def test_deterministic_limit():
    cfg = FlowConfig(sigma=0.0, dt=1e-5)
    rec = simulate_path(cfg, 0)
    assert rec.status == Status.HIT
    assert abs(rec.y_tau - Y_FIN) <= 1e-3
    assert rec.tau <= cfg.t_max


def test_single_path_reproducible():
    cfg = FlowConfig(sigma=0.25, dt=1e-3)
    a = simulate_path(cfg, 17)
    assert a == simulate_path(cfg, 17)
    batch = simulate_paths(cfg.replace(n_paths=40, sigma=0.25, t_max=cfg.t_max), threads=1)
    assert (batch.tau[17, 0], batch.y_tau[17, 0]) == (a.tau, a.y_tau)


def test_thread_count_independence(monkeypatch):
    monkeypatch.delenv("FOLDNOISE_THREADS", raising=False)
    cfg = FlowConfig(sigma=0.3, dt=1e-3, n_paths=3000)
    a = simulate_paths(cfg, threads=1)
    b = simulate_paths(cfg, threads=8)
    assert a.checksum() == b.checksum()
    sa = summarize(a.y_tau[:, 0], a.status[:, 0])
    sb = summarize(b.y_tau[:, 0], b.status[:, 0])
    assert sa == sb


def test_env_var_overrides_threads(monkeypatch):
    from foldnoise.parallel import resolve_threads

    monkeypatch.setenv("FOLDNOISE_THREADS", "3")
    assert resolve_threads(8) == 3
    monkeypatch.setenv("FOLDNOISE_THREADS", "x")
    with pytest.raises(DomainError):
        resolve_threads(1)


def test_noise_raises_mean_exit_height():
    cfg = FlowConfig(sigma=0.5, n_paths=2000)
    s = run_monte_carlo(cfg)
    D = dv_integral(-24.9, 30.0).D
    assert s.mean_ytau > Y_FIN + 3.0 * s.se_mean
    assert s.mean_ytau - Y_FIN == pytest.approx(D * 0.25 / 2.0, abs=4.0 * s.se_mean)


def test_zero_noise_summary():
    s = run_monte_carlo(FlowConfig(sigma=0.0, n_paths=100, dt=1e-4))
    assert s.var_ytau == 0.0
    assert s.mean_ytau == pytest.approx(Y_FIN, abs=1e-2)
    assert s.n_hit == 100 and s.n_censored == 0


def test_too_few_paths():
    with pytest.raises(DomainError):
        run_monte_carlo(FlowConfig(n_paths=99))


def test_hits_respect_horizon_and_section():
    cfg = FlowConfig(sigma=1.0, dt=1e-3, n_paths=500)
    b = simulate_paths(cfg)
    hit = b.status[:, 0] == Status.HIT
    assert np.all(b.tau[hit, 0] <= cfg.t_max)
    assert np.all(b.tau[hit, 0] > 0.0)


def test_timeout_flag():
    cfg = FlowConfig(sigma=0.2, dt=1e-3, n_paths=200, t_max=20.0)
    b = simulate_paths(cfg)
    assert np.all(b.status[:, 0] == Status.TIMED_OUT)
    with pytest.warns(RuntimeWarning):
        s = summarize(b.y_tau[:, 0], b.status[:, 0])
    assert s.timeout_warning and s.n_hit == 0 and math.isnan(s.mean_ytau)


def test_summary_moments():
    rng = np.random.default_rng(0)
    y = rng.normal(1.0, 2.0, 5000)
    status = np.zeros(5000, dtype=np.int8)
    status[:10] = Status.TUBE_EXIT
    s = summarize(y, status)
    x = y[10:]
    assert s.n_hit == 4990 and s.n_censored == 10 and s.n_tube_exit == 10
    assert s.mean_ytau == pytest.approx(x.mean(), rel=1e-14)
    assert s.var_ytau == pytest.approx(x.var(ddof=1), rel=1e-12)
    assert s.se_mean == pytest.approx(math.sqrt(s.var_ytau / s.n_hit), rel=1e-15)
    assert s.third_central == pytest.approx(np.mean((x - x.mean()) ** 3), rel=1e-9, abs=1e-12)
    assert not s.timeout_warning


def test_normalized_statistics():
    L_D, L_V, M_D, M_V = normalized_statistics(1.3, 0.02, 1.0, 0.1)
    assert L_D == pytest.approx(2.0 / 0.01 * 0.3)
    assert L_V == pytest.approx(2.0)
    assert M_D == pytest.approx(8.0 / 3.0 * 0.3)
    assert M_V == pytest.approx(2.0 / YSTAR * 0.02)


def test_tube_fraction():
    short = FlowConfig(x_in=-3.0, y_in=-2.0, x_fin=5.0, sigma=0.05, tube_h0=1.0, n_paths=10_000, dt=1e-3)
    assert tube_exit_fraction(short) == 0.0
    # long orbit: P(sup |sigma W_t| > h0 for t <= T) is about 4 P(N > h0 / (sigma sqrt T))
    long = FlowConfig(sigma=0.05, tube_h0=1.0, n_paths=10_000, dt=1e-3)
    p = 4.0 * stats.norm.sf(1.0 / (0.05 * math.sqrt(travel_time(-5.0, -24.9, 30.0))))
    assert tube_exit_fraction(long) <= p + 3.0 * math.sqrt(p / 10_000)
    assert tube_exit_fraction(FlowConfig(sigma=0.0, tube_h0=0.5, n_paths=200, dt=1e-3)) == 0.0
    assert tube_exit_fraction(FlowConfig(sigma=1.0, tube_h0=0.5, n_paths=500, dt=1e-3)) > 0.0
    with pytest.raises(DomainError):
        tube_exit_fraction(FlowConfig(n_paths=200))


def test_sweep_rows_and_sections():
    base = FlowConfig(n_paths=400, dt=1e-3)
    rows = sweep_statistics(base, [0.25, 0.5], [5.0, 30.0])
    assert [(r.sigma, r.x_fin) for r in rows] == [(0.25, 5.0), (0.25, 30.0), (0.5, 5.0), (0.5, 30.0)]
    one = simulate_paths(base.replace(sigma=0.5, x_fin=5.0))
    r = rows[2]
    s = summarize(one.y_tau[:, 0], one.status[:, 0])
    assert r.mean_ytau == s.mean_ytau and r.var_ytau == s.var_ytau
    assert rows[1].D_theory == dv_integral(-24.9, 30.0).D
    assert len(r.csv_values()) == 14
    with pytest.raises(DomainError):
        sweep_statistics(base, [0.0])


def test_sweep_tracks_theory_curves():
    rows = sweep_statistics(FlowConfig(n_paths=2000), [0.25], [5.0, 10.0, 30.0])
    for r in rows:
        assert abs(r.L_D - r.D_theory) <= 0.1 + 3.0 * 2.0 / 0.0625 * r.se_mean
        assert abs(r.L_V - r.V_theory) <= 0.1 + 3.0 / 0.0625 * r.se_var


@pytest.mark.slow
def test_small_noise_laws():
    D = dv_integral(-24.9, 30.0)
    rows = []
    for s in (0.05, 0.1, 0.2):
        m = run_monte_carlo(FlowConfig(sigma=s, n_paths=10_000))
        rows.append((s, m))
    # fit C once from the largest sigma, then check the bound everywhere
    s_max, m_max = rows[-1]
    C = abs(m_max.mean_ytau - Y_FIN - s_max**2 * D.D / 2.0) / s_max**3
    Cv = abs(m_max.var_ytau - s_max**2 * D.V) / s_max**3
    print(f"fitted C = {C:.4g}, C' = {Cv:.4g}")
    for s, m in rows:
        assert abs(m.mean_ytau - Y_FIN - s**2 * D.D / 2.0) <= 3.0 * m.se_mean + C * s**3
        assert abs(m.var_ytau - s**2 * D.V) <= 3.0 * m.se_var + Cv * s**3


@pytest.mark.slow
def test_step_refinement():
    a = run_monte_carlo(FlowConfig(sigma=0.25, n_paths=10_000, dt=1e-4))
    b = run_monte_carlo(FlowConfig(sigma=0.25, n_paths=10_000, dt=5e-5))
    # independent streams: compare against the SE of the difference
    assert abs(a.mean_ytau - b.mean_ytau) <= 3.0 * math.hypot(a.se_mean, b.se_mean)
