"""``foldnoise`` command line.

Exit codes: 0 success, 1 failed criterion or numerical failure, 2 usage error.
Every table is CSV with a header row; reports are JSON.  Floats are written
with ``repr`` so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from pathlib import Path

import click

from . import __version__
from .airy import YSTAR, airy_eval
from .config import ConfigError, format_config, load_config, resolve_config
from .errors import ConvergenceError, DivergenceError, DomainError
from .manifest import RunManifest

FIG4_XFINS = (-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 7.5, 10.0, 15.0, 20.0, 25.0, 30.0)
FIG4_SIGMAS = (0.25, 0.5, 1.0)
DESK_SCALE = {"n_paths": 100_000, "dt": 1e-4}
FULL_SCALE = {"n_paths": 300_000, "dt": 1e-5}


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (DomainError, ConfigError) as exc:
            raise click.UsageError(str(exc), ctx) from exc
        except (DivergenceError, ConvergenceError) as exc:
            raise click.ClickException(str(exc)) from exc


# -- output helpers ------------------------------------------------------------


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(out, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    _emit(out, buf.getvalue())


def _write_json(out, data):
    _emit(out, json.dumps(data, indent=2, sort_keys=True) + "\n")


def _emit(out, text):
    if out is None:
        click.echo(text, nl=False)
        return
    path = Path(out)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise click.FileError(str(path), hint=exc.strerror) from exc


def _manifest(out, config: dict, seed=None):
    return RunManifest.start(config, seed=seed) if out is not None else None


def _finish(manifest, outputs, target):
    if manifest is None:
        return
    for p in outputs:
        manifest.add_output(p)
    manifest.finish(target)


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}") from exc


def _grid(lo, hi, step):
    if not step > 0.0 or hi < lo:
        raise click.BadParameter("need lo <= hi and a positive step")
    n = int(math.floor((hi - lo) / step + 1e-9))
    pts = [lo + k * step for k in range(n + 1)]
    if hi - pts[-1] > 1e-9 * max(1.0, abs(hi)):
        pts.append(hi)
    return pts


# -- root ----------------------------------------------------------------------


@click.group(cls=_Group, context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="foldnoise")
def main():
    """Airy analytics and Monte Carlo for the noisy dynamic saddle-node bifurcation."""


# -- airy ----------------------------------------------------------------------


@main.group()
def airy():
    """Airy functions."""


@airy.command("table")
@click.option("--zmin", type=float, default=-12.0, show_default=True)
@click.option("--zmax", type=float, default=8.0, show_default=True)
@click.option("--step", type=float, default=0.1, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV path (stdout if omitted).")
def airy_table(zmin, zmax, step, out):
    """CSV columns z, Ai, Bi, dAi, dBi, wronskian_residual."""
    rows = []
    for z in _grid(zmin, zmax, step):
        q = airy_eval(z)
        rows.append((z, q.ai, q.bi, q.dai, q.dbi, q.wronskian - 1.0 / math.pi))
    _write_csv(out, ("z", "Ai", "Bi", "dAi", "dBi", "wronskian_residual"), rows)


# -- det -----------------------------------------------------------------------


@main.group()
def det():
    """Deterministic flow."""


@det.command("trajectory")
@click.option("--xin", type=float, default=-3.0, show_default=True)
@click.option("--yin", type=float, default=-2.0, show_default=True)
@click.option("--xfin", type=float, default=10.0, show_default=True)
@click.option("--step", type=float, default=0.01, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV path (stdout if omitted).")
def det_trajectory(xin, yin, xfin, step, out):
    """CSV columns t, x, y of the orbit from (xin, yin) to the section x = xfin."""
    from .flow import trajectory

    t, x, y = trajectory(xin, yin, xfin, step)
    _write_csv(out, ("t", "x", "y"), zip(t.tolist(), x.tolist(), y.tolist()))


# -- dv ------------------------------------------------------------------------


@main.group()
def dv():
    """Noise-correction coefficients D and V."""


@dv.command("table")
@click.option("--yin", type=float, default=-24.9, show_default=True)
@click.option("--xfin-list", default=",".join(str(v) for v in FIG4_XFINS), show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV path (stdout if omitted).")
def dv_table(yin, xfin_list, out):
    """CSV columns x_fin, D, V, D_limit, V_limit."""
    _write_csv(out, ("x_fin", "D", "V", "D_limit", "V_limit"), _dv_rows(yin, _float_list(xfin_list)))


def _dv_rows(y_in, x_fins):
    from .dv import dv_integral, dv_limit

    lim = dv_limit(y_in)
    rows = []
    for xf in x_fins:
        r = dv_integral(y_in, xf)
        rows.append((xf, r.D, r.V, lim.D, lim.V))
    return rows


def _parse_range(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise click.BadParameter("expected MIN:MAX:STEP (MAX may be 'ystar')")
    try:
        lo = float(parts[0])
        hi = YSTAR if parts[1].strip().lower() == "ystar" else float(parts[1])
        step = float(parts[2])
    except ValueError as exc:
        raise click.BadParameter(f"cannot parse range {text!r}") from exc
    return lo, hi, step


@dv.command("limit-curve")
@click.option("--yin-range", default="-6:ystar:0.02", show_default=True, help="MIN:MAX:STEP; MAX may be 'ystar'.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV path (stdout if omitted).")
def dv_limit_curve(yin_range, out):
    """CSV columns y_in, D_inf, V_inf."""
    _write_csv(out, ("y_in", "D_inf", "V_inf"), _limit_rows(*_parse_range(yin_range)))


def _limit_rows(lo, hi, step):
    from .dv import dv_limit

    rows = []
    for y in _grid(lo, hi, step):
        r = dv_limit(y)
        rows.append((y, r.D, r.V))
    return rows


# -- mc ------------------------------------------------------------------------


def _flow_options(fn):
    opts = [
        click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False), help="key=value file."),
        click.option("--xin", "x_in", type=float, help="Initial x [-5]."),
        click.option("--yin", "y_in", type=float, help="Initial y [-24.9]."),
        click.option("--xfin", "x_fin", type=float, help="Section x = xfin [30]."),
        click.option("--dt", type=float, help="Euler-Maruyama step [1e-4]."),
        click.option("--paths", "n_paths", type=int, help="Number of paths [100000]."),
        click.option("--seed", type=int, help="Master seed [20240601]."),
        click.option("--t-max", "t_max", type=float, help="Time horizon [(y* - yin) + 5 + 10 sigma]."),
        click.option("--tube-h0", "tube_h0", type=float, help="Censor paths leaving the tube of this width."),
        click.option("--threads", type=int, help="Worker threads; FOLDNOISE_THREADS overrides."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _resolve(config_file, **flags):
    file_values = load_config(config_file) if config_file else {}
    return resolve_config(file_values, flags)


@main.group()
def mc():
    """Euler-Maruyama Monte Carlo of the exit height."""


_MC_HELP = (
    "CSV columns sigma, x_fin, n_hit, n_censored, mean_ytau, var_ytau, L_D, L_V, M_D, M_V, "
    "se_mean, se_var, D_theory, V_theory.  With --out, a manifest is written to OUT.manifest.json."
)


def _run_sweep(cfg, threads, sigmas, x_fins, out, no_theory=False):
    from .sde import SweepRow, sweep_statistics

    cfg.check_horizon()
    man = _manifest(out, {**_config_dict(cfg), "threads": threads, "sigma_list": sigmas, "x_fin_list": x_fins}, cfg.seed)
    rows = sweep_statistics(cfg, sigmas, x_fins, threads=threads, theory=not no_theory)
    _write_csv(out, SweepRow.CSV_COLUMNS, (r.csv_values() for r in rows))
    if out is not None:
        _finish(man, [out], Path(str(out) + ".manifest.json"))
    return rows


def _config_dict(cfg):
    import dataclasses

    return dataclasses.asdict(cfg)


@mc.command("run", help="Single noise level.  " + _MC_HELP)
@_flow_options
@click.option("--sigma", type=float, help="Noise level [0.1].")
@click.option("--no-theory", is_flag=True, help="Skip the D, V quadrature columns.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV path (stdout if omitted).")
def mc_run(config_file, out, no_theory, **flags):
    cfg, threads = _resolve(config_file, **flags)
    _run_sweep(cfg, threads, [cfg.sigma], [cfg.x_fin], out, no_theory)


@mc.command("sweep", help="Grid of noise levels and sections from one path set per sigma.  " + _MC_HELP)
@_flow_options
@click.option("--sigma-list", default="0.1,0.25,0.5,1", show_default=True)
@click.option("--xfin-list", default=None, help="Comma-separated sections [--xfin].")
@click.option("--no-theory", is_flag=True, help="Skip the D, V quadrature columns.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV path (stdout if omitted).")
def mc_sweep(config_file, sigma_list, xfin_list, out, no_theory, **flags):
    cfg, threads = _resolve(config_file, **flags)
    x_fins = _float_list(xfin_list) if xfin_list else [cfg.x_fin]
    _run_sweep(cfg, threads, _float_list(sigma_list), x_fins, out, no_theory)


# -- fpt -----------------------------------------------------------------------


@main.group()
def fpt():
    """First passage of integrated Brownian motion."""


@fpt.command("density")
@click.option("--delta", type=float, default=0.1, show_default=True)
@click.option("--sigma", type=float, default=0.1, show_default=True)
@click.option("--grid-n", type=int, default=400, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV path (stdout if omitted).")
def fpt_density(delta, sigma, grid_n, out):
    """CSV columns t, phi, b0, b, psi for the linear boundary of width delta."""
    from .fpt import linear_boundary, solve_b

    g = solve_b(linear_boundary(delta), sigma, grid_n)
    rows = zip(g.t_nodes.tolist(), g.phi_vals.tolist(), g.b0_vals.tolist(), g.b_vals.tolist(), g.psi_vals.tolist())
    _write_csv(out, ("t", "phi", "b0", "b", "psi"), rows)


@fpt.command("validate")
@click.option("--delta", type=float, default=0.1, show_default=True)
@click.option("--sigma", type=float, default=0.1, show_default=True)
@click.option("--paths", type=int, default=100_000, show_default=True)
@click.option("--dt", type=float, default=1e-4, show_default=True)
@click.option("--grid-n", type=int, default=400, show_default=True)
@click.option("--seed", type=int, default=20240601, show_default=True)
@click.option("--threads", type=int, default=None, help="Worker threads; FOLDNOISE_THREADS overrides.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="JSON path (stdout if omitted).")
def fpt_validate(delta, sigma, paths, dt, grid_n, seed, threads, out):
    """JSON with quadrature moments, exact-step MC moments and the KS distance."""
    from .acceptance import fpt_report

    rep = fpt_report(delta, sigma, paths, dt, grid_n, seed, threads)
    _write_json(out, rep)


@fpt.command("bridge")
@click.option("--x0", type=float, default=-2.0, show_default=True)
@click.option("--y0", type=float, default=-3.5, show_default=True)
@click.option("--delta", type=float, default=0.05, show_default=True)
@click.option("--sigma", type=float, default=0.02, show_default=True)
@click.option("--paths", type=int, default=100_000, show_default=True)
@click.option("--dt", type=float, default=2e-6, show_default=True)
@click.option("--seed", type=int, default=20240601, show_default=True)
@click.option("--threads", type=int, default=None, help="Worker threads; FOLDNOISE_THREADS overrides.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="JSON path (stdout if omitted).")
def fpt_bridge(x0, y0, delta, sigma, paths, dt, seed, threads, out):
    """JSON with predicted and simulated moments of y_tau - y0 - T across one thin slice."""
    from .acceptance import bridge_report

    _write_json(out, bridge_report(x0, y0, delta, sigma, paths, dt, seed, threads))


# -- figures -------------------------------------------------------------------


@main.command("figures")
@click.argument("preset", type=click.Choice(["fig2", "fig3", "fig4", "fig5"]))
@click.option("--out-dir", type=click.Path(file_okay=False), default="figures", show_default=True)
@click.option("--paper-scale", is_flag=True, help="Use n = 300000 paths and dt = 1e-5.")
@click.option("--paths", type=int, default=None, help="Override the number of paths.")
@click.option("--dt", type=float, default=None, help="Override the time step.")
@click.option("--seed", type=int, default=20240601, show_default=True)
@click.option("--threads", type=int, default=None, help="Worker threads; FOLDNOISE_THREADS overrides.")
def figures(preset, out_dir, paper_scale, paths, dt, seed, threads):
    """Data files for one figure preset.

    \b
    fig2: fig2_orbit.csv (t, x, y) from (-3, -2); fig2_slow.csv (t, x, y) of the
          slow solution; fig2_manifold.csv (x, y) with y = -x^2; fig2_ystar.csv.
    fig3: fig3.csv (y_in, D_inf, V_inf) over [-6, y*] in steps of 0.02.
    fig4: fig4_theory.csv (x_fin, D, V, D_limit, V_limit) and fig4_mc.csv with
          the mc columns for sigma in {0.25, 0.5, 1}.
    fig5: fig5.csv with the mc columns for 20 sigma in [0.05, 1] at x_fin = 30.
    """
    out_dir = Path(out_dir)
    scale = dict(FULL_SCALE if paper_scale else DESK_SCALE)
    if paths is not None:
        scale["n_paths"] = paths
    if dt is not None:
        scale["dt"] = dt
    written = []

    def put(name, header, rows):
        p = out_dir / name
        _write_csv(p, header, rows)
        written.append(p)

    man = RunManifest.start({"preset": preset, **scale, "seed": seed, "threads": threads}, seed=seed)
    if preset == "fig2":
        from .flow import slow_solution, trajectory

        t, x, y = trajectory(-3.0, -2.0, 10.0, 0.01)
        put("fig2_orbit.csv", ("t", "x", "y"), zip(t.tolist(), x.tolist(), y.tolist()))
        sol = slow_solution(-2.0)
        ys = [-2.0 + 0.01 * k for k in range(int((YSTAR + 2.0) / 0.01) + 1)]
        xs = []
        for yv in ys:
            xv = sol.x_at_y(yv)
            if xv > 10.0:
                break
            xs.append((yv + 2.0, xv, yv))
        put("fig2_slow.csv", ("t", "x", "y"), xs)
        put("fig2_manifold.csv", ("x", "y"), ((xv, -xv * xv) for xv in _grid(-3.0, 0.0, 0.01)))
        put("fig2_ystar.csv", ("ystar",), [(YSTAR,)])
    elif preset == "fig3":
        put("fig3.csv", ("y_in", "D_inf", "V_inf"), _limit_rows(-6.0, YSTAR, 0.02))
    elif preset == "fig4":
        from .sde import FlowConfig, SweepRow, sweep_statistics

        dense = _grid(-4.0, 30.0, 0.25)
        put("fig4_theory.csv", ("x_fin", "D", "V", "D_limit", "V_limit"), _dv_rows(-24.9, dense))
        cfg = FlowConfig(dt=scale["dt"], n_paths=scale["n_paths"], seed=seed)
        rows = sweep_statistics(cfg, FIG4_SIGMAS, FIG4_XFINS, threads=threads)
        put("fig4_mc.csv", SweepRow.CSV_COLUMNS, (r.csv_values() for r in rows))
    else:
        from .acceptance import fig5_sweep
        from .sde import SweepRow

        rows = fig5_sweep(scale["n_paths"], scale["dt"], seed, threads)
        put("fig5.csv", SweepRow.CSV_COLUMNS, (r.csv_values() for r in rows))
    _finish(man, written, out_dir / f"{preset}_manifest.json")
    for p in written:
        click.echo(str(p))


# -- validate ------------------------------------------------------------------


@main.command("validate")
@click.argument("level", type=click.Choice(["quick", "full"]), default="quick")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="JSON report path (stdout if omitted).")
@click.option("--threads", type=int, default=None, help="Worker threads; FOLDNOISE_THREADS overrides.")
@click.option("--perturb-ystar", type=float, default=0.0, show_default=True, help="Offset added to y* in criteria 1 and 3.")
def validate(level, out, threads, perturb_ystar):
    """Run the acceptance suite; exit 1 if any criterion fails.

    quick runs criteria 1-4, 7 and 9; full adds the Monte Carlo sweep (5, 6)
    and the slice bridge (8).
    """
    from .acceptance import run_validation

    ystar = YSTAR + perturb_ystar if perturb_ystar else None
    results = run_validation(level, threads=threads, ystar=ystar, progress=lambda r: click.echo(r.line(), err=True))
    report = {
        "level": level,
        "passed": all(r.passed for r in results),
        "ystar_offset": perturb_ystar,
        "criteria": [r.as_dict() for r in results],
    }
    _write_json(out, report)
    if not report["passed"]:
        sys.exit(1)


# -- config --------------------------------------------------------------------


@main.group("config")
def config_cmd():
    """Inspect run configuration files."""


@config_cmd.command("print")
@_flow_options
@click.option("--sigma", type=float, help="Noise level [0.1].")
def config_print(config_file, **flags):
    """Print the effective configuration: defaults, then the file, then flags."""
    cfg, threads = _resolve(config_file, **flags)
    click.echo(format_config(cfg, threads), nl=False)


@config_cmd.command("load")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
def config_load(path):
    """Check a config file and print the configuration it resolves to."""
    cfg, threads = resolve_config(load_config(path))
    click.echo(format_config(cfg, threads), nl=False)


if __name__ == "__main__":  # pragma: no cover
    main()
