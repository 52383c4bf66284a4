"""``frap-ident`` command line interface.

Exit status: 0 on success, 1 on invalid input or usage, 2 on runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from pathlib import Path
from types import SimpleNamespace
from typing import Optional, Sequence

import numpy as np

from . import io, plots
from .core import PARAM_NAMES, FrapError, load_config, parse_params
from .estimation import (
    estimate_sigma,
    fit,
    generate_synthetic,
    read_curve_csv,
    write_curve_csv,
)
from .likelihood import classify, default_grid, profile_1d, profile_2d
from .pipeline import PipelineError, fit_options, run_pipeline, surface_grids
from .relationships import (
    default_field_axes,
    lse_grid,
    s_profile,
    slope_field,
    subset_profile,
    tau_curve,
    tau_point,
    trace_contour,
    trace_lse,
)
from .solver import SpotResponse, simulate_frap

logger = logging.getLogger("frapident")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def num(x: float) -> str:
    return f"{float(x):.12g}"


def _add_globals(p: argparse.ArgumentParser, sub: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if sub else (lambda v: v)
    g = p.add_argument_group("global options")
    g.add_argument("--config", default=d(None), help="JSON config (default: bundled)")
    g.add_argument("--region", type=int, choices=(1, 2, 3), default=d(1))
    g.add_argument("--out", default=d("out"), help="output directory")
    g.add_argument("--seed", type=int, default=d(0))
    g.add_argument("--threads", type=int, default=d(None))
    g.add_argument("--grid-n", type=int, default=d(None), help="override grid points per side")
    g.add_argument("--domain-l", type=float, default=d(None), help="override domain side (um)")
    g.add_argument("--preset", default=d("desk"), help="resolution preset from the config")
    g.add_argument("-v", "--verbose", action="store_true", default=d(False))


def _data_arg(p):
    p.add_argument("--data", default="synthetic", help="'synthetic' or a time_s,intensity CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="frap-ident", description="FRAP model simulation and identifiability.")
    _add_globals(parser, sub=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        _add_globals(p, sub=True)
        return p

    p = cmd("simulate", "simulate a recovery curve")
    p.add_argument("--params", type=float, nargs=4, metavar=("C", "D", "B1", "B2"))
    p.add_argument("--noise", type=float, default=0.0, help="noise sd in curve units")
    p.add_argument("--method", choices=("exact", "etdrk4"), default="exact")
    p.add_argument("--dt", type=float, default=0.05)

    p = cmd("fit", "least-squares fit")
    _data_arg(p)
    p.add_argument("--guess", type=float, nargs=4, metavar=("C", "D", "B1", "B2"))

    p = cmd("sigma", "noise estimate from residuals")
    _data_arg(p)
    p.add_argument("--params", type=float, nargs=4, metavar=("C", "D", "B1", "B2"))

    p = cmd("profile", "1D profile likelihood")
    _data_arg(p)
    p.add_argument("--param", choices=PARAM_NAMES, required=True)
    p.add_argument("--n", type=int, default=None)

    p = cmd("profile2d", "(c, D) likelihood surface")
    _data_arg(p)
    p.add_argument("--n", type=int, default=None)

    p = cmd("subset", "optimal beta2 against fixed beta1")
    _data_arg(p)
    p.add_argument("--n", type=int, default=None)

    p = cmd("lse-grid", "squared error over the rate plane")
    _data_arg(p)
    p.add_argument("--n", type=int, default=15)

    p = cmd("slope-field", "subset-profile slopes over the rate plane")
    p.add_argument("--n", type=int, default=None)

    p = cmd("tau", "transverse curve in the rate plane")
    p.add_argument("--s-min", type=float, default=None)
    p.add_argument("--s-max", type=float, default=None)
    p.add_argument("--n", type=int, default=None)

    p = cmd("s-profile", "profile likelihood along the tau curve")
    _data_arg(p)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--fix-cd", action="store_true", help="hold c and D at baseline")

    p = cmd("trace", "follow the slope field from a start point")
    _data_arg(p)
    p.add_argument("--field", help="slope-field CSV (computed when omitted)")
    start = p.add_mutually_exclusive_group(required=True)
    start.add_argument("--s", type=float, help="start at tau(s)")
    start.add_argument("--start", type=float, nargs=2, metavar=("LOG_B1", "LOG_B2"))

    p = cmd("pipeline", "steps 1-4 with report")
    _data_arg(p)
    p.add_argument("--no-plot", action="store_true")

    p = cmd("plot", "render an artifact CSV as SVG")
    p.add_argument("csv", help="any CSV written by this tool")
    p.add_argument("--svg", default=None, help="output path (default: alongside)")
    return parser


# --- shared setup --------------------------------------------------------------

def resolve_threads(value: Optional[int]) -> int:
    if value is None:
        env = os.environ.get("FRAP_IDENT_THREADS")
        if env is None or env == "":
            return 1
        try:
            value = int(env)
        except ValueError:
            raise FrapError(f"FRAP_IDENT_THREADS must be an integer, got {env!r}") from None
    if value < 1:
        raise FrapError(f"thread count must be >= 1, got {value}")
    return value


def _context(args):
    config = load_config(args.config)
    preset = config.preset(args.preset)
    changes = {}
    if args.grid_n is not None:
        changes["grid_n"] = args.grid_n
    if args.domain_l is not None:
        changes["domain_l"] = args.domain_l
    preset = dataclasses.replace(preset, **changes)
    grid = preset.grid()
    config.bleach.check(grid)
    threads = resolve_threads(args.threads)
    return SimpleNamespace(
        config=config, preset=preset, grid=grid, threads=threads,
        region=config.region(args.region),
        response=SpotResponse(grid, config.bleach, config.u_fraction),
        opts=fit_options(preset, args.seed, threads),
        sigma=config.curve_sigma(args.region),
        out=Path(args.out),
    )


def _data(args, ctx):
    if getattr(args, "data", "synthetic") == "synthetic":
        return ctx.response(ctx.region.baseline, ctx.config.times())
    return read_curve_csv(args.data)


def _report(path: Path) -> None:
    print(f"wrote {path}")


# --- subcommands ----------------------------------------------------------------

def cmd_simulate(args, ctx) -> int:
    p = parse_params(args.params) if args.params else ctx.region.baseline
    times = ctx.config.times()
    if args.method == "etdrk4":
        curve = simulate_frap(p, ctx.grid, ctx.config.bleach, times,
                              u_fraction=ctx.config.u_fraction, method="etdrk4", dt=args.dt)
        if args.noise:
            rng = np.random.default_rng(args.seed)
            curve = curve.with_values(curve.values + rng.normal(0.0, args.noise, len(curve)))
    else:
        curve = generate_synthetic(p, ctx.grid, ctx.config.bleach, times, sigma=args.noise,
                                   seed=args.seed, u_fraction=ctx.config.u_fraction)
    _report(write_curve_csv(curve, ctx.out / f"region{args.region}_synthetic.csv"))
    return EXIT_OK


def cmd_fit(args, ctx) -> int:
    data = _data(args, ctx)
    guess = parse_params(args.guess) if args.guess else ctx.region.baseline
    res = fit(data, guess, ctx.response, opts=ctx.opts)
    for name in PARAM_NAMES:
        print(f"{name}\t{num(getattr(res.params, name))}")
    print(f"sse\t{num(res.sse)}")
    print(f"sigma\t{num(math.sqrt(res.sse / len(data)))}")
    print(f"evaluations\t{res.n_evals}")
    print(f"converged\t{str(res.converged).lower()}")
    path = ctx.out / f"region{args.region}_fit.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({**res.params.as_dict(), "sse": res.sse,
                                "converged": res.converged}, indent=2, sort_keys=True) + "\n")
    _report(path)
    return EXIT_OK


def cmd_sigma(args, ctx) -> int:
    data = _data(args, ctx)
    p = parse_params(args.params) if args.params else ctx.region.baseline
    s = estimate_sigma(data, ctx.response(p, data.times))
    print(f"sigma\t{num(s)}")
    print(f"sigma_spot_integral\t{num(s * ctx.config.sigma_scale())}")
    return EXIT_OK


def cmd_profile(args, ctx) -> int:
    data = _data(args, ctx)
    base = ctx.region.baseline
    grid = default_grid(args.param, base, args.n or ctx.preset.profile_points)
    prof = profile_1d(data, ctx.sigma, args.param, grid, ctx.response, base, opts=ctx.opts,
                      delta_alpha=ctx.config.delta_alpha, flatness_tol=ctx.config.flatness_tol)
    print(f"{args.param}\t{prof.classification.value}\t"
          f"argmax={num(prof.values[prof.argmax])}\tthreshold={num(prof.threshold)}")
    _report(io.write_profile_csv(prof, ctx.out / f"region{args.region}_profile_{args.param}.csv"))
    return EXIT_OK


def cmd_profile2d(args, ctx) -> int:
    data = _data(args, ctx)
    c_grid, D_grid = surface_grids(ctx.region.baseline, args.n or ctx.preset.surface_points)
    surf = profile_2d(data, ctx.sigma, c_grid, D_grid, ctx.response, ctx.region.baseline,
                      opts=ctx.opts, delta_alpha=ctx.config.delta_alpha)
    (clo, chi), (dlo, dhi) = surf.argmax_cell()
    print(f"argmax_cell\tc=[{num(clo)}, {num(chi)}]\tD=[{num(dlo)}, {num(dhi)}]")
    _report(io.write_surface_csv(surf, ctx.out / f"region{args.region}_surface.csv"))
    return EXIT_OK


def cmd_subset(args, ctx) -> int:
    data = _data(args, ctx)
    grid = default_grid("beta1", ctx.region.baseline, args.n or ctx.preset.profile_points)
    sp = subset_profile(data, ctx.sigma, ctx.region, grid, ctx.response, opts=ctx.opts)
    path = ctx.out / f"region{args.region}_subset.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("log10_beta1,log10_beta2,sse,loglik\n")
        for b1, b2, e, ll in zip(sp.beta1_grid, sp.beta2_opt, sp.sse, sp.loglik):
            fh.write(f"{io.fmt(math.log10(b1))},{io.fmt(math.log10(b2))},"
                     f"{io.fmt(e)},{io.fmt(ll)}\n")
    _report(path)
    return EXIT_OK


def cmd_lse_grid(args, ctx) -> int:
    data = _data(args, ctx)
    ax1, ax2 = default_field_axes(ctx.region.baseline, args.n)
    lse = lse_grid(data, ctx.region, 10.0 ** ax1, 10.0 ** ax2, ctx.response, ctx.threads)
    _report(io.write_lse_csv(ax1, ax2, lse, ctx.out / f"region{args.region}_lse_grid.csv"))
    return EXIT_OK


def _field(args, ctx, n=None):
    ax1, ax2 = default_field_axes(ctx.region.baseline, n or ctx.preset.field_nodes)
    return slope_field(ctx.region, ax1, ax2, ctx.response, ctx.config.times(),
                       h=ctx.config.slope_h, opts=ctx.opts, threads=ctx.threads)


def cmd_slope_field(args, ctx) -> int:
    field_ = _field(args, ctx, args.n)
    print(f"flagged\t{int(field_.flag.sum())}")
    _report(io.write_field_csv(field_, ctx.out / f"region{args.region}_slope_field.csv"))
    return EXIT_OK


def cmd_tau(args) -> int:
    config = load_config(args.config)
    lo = config.s_range[0] if args.s_min is None else args.s_min
    hi = config.s_range[1] if args.s_max is None else args.s_max
    n = args.n or config.preset(args.preset).s_points
    if n < 2 or not hi > lo:
        raise FrapError("tau needs --n >= 2 and --s-max > --s-min")
    tau = tau_curve(np.linspace(lo, hi, n), config.tau_offset)
    _report(io.write_tau_csv(tau, Path(args.out) / "tau.csv"))
    return EXIT_OK


def cmd_s_profile(args, ctx) -> int:
    data = _data(args, ctx)
    lo, hi = ctx.config.s_range
    s_grid = np.linspace(lo, hi, args.n or ctx.preset.s_points)
    prof = s_profile(data, ctx.sigma, ctx.region, s_grid, ctx.response,
                     profile_cD=not args.fix_cd, offset=ctx.config.tau_offset, opts=ctx.opts,
                     delta_alpha=ctx.config.delta_alpha, flatness_tol=ctx.config.flatness_tol)
    near = prof.near_max(ctx.config.flatness_tol)
    print(f"s_star\t{num(s_grid[prof.argmax])}")
    print(f"unique\t{str(near.size == 1).lower()}")
    print(f"near_max\t{' '.join(num(s_grid[k]) for k in near)}")
    _report(io.write_profile_csv(prof, ctx.out / f"region{args.region}_profile_s.csv"))
    return EXIT_OK


def cmd_trace(args, ctx) -> int:
    data = _data(args, ctx)
    field_ = io.read_field_csv(args.field) if args.field else _field(args, ctx)
    start = tau_point(args.s, ctx.config.tau_offset) if args.s is not None else tuple(args.start)
    tr = trace_contour(field_, start, step=ctx.config.trace_step)
    trace_lse(tr, data, ctx.region.baseline, ctx.response)
    P = (math.log10(ctx.region.baseline.beta1), math.log10(ctx.region.baseline.beta2))
    print(f"points\t{len(tr.points)}")
    print(f"distance_to_P\t{num(tr.distance_to(P))}")
    _report(io.write_trace_csv(tr, ctx.out / f"region{args.region}_trace.csv"))
    return EXIT_OK


def cmd_pipeline(args, ctx) -> int:
    report = run_pipeline(ctx.config, args.region, data_source=args.data, preset=ctx.preset,
                          out_dir=ctx.out, seed=args.seed, threads=ctx.threads,
                          plot=not args.no_plot)
    for name, entry in report.step(1)["profiles"].items():
        print(f"step1\t{name}\t{entry['classification']}")
    s2 = report.step(2)
    print(f"step2\tcontains_baseline\t{str(s2['contains_baseline']).lower()}")
    print(f"step3\tvalley_slope\t{num(report.step(3)['valley_slope'])}")
    s4 = report.step(4)
    print(f"step4\ts_star\t{num(s4['s_star'])}\tunique\t{str(s4['unique_s_star']).lower()}")
    for t in s4["traces"]:
        if "distance_to_P" in t:
            print(f"step4\ttrace s={num(t['s'])}\tdistance_to_P\t{num(t['distance_to_P'])}")
    _report(report.out_dir / "report.json")
    return EXIT_OK


def cmd_plot(args) -> int:
    src = Path(args.csv)
    with open(src, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    out = Path(args.svg) if args.svg else src.with_suffix(".svg")
    if header[:2] == ["time_s", "intensity"]:
        curve = read_curve_csv(src)
        path = plots.curve_svg(curve.times, curve.values, out)
    elif header[:2] == ["interest", "value"]:
        d = io.read_profile_csv(src)
        thr = float(d["threshold"][0])
        prof = SimpleNamespace(interest=str(d["interest"][0]), grid=d["value"],
                               likelihood=d["likelihood"], threshold=thr,
                               classification=classify(d["likelihood"], thr))
        path = plots.profile_svg(prof, out)
    elif header[:2] == ["c", "D"]:
        d = io.read_surface_csv(src)
        surf = SimpleNamespace(c_grid=d["c"], D_grid=d["D"], likelihood=d["likelihood"],
                               threshold=float(np.nanmin(d["likelihood"])))
        path = plots.surface_svg(surf, out)
    elif header == ["log10_beta1", "log10_beta2", "slope", "flag"]:
        path = plots.field_svg(io.read_field_csv(src), out)
    elif header == ["log10_beta1", "log10_beta2", "lse"]:
        xs, ys, lse = _grid_or_trace(src)
        if lse is None:
            path = plots.curve_svg(xs, ys, out, label="trace")
        else:
            path = plots.lse_svg(xs, ys, lse, out)
    elif header == ["s", "log10_beta1", "log10_beta2"]:
        arr = io.read_tau_csv(src)
        path = plots.curve_svg(arr[:, 1], arr[:, 2], out, label="tau")
    else:
        raise FrapError(f"{src}: unrecognised CSV header {header}")
    _report(path)
    return EXIT_OK


def _grid_or_trace(src: Path):
    """LSE grids and traces share a header; a full tensor grid is a map."""
    arr = io.read_trace_csv(src)
    xs, ys = np.unique(arr[:, 0]), np.unique(arr[:, 1])
    if xs.size * ys.size == len(arr):
        return io.read_lse_csv(src)
    return arr[:, 0], arr[:, 1], None


COMMANDS = {
    "simulate": cmd_simulate, "fit": cmd_fit, "sigma": cmd_sigma, "profile": cmd_profile,
    "profile2d": cmd_profile2d, "subset": cmd_subset, "lse-grid": cmd_lse_grid,
    "slope-field": cmd_slope_field, "s-profile": cmd_s_profile, "trace": cmd_trace,
    "pipeline": cmd_pipeline,
}
NO_CONTEXT = {"tau": cmd_tau, "plot": cmd_plot}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except UsageError as exc:
        print(f"frap-ident: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in NO_CONTEXT:
            return NO_CONTEXT[args.command](args)
        ctx = _context(args)
        return COMMANDS[args.command](args, ctx)
    except (FrapError, FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"frap-ident: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except PipelineError as exc:
        print(f"frap-ident: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        logger.debug("runtime failure", exc_info=True)
        print(f"frap-ident: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
