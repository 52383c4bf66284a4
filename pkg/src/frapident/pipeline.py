"""Four-step identifiability pipeline for one region.

1. profile likelihood of each parameter,
2. (c, D) likelihood surface,
3. least-squares map over the rate plane,
4. slope field, s-profile along the tau curve and contour traces.

Every step writes CSV artifacts (the contract) plus an SVG rendering under
``<out>/region<k>/step<n>/`` and the run is summarized in ``report.json``.
Wall-clock timings go to a separate ``timings.json`` so the report itself is
byte-reproducible.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from . import io, plots
from .core import PARAM_NAMES, Config, FrapCurve, ModelParams, Preset
from .estimation import FitOptions, read_curve_csv, write_curve_csv
from .likelihood import ProfileResult, default_grid, profile_1d, profile_2d
from .relationships import (
    default_field_axes,
    lse_grid,
    s_profile,
    slope_field,
    tau_curve,
    tau_point,
    trace_contour,
    trace_lse,
    valley_floor,
)
from .solver import SpotResponse

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1


@dataclass
class PipelineReport:
    region_id: int
    data_source: str
    steps: List[dict] = field(default_factory=list)
    wall_clock: Dict[str, float] = field(default_factory=dict)
    out_dir: Optional[Path] = None

    def step(self, n: int) -> dict:
        return self.steps[n - 1]

    def to_json(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "region_id": self.region_id,
            "data_source": self.data_source,
            "steps": self.steps,
        }


class PipelineError(RuntimeError):
    def __init__(self, message: str, report: PipelineReport):
        super().__init__(message)
        self.report = report


def _f(x: float) -> float:
    """Round-trip-safe float for JSON (NaN becomes None)."""
    x = float(x)
    return x if math.isfinite(x) else None


def fit_options(preset: Preset, seed: int = 0, threads: int = 1) -> FitOptions:
    return FitOptions(max_evals=preset.max_evals, n_starts=preset.n_starts, seed=seed,
                      threads=threads)


def make_response(config: Config, preset: Preset) -> SpotResponse:
    return SpotResponse(preset.grid(), config.bleach, config.u_fraction)


def load_data(source: str, config: Config, region_id: int, response: SpotResponse) -> FrapCurve:
    if source == "synthetic":
        return response(config.region(region_id).baseline, config.times())
    return read_curve_csv(source)


def surface_grids(baseline: ModelParams, n: int):
    """[0.25, 2.25] x baseline in c and D. With an odd node count of the form
    8k + 1 both the baseline and twice the baseline are nodes."""
    scale = np.linspace(0.25, 2.25, n)
    return baseline.c * scale, baseline.D * scale


def run_pipeline(
    config: Config,
    region_id: int,
    data_source: str = "synthetic",
    preset: Union[str, Preset] = "desk",
    out_dir: Union[str, Path, None] = None,
    seed: int = 0,
    threads: int = 1,
    plot: bool = True,
) -> PipelineReport:
    """Run steps 1-4 and write all artifacts under ``out_dir``."""
    if isinstance(preset, str):
        preset = config.preset(preset)
    region = config.region(region_id)
    base = region.baseline
    sigma = config.curve_sigma(region_id)
    response = make_response(config, preset)
    opts = fit_options(preset, seed, threads)
    source_label = "synthetic" if data_source == "synthetic" else Path(data_source).name
    report = PipelineReport(region_id, source_label)
    root = Path(out_dir) if out_dir is not None else None
    rdir = root / f"region{region_id}" if root is not None else None
    report.out_dir = rdir

    def sdir(n: int) -> Optional[Path]:
        if rdir is None:
            return None
        d = rdir / f"step{n}"
        d.mkdir(parents=True, exist_ok=True)
        return d

    def rel(path: Path) -> str:
        return path.relative_to(rdir).as_posix()

    data = load_data(data_source, config, region_id, response)
    if rdir is not None:
        rdir.mkdir(parents=True, exist_ok=True)
        write_curve_csv(data, rdir / "data.csv")

    try:
        # step 1
        t0 = time.perf_counter()
        d1 = sdir(1)
        profiles: Dict[str, ProfileResult] = {}
        for name in PARAM_NAMES:
            grid = default_grid(name, base, preset.profile_points)
            profiles[name] = profile_1d(data, sigma, name, grid, response, base, opts=opts,
                                        delta_alpha=config.delta_alpha,
                                        flatness_tol=config.flatness_tol)
        step1 = {"step": 1, "name": "profile_likelihood", "sigma_curve_units": _f(sigma),
                 "threshold": _f(profiles["c"].threshold), "profiles": {}}
        for name, prof in profiles.items():
            entry = {
                "classification": prof.classification.value,
                "argmax": _f(prof.values[prof.argmax]),
                "max_loglik": _f(np.nanmax(prof.loglik)),
                "min_loglik": _f(np.nanmin(prof.loglik)),
                "failures": len(prof.failures),
            }
            if d1 is not None:
                path = io.write_profile_csv(prof, d1 / f"profile_{name}.csv")
                entry["csv"] = rel(path)
                if plot:
                    entry["svg"] = rel(plots.profile_svg(prof, d1 / f"profile_{name}.svg",
                                                         truth=getattr(base, name)))
            step1["profiles"][name] = entry
        report.steps.append(step1)
        report.wall_clock["step1"] = time.perf_counter() - t0

        # step 2
        t0 = time.perf_counter()
        d2 = sdir(2)
        c_grid, D_grid = surface_grids(base, preset.surface_points)
        surf = profile_2d(data, sigma, c_grid, D_grid, response, base, opts=opts,
                          delta_alpha=config.delta_alpha)
        i, j = surf.argmax()
        (clo, chi), (dlo, dhi) = surf.argmax_cell()
        step2 = {
            "step": 2, "name": "surface_c_D",
            "argmax": {"c": _f(c_grid[i]), "D": _f(D_grid[j])},
            "argmax_cell": {"c": [_f(clo), _f(chi)], "D": [_f(dlo), _f(dhi)]},
            "contains_baseline": bool(clo <= base.c <= chi and dlo <= base.D <= dhi),
            "max_likelihood": _f(np.nanmax(surf.likelihood)),
            "threshold": _f(surf.threshold),
            "cells_above_threshold": int(np.sum(surf.likelihood > surf.threshold)),
            "failures": len(surf.failures),
        }
        if d2 is not None:
            step2["csv"] = rel(io.write_surface_csv(surf, d2 / "surface.csv"))
            if plot:
                step2["svg"] = rel(plots.surface_svg(surf, d2 / "surface.svg",
                                                     truth=(base.c, base.D)))
        report.steps.append(step2)
        report.wall_clock["step2"] = time.perf_counter() - t0

        # step 3
        t0 = time.perf_counter()
        d3 = sdir(3)
        ax1, ax2 = default_field_axes(base, max(preset.field_nodes, 15))
        b1 = 10.0 ** ax1
        b2 = 10.0 ** ax2
        lse = lse_grid(data, region, b1, b2, response, threads=threads)
        floor = valley_floor(lse)
        valley_x, valley_y = ax1, ax2[floor]
        slope_fit = np.polyfit(valley_x, valley_y, 1)[0] if np.ptp(valley_y) > 0 else 0.0
        step3 = {
            "step": 3, "name": "lse_valley",
            "valley": [[_f(x), _f(y)] for x, y in zip(valley_x, valley_y)],
            "valley_slope": _f(slope_fit),
            "min_lse": _f(lse.min()),
            "max_lse": _f(lse.max()),
        }
        if d3 is not None:
            step3["csv"] = rel(io.write_lse_csv(ax1, ax2, lse, d3 / "lse_grid.csv"))
            if plot:
                step3["svg"] = rel(plots.lse_svg(ax1, ax2, lse, d3 / "lse_grid.svg",
                                                 truth=(math.log10(base.beta1),
                                                        math.log10(base.beta2))))
        report.steps.append(step3)
        report.wall_clock["step3"] = time.perf_counter() - t0

        # step 4
        t0 = time.perf_counter()
        d4 = sdir(4)
        fx, fy = default_field_axes(base, preset.field_nodes)
        field_ = slope_field(region, fx, fy, response, data.times, h=config.slope_h,
                             opts=opts, threads=threads)
        s_grid = np.linspace(config.s_range[0], config.s_range[1], preset.s_points)
        tau = tau_curve(s_grid, config.tau_offset)
        sprof = s_profile(data, sigma, region, s_grid, response, profile_cD=True,
                          offset=config.tau_offset, opts=opts,
                          delta_alpha=config.delta_alpha, flatness_tol=config.flatness_tol)
        near = sprof.near_max(config.flatness_tol)
        unique = near.size == 1
        q_indices = [sprof.argmax] if unique else list(near)
        P = (math.log10(base.beta1), math.log10(base.beta2))
        traces = []
        (x0, x1), (y0, y1) = field_.bounds()
        for qi in q_indices:
            q = tau_point(float(s_grid[qi]), config.tau_offset)
            entry = {"s": _f(s_grid[qi]), "Q": [_f(q[0]), _f(q[1])]}
            if not (x0 <= q[0] <= x1 and y0 <= q[1] <= y1):
                entry["skipped"] = "Q outside slope field"
                traces.append(entry)
                continue
            tr = trace_contour(field_, q, step=config.trace_step)
            vals = trace_lse(tr, data, base, response)
            q_lse = float(vals[np.argmin(np.linalg.norm(tr.points - np.array(q), axis=1))])
            entry.update({
                "n_points": int(len(tr.points)),
                "distance_to_P": _f(tr.distance_to(P)),
                "lse_at_Q": _f(q_lse),
                "max_lse": _f(vals.max()),
            })
            if d4 is not None:
                entry["csv"] = rel(io.write_trace_csv(tr, d4 / f"trace_s{qi:03d}.csv"))
            entry["_trace"] = tr
            traces.append(entry)
        step4 = {
            "step": 4, "name": "slope_field_reparametrization",
            "s_star": _f(s_grid[sprof.argmax]),
            "unique_s_star": bool(unique),
            "near_max_s": [_f(s_grid[k]) for k in near],
            "s_classification": sprof.classification.value,
            "P": [_f(P[0]), _f(P[1])],
            "flagged_nodes": int(field_.flag.sum()),
            "traces": [{k: v for k, v in t.items() if k != "_trace"} for t in traces],
        }
        if d4 is not None:
            step4["field_csv"] = rel(io.write_field_csv(field_, d4 / "slope_field.csv"))
            step4["tau_csv"] = rel(io.write_tau_csv(tau, d4 / "tau.csv"))
            step4["s_profile_csv"] = rel(io.write_profile_csv(sprof, d4 / "profile_s.csv"))
            if plot:
                step4["svg"] = rel(plots.field_svg(
                    field_, d4 / "slope_field.svg", tau=tau,
                    traces=[t["_trace"] for t in traces if "_trace" in t], truth=P))
                step4["s_profile_svg"] = rel(plots.profile_svg(sprof, d4 / "profile_s.svg"))
        report.steps.append(step4)
        report.wall_clock["step4"] = time.perf_counter() - t0
    except Exception as exc:
        if rdir is not None:
            _write_report(report, rdir)
        raise PipelineError(f"pipeline failed after {len(report.steps)} step(s): {exc}",
                            report) from exc

    if rdir is not None:
        _write_report(report, rdir)
    return report


def _write_report(report: PipelineReport, rdir: Path) -> None:
    rdir.mkdir(parents=True, exist_ok=True)
    with open(rdir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(rdir / "timings.json", "w", encoding="utf-8") as fh:
        json.dump({k: round(v, 3) for k, v in report.wall_clock.items()}, fh, indent=2)
        fh.write("\n")
