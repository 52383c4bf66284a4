"""Acceptance criteria 1-12.

Each test records one line per criterion; the lines are printed in the
terminal summary (see conftest.py) and by ``python tests/test_acceptance.py``.
Desk-scale preset throughout; expect about a quarter of an hour on one core.
"""

import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.special import ive

from frapident import cli
from frapident.core import ModelParams, SpatialGrid, load_config
from frapident.estimation import estimate_sigma, fit, read_curve_csv
from frapident.likelihood import Identifiability, default_grid, profile_1d, profile_2d, threshold
from frapident.pipeline import fit_options, make_response, surface_grids
from frapident.relationships import (
    default_field_axes,
    s_profile,
    slope_field,
    tau_point,
    trace_contour,
    trace_lse,
)
from frapident.solver import ETDRK4Stepper, build_propagator, initial_condition, simulate_frap

RESULTS = {}
NAMES = {
    1: "solver cross-validation",
    2: "mass conservation",
    3: "ETDRK4 order",
    4: "pure-diffusion oracle",
    5: "identifiability classification",
    6: "threshold algebra",
    7: "2D surface argmax",
    8: "reparametrization s*",
    9: "contour consistency",
    10: "fit recovery",
    11: "real data (conditional)",
    12: "determinism",
}

# Reference values quoted for the experimental data.
TABLE1 = {
    1: ModelParams(0.049121, 0.258205, 2.35e-14, 0.006331),
    2: ModelParams(0.094322, 1.423721, 0.003018, 0.000762),
    3: ModelParams(0.067619, 0.830449, 4.05e-05, 1.37e-06),
}
SIGMA_HAT = {1: 0.275, 2: 0.365, 3: 0.614}
S_STAR_SYNTHETIC = {1: -1.86735, 2: 1.34694}
S_STAR_REAL = {1: -1.7551, 2: 1.59184}
EXPERIMENTAL_DIR = Path(os.environ.get("FRAP_IDENT_EXPERIMENTAL_DIR",
                                       Path(__file__).parent / "data" / "experimental"))


def record(n, passed, detail):
    RESULTS[n] = ("PASS" if passed else "FAIL", detail)
    return passed


def summary_lines():
    lines = []
    for n in sorted(NAMES):
        status, detail = RESULTS.get(n, ("NOT RUN", ""))
        lines.append(f"criterion {n:2d} [{NAMES[n]}]: {status}  {detail}".rstrip())
    return lines


# --- shared desk-scale state ----------------------------------------------------

@pytest.fixture(scope="module")
def desk():
    cfg = load_config()
    preset = cfg.preset("desk")
    response = make_response(cfg, preset)
    data = {r: response(cfg.region(r).baseline, cfg.times()) for r in (1, 2, 3)}
    return dict(cfg=cfg, preset=preset, grid=preset.grid(), response=response,
                opts=fit_options(preset), data=data)


@pytest.fixture(scope="module")
def s_profiles(desk):
    cfg, preset = desk["cfg"], desk["preset"]
    s_grid = np.linspace(cfg.s_range[0], cfg.s_range[1], preset.s_points)
    out = {}
    for r in (1, 2, 3):
        out[r] = s_profile(desk["data"][r], cfg.curve_sigma(r), cfg.region(r), s_grid,
                           desk["response"], profile_cD=True, offset=cfg.tau_offset,
                           opts=desk["opts"], delta_alpha=cfg.delta_alpha,
                           flatness_tol=cfg.flatness_tol)
    return s_grid, out


# --- 1 --------------------------------------------------------------------------

def test_c01_solver_cross_validation(desk):
    cfg, grid = desk["cfg"], desk["grid"]
    worst, slowest = 0.0, 0.0
    for r in (1, 2, 3):
        p = cfg.region(r).baseline
        exact = simulate_frap(p, grid, cfg.bleach, cfg.times(), u_fraction=cfg.u_fraction)
        t0 = time.perf_counter()
        etd = simulate_frap(p, grid, cfg.bleach, cfg.times(), u_fraction=cfg.u_fraction,
                            method="etdrk4", dt=0.05)
        slowest = max(slowest, time.perf_counter() - t0)
        worst = max(worst, float(np.abs(exact.values - etd.values).max()))
    ok = record(1, worst <= 1e-6 and slowest <= 10.0,
                f"max|exact-etdrk4|={worst:.3e} (<=1e-6), slowest ETDRK4 run {slowest:.1f}s (<=10s)")
    assert ok


# --- 2 --------------------------------------------------------------------------

def test_c02_mass_conservation(desk):
    cfg, grid = desk["cfg"], desk["grid"]
    worst = 0.0
    for r in (1, 2, 3):
        p = cfg.region(r).baseline
        s0 = initial_condition(grid, p, cfg.bleach, u_fraction=cfg.u_fraction)
        m0 = s0.total_mass(grid)
        prop = build_propagator(grid, p, 5.0)
        s = s0
        for _ in range(40):
            s = advance_exact(s, prop)
            worst = max(worst, abs(s.total_mass(grid) - m0) / m0)
        stepper = ETDRK4Stepper(grid, p, 0.5)
        s = s0
        for _ in range(400):
            s = stepper.step(s)
        worst = max(worst, abs(s.total_mass(grid) - m0) / m0)
    ok = record(2, worst <= 1e-10, f"max relative drift {worst:.2e} over 200 s (<=1e-10)")
    assert ok


def advance_exact(state, prop):
    from frapident.solver import advance

    return advance(state, prop)


# --- 3 --------------------------------------------------------------------------

def _etdrk4_errors(grid, p, u0, v0, horizon, dts):
    uh0, vh0 = np.fft.rfft2(u0), np.fft.rfft2(v0)
    nh = grid.Ny // 2 + 1
    P = build_propagator(grid, p, horizon)
    ue = P.p11[:, :nh] * uh0 + P.p12[:, :nh] * vh0
    ve = P.p21[:, :nh] * uh0 + P.p22[:, :nh] * vh0
    errs = []
    for dt in dts:
        stepper = ETDRK4Stepper(grid, p, dt)
        uh, vh = uh0, vh0
        for _ in range(int(round(horizon / dt))):
            uh, vh = stepper.step_spectral(uh, vh)
        errs.append(max(np.abs(uh - ue).max(), np.abs(vh - ve).max()) / np.abs(ue).max())
    return np.array(errs)


def test_c03_etdrk4_order(desk):
    """Smooth bleach profile; the disk indicator is reported alongside because
    its discontinuity causes the known order reduction of exponential
    integrators on stiff modes."""
    cfg, grid = desk["cfg"], desk["grid"]
    p = cfg.region(2).baseline
    dts = np.array([2.5, 1.25, 0.625, 0.3125])
    x, y = grid.coordinates()
    cx, cy = cfg.bleach.resolved_center(grid)
    bump = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * cfg.bleach.radius**2))
    smooth = _etdrk4_errors(grid, p, 0.5 * (1 - bump), 0.5 * (1 - bump), 40.0, dts)
    order = float(np.polyfit(np.log(dts), np.log(smooth), 1)[0])
    pairwise = np.log2(smooth[:-1] / smooth[1:])
    disk = cfg.bleach.mask(grid)
    rough = _etdrk4_errors(grid, p, 0.5 * (1 - disk), 0.5 * (1 - disk), 40.0, dts)
    rough_pairs = np.log2(rough[:-1] / rough[1:])
    ok = record(3, 3.5 <= order <= 4.5,
                f"observed order {order:.2f} (pairwise {np.round(pairwise, 2).tolist()}) with "
                f"smooth bleach; disk bleach pairwise {np.round(rough_pairs, 2).tolist()}")
    assert ok


# --- 4 --------------------------------------------------------------------------

def test_c04_pure_diffusion_oracle(desk):
    cfg = desk["cfg"]
    grid = SpatialGrid.square(80.0, 256)  # L = 16 x spot diameter
    D = 1.0
    t = np.linspace(0, 200, 801)
    f = simulate_frap(ModelParams(0, D, 0, 0), grid, cfg.bleach, t, u_fraction=0.0).values
    x = 2 * (cfg.bleach.radius**2 / (4 * D)) / t[1:]
    oracle = np.concatenate([[0.0], ive(0, x) + ive(1, x)])
    win = (oracle >= 0.2) & (oracle <= 0.8)
    err = float(np.max(np.abs(f[win] / oracle[win] - 1)))
    ok = record(4, err <= 0.03 and win.sum() >= 10,
                f"max relative error {err:.3%} over {int(win.sum())} samples in the 20-80% window")
    assert ok


# --- 5 --------------------------------------------------------------------------

EXPECTED_CLASSES = {
    (1, "c"): {Identifiability.IDENTIFIABLE},
    (1, "D"): {Identifiability.IDENTIFIABLE},
    (1, "beta2"): {Identifiability.PRACTICAL},
    (2, "c"): {Identifiability.IDENTIFIABLE},
    (2, "D"): {Identifiability.IDENTIFIABLE},
    (2, "beta1"): {Identifiability.PRACTICAL},
    (3, "c"): {Identifiability.IDENTIFIABLE},
    (3, "D"): {Identifiability.IDENTIFIABLE},
    (3, "beta1"): {Identifiability.STRUCTURAL},
    (3, "beta2"): {Identifiability.STRUCTURAL},
}


def test_c05_identifiability_classification(desk):
    cfg, preset = desk["cfg"], desk["preset"]
    t0 = time.perf_counter()
    mismatches, summary = [], []
    for (r, name), allowed in EXPECTED_CLASSES.items():
        base = cfg.region(r).baseline
        prof = profile_1d(desk["data"][r], cfg.curve_sigma(r), name,
                          default_grid(name, base, preset.profile_points), desk["response"],
                          base, opts=desk["opts"], delta_alpha=cfg.delta_alpha,
                          flatness_tol=cfg.flatness_tol)
        got = prof.classification
        drop = float(prof.loglik.max() - prof.loglik.min())
        summary.append(f"R{r} {name}={got.name[:5]}")
        if got not in allowed:
            mismatches.append(f"R{r} {name}: got {got.value} (loglik range {drop:.3f}), "
                              f"expected {'/'.join(a.value for a in allowed)}")
    elapsed = time.perf_counter() - t0
    detail = f"{len(EXPECTED_CLASSES) - len(mismatches)}/{len(EXPECTED_CLASSES)} match, " \
             f"{elapsed / 60:.1f} min (<=30); " + ", ".join(summary)
    if mismatches:
        detail += " | " + "; ".join(mismatches)
    ok = record(5, not mismatches and elapsed <= 1800, detail)
    assert ok, detail


# --- 6 --------------------------------------------------------------------------

def test_c06_threshold_algebra():
    worst = max(abs(threshold(s) * math.sqrt(2 * math.pi * s * s) - math.exp(-3.841 / 2))
                for s in np.geomspace(1e-3, 1e3, 61))
    value = threshold(0.275)
    ok = record(6, worst <= 1e-14 and abs(value - 0.2125) <= 1e-4,
                f"identity error {worst:.1e} (<=1e-14), threshold(0.275)={value:.6f}")
    assert ok


# --- 7 --------------------------------------------------------------------------

def test_c07_surface_argmax(desk):
    cfg, preset = desk["cfg"], desk["preset"]
    base = cfg.region(1).baseline
    c_grid, D_grid = surface_grids(base, preset.surface_points)
    surf = profile_2d(desk["data"][1], cfg.curve_sigma(1), c_grid, D_grid, desk["response"],
                      base, opts=desk["opts"], delta_alpha=cfg.delta_alpha)
    (clo, chi), (dlo, dhi) = surf.argmax_cell()
    inside = clo <= 0.05 <= chi and dlo <= 0.25 <= dhi
    ok = record(7, inside, f"argmax cell c=[{clo:.4g}, {chi:.4g}], D=[{dlo:.4g}, {dhi:.4g}]")
    assert ok


# --- 8 --------------------------------------------------------------------------

def test_c08_reparametrization(desk, s_profiles):
    s_grid, profs = s_profiles
    tol = desk["cfg"].flatness_tol
    step = float(s_grid[1] - s_grid[0])
    parts, ok = [], True
    for r in (1, 2):
        prof = profs[r]
        near = prof.near_max(tol)
        s_star = float(s_grid[prof.argmax])
        good = near.size == 1 and abs(s_star - S_STAR_SYNTHETIC[r]) <= step + 1e-12
        ok &= good
        parts.append(f"R{r} s*={s_star:+.4f} (target {S_STAR_SYNTHETIC[r]:+.5f}), "
                     f"{near.size} point(s) within {tol} of max"
                     + ("" if good else f" {s_grid[near].round(3).tolist()}"))
    near3 = profs[3].near_max(tol)
    ok &= near3.size >= 2
    parts.append(f"R3 {near3.size} points within {tol} of max (need >=2)")
    record(8, ok, "; ".join(parts))
    assert ok, "; ".join(parts)


# --- 9 --------------------------------------------------------------------------

def test_c09_contour_consistency(desk, s_profiles):
    cfg, preset = desk["cfg"], desk["preset"]
    s_grid, profs = s_profiles
    parts, ok = [], True
    for r in (1, 2):
        region = cfg.region(r)
        base = region.baseline
        fx, fy = default_field_axes(base, preset.field_nodes)
        field = slope_field(region, fx, fy, desk["response"], cfg.times(), h=cfg.slope_h,
                            opts=desk["opts"])
        q = tau_point(float(s_grid[profs[r].argmax]), cfg.tau_offset)
        tr = trace_contour(field, q, step=cfg.trace_step)
        lse = trace_lse(tr, desk["data"][r], base, desk["response"])
        P = (math.log10(base.beta1), math.log10(base.beta2))
        dist = tr.distance_to(P)
        iq = int(np.argmin(np.linalg.norm(tr.points - np.array(q), axis=1)))
        bound = 10 * lse[iq]
        within = lse <= bound
        # contiguous stretch around Q where the LSE bound holds
        lo = iq
        while lo > 0 and within[lo - 1]:
            lo -= 1
        hi = iq
        while hi + 1 < len(within) and within[hi + 1]:
            hi += 1
        good = dist <= 0.25 and bool(within.all())
        ok &= good
        parts.append(
            f"R{r} distance to P {dist:.3g} (<=0.25); LSE<=10x LSE(Q)={bound:.2e} on "
            f"{int(within.sum())}/{len(lse)} points, holds for log10 beta1 in "
            f"[{tr.points[lo, 0]:.2f}, {tr.points[hi, 0]:.2f}], trace max {lse.max():.2e}")
    record(9, ok, "; ".join(parts))
    assert ok, "; ".join(parts)


# --- 10 -------------------------------------------------------------------------

def test_c10_fit_recovery(desk):
    cfg = desk["cfg"]
    parts, ok = [], True
    for r in (1, 2, 3):
        base = cfg.region(r).baseline
        guess = base.with_(c=1.5 * base.c, D=1.5 * base.D)
        res = fit(desk["data"][r], guess, desk["response"], opts=desk["opts"])
        ec = abs(res.params.c / base.c - 1)
        eD = abs(res.params.D / base.D - 1)
        ok &= ec <= 0.05 and eD <= 0.05
        parts.append(f"R{r} c err {ec:.2%}, D err {eD:.2%}")
    record(10, ok, "; ".join(parts))
    assert ok


# --- 11 -------------------------------------------------------------------------

def _experimental(r):
    return EXPERIMENTAL_DIR / f"region{r}.csv"


def test_c11_real_data(desk):
    files = {r: _experimental(r) for r in (1, 2, 3)}
    if not all(f.is_file() for f in files.values()):
        RESULTS[11] = ("SKIP", f"experimental CSVs not found in {EXPERIMENTAL_DIR} "
                               "(set FRAP_IDENT_EXPERIMENTAL_DIR)")
        pytest.skip("experimental CSVs not provided")
    cfg, preset = desk["cfg"], desk["preset"]
    response = desk["response"]
    s_grid = np.linspace(cfg.s_range[0], cfg.s_range[1], preset.s_points)
    step = float(s_grid[1] - s_grid[0])
    parts, ok = [], True
    for r in (1, 2, 3):
        data = read_curve_csv(files[r])
        sig = estimate_sigma(data, response(TABLE1[r], data.times)) * cfg.sigma_scale()
        ok &= abs(sig / SIGMA_HAT[r] - 1) <= 0.05
        res = fit(data, TABLE1[r], response, opts=desk["opts"])
        ec = abs(res.params.c / TABLE1[r].c - 1)
        eD = abs(res.params.D / TABLE1[r].D - 1)
        ok &= ec <= 0.10 and eD <= 0.10
        msg = f"R{r} sigma {sig:.3f} (ref {SIGMA_HAT[r]}), c err {ec:.1%}, D err {eD:.1%}"
        if r in S_STAR_REAL:
            region = cfg.region(r)
            prof = s_profile(data, region.sigma / cfg.sigma_scale(), region, s_grid, response,
                             offset=cfg.tau_offset, opts=desk["opts"])
            s_star = float(s_grid[prof.argmax])
            ok &= abs(s_star - S_STAR_REAL[r]) <= step + 1e-12
            msg += f", s*={s_star:+.4f} (ref {S_STAR_REAL[r]:+.4f})"
        parts.append(msg)
    record(11, ok, "; ".join(parts))
    assert ok


# --- 12 -------------------------------------------------------------------------

def test_c12_determinism(tmp_path, tiny_config_path):
    """Small preset so the two runs stay quick; the code path is the full
    pipeline."""
    reports = []
    for run in ("a", "b"):
        argv = ["--config", str(tiny_config_path), "--preset", "tiny", "--region", "1",
                "--seed", "7", "--threads", "1", "--out", str(tmp_path / run),
                "pipeline", "--data", "synthetic"]
        assert cli.main(argv) == 0
        reports.append((tmp_path / run / "region1" / "report.json").read_bytes())
    same = reports[0] == reports[1]
    steps = len(json.loads(reports[0])["steps"])
    ok = record(12, same and steps == 4,
                f"report.json byte-identical across runs: {same} ({len(reports[0])} bytes)")
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
