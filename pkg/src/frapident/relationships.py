"""Relationships between the switching rates in the (log10 beta1, log10 beta2)
plane: subset profiles, error maps, slope fields, the transverse tau curve,
profiles along it, and contour traces through the slope field.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.ndimage import distance_transform_edt

from .core import FrapCurve, FrapError, ModelParams, RegionConfig
from .estimation import DEFAULT_BOUNDS, FitOptions, fit, make_objective
from .likelihood import FLATNESS_TOL, DELTA_ALPHA_95, ProfileResult, _assemble, scan
from .solver import SpotResponse

logger = logging.getLogger(__name__)

LOG_BOUNDS = (math.log10(DEFAULT_BOUNDS["beta1"][0]), math.log10(DEFAULT_BOUNDS["beta1"][1]))


class ExitedField(FrapError):
    pass


def _pmap(fn, items, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# --- subset profile ---------------------------------------------------------

@dataclass
class SubsetProfile:
    beta1_grid: np.ndarray
    beta2_opt: np.ndarray
    sse: np.ndarray
    loglik: np.ndarray
    failures: Dict[int, str] = field(default_factory=dict)


def _opt_beta2(data: FrapCurve, response: SpotResponse, base: ModelParams, beta1: float,
               start_log_b2: Sequence[float], opts: FitOptions):
    res = fit(data, base.with_(beta1=beta1), response, opts=opts,
              fixed={"c": base.c, "D": base.D, "beta1": beta1},
              starts=[base.with_(beta1=beta1, beta2=10.0 ** s) for s in start_log_b2])
    return res


def subset_profile(data: FrapCurve, sigma: float, region: RegionConfig, beta1_grid,
                   response: SpotResponse, opts: Optional[FitOptions] = None) -> SubsetProfile:
    """Optimal beta2 for each fixed beta1 with c and D held at baseline."""
    base = region.baseline
    beta1_grid = np.asarray(beta1_grid, dtype=float)
    points = [{"c": base.c, "D": base.D, "beta1": float(b)} for b in beta1_grid]
    sses, optima, failures = scan(data, response, points, base, opts)
    sses = np.asarray(sses)
    ll = -0.5 * math.log(2 * math.pi * sigma**2) - sses / (2 * sigma**2)
    return SubsetProfile(beta1_grid, np.array([p.beta2 for p in optima]), sses, ll, failures)


# --- error map ---------------------------------------------------------------

def lse_grid(reference: FrapCurve, region: RegionConfig, beta1_grid, beta2_grid,
             response: SpotResponse, threads: int = 1) -> np.ndarray:
    """Squared error against ``reference`` with c, D at baseline; rows follow
    ``beta1_grid`` and columns ``beta2_grid``."""
    objective = make_objective(reference, response)
    base = region.baseline
    b1 = np.asarray(beta1_grid, dtype=float)
    b2 = np.asarray(beta2_grid, dtype=float)

    def row(x):
        return [objective(base.with_(beta1=float(x), beta2=float(y))) for y in b2]

    return np.array(_pmap(row, b1, threads))


def valley_floor(lse: np.ndarray) -> np.ndarray:
    """Column index of the error minimum in each row."""
    return np.argmin(lse, axis=1)


# --- slope field -------------------------------------------------------------

@dataclass
class SlopeField:
    log_beta1: np.ndarray
    log_beta2: np.ndarray
    slope: np.ndarray
    flag: np.ndarray

    def filled(self) -> np.ndarray:
        """Slopes with flagged nodes replaced by their nearest valid node."""
        if not self.flag.any():
            return self.slope
        if self.flag.all():
            raise FrapError("every slope-field node is flagged")
        idx = distance_transform_edt(self.flag, return_distances=False, return_indices=True)
        return self.slope[tuple(idx)]

    def interpolator(self) -> RegularGridInterpolator:
        return RegularGridInterpolator((self.log_beta1, self.log_beta2), self.filled(),
                                       method="linear", bounds_error=True)

    def bounds(self) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        return ((float(self.log_beta1[0]), float(self.log_beta1[-1])),
                (float(self.log_beta2[0]), float(self.log_beta2[-1])))


def node_slope(base: ModelParams, b1: float, b2: float, h: float, response: SpotResponse,
               times, opts: FitOptions) -> Tuple[float, bool]:
    """Central-difference slope of the subset profile through ``(b1, b2)``.

    Synthetic data are generated at the node itself; the optimal log10 beta2
    is found at ``b1 - h`` and ``b1 + h``.
    """
    truth = base.with_(beta1=10.0 ** b1, beta2=10.0 ** b2)
    data = response(truth, times)
    out = []
    ok = True
    for x in (b1 - h, b1 + h):
        x = min(max(x, LOG_BOUNDS[0]), LOG_BOUNDS[1])
        res = _opt_beta2(data, response, base, 10.0 ** x, [b2, b2 - 1.0, b2 + 1.0], opts)
        ok = ok and np.isfinite(res.sse)
        out.append((x, math.log10(res.params.beta2)))
    (x0, y0), (x1, y1) = out
    slope = (y1 - y0) / (x1 - x0)
    return slope, ok and math.isfinite(slope)


def slope_field(region: RegionConfig, log_beta1: Sequence[float], log_beta2: Sequence[float],
                response: SpotResponse, times, h: float = 0.1,
                opts: Optional[FitOptions] = None, threads: int = 1) -> SlopeField:
    if not h > 0:
        raise FrapError("finite-difference step must be positive")
    opts = opts or FitOptions()
    xs = np.asarray(log_beta1, dtype=float)
    ys = np.asarray(log_beta2, dtype=float)
    nodes = [(x, y) for x in xs for y in ys]

    def one(node):
        try:
            return node_slope(region.baseline, node[0], node[1], h, response, times, opts)
        except Exception as exc:
            logger.warning("slope node %s failed: %s", node, exc)
            return float("nan"), False

    results = _pmap(one, nodes, threads)
    slope = np.array([r[0] for r in results]).reshape(xs.size, ys.size)
    flag = ~np.array([r[1] for r in results]).reshape(xs.size, ys.size)
    slope = np.where(flag, 0.0, slope)
    return SlopeField(xs, ys, slope, flag)


def default_field_axes(baseline: ModelParams, n: int = 15):
    """Baseline +- 3 decades per axis, clipped to the rate bounds."""
    axes = []
    for v in (baseline.beta1, baseline.beta2):
        c = math.log10(v)
        axes.append(np.linspace(max(c - 3, LOG_BOUNDS[0]), min(c + 3, LOG_BOUNDS[1]), n))
    return axes[0], axes[1]


# --- tau curve ---------------------------------------------------------------

@dataclass
class TauCurve:
    s_grid: np.ndarray
    log_beta1: np.ndarray
    log_beta2: np.ndarray
    offset: float

    def tangent(self) -> np.ndarray:
        """Unit tangent vectors d(log b1, log b2)/ds."""
        r = np.sqrt(self.s_grid**2 + 1)
        t = np.stack([1 + self.s_grid / r, -1 + self.s_grid / r], axis=-1)
        return t / np.linalg.norm(t, axis=-1, keepdims=True)


def tau_point(s: float, offset: float = -6.0) -> Tuple[float, float]:
    r = math.hypot(s, 1.0)
    return s + r + offset, -s + r + offset


def tau_curve(s_grid, offset: float = -6.0) -> TauCurve:
    """Hyperbola branch ``(x - offset)(y - offset) = 1`` parametrized by s."""
    s = np.asarray(s_grid, dtype=float)
    r = np.hypot(s, 1.0)
    return TauCurve(s, s + r + offset, -s + r + offset, float(offset))


def s_profile(data: FrapCurve, sigma: float, region: RegionConfig, s_grid,
              response: SpotResponse, profile_cD: bool = True, offset: float = -6.0,
              opts: Optional[FitOptions] = None, delta_alpha: float = DELTA_ALPHA_95,
              flatness_tol: float = FLATNESS_TOL) -> ProfileResult:
    """Profile along the tau curve: the rates follow s, c and D are either
    re-optimized or held at baseline."""
    tau = tau_curve(s_grid, offset)
    base = region.baseline
    points = []
    for x, y in zip(tau.log_beta1, tau.log_beta2):
        fixed = {"beta1": 10.0 ** x, "beta2": 10.0 ** y}
        if not profile_cD:
            fixed.update(c=base.c, D=base.D)
        points.append(fixed)
    sses, optima, failures = scan(data, response, points, base, opts)
    return _assemble("s", tau.s_grid, tau.s_grid, sses, optima, sigma, delta_alpha,
                     flatness_tol, failures)


def transversality_angles(tau: TauCurve, field: SlopeField) -> np.ndarray:
    """Angle in degrees between tau and the field direction at each tau point
    inside the field; NaN outside."""
    interp = field.interpolator()
    (x0, x1), (y0, y1) = field.bounds()
    tangents = tau.tangent()
    out = np.full(tau.s_grid.size, np.nan)
    for i, (x, y) in enumerate(zip(tau.log_beta1, tau.log_beta2)):
        if not (x0 <= x <= x1 and y0 <= y <= y1):
            continue
        m = float(interp([[x, y]])[0])
        d = np.array([1.0, m]) / math.hypot(1.0, m)
        cosang = abs(float(np.dot(d, tangents[i])))
        out[i] = math.degrees(math.acos(min(cosang, 1.0)))
    return out


# --- contour tracing ---------------------------------------------------------

@dataclass
class ContourTrace:
    points: np.ndarray  # (n, 2): log10 beta1, log10 beta2, increasing beta1
    start: Tuple[float, float]
    lse: Optional[np.ndarray] = None

    def distance_to(self, point: Tuple[float, float]) -> float:
        """Euclidean distance from ``point`` to the polyline."""
        p = np.asarray(point, dtype=float)
        pts = self.points
        if len(pts) == 1:
            return float(np.linalg.norm(pts[0] - p))
        a, b = pts[:-1], pts[1:]
        ab = b - a
        denom = np.einsum("ij,ij->i", ab, ab)
        t = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.where(denom > 0, denom, 1.0), 0, 1)
        proj = a + t[:, None] * ab
        return float(np.min(np.linalg.norm(proj - p, axis=1)))


def trace_contour(field: SlopeField, start: Tuple[float, float], step: float = 0.05,
                  bounds: Optional[Tuple[Tuple[float, float], Tuple[float, float]]] = None,
                  max_points: int = 100000) -> ContourTrace:
    """Forward Euler along d(log b2)/d(log b1) = interpolated slope.

    Marches from ``start`` in both directions; each step has Euclidean length
    ``step`` in the log plane. Stops on leaving ``bounds`` (default: the
    field's extent).
    """
    (fx0, fx1), (fy0, fy1) = field.bounds()
    x, y = map(float, start)
    if not (fx0 <= x <= fx1 and fy0 <= y <= fy1):
        raise ExitedField(f"start point {start} lies outside the slope field")
    (bx0, bx1), (by0, by1) = bounds or field.bounds()
    bx0, bx1 = max(bx0, fx0), min(bx1, fx1)
    by0, by1 = max(by0, fy0), min(by1, fy1)
    interp = field.interpolator()

    def march(direction: float) -> List[Tuple[float, float]]:
        pts = []
        cx, cy = x, y
        for _ in range(max_points):
            m = float(interp([[cx, cy]])[0])
            dx = direction * step / math.hypot(1.0, m)
            nx, ny = cx + dx, cy + m * dx
            if not (bx0 <= nx <= bx1 and by0 <= ny <= by1):
                break
            pts.append((nx, ny))
            cx, cy = nx, ny
        return pts

    back = march(-1.0)
    fwd = march(+1.0)
    pts = np.array(back[::-1] + [(x, y)] + fwd)
    return ContourTrace(pts, (x, y))


def trace_lse(trace: ContourTrace, reference: FrapCurve, base: ModelParams,
              response: SpotResponse) -> np.ndarray:
    objective = make_objective(reference, response)
    vals = np.array([objective(base.with_(beta1=10.0 ** a, beta2=10.0 ** b))
                     for a, b in trace.points])
    trace.lse = vals
    return vals
