"""Profile likelihoods, the 95% threshold and identifiability classes."""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .core import LOG_PARAMS, PARAM_NAMES, FrapCurve, FrapError, ModelParams
from .estimation import DEFAULT_BOUNDS, FitOptions, fit, sse
from .solver import SpotResponse

logger = logging.getLogger(__name__)

DELTA_ALPHA_95 = 3.841
FLATNESS_TOL = 0.05


class Identifiability(str, enum.Enum):
    IDENTIFIABLE = "Identifiable"
    PRACTICAL = "PracticallyNonIdentifiable"
    STRUCTURAL = "StructurallyNonIdentifiable"


def log_prefactor(sigma: float) -> float:
    return -0.5 * math.log(2 * math.pi * sigma * sigma)


def loglik_from_sse(sse_value, sigma: float):
    """``-ln(2 pi sigma^2)/2 - sse / (2 sigma^2)``; the whole curve counts as
    one observation, as in the printed likelihood."""
    if not sigma > 0:
        raise FrapError(f"sigma must be positive, got {sigma}")
    return log_prefactor(sigma) - np.asarray(sse_value, dtype=float) / (2 * sigma * sigma)


def gaussian_loglik(y: FrapCurve, ysim: FrapCurve, sigma: float) -> float:
    return float(loglik_from_sse(sse(y, ysim), sigma))


def gaussian_likelihood(y: FrapCurve, ysim: FrapCurve, sigma: float) -> float:
    return math.exp(gaussian_loglik(y, ysim, sigma))


def threshold(sigma: float, delta_alpha: float = DELTA_ALPHA_95) -> float:
    """Likelihood value a profile must exceed to lie inside the confidence set."""
    if not sigma > 0:
        raise FrapError(f"sigma must be positive, got {sigma}")
    return math.exp(-delta_alpha / 2) / math.sqrt(2 * math.pi * sigma * sigma)


def classify(likelihood: Sequence[float], p_threshold: float,
             flatness_tol: float = FLATNESS_TOL) -> Identifiability:
    """Flat -> structural; below threshold on both sides of the peak ->
    identifiable; anything else -> practical."""
    lik = np.asarray(likelihood, dtype=float)
    if lik.size < 5:
        raise FrapError("classification needs at least 5 profile points")
    with np.errstate(divide="ignore"):
        ll = np.log(lik)
    if np.nanmax(ll) - np.nanmin(ll) < flatness_tol:
        return Identifiability.STRUCTURAL
    i = int(np.nanargmax(lik))
    left = lik[:i]
    right = lik[i + 1:]
    if left.size and right.size and np.any(left < p_threshold) and np.any(right < p_threshold):
        return Identifiability.IDENTIFIABLE
    return Identifiability.PRACTICAL


@dataclass
class ProfileResult:
    """A 1-D scan. ``grid`` is in display coordinates (log10 for rates),
    ``values`` in natural units."""

    interest: str
    grid: np.ndarray
    values: np.ndarray
    sse: np.ndarray
    loglik: np.ndarray
    likelihood: np.ndarray
    nuisance_optima: List[ModelParams]
    threshold: float
    classification: Identifiability
    sigma: float
    failures: Dict[int, str] = field(default_factory=dict)

    @property
    def argmax(self) -> int:
        return int(np.nanargmax(self.loglik))

    @property
    def peak(self) -> float:
        return float(self.grid[self.argmax])

    def near_max(self, tol: float = FLATNESS_TOL) -> np.ndarray:
        """Indices whose loglik is within ``tol`` of the maximum."""
        return np.flatnonzero(self.loglik >= np.nanmax(self.loglik) - tol)


def display_coordinate(name: str, values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return np.log10(values) if name in LOG_PARAMS else values


def default_grid(name: str, baseline: ModelParams, n: int = 49,
                 bounds: Optional[Mapping[str, Tuple[float, float]]] = None) -> np.ndarray:
    """Linear over [0.2, 3] x baseline for c and D; baseline +- 3 decades for
    the rates, clipped to the bounds."""
    bounds = {**DEFAULT_BOUNDS, **(bounds or {})}
    v = getattr(baseline, name)
    lo, hi = bounds[name]
    if name in LOG_PARAMS:
        a = max(math.log10(v) - 3, math.log10(lo))
        b = min(math.log10(v) + 3, math.log10(hi))
        return 10.0 ** np.linspace(a, b, n)
    return np.clip(np.linspace(0.2 * v, 3.0 * v, n), lo, hi)


def _assemble(interest, values, display, sses, optima, sigma, delta_alpha, flatness_tol,
              failures) -> ProfileResult:
    sses = np.asarray(sses, dtype=float)
    ll = loglik_from_sse(sses, sigma)
    lik = np.exp(ll)
    thr = threshold(sigma, delta_alpha)
    return ProfileResult(
        interest=interest,
        grid=np.asarray(display, dtype=float),
        values=np.asarray(values, dtype=float),
        sse=sses,
        loglik=ll,
        likelihood=lik,
        nuisance_optima=list(optima),
        threshold=thr,
        classification=classify(lik, thr, flatness_tol),
        sigma=sigma,
        failures=failures,
    )


def scan(
    data: FrapCurve,
    response: SpotResponse,
    points: Sequence[Dict[str, float]],
    baseline: ModelParams,
    opts: Optional[FitOptions] = None,
    bounds=None,
    warm_start: bool = True,
) -> Tuple[List[float], List[ModelParams], Dict[int, str]]:
    """Optimize the free parameters at each point of a sequence of fixings.

    Each point starts from the previous optimum (when ``warm_start``) and
    from ``baseline``; the better result is kept. A failing point records
    its error and NaN, and the scan continues.
    """
    opts = opts or FitOptions()
    sses: List[float] = []
    optima: List[ModelParams] = []
    failures: Dict[int, str] = {}
    prev: Optional[ModelParams] = None
    for i, fixed in enumerate(points):
        cold = baseline.with_(**fixed)
        starts = [cold] if prev is None or not warm_start else [prev.with_(**fixed), cold]
        try:
            res = fit(data, cold, response, bounds=bounds, opts=opts, fixed=fixed, starts=starts)
        except Exception as exc:  # recorded, never aborts the scan
            logger.warning("scan point %d failed: %s", i, exc)
            failures[i] = repr(exc)
            sses.append(float("nan"))
            optima.append(cold)
            continue
        sses.append(res.sse)
        optima.append(res.params)
        prev = res.params
    return sses, optima, failures


def profile_1d(
    data: FrapCurve,
    sigma: float,
    interest: str,
    grid: Sequence[float],
    response: SpotResponse,
    baseline: ModelParams,
    fixed: Optional[Mapping[str, float]] = None,
    opts: Optional[FitOptions] = None,
    bounds=None,
    delta_alpha: float = DELTA_ALPHA_95,
    flatness_tol: float = FLATNESS_TOL,
) -> ProfileResult:
    """Profile likelihood of ``interest`` over ``grid`` (natural units)."""
    if interest not in PARAM_NAMES:
        raise FrapError(f"unknown parameter {interest!r}")
    fixed = dict(fixed or {})
    if interest in fixed:
        raise FrapError("the interest parameter cannot also be fixed")
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise FrapError("profile grid must be non-empty and increasing")
    points = [{**fixed, interest: float(g)} for g in grid]
    sses, optima, failures = scan(data, response, points, baseline.with_(**fixed), opts, bounds)
    return _assemble(interest, grid, display_coordinate(interest, grid), sses, optima, sigma,
                     delta_alpha, flatness_tol, failures)


def profile_all(
    data: FrapCurve,
    sigma: float,
    response: SpotResponse,
    baseline: ModelParams,
    n_points: int = 49,
    names: Sequence[str] = PARAM_NAMES,
    opts: Optional[FitOptions] = None,
    threads: int = 1,
    **kwargs,
) -> Dict[str, ProfileResult]:
    """One profile per parameter; independent scans may run concurrently."""

    def one(name):
        grid = default_grid(name, baseline, n_points)
        return profile_1d(data, sigma, name, grid, response, baseline, opts=opts, **kwargs)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, names))
    else:
        results = [one(n) for n in names]
    return dict(zip(names, results))


@dataclass
class Surface2D:
    c_grid: np.ndarray
    D_grid: np.ndarray
    sse: np.ndarray
    loglik: np.ndarray
    likelihood: np.ndarray
    beta1_opt: np.ndarray
    beta2_opt: np.ndarray
    threshold: float
    failures: Dict[Tuple[int, int], str] = field(default_factory=dict)

    def argmax(self) -> Tuple[int, int]:
        i, j = np.unravel_index(int(np.nanargmax(self.loglik)), self.loglik.shape)
        return int(i), int(j)

    def argmax_cell(self) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        """``((c_lo, c_hi), (D_lo, D_hi))`` spanned by the argmax node's
        neighbours, i.e. the region within half a step either side."""
        i, j = self.argmax()
        return _cell(self.c_grid, i), _cell(self.D_grid, j)


def _cell(grid: np.ndarray, i: int) -> Tuple[float, float]:
    lo = grid[i] - 0.5 * (grid[i] - grid[i - 1]) if i > 0 else grid[i]
    hi = grid[i] + 0.5 * (grid[i + 1] - grid[i]) if i + 1 < grid.size else grid[i]
    return float(lo), float(hi)


def profile_2d(
    data: FrapCurve,
    sigma: float,
    c_grid: Sequence[float],
    D_grid: Sequence[float],
    response: SpotResponse,
    baseline: ModelParams,
    opts: Optional[FitOptions] = None,
    bounds=None,
    delta_alpha: float = DELTA_ALPHA_95,
) -> Surface2D:
    """Maximize over the rates at every (c, D) node. Rows (fixed c) are
    scanned in order of D with warm starts."""
    c_grid = np.asarray(c_grid, dtype=float)
    D_grid = np.asarray(D_grid, dtype=float)
    shape = (c_grid.size, D_grid.size)
    sses = np.full(shape, np.nan)
    b1 = np.full(shape, np.nan)
    b2 = np.full(shape, np.nan)
    failures = {}
    for i, c in enumerate(c_grid):
        points = [{"c": float(c), "D": float(D)} for D in D_grid]
        row, optima, fails = scan(data, response, points, baseline, opts, bounds)
        sses[i] = row
        b1[i] = [p.beta1 for p in optima]
        b2[i] = [p.beta2 for p in optima]
        failures.update({(i, j): msg for j, msg in fails.items()})
    ll = loglik_from_sse(sses, sigma)
    return Surface2D(c_grid, D_grid, sses, ll, np.exp(ll), b1, b2,
                     threshold(sigma, delta_alpha), failures)
