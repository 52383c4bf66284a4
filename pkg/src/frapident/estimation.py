"""Least-squares fitting of FRAP curves, noise estimates and synthetic data."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .core import (
    LOG_PARAMS,
    PARAM_NAMES,
    BleachSpec,
    FrapCurve,
    FrapError,
    ModelParams,
    SpatialGrid,
    TimeGridMismatch,
    validate_params,
)
from .solver import SpotResponse, simulate_frap

logger = logging.getLogger(__name__)

DEFAULT_BOUNDS: Dict[str, Tuple[float, float]] = {
    "c": (0.0, 1.0),
    "D": (1e-3, 10.0),
    "beta1": (1e-8, 1.0),
    "beta2": (1e-8, 1.0),
}


class NoImprovement(FrapError):
    pass


def _check_grids(data: FrapCurve, model: FrapCurve) -> None:
    if data.times.shape != model.times.shape or not np.allclose(
        data.times, model.times, rtol=0, atol=1e-9
    ):
        raise TimeGridMismatch("data and model curves are sampled at different times")


def sse(data: FrapCurve, model: FrapCurve) -> float:
    _check_grids(data, model)
    r = data.values - model.values
    return float(np.dot(r, r))


def estimate_sigma(data: FrapCurve, model: FrapCurve) -> float:
    """Root-mean-square residual between two curves on the same time grid."""
    return math.sqrt(sse(data, model) / len(data))


def generate_synthetic(
    p: ModelParams,
    grid: SpatialGrid,
    bleach: BleachSpec,
    times: Sequence[float],
    sigma: float = 0.0,
    seed: Optional[int] = None,
    u_fraction: Optional[float] = 0.5,
) -> FrapCurve:
    """Simulated curve plus i.i.d. Gaussian noise of standard deviation sigma."""
    if sigma < 0:
        raise FrapError(f"noise level must be >= 0, got {sigma}")
    curve = simulate_frap(p, grid, bleach, times, u_fraction=u_fraction)
    if sigma == 0:
        return curve
    rng = np.random.default_rng(seed)
    return curve.with_values(curve.values + rng.normal(0.0, sigma, size=len(curve)))


# --- CSV -------------------------------------------------------------------

def read_curve_csv(path: Union[str, Path]) -> FrapCurve:
    """Load a ``time_s,intensity`` CSV. Times must be increasing from 0."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"time_s", "intensity"} <= set(reader.fieldnames):
            raise FrapError(f"{path}: expected header 'time_s,intensity'")
        rows = [(float(r["time_s"]), float(r["intensity"])) for r in reader]
    if not rows:
        raise FrapError(f"{path}: no data rows")
    t, y = np.array(rows).T
    return FrapCurve(t, y)


def write_curve_csv(curve: FrapCurve, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", "intensity"])
        for t, y in zip(curve.times, curve.values):
            w.writerow([f"{t:.12g}", f"{y:.17g}"])
    return path


# --- fitting ----------------------------------------------------------------

@dataclass
class FitOptions:
    """Nelder-Mead settings; tolerances apply in the transformed space
    (linear c and D, log10 rates)."""

    xatol: float = 1e-6
    fatol: float = 1e-12
    max_evals: int = 400
    n_starts: int = 8
    seed: int = 0
    threads: int = 1
    keep_trace: bool = False


@dataclass
class FitResult:
    params: ModelParams
    sse: float
    n_evals: int
    converged: bool
    trace: Optional[List[Tuple[ModelParams, float]]] = None


class ParamTransform:
    """Maps the free parameters to optimizer coordinates and back.

    Rates live on a log10 scale; c and D are linear. Parameters listed in
    ``fixed`` are held constant.
    """

    def __init__(self, bounds: Mapping[str, Tuple[float, float]], fixed: Mapping[str, float],
                 template: ModelParams):
        self.free = [n for n in PARAM_NAMES if n not in fixed]
        self.fixed = dict(fixed)
        self.template = template
        lo, hi = [], []
        for n in self.free:
            a, b = bounds[n]
            if n in LOG_PARAMS:
                a, b = math.log10(a), math.log10(b)
            lo.append(a)
            hi.append(b)
        self.lower, self.upper = np.array(lo), np.array(hi)

    def encode(self, p: ModelParams) -> np.ndarray:
        z = []
        for n in self.free:
            val = getattr(p, n)
            z.append(math.log10(max(val, 1e-300)) if n in LOG_PARAMS else val)
        return np.clip(np.array(z, dtype=float), self.lower, self.upper)

    def decode(self, z: np.ndarray) -> ModelParams:
        z = np.clip(z, self.lower, self.upper)
        values = dict(self.template.as_dict())
        values.update(self.fixed)
        for n, zi in zip(self.free, z):
            values[n] = 10.0 ** zi if n in LOG_PARAMS else float(zi)
        return ModelParams(**values)

    def initial_simplex(self, z0: np.ndarray, scale: float = 1.0) -> np.ndarray:
        steps = []
        for i, n in enumerate(self.free):
            if n in LOG_PARAMS:
                step = 0.5
            else:
                step = 0.2 * abs(z0[i]) if z0[i] != 0 else 0.05 * (self.upper[i] - self.lower[i])
            step *= scale
            # Step inward when the start sits on the upper bound.
            if z0[i] + step > self.upper[i]:
                step = -step
            steps.append(step)
        simplex = np.tile(z0, (len(z0) + 1, 1))
        for i, s in enumerate(steps):
            simplex[i + 1, i] += s
        return simplex


def make_objective(data: FrapCurve, response: SpotResponse) -> Callable[[ModelParams], float]:
    times = data.times
    y = data.values

    def objective(p: ModelParams) -> float:
        r = y - response.values(p, times)
        return float(np.dot(r, r))

    return objective


def _nelder_mead(objective, transform: ParamTransform, z0: np.ndarray, opts: FitOptions,
                 simplex_scale: float = 1.0):
    trace = [] if opts.keep_trace else None

    def f(z):
        p = transform.decode(z)
        val = objective(p)
        if trace is not None:
            trace.append((p, val))
        return val

    if len(z0) == 0:
        p = transform.decode(z0)
        return p, objective(p), 1, True, trace
    res = minimize(
        f, z0, method="Nelder-Mead",
        bounds=list(zip(transform.lower, transform.upper)),
        options={
            "xatol": opts.xatol, "fatol": opts.fatol, "maxfev": opts.max_evals,
            "initial_simplex": transform.initial_simplex(z0, simplex_scale),
        },
    )
    return transform.decode(res.x), float(res.fun), int(res.nfev), bool(res.success), trace


def _better(a: FitResult, b: Optional[FitResult]) -> bool:
    if b is None:
        return True
    if abs(a.sse - b.sse) < 1e-14:
        return (a.params.beta1 + a.params.beta2) < (b.params.beta1 + b.params.beta2)
    return a.sse < b.sse


def fit(
    data: FrapCurve,
    guess: ModelParams,
    response: SpotResponse,
    bounds: Optional[Mapping[str, Tuple[float, float]]] = None,
    opts: Optional[FitOptions] = None,
    fixed: Optional[Mapping[str, float]] = None,
    starts: Optional[Sequence[ModelParams]] = None,
) -> FitResult:
    """Minimize the squared residual between ``data`` and the model.

    The first start is ``guess``; the remaining ``opts.n_starts - 1`` are a
    seeded Latin hypercube over the bounds, unless ``starts`` is given.
    The lowest-SSE result wins, ties going to the smaller total rate.
    """
    opts = opts or FitOptions()
    bounds = {**DEFAULT_BOUNDS, **(bounds or {})}
    fixed = dict(fixed or {})
    validate_params(guess)
    transform = ParamTransform(bounds, fixed, guess)
    objective = make_objective(data, response)

    if starts is None:
        z_starts = [transform.encode(guess)]
        n_extra = max(opts.n_starts - 1, 0)
        if n_extra and transform.free:
            sampler = qmc.LatinHypercube(d=len(transform.free), seed=opts.seed)
            u = sampler.random(n_extra)
            z_starts.extend(qmc.scale(u, transform.lower, transform.upper))
    else:
        z_starts = [transform.encode(s) for s in starts]

    def run(z0):
        return _nelder_mead(objective, transform, np.asarray(z0, dtype=float), opts)

    if opts.threads > 1 and len(z_starts) > 1:
        with ThreadPoolExecutor(opts.threads) as pool:
            outcomes = list(pool.map(run, z_starts))
    else:
        outcomes = [run(z) for z in z_starts]

    best: Optional[FitResult] = None
    total = 0
    for p, val, nfev, ok, trace in outcomes:
        total += nfev
        cand = FitResult(p, val, nfev, ok, trace)
        if _better(cand, best):
            best = cand
    assert best is not None
    best.n_evals = total
    guess_sse = objective(transform.decode(transform.encode(guess)))
    if best.sse > guess_sse:
        logger.warning("fit did not improve on the initial guess")
        best = FitResult(transform.decode(transform.encode(guess)), guess_sse, total, False)
    return best
