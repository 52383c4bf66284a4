"""CSV writers and readers for the scan artifacts.

Floats are written with 17 significant digits so every file round-trips
exactly through its reader.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from .core import PARAM_NAMES, FrapError
from .likelihood import ProfileResult, Surface2D
from .relationships import ContourTrace, SlopeField, TauCurve

PathLike = Union[str, Path]


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _open_writer(path: PathLike):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fh = open(path, "w", newline="", encoding="utf-8")
    return path, fh, csv.writer(fh, lineterminator="\n")


def _read_rows(path: PathLike, required: List[str]) -> Tuple[List[str], List[Dict[str, str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise FrapError(f"{path}: missing columns {missing}")
        return list(header), list(reader)


def write_profile_csv(profile: ProfileResult, path: PathLike) -> Path:
    """``interest,value,loglik,likelihood,threshold`` then the optimum of every
    parameter at that grid point."""
    path, fh, w = _open_writer(path)
    with fh:
        w.writerow(["interest", "value", "loglik", "likelihood", "threshold", *PARAM_NAMES])
        for k in range(profile.grid.size):
            opt = profile.nuisance_optima[k]
            w.writerow([profile.interest, fmt(profile.grid[k]), fmt(profile.loglik[k]),
                        fmt(profile.likelihood[k]), fmt(profile.threshold),
                        *(fmt(getattr(opt, n)) for n in PARAM_NAMES)])
    return path


def read_profile_csv(path: PathLike) -> Dict[str, np.ndarray]:
    header, rows = _read_rows(path, ["interest", "value", "loglik", "likelihood", "threshold"])
    out: Dict[str, np.ndarray] = {"interest": np.array([r["interest"] for r in rows])}
    for col in header[1:]:
        out[col] = np.array([float(r[col]) for r in rows])
    return out


def write_surface_csv(surf: Surface2D, path: PathLike) -> Path:
    path, fh, w = _open_writer(path)
    with fh:
        w.writerow(["c", "D", "loglik", "likelihood", "beta1_opt", "beta2_opt"])
        for i, c in enumerate(surf.c_grid):
            for j, D in enumerate(surf.D_grid):
                w.writerow([fmt(c), fmt(D), fmt(surf.loglik[i, j]), fmt(surf.likelihood[i, j]),
                            fmt(surf.beta1_opt[i, j]), fmt(surf.beta2_opt[i, j])])
    return path


def read_surface_csv(path: PathLike) -> Dict[str, np.ndarray]:
    cols = ["c", "D", "loglik", "likelihood", "beta1_opt", "beta2_opt"]
    _, rows = _read_rows(path, cols)
    flat = {c: np.array([float(r[c]) for r in rows]) for c in cols}
    c_grid = np.unique(flat["c"])
    D_grid = np.unique(flat["D"])
    out = {"c": c_grid, "D": D_grid}
    for c in cols[2:]:
        out[c] = flat[c].reshape(c_grid.size, D_grid.size)
    return out


def write_lse_csv(log_b1, log_b2, lse: np.ndarray, path: PathLike) -> Path:
    path, fh, w = _open_writer(path)
    with fh:
        w.writerow(["log10_beta1", "log10_beta2", "lse"])
        for i, x in enumerate(log_b1):
            for j, y in enumerate(log_b2):
                w.writerow([fmt(x), fmt(y), fmt(lse[i, j])])
    return path


def read_lse_csv(path: PathLike):
    _, rows = _read_rows(path, ["log10_beta1", "log10_beta2", "lse"])
    x = np.array([float(r["log10_beta1"]) for r in rows])
    y = np.array([float(r["log10_beta2"]) for r in rows])
    v = np.array([float(r["lse"]) for r in rows])
    xs, ys = np.unique(x), np.unique(y)
    return xs, ys, v.reshape(xs.size, ys.size)


def write_field_csv(field: SlopeField, path: PathLike) -> Path:
    path, fh, w = _open_writer(path)
    with fh:
        w.writerow(["log10_beta1", "log10_beta2", "slope", "flag"])
        for i, x in enumerate(field.log_beta1):
            for j, y in enumerate(field.log_beta2):
                w.writerow([fmt(x), fmt(y), fmt(field.slope[i, j]), int(field.flag[i, j])])
    return path


def read_field_csv(path: PathLike) -> SlopeField:
    _, rows = _read_rows(path, ["log10_beta1", "log10_beta2", "slope", "flag"])
    x = np.array([float(r["log10_beta1"]) for r in rows])
    y = np.array([float(r["log10_beta2"]) for r in rows])
    xs, ys = np.unique(x), np.unique(y)
    slope = np.array([float(r["slope"]) for r in rows]).reshape(xs.size, ys.size)
    flag = np.array([int(r["flag"]) for r in rows], dtype=bool).reshape(xs.size, ys.size)
    return SlopeField(xs, ys, slope, flag)


def write_trace_csv(trace: ContourTrace, path: PathLike) -> Path:
    lse = trace.lse if trace.lse is not None else np.full(len(trace.points), np.nan)
    path, fh, w = _open_writer(path)
    with fh:
        w.writerow(["log10_beta1", "log10_beta2", "lse"])
        for (x, y), e in zip(trace.points, lse):
            w.writerow([fmt(x), fmt(y), fmt(e)])
    return path


def read_trace_csv(path: PathLike) -> np.ndarray:
    _, rows = _read_rows(path, ["log10_beta1", "log10_beta2", "lse"])
    return np.array([[float(r["log10_beta1"]), float(r["log10_beta2"]), float(r["lse"])]
                     for r in rows])


def write_tau_csv(tau: TauCurve, path: PathLike) -> Path:
    path, fh, w = _open_writer(path)
    with fh:
        w.writerow(["s", "log10_beta1", "log10_beta2"])
        for s, x, y in zip(tau.s_grid, tau.log_beta1, tau.log_beta2):
            w.writerow([fmt(s), fmt(x), fmt(y)])
    return path


def read_tau_csv(path: PathLike) -> np.ndarray:
    _, rows = _read_rows(path, ["s", "log10_beta1", "log10_beta2"])
    return np.array([[float(r["s"]), float(r["log10_beta1"]), float(r["log10_beta2"])]
                     for r in rows])
