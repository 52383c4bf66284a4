"""Domain types shared by the solver, the estimators and the pipeline.

Units are fixed throughout: micrometres, seconds, and fluorescence
normalized to the pre-bleach spot integral.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple, Union

import numpy as np

PARAM_NAMES = ("c", "D", "beta1", "beta2")
LOG_PARAMS = ("beta1", "beta2")

# Below this total switching rate the reaction steady state is undefined.
RATE_EPS = 1e-12

CONFIG_SCHEMA_VERSION = 1


class FrapError(ValueError):
    """Base class for validation errors raised by this package."""


class NonNegativityViolation(FrapError):
    def __init__(self, name: str, value: float):
        super().__init__(f"parameter {name!r} must be >= 0, got {value!r}")
        self.field = name


class NonFinite(FrapError):
    def __init__(self, name: str, value: float):
        super().__init__(f"parameter {name!r} must be finite, got {value!r}")
        self.field = name


class GridTooCoarse(FrapError):
    pass


class ShapeMismatch(FrapError):
    pass


class TimeGridMismatch(FrapError):
    pass


@dataclass(frozen=True)
class ModelParams:
    """Transport speed ``c`` (um/s), diffusion ``D`` (um^2/s), and the
    unbinding/binding rates ``beta1``/``beta2`` (1/s)."""

    c: float
    D: float
    beta1: float
    beta2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.c, self.D, self.beta1, self.beta2], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "ModelParams":
        c, D, b1, b2 = (float(a) for a in arr)
        return cls(c, D, b1, b2)

    def as_dict(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)


def validate_params(p: ModelParams) -> ModelParams:
    """Return ``p`` unchanged if every field is finite and non-negative.

    Raises NonFinite or NonNegativityViolation naming the first offending
    field.
    """
    for name in PARAM_NAMES:
        value = getattr(p, name)
        if not math.isfinite(value):
            raise NonFinite(name, value)
        if value < 0:
            raise NonNegativityViolation(name, value)
    return p


def equilibrium_fractions(p: ModelParams, fallback: float = 0.5) -> Tuple[float, float]:
    """Steady-state split ``(fu, fv)`` of the reaction subsystem.

    ``beta1 * u = beta2 * v`` with ``u + v = 1``. When both rates vanish the
    steady state is undefined and ``fallback`` is used for ``fu``.
    """
    if not 0.0 <= fallback <= 1.0:
        raise FrapError(f"fallback must lie in [0, 1], got {fallback}")
    total = p.beta1 + p.beta2
    if total > RATE_EPS:
        fu = p.beta2 / total
    else:
        fu = float(fallback)
    return fu, 1.0 - fu


@dataclass(frozen=True)
class RegionConfig:
    region_id: int
    baseline: ModelParams
    sigma: float
    description: str = ""

    def __post_init__(self):
        if self.region_id not in (1, 2, 3):
            raise FrapError(f"region_id must be 1, 2 or 3, got {self.region_id}")
        validate_params(self.baseline)
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise FrapError(f"sigma must be > 0, got {self.sigma}")


@dataclass(frozen=True)
class SpatialGrid:
    """Periodic square-cell grid. Point ``(i, j)`` sits at ``(i*dx, j*dy)``;
    axis 0 is x and axis 1 is y (the transport direction)."""

    Lx: float = 80.0
    Ly: float = 80.0
    Nx: int = 256
    Ny: int = 256

    def __post_init__(self):
        for n in (self.Nx, self.Ny):
            if n < 16 or n & (n - 1):
                raise FrapError(f"grid sizes must be powers of two >= 16, got {n}")
        if not (self.Lx > 0 and self.Ly > 0):
            raise FrapError("domain lengths must be positive")

    @classmethod
    def square(cls, length: float, n: int) -> "SpatialGrid":
        return cls(float(length), float(length), int(n), int(n))

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.Nx, self.Ny)

    @property
    def dx(self) -> float:
        return self.Lx / self.Nx

    @property
    def dy(self) -> float:
        return self.Ly / self.Ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    def coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.Nx) * self.dx
        y = np.arange(self.Ny) * self.dy
        return np.meshgrid(x, y, indexing="ij")

    def wavenumbers(self) -> Tuple[np.ndarray, np.ndarray]:
        """Angular wavenumbers ``(kx, ky)`` broadcastable to the grid shape."""
        kx = 2 * np.pi * np.fft.fftfreq(self.Nx, d=self.dx)
        ky = 2 * np.pi * np.fft.fftfreq(self.Ny, d=self.dy)
        return kx[:, None], ky[None, :]

    def advection_wavenumber(self) -> np.ndarray:
        # First derivative is zeroed at Nyquist so real fields stay real.
        ky = 2 * np.pi * np.fft.fftfreq(self.Ny, d=self.dy)
        ky[self.Ny // 2] = 0.0
        return ky[None, :]

    def laplacian_symbol(self) -> np.ndarray:
        kx, ky = self.wavenumbers()
        return kx**2 + ky**2


@dataclass(frozen=True)
class BleachSpec:
    """Circular bleach spot. ``center=None`` means the domain centre."""

    diameter: float = 5.0
    depth: float = 1.0
    center: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if not 0.0 <= self.depth <= 1.0:
            raise FrapError(f"bleach depth must be in [0, 1], got {self.depth}")
        if not self.diameter > 0:
            raise FrapError("bleach diameter must be positive")

    @property
    def radius(self) -> float:
        return 0.5 * self.diameter

    def resolved_center(self, grid: SpatialGrid) -> Tuple[float, float]:
        if self.center is None:
            return (0.5 * grid.Lx, 0.5 * grid.Ly)
        return (float(self.center[0]), float(self.center[1]))

    def check(self, grid: SpatialGrid) -> None:
        if not self.diameter < 0.5 * min(grid.Lx, grid.Ly):
            raise GridTooCoarse(
                f"spot diameter {self.diameter} must be below half the domain size"
            )
        if not max(grid.dx, grid.dy) < self.radius / 4:
            raise GridTooCoarse(
                f"grid spacing {max(grid.dx, grid.dy):.4g} um does not resolve a "
                f"spot of radius {self.radius:g} um (need < radius/4)"
            )

    def mask(self, grid: SpatialGrid) -> np.ndarray:
        """Pixel-centre indicator of the disk, as float array."""
        self.check(grid)
        cx, cy = self.resolved_center(grid)
        x, y = grid.coordinates()
        return ((x - cx) ** 2 + (y - cy) ** 2 <= self.radius**2).astype(float)


@dataclass(frozen=True)
class FieldState:
    u: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if self.u.shape != self.v.shape:
            raise ShapeMismatch(f"u {self.u.shape} and v {self.v.shape} differ")

    def total_mass(self, grid: SpatialGrid) -> float:
        return float(np.sum(self.u + self.v) * grid.cell_area)


@dataclass(frozen=True)
class FrapCurve:
    times: np.ndarray
    values: np.ndarray
    normalization: float = 1.0

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if times.ndim != 1 or times.shape != values.shape:
            raise FrapError("times and values must be 1-D arrays of equal length")
        if times.size == 0:
            raise FrapError("a FRAP curve needs at least one time point")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(values))):
            raise FrapError("FRAP curve contains non-finite entries")
        if times[0] != 0.0:
            raise FrapError(f"times must start at 0 (bleach instant), got {times[0]}")
        if np.any(np.diff(times) <= 0):
            raise FrapError("times must be strictly increasing")

    def __len__(self) -> int:
        return self.times.size

    def with_values(self, values) -> "FrapCurve":
        return FrapCurve(self.times, values, self.normalization)


def default_times(t_end: float = 200.0, n: int = 41) -> np.ndarray:
    return np.linspace(0.0, t_end, n)


# --- configuration ---------------------------------------------------------

@dataclass
class Preset:
    """Numerical resolution and scan sizes; paper-scale and desk-scale runs
    differ only in these values."""

    domain_l: float = 80.0
    grid_n: int = 256
    profile_points: int = 49
    surface_points: int = 15
    field_nodes: int = 15
    s_points: int = 49
    n_starts: int = 8
    max_evals: int = 400

    def grid(self) -> SpatialGrid:
        return SpatialGrid.square(self.domain_l, self.grid_n)


@dataclass
class Config:
    regions: Dict[int, RegionConfig]
    presets: Dict[str, Preset] = field(default_factory=dict)
    bleach: BleachSpec = field(default_factory=BleachSpec)
    u_fraction: Optional[float] = 0.5
    sigma_units: str = "spot_integral"
    t_end: float = 200.0
    n_times: int = 41
    s_range: Tuple[float, float] = (-3.0, 3.0)
    tau_offset: float = -6.0
    flatness_tol: float = 0.05
    delta_alpha: float = 3.841
    trace_step: float = 0.05
    slope_h: float = 0.1

    def region(self, region_id: int) -> RegionConfig:
        try:
            return self.regions[int(region_id)]
        except KeyError:
            raise FrapError(f"unknown region {region_id}") from None

    def preset(self, name: str) -> Preset:
        try:
            return self.presets[name]
        except KeyError:
            raise FrapError(f"unknown preset {name!r}") from None

    def times(self) -> np.ndarray:
        return default_times(self.t_end, self.n_times)

    def sigma_scale(self) -> float:
        """Factor converting a configured sigma into normalized-curve units.

        With ``spot_integral`` units sigma refers to the raw spot integral of
        ``u + v`` at unit pre-bleach density, which is the normalized curve
        times the (ideal) spot area.
        """
        if self.sigma_units == "spot_integral":
            return math.pi * self.bleach.radius**2
        if self.sigma_units == "normalized":
            return 1.0
        raise FrapError(f"unknown sigma_units {self.sigma_units!r}")

    def curve_sigma(self, region_id: int) -> float:
        return self.region(region_id).sigma / self.sigma_scale()


def _preset_from_dict(d: dict) -> Preset:
    known = {f.name for f in fields(Preset)}
    unknown = set(d) - known
    if unknown:
        raise FrapError(f"unknown preset keys: {sorted(unknown)}")
    return Preset(**d)


def config_from_dict(raw: dict) -> Config:
    version = raw.get("schema_version")
    if version != CONFIG_SCHEMA_VERSION:
        raise FrapError(f"unsupported config schema_version {version!r}")
    regions: Dict[int, RegionConfig] = {}
    for entry in raw.get("regions", []):
        rid = int(entry["region_id"])
        if rid in regions:
            raise FrapError(f"duplicate region_id {rid}")
        baseline = ModelParams(
            float(entry["c"]), float(entry["D"]), float(entry["beta1"]), float(entry["beta2"])
        )
        regions[rid] = RegionConfig(rid, baseline, float(entry["sigma"]),
                                    entry.get("description", ""))
    presets = {name: _preset_from_dict(d) for name, d in raw.get("presets", {}).items()}
    b = raw.get("bleach", {})
    bleach = BleachSpec(
        diameter=float(b.get("diameter", 5.0)),
        depth=float(b.get("depth", 1.0)),
        center=tuple(b["center"]) if b.get("center") is not None else None,
    )
    model = raw.get("model", {})
    scan = raw.get("scan", {})
    u_fraction = model.get("u_fraction", 0.5)
    return Config(
        regions=regions,
        presets=presets,
        bleach=bleach,
        u_fraction=None if u_fraction is None else float(u_fraction),
        sigma_units=str(model.get("sigma_units", "spot_integral")),
        t_end=float(model.get("t_end", 200.0)),
        n_times=int(model.get("n_times", 41)),
        s_range=tuple(scan.get("s_range", (-3.0, 3.0))),
        tau_offset=float(scan.get("tau_offset", -6.0)),
        flatness_tol=float(scan.get("flatness_tol", 0.05)),
        delta_alpha=float(scan.get("delta_alpha", 3.841)),
        trace_step=float(scan.get("trace_step", 0.05)),
        slope_h=float(scan.get("slope_h", 0.1)),
    )


def load_config(path: Union[str, Path, None] = None) -> Config:
    """Load a JSON configuration; ``None`` loads the bundled defaults."""
    if path is None:
        text = resources.files("frapident").joinpath("data/regions.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return config_from_dict(json.loads(text))


def parse_params(values: Iterable[float]) -> ModelParams:
    return validate_params(ModelParams.from_array(list(values)))
