"""Forward model: two-species transport/diffusion/switching on a periodic box.

    du/dt = c du/dy - beta1 u + beta2 v
    dv/dt = D lap(v) + beta1 u - beta2 v

The system is linear with constant coefficients, so every Fourier mode obeys
a 2x2 linear ODE with symbol

    L_k = [[i c ky - beta1,  beta2        ],
           [beta1,          -D |k|^2 - beta2]]

and ``exp(L_k dt)`` advances that mode exactly. The ETDRK4 integrator below
treats the diagonal as the stiff part and the switching terms explicitly; it
is kept as an independent check on the exact propagator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .core import (
    BleachSpec,
    FieldState,
    FrapCurve,
    FrapError,
    ModelParams,
    ShapeMismatch,
    SpatialGrid,
    equilibrium_fractions,
    validate_params,
)

IMAG_TOL = 1e-10
# |q dt| below which the cosh/sinhc form replaces the eigenvalue form.
_COALESCE = 0.5
_N_CONTOUR = 32


def _sinhc(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    out = np.ones_like(z)
    big = np.abs(z) > 1e-4
    out[big] = np.sinh(z[big]) / z[big]
    small = ~big
    z2 = z[small] ** 2
    out[small] = 1.0 + z2 / 6.0 + z2 * z2 / 120.0
    return out


def expm2x2(a, b, c, d, t) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Elementwise ``exp([[a, b], [c, d]] * t)`` for broadcastable arrays.

    Uses ``exp(Lt) = e^{mt} [cosh(qt) I + sinh(qt)/q (L - mI)]`` with
    ``m = tr/2`` and ``q^2 = ((a-d)/2)^2 + bc``. Well separated eigenvalues
    ``m +- q`` are exponentiated directly; when ``|q t|`` is small the
    eigenbasis is ill-conditioned and sinh(qt)/q is taken from its series.
    """
    a, b, c, d = (np.asarray(x, dtype=complex) for x in (a, b, c, d))
    a, b, c, d, t = np.broadcast_arrays(a, b, c, d, np.asarray(t, dtype=float))
    m = 0.5 * (a + d)
    delta = 0.5 * (a - d)
    q = np.sqrt(delta * delta + b * c)
    qt = q * t
    cosh_part = np.empty_like(m)
    sinh_part = np.empty_like(m)  # e^{mt} sinh(qt)/q

    sep = np.abs(qt) > _COALESCE
    if np.any(sep):
        ep = np.exp((m[sep] + q[sep]) * t[sep])
        em = np.exp((m[sep] - q[sep]) * t[sep])
        cosh_part[sep] = 0.5 * (ep + em)
        sinh_part[sep] = 0.5 * (ep - em) / q[sep]
    near = ~sep
    if np.any(near):
        emt = np.exp(m[near] * t[near])
        cosh_part[near] = emt * np.cosh(qt[near])
        sinh_part[near] = emt * t[near] * _sinhc(qt[near])

    p11 = cosh_part + sinh_part * delta
    p22 = cosh_part - sinh_part * delta
    p12 = sinh_part * b
    p21 = sinh_part * c
    return p11, p12, p21, p22


def mode_symbol(grid: SpatialGrid, p: ModelParams, half: bool = False):
    """Entries ``(a, b, c, d)`` of L_k on the full (or rfft-half) spectrum."""
    ky = grid.advection_wavenumber()
    k2 = grid.laplacian_symbol()
    if half:
        ky = ky[:, : grid.Ny // 2 + 1]
        k2 = k2[:, : grid.Ny // 2 + 1]
    a = 1j * p.c * ky - p.beta1
    d = -p.D * k2 - p.beta2
    a, d = np.broadcast_arrays(a, d)
    return a, np.full(a.shape, p.beta2, dtype=complex), np.full(a.shape, p.beta1, dtype=complex), d


@dataclass(frozen=True)
class SpectralPropagator:
    """Per-mode entries of ``exp(L_k dt)``, each of grid shape."""

    p11: np.ndarray
    p12: np.ndarray
    p21: np.ndarray
    p22: np.ndarray
    dt: float

    @property
    def shape(self) -> Tuple[int, int]:
        return self.p11.shape

    def spectral_radius(self) -> np.ndarray:
        tr = self.p11 + self.p22
        det = self.p11 * self.p22 - self.p12 * self.p21
        disc = np.sqrt(tr * tr / 4 - det)
        return np.maximum(np.abs(tr / 2 + disc), np.abs(tr / 2 - disc))


def build_propagator(grid: SpatialGrid, p: ModelParams, dt: float) -> SpectralPropagator:
    if not dt > 0:
        raise FrapError(f"dt must be positive, got {dt}")
    validate_params(p)
    a, b, c, d = mode_symbol(grid, p)
    return SpectralPropagator(*expm2x2(a, b, c, d, dt), dt=float(dt))


def initial_condition(
    grid: SpatialGrid,
    p: ModelParams,
    bleach: BleachSpec,
    fallback: float = 0.5,
    u_fraction: Optional[float] = None,
) -> FieldState:
    """Uniform pre-bleach state of unit total density, then bleached.

    ``u_fraction=None`` splits the density at the reaction steady state (see
    :func:`equilibrium_fractions`); a number fixes the transported share
    regardless of the rates.
    """
    validate_params(p)
    if u_fraction is None:
        fu, fv = equilibrium_fractions(p, fallback)
    else:
        if not 0.0 <= u_fraction <= 1.0:
            raise FrapError(f"u_fraction must lie in [0, 1], got {u_fraction}")
        fu, fv = float(u_fraction), 1.0 - float(u_fraction)
    remaining = 1.0 - bleach.depth * bleach.mask(grid)
    return FieldState(fu * remaining, fv * remaining, 0.0)


def _to_real(z: np.ndarray) -> np.ndarray:
    scale = max(float(np.max(np.abs(z))), 1e-300)
    residue = float(np.max(np.abs(z.imag)))
    if residue > IMAG_TOL * scale:
        raise FrapError(f"imaginary residue {residue:.3g} after inverse FFT")
    return z.real.copy()


def advance(state: FieldState, prop: SpectralPropagator) -> FieldState:
    """One exact step of length ``prop.dt``."""
    if state.u.shape != prop.shape:
        raise ShapeMismatch(f"state {state.u.shape} vs propagator {prop.shape}")
    uh = np.fft.fft2(state.u)
    vh = np.fft.fft2(state.v)
    un = prop.p11 * uh + prop.p12 * vh
    vn = prop.p21 * uh + prop.p22 * vh
    return FieldState(_to_real(np.fft.ifft2(un)), _to_real(np.fft.ifft2(vn)), state.t + prop.dt)


# --- ETDRK4 -----------------------------------------------------------------

class ETDRK4Stepper:
    """Kassam-Trefethen ETDRK4 on the rfft half-spectrum.

    Linear part: ``diag(i c ky, -D |k|^2)``; explicit part: the switching
    terms. The phi-function coefficients are contour means over a circle of
    radius one around each ``h * L`` to avoid cancellation.
    """

    def __init__(self, grid: SpatialGrid, p: ModelParams, dt: float, n_contour: int = _N_CONTOUR):
        validate_params(p)
        if not dt > 0:
            raise FrapError(f"dt must be positive, got {dt}")
        self.grid, self.p, self.dt = grid, p, float(dt)
        nh = grid.Ny // 2 + 1
        ky = grid.advection_wavenumber()[:, :nh]
        k2 = grid.laplacian_symbol()[:, :nh]
        lin_u = np.broadcast_to(1j * p.c * ky, k2.shape).astype(complex)
        lin_v = (-p.D * k2).astype(complex)
        self._coef_u = self._coefficients(lin_u, dt, n_contour)
        self._coef_v = self._coefficients(lin_v, dt, n_contour)

    @staticmethod
    def _coefficients(lin: np.ndarray, h: float, m: int):
        r = np.exp(2j * np.pi * (np.arange(m) + 0.5) / m)
        lr = h * lin[..., None] + r
        e = np.exp(h * lin)
        e2 = np.exp(h * lin / 2)
        q = h * np.mean((np.exp(lr / 2) - 1) / lr, axis=-1)
        lr2, lr3 = lr**2, lr**3
        elr = np.exp(lr)
        f1 = h * np.mean((-4 - lr + elr * (4 - 3 * lr + lr2)) / lr3, axis=-1)
        f2 = h * np.mean((2 + lr + elr * (lr - 2)) / lr3, axis=-1)
        f3 = h * np.mean((-4 - 3 * lr - lr2 + elr * (4 - lr)) / lr3, axis=-1)
        return e, e2, q, f1, f2, f3

    def _switch(self, uh, vh):
        flux = self.p.beta2 * vh - self.p.beta1 * uh
        return flux, -flux

    def step_spectral(self, uh: np.ndarray, vh: np.ndarray):
        eu, e2u, qu, f1u, f2u, f3u = self._coef_u
        ev, e2v, qv, f1v, f2v, f3v = self._coef_v
        nu, nv = self._switch(uh, vh)
        au = e2u * uh + qu * nu
        av = e2v * vh + qv * nv
        nau, nav = self._switch(au, av)
        bu = e2u * uh + qu * nau
        bv = e2v * vh + qv * nav
        nbu, nbv = self._switch(bu, bv)
        cu = e2u * au + qu * (2 * nbu - nu)
        cv = e2v * av + qv * (2 * nbv - nv)
        ncu, ncv = self._switch(cu, cv)
        un = eu * uh + f1u * nu + 2 * f2u * (nau + nbu) + f3u * ncu
        vn = ev * vh + f1v * nv + 2 * f2v * (nav + nbv) + f3v * ncv
        return un, vn

    def step(self, state: FieldState) -> FieldState:
        if state.u.shape != self.grid.shape:
            raise ShapeMismatch(f"state {state.u.shape} vs grid {self.grid.shape}")
        un, vn = self.step_spectral(np.fft.rfft2(state.u), np.fft.rfft2(state.v))
        s = self.grid.shape
        return FieldState(np.fft.irfft2(un, s=s), np.fft.irfft2(vn, s=s), state.t + self.dt)


def etdrk4_advance(state: FieldState, p: ModelParams, grid: SpatialGrid, dt: float) -> FieldState:
    return ETDRK4Stepper(grid, p, dt).step(state)


# --- FRAP observation -------------------------------------------------------

def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or times[0] != 0.0:
        raise FrapError("output times must be a 1-D array starting at 0")
    if np.any(np.diff(times) <= 0):
        raise FrapError("output times must be strictly increasing")
    return times


def simulate_frap(
    p: ModelParams,
    grid: SpatialGrid,
    bleach: BleachSpec,
    times: Sequence[float],
    *,
    u_fraction: Optional[float] = None,
    fallback: float = 0.5,
    method: str = "exact",
    dt: float = 0.05,
) -> FrapCurve:
    """Spot-integrated ``u + v`` normalized by its pre-bleach value.

    ``method="exact"`` chains exact propagators between output times (one per
    distinct gap). ``method="etdrk4"`` takes steps of ``dt``; every output
    time must then be a multiple of ``dt``.
    """
    times = _check_times(times)
    mask = bleach.mask(grid)
    norm = float(mask.sum() * grid.cell_area)
    state = initial_condition(grid, p, bleach, fallback=fallback, u_fraction=u_fraction)

    def observe(s: FieldState) -> float:
        return float(np.sum(mask * (s.u + s.v)) * grid.cell_area / norm)

    values = np.empty(times.size)
    values[0] = observe(state)
    if method == "exact":
        cache: Dict[float, SpectralPropagator] = {}
        for i in range(1, times.size):
            gap = round(float(times[i] - times[i - 1]), 12)
            if gap not in cache:
                cache[gap] = build_propagator(grid, p, gap)
            state = advance(state, cache[gap])
            values[i] = observe(state)
    elif method == "etdrk4":
        steps = times / dt
        n_steps = np.rint(steps).astype(int)
        if np.max(np.abs(steps - n_steps)) > 1e-8:
            raise FrapError("ETDRK4 output times must be multiples of dt")
        stepper = ETDRK4Stepper(grid, p, dt)
        # Stay in spectral space; the observation is a Parseval sum.
        uh, vh = np.fft.rfft2(state.u), np.fft.rfft2(state.v)
        mh = np.conj(np.fft.rfft2(mask))
        mult = _rfft_multiplicity(grid)
        scale = grid.cell_area / (norm * grid.Nx * grid.Ny)
        done = 0
        for i in range(1, times.size):
            for _ in range(n_steps[i] - done):
                uh, vh = stepper.step_spectral(uh, vh)
            done = n_steps[i]
            values[i] = float(np.sum(mult * (mh * (uh + vh)).real) * scale)
    else:
        raise FrapError(f"unknown method {method!r}")
    return FrapCurve(times, values, norm)


def _rfft_multiplicity(grid: SpatialGrid) -> np.ndarray:
    nh = grid.Ny // 2 + 1
    mult = np.full(nh, 2.0)
    mult[0] = 1.0
    mult[-1] = 1.0
    return mult[None, :]


class SpotResponse:
    """Fast evaluator of the normalized FRAP curve for one grid and spot.

    Mathematically identical to :func:`simulate_frap` with the exact method:
    the bleach pattern and the spot integral are both fixed, so only the
    per-mode 2x2 propagators depend on the parameters and the curve is a
    weighted sum over modes. No FFTs are needed per evaluation. Instances are
    read-only after construction and safe to share between threads.
    """

    def __init__(self, grid: SpatialGrid, bleach: BleachSpec, u_fraction: Optional[float] = 0.5,
                 fallback: float = 0.5):
        self.grid, self.bleach = grid, bleach
        self.u_fraction, self.fallback = u_fraction, fallback
        mask = bleach.mask(grid)
        norm = float(mask.sum() * grid.cell_area)
        mh = np.fft.rfft2(mask)
        remaining_h = np.fft.rfft2(1.0 - bleach.depth * mask)
        scale = grid.cell_area / (norm * grid.Nx * grid.Ny)
        weights = (_rfft_multiplicity(grid) * np.conj(mh) * remaining_h * scale).ravel()
        nh = grid.Ny // 2 + 1
        self._ky = np.broadcast_to(grid.advection_wavenumber()[:, :nh], (grid.Nx, nh)).ravel()
        self._k2 = grid.laplacian_symbol()[:, :nh].ravel()
        # Modes whose weight is exactly zero contribute nothing.
        keep = weights != 0
        self._w, self._ky, self._k2 = weights[keep], self._ky[keep], self._k2[keep]
        self.normalization = norm

    def fractions(self, p: ModelParams) -> Tuple[float, float]:
        if self.u_fraction is None:
            return equilibrium_fractions(p, self.fallback)
        return float(self.u_fraction), 1.0 - float(self.u_fraction)

    def values(self, p: ModelParams, times: Sequence[float]) -> np.ndarray:
        times = _check_times(times)
        fu, fv = self.fractions(p)
        a = 1j * p.c * self._ky - p.beta1
        d = -p.D * self._k2 - p.beta2
        xu = np.full(a.shape, fu, dtype=complex)
        xv = np.full(a.shape, fv, dtype=complex)
        out = np.empty(times.size)
        out[0] = float(np.sum((self._w * (xu + xv)).real))
        cache = {}
        for i in range(1, times.size):
            gap = round(float(times[i] - times[i - 1]), 12)
            if gap not in cache:
                cache[gap] = expm2x2(a, p.beta2, p.beta1, d, gap)
            p11, p12, p21, p22 = cache[gap]
            xu, xv = p11 * xu + p12 * xv, p21 * xu + p22 * xv
            out[i] = float(np.sum((self._w * (xu + xv)).real))
        return out

    def __call__(self, p: ModelParams, times: Sequence[float]) -> FrapCurve:
        return FrapCurve(np.asarray(times, dtype=float), self.values(p, times), self.normalization)
