"""SVG renderings of the scan artifacts. The CSV files are authoritative;
these are conveniences."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# Fixed ids and no timestamp so repeated runs give identical files.
matplotlib.rcParams["svg.hashsalt"] = "frapident"
_META = {"Date": None, "Creator": "frapident"}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


def curve_svg(times, values, path, label: str = "F(t)", others: Sequence = ()) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(times, values, "o", ms=3, label=label)
    for t, v, lab in others:
        ax.plot(t, v, "-", label=lab)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("normalized fluorescence")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def profile_svg(profile, path, truth: Optional[float] = None) -> Path:
    from .core import LOG_PARAMS

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(profile.grid, profile.likelihood, "-o", ms=3)
    ax.axhline(profile.threshold, color="k", ls="--", lw=1, label="95% threshold")
    if truth is not None:
        x = np.log10(truth) if profile.interest in LOG_PARAMS else truth
        ax.axvline(x, color="r", lw=1, label="baseline")
    label = f"log10 {profile.interest}" if profile.interest in LOG_PARAMS else profile.interest
    ax.set_xlabel(label)
    ax.set_ylabel("profile likelihood")
    ax.set_title(profile.classification.value, fontsize=9)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def surface_svg(surf, path, truth: Optional[Tuple[float, float]] = None) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    mesh = ax.pcolormesh(surf.D_grid, surf.c_grid, surf.likelihood, shading="nearest")
    fig.colorbar(mesh, ax=ax, label="profile likelihood")
    ax.contour(surf.D_grid, surf.c_grid, surf.likelihood, levels=[surf.threshold],
               colors="w", linewidths=1)
    if truth is not None:
        ax.plot(truth[1], truth[0], "r*", ms=10)
    ax.set_xlabel("D")
    ax.set_ylabel("c")
    fig.tight_layout()
    return _save(fig, path)


def lse_svg(log_b1, log_b2, lse, path, truth=None) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    z = np.log10(np.maximum(lse, 1e-300))
    mesh = ax.pcolormesh(log_b1, log_b2, z.T, shading="nearest")
    fig.colorbar(mesh, ax=ax, label="log10 LSE")
    floor = np.argmin(lse, axis=1)
    ax.plot(log_b1, np.asarray(log_b2)[floor], "r-", lw=1.5)
    if truth is not None:
        ax.plot(*truth, "w*", ms=10)
    ax.set_xlabel("log10 beta1")
    ax.set_ylabel("log10 beta2")
    fig.tight_layout()
    return _save(fig, path)


def field_svg(field, path, tau=None, traces: Sequence = (), truth=None) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4.5))
    X, Y = np.meshgrid(field.log_beta1, field.log_beta2, indexing="ij")
    norm = np.hypot(1.0, field.slope)
    ax.quiver(X, Y, 1.0 / norm, field.slope / norm, angles="xy", pivot="mid",
              color=np.where(field.flag, "grey", "k").ravel().tolist())
    if tau is not None:
        ax.plot(tau.log_beta1, tau.log_beta2, "-", color="gold", lw=2, label="tau")
    for tr in traces:
        ax.plot(tr.points[:, 0], tr.points[:, 1], "g-", lw=1.5)
        ax.plot(*tr.start, "go", ms=5)
    if truth is not None:
        ax.plot(*truth, "r*", ms=10, label="P")
    (x0, x1), (y0, y1) = field.bounds()
    ax.set_xlim(x0 - 0.2, x1 + 0.2)
    ax.set_ylim(y0 - 0.2, y1 + 0.2)
    ax.set_xlabel("log10 beta1")
    ax.set_ylabel("log10 beta2")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    return _save(fig, path)
