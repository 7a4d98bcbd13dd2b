"""Figures written next to the CSV tables."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# stable SVG ids and no timestamps, so repeated runs give identical bytes
plt.rcParams["svg.hashsalt"] = "rannlab"
_META = {"png": {"Software": None}, "svg": {"Date": None, "Creator": None}}


def save(fig, stem) -> list:
    paths = []
    for ext in ("png", "svg"):
        path = f"{stem}.{ext}"
        fig.savefig(path, dpi=150, bbox_inches="tight", metadata=_META[ext])
        paths.append(path)
    plt.close(fig)
    return paths


def loglog_sweep(result, stem, title: str = "") -> list:
    N = np.asarray(result.widths, dtype=float)
    m, s = result.mean_rel_l2, result.std_rel_l2
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.fill_between(N, np.maximum(m - s, m * 1e-3), m + s, alpha=0.25, label="mean ± 1 std")
    ax.loglog(N, m, "o-", label="mean rel. $L^2$ error")
    C, _ = result.envelope()
    ax.loglog(N, C / np.sqrt(N), "k--", lw=1, label=r"$C/\sqrt{N}$")
    if result.fit is not None:
        f = result.fit
        ax.loglog(N, np.exp(f.intercept) * N ** f.slope, ":", color="C3",
                  label=f"fit slope {f.slope:.2f}")
    ax.set_xlabel("width N")
    ax.set_ylabel("relative $L^2$ error")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    return save(fig, stem)


def reconstruction_panels(T, X, exact, approx, stem) -> list:
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))
    for ax, data, name in zip(axes, (exact, approx, approx - exact),
                              ("target", "reconstruction", "error")):
        im = ax.pcolormesh(T, X, data, shading="auto", cmap="RdBu_r" if name == "error" else "viridis")
        ax.set_title(name)
        ax.set_xlabel("t")
        fig.colorbar(im, ax=ax)
    axes[0].set_ylabel("x")
    return save(fig, stem)


def estimator_panels(z, ratio, stem) -> list:
    k = np.arange(1, len(z) + 1)
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.2))
    a1.bar(k, z)
    a1.axhline(3, color="k", ls="--", lw=1)
    a1.axhline(-3, color="k", ls="--", lw=1)
    a1.set_xlabel("test point")
    a1.set_ylabel("(mean - quadrature) / SE")
    a2.bar(k, ratio)
    a2.axhspan(3.0, 5.33, color="C2", alpha=0.2)
    a2.axhline(4, color="k", ls="--", lw=1)
    a2.set_xlabel("test point")
    a2.set_ylabel("Var ratio N vs 4N")
    return save(fig, stem)


def wave_profile(profile, stem) -> list:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(profile.xi, profile.v, label="v")
    ax.plot(profile.xi, profile.u, label="u")
    ax.set_xlabel(r"$\xi = x - st$")
    ax.legend(frameon=False)
    return save(fig, stem)
