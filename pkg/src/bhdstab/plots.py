"""PNG figures for reports; uses the non-interactive Agg backend."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def trajectory_figure(traj, bounds, path) -> Path:
    """State norm on a log scale plus ``|U^(j)|`` against the bound ``R_j``."""
    q = 1 if traj.jets is None else traj.jets.shape[1]
    fig, axes = plt.subplots(q + 1, 1, figsize=(7, 2.2 * (q + 1)), sharex=True)
    t = traj.times
    norm = np.linalg.norm(traj.states, axis=1)
    axes[0].semilogy(t, np.maximum(norm, 1e-300))
    axes[0].set_ylabel("|x|")
    for j in range(q):
        ax = axes[j + 1]
        vals = traj.controls if traj.jets is None else traj.jets[:, j, :]
        for c in range(vals.shape[1]):
            ax.plot(t, vals[:, c], lw=1, label=f"u{c + 1}" if vals.shape[1] > 1 else None)
        if bounds is not None and j <= bounds.p:
            r = bounds.R[j]
            ax.axhline(r, color="k", ls="--", lw=0.8)
            ax.axhline(-r, color="k", ls="--", lw=0.8)
        ax.set_ylabel("u" if j == 0 else f"d^{j}u/dt^{j}")
        if vals.shape[1] > 1:
            ax.legend(loc="upper right", fontsize=7)
    axes[-1].set_xlabel("t")
    return _save(fig, path)


def battery_figure(res, bounds, path) -> Path:
    """Per-order sup over the battery, normalized by ``R_j`` (bars above 1 are violations)."""
    q = res.sup_abs.shape[1] if bounds is None else bounds.p + 1
    R = np.ones(q) if bounds is None else np.asarray(bounds.R, dtype=float)
    ratio = res.sup_abs[:, :q] / R[None, :]
    fig, ax = plt.subplots(figsize=(7, 3))
    idx = np.arange(ratio.shape[0])
    w = 0.8 / q
    for j in range(q):
        ax.bar(idx + j * w, ratio[:, j], width=w, label=f"j={j}")
    ax.axhline(1.0, color="k", ls="--", lw=0.8)
    ax.set_xlabel("initial state")
    ax.set_ylabel("sup |U^(j)| / R_j")
    ax.legend(fontsize=7)
    return _save(fig, path)


def growth_figure(result: dict, path) -> Path:
    """``|u'(0)|`` against ``l`` for the saturated linear law with the fitted line."""
    ls = np.asarray(result["l"])
    sim = np.abs(np.asarray(result["simulated"]))
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(ls, sim, "o", label="jet")
    ax.plot(ls, np.abs(np.asarray(result["closed_form"])), "x", label="closed form")
    ax.plot(ls, result["slope"] * ls + result["intercept"], "-", lw=0.8,
            label=f"fit, slope {result['slope']:.4g}")
    if result.get("contrast_sup_du") is not None and result.get("contrast_R1") is not None:
        ax.axhline(result["contrast_R1"], color="k", ls="--", lw=0.8, label="R1 of bounded law")
    ax.set_xlabel("l")
    ax.set_ylabel("|du/dt at t=0|")
    ax.legend(fontsize=8)
    return _save(fig, path)
