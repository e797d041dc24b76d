"""Convergence figures rendered next to the delimited iteration log."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .diagnostics import complexity_trend

_RES_KEYS = ["eta_D", "eta_P", "eta_X", "eta_Z", "eta_W", "eta_S", "eta_I", "eta_qsdp"]


def render_convergence(rows, path):
    """Semilog plot of the relative KKT residual components over iterations."""
    ks = [r["k"] for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for key in _RES_KEYS:
        vals = np.array([r.get(key, np.nan) for r in rows], dtype=float)
        if np.all(~np.isfinite(vals)) or np.nanmax(vals, initial=0.0) == 0.0:
            continue
        style = {"lw": 1.8} if key == "eta_qsdp" else {"lw": 0.9, "alpha": 0.7}
        ax.semilogy(ks, np.maximum(vals, 1e-18), label=key, **style)
    ax.set_xlabel("iteration")
    ax.set_ylabel("relative residual")
    ax.legend(fontsize=8, ncol=2)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_trend(rows, path):
    """k * running-min of the KKT distance; flat or growing means trouble."""
    dvals = np.array([r.get("Dw", np.nan) for r in rows], dtype=float)
    mask = np.isfinite(dvals)
    if not np.any(mask):
        return False
    series, decreasing = complexity_trend(dvals[mask])
    ks = np.asarray([r["k"] for r in rows])[mask]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.semilogy(ks, np.maximum(series, 1e-30), lw=1.5)
    ax.set_xlabel("iteration")
    ax.set_ylabel("k * min KKT distance")
    ax.set_title("trend check: %s" % ("decreasing" if decreasing else "not decreasing"))
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return True
