"""Figure rendering for the report command.

Figures are written next to the delimited series files; everything uses the
Agg backend so the command works headless.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

FIGSIZE = (6.0, 3.8)


def _save(fig, outdir, name, written):
    path = os.path.join(outdir, name)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)


def render_branch_figures(series: dict, extrema: list, outdir: str) -> list:
    """Speed, energy and crest-parameter curves against amplitude."""
    written: list = []
    marks = {e["kind"]: e["alpha"] for e in extrema}
    for key, ylabel, fname in (("c", "travel speed c", "branch_speed.png"),
                               ("energy", "energy E", "branch_energy.png"),
                               ("omega", "crest parameter", "branch_omega.png")):
        if key not in series or not series[key]:
            continue
        alpha, values = zip(*series[key])
        fig, ax = plt.subplots(figsize=FIGSIZE)
        ax.plot(alpha, values, "-", lw=1.2, color="tab:blue")
        for kind, a_star in marks.items():
            ax.axvline(a_star, color="tab:red" if "speed" in kind else "tab:green",
                       ls="--", lw=0.8, label=kind.replace("_", " "))
        ax.set_xlabel("amplitude / depth")
        ax.set_ylabel(ylabel)
        if marks:
            ax.legend(frameon=False, fontsize=8)
        ax.grid(alpha=0.3)
        _save(fig, outdir, fname, written)
    return written


def render_stability_figures(growth: list, drift: dict, outdir: str) -> list:
    """Growth rates over the branch and kernel-drift samples per point."""
    written: list = []
    if growth:
        alpha, rates = zip(*growth)
        fig, ax = plt.subplots(figsize=FIGSIZE)
        ax.plot(alpha, rates, "o-", ms=4, color="tab:red")
        ax.set_xlabel("amplitude / depth")
        ax.set_ylabel("growth rate")
        ax.grid(alpha=0.3)
        _save(fig, outdir, "growth_rates.png", written)
    if drift:
        fig, ax = plt.subplots(figsize=FIGSIZE)
        for label, samples in drift.items():
            if not samples:
                continue
            r, k = zip(*samples)
            ax.loglog(r, [abs(v) for v in k], "o-", ms=4, label=label)
        ax.set_xlabel("rate")
        ax.set_ylabel("|kernel eigenvalue|")
        ax.legend(frameon=False, fontsize=8)
        ax.grid(alpha=0.3, which="both")
        _save(fig, outdir, "kernel_drift.png", written)
    return written


def render_mode_figure(mode: dict, alpha: float, outdir: str) -> list:
    written: list = []
    fig, ax = plt.subplots(figsize=FIGSIZE)
    x = mode["physical_x"]
    ax.plot(x, mode["eta"], lw=1.0, label="elevation trace")
    ax.plot(x, mode["f"], lw=1.0, ls="--", label="stream trace")
    ax.set_xlim(-25, 25)
    ax.set_xlabel("x")
    ax.set_title(f"growing mode, rate {mode['lambda_star']:.4g}, "
                 f"amplitude {alpha:.4f}")
    ax.legend(frameon=False, fontsize=8)
    ax.grid(alpha=0.3)
    _save(fig, outdir, f"mode_alpha{alpha:.4f}.png", written)
    return written
