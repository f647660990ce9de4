"""Figures for the experiment tables.

Each figure is written as a PNG next to the CSV it was drawn from.  The Agg
backend and stripped PNG metadata keep the bytes reproducible.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "lines.linewidth": 1.5,
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path


def png_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".png")


def tradeoff_curves(curves: dict, path, eval_epsilon: float) -> Path:
    """One frontier per system: nominal cost against adversarial cost."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, (nc, ac) in curves.items():
            ax.plot(nc, ac, marker=".", label=label)
        ax.set_xlabel("nominal cost")
        ax.set_ylabel(f"adversarial cost at epsilon = {eval_epsilon:g}")
        ax.legend()
        return _save(fig, path)


def envelope(rho, lqr, adv, path) -> Path:
    """(NC, AC) of the LQR and adversarially robust controllers as rho varies."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot([p[0] for p in lqr], [p[1] for p in lqr], "o-", label="LQR")
        ax.plot([p[0] for p in adv], [p[1] for p in adv], "s-", label="adversarially robust")
        for r, a, b in zip(rho, lqr, adv):
            ax.plot([a[0], b[0]], [a[1], b[1]], color="0.7", lw=0.8)
            ax.annotate(f"{r:g}", a, fontsize=7, xytext=(3, 3), textcoords="offset points")
        ax.set_xlabel("nominal cost")
        ax.set_ylabel("adversarial cost")
        ax.legend()
        return _save(fig, path)


def running_costs(t, series: dict, title: str, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, y in series.items():
            ax.plot(t, y, label=label)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("time step")
        ax.set_ylabel("running average cost")
        ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def bound_sweep(gamma, series: dict, path) -> Path:
    """Log-log plot of the exact gap and its bounds; missing values are skipped."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, y in series.items():
            pts = [(g, v) for g, v in zip(gamma, y) if v is not None and v > 0]
            if pts:
                ax.plot(*zip(*pts), marker=".", label=label)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("gamma")
        ax.set_ylabel("nominal cost gap")
        ax.legend()
        return _save(fig, path)
