"""PNG figures rendered next to the CSV traces."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .timeseries import TimeSeries  # noqa: E402

STYLE = {
    "figure.figsize": (7.0, 6.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "lines.linewidth": 1.2,
}


def plot_grid(ts: TimeSeries, path: str | Path, title: str = "") -> Path:
    """Frequency, reserve powers and (if present) turbine speed ratios."""
    xs = [c for c in ts.names if c.startswith("x_")]
    n = 3 if xs else 2
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(n, 1, sharex=True)
        axes[0].plot(ts.time, ts["f_coi"], color="k")
        axes[0].set_ylabel("frequency [Hz]")
        for c in ("P_hydro", "P_wind", "P_hydro_wind"):
            if c in ts and (c != "P_wind" or xs):
                axes[1].plot(ts.time, ts[c], label=c[2:].replace("_", "+"))
        axes[1].plot(ts.time, ts["P_ideal"], "k--", label="ideal")
        axes[1].set_ylabel("reserve power [MW]")
        axes[1].legend(loc="best")
        for c in xs:
            axes[2].plot(ts.time, ts[c], label=c[2:])
        if xs:
            axes[2].set_ylabel("speed ratio x")
            axes[2].legend(loc="best")
        axes[-1].set_xlabel("time [s]")
        if title:
            axes[0].set_title(title)
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path, dpi=120)
        plt.close(fig)
    return path


def plot_turbine(ts: TimeSeries, path: str | Path, title: str = "") -> Path:
    """Electric power (per unit of P_MPP) and speed ratio for every step run."""
    runs = [c[len("Pn_"):] for c in ts.names if c.startswith("Pn_")]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, 1, sharex=True)
        for r in runs:
            axes[0].plot(ts.time, ts[f"Pn_{r}"], label=r)
            axes[1].plot(ts.time, ts[f"x_{r}"], label=r)
        axes[0].set_ylabel("P_e / P_MPP")
        axes[1].set_ylabel("speed ratio x")
        axes[1].set_xlabel("time [s]")
        axes[0].legend(loc="best")
        if title:
            axes[0].set_title(title)
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path, dpi=120)
        plt.close(fig)
    return path
