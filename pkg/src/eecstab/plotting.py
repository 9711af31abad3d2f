"""Figure rendering for the CLI report paths.

Each figure is also written as CSV data plus a gnuplot script, so nothing
here is needed to reproduce a plot; the PNGs are a convenience.
"""

from __future__ import annotations

import math
import os
import tempfile

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def figure_size(width_in: float = 4.5):
    return (width_in, width_in * GOLDEN)


def _new(ncols=1):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(1, ncols, figsize=figure_size(4.5 * ncols))
    return fig, ax


def save_figure(fig, path: str):
    """Write ``fig`` to ``path`` via a temporary file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(suffix=".png", dir=directory)
    os.close(fd)
    try:
        with plt.rc_context(STYLE):
            fig.savefig(tmp, format="png", bbox_inches="tight")
        os.replace(tmp, path)
    finally:
        plt.close(fig)
        if os.path.exists(tmp):
            os.unlink(tmp)


def plot_density_comparison(x, ideal, real, path: str):
    """Two panels: ideal |psi|^2 (a) and perturbed |psi + dpsi|^2 (b)."""
    fig, (a, b) = _new(ncols=2)
    with plt.rc_context(STYLE):
        a.plot(x, ideal, color="k", lw=1.2)
        a.set_title("(a) ideal", fontsize=9)
        b.plot(x, real, color="tab:red", lw=1.2)
        b.set_title("(b) real", fontsize=9)
        for ax in (a, b):
            ax.set_xlabel("q")
            ax.set_ylim(bottom=0)
        a.set_ylabel("density")
    save_figure(fig, path)


def plot_g_profile(x, g, dx: float, dy: float, path: str):
    fig, ax = _new()
    with plt.rc_context(STYLE):
        ax.plot(x, g, color="k", lw=1.2, label=f"dx={dx:g}, dy={dy:g}")
        ax.axhline(0.0, color="0.6", lw=0.6)
        ax.axvline(0.0, color="0.6", lw=0.6)
        ax.set_xlabel("x")
        ax.set_ylabel("g(x)")
        ax.legend(frameon=False)
    save_figure(fig, path)


def plot_drift(epsilons, drifts, kappa: float, path: str):
    """Drift against amplitude on log axes, with the kappa*eps threshold."""
    fig, ax = _new()
    with plt.rc_context(STYLE):
        ax.loglog(epsilons, drifts, "o-", color="k", label="drift")
        lo, hi = min(epsilons), max(epsilons)
        ax.loglog([lo, hi], [kappa * lo, kappa * hi], "--", color="0.5", label=f"{kappa:g} eps")
        ax.set_xlabel("eps")
        ax.set_ylabel("drift")
        ax.legend(frameon=False)
    save_figure(fig, path)


def gnuplot_script(density_csv: str, profile_csv: str, stem: str = "figures") -> str:
    """Script rendering the density comparison and the g(x) profile to PNG."""
    return f"""# render with: gnuplot {stem}.gp
set datafile separator ","
set key autotitle columnhead
set terminal pngcairo size 900,360
set output "{stem}_density.png"
set multiplot layout 1,2
set xlabel "q"
set ylabel "density"
set title "(a) ideal"
plot "{density_csv}" using 1:2 with lines lw 2 lc rgb "black" notitle
set title "(b) real"
plot "{density_csv}" using 1:3 with lines lw 2 lc rgb "red" notitle
unset multiplot
set terminal pngcairo size 480,360
set output "{stem}_profile.png"
set title "g(x) on y = x"
set xlabel "x"
set ylabel "g"
set xzeroaxis
set yzeroaxis
plot "{profile_csv}" using 1:2 with lines lw 2 lc rgb "black" notitle
"""
