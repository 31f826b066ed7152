"""Figures written next to the CSV reports."""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def figsize(scale=1.0, width_in=6.0):
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    w = width_in * scale
    return w, w * golden


def _positive(values, floor=1e-300):
    # log axes cannot show exact zeros
    return [max(float(v), floor) for v in values]


def plot_mse_curves(rows, path, title="rollout error"):
    """MSE per state block against rollout step (rows from ``evaluate``)."""
    steps = [int(r["step"]) for r in rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        for key, label in (("mse_p", "position"), ("mse_v", "velocity"),
                           ("mse_q", "orientation"), ("mse_w", "angular velocity")):
            ax.semilogy(steps, _positive(float(r[key]) for r in rows), label=label)
        ax.set_xlabel("step")
        ax.set_ylabel("MSE")
        ax.set_title(title)
        ax.legend()
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_efficiency(rows, path):
    """Composite error against training fraction (rows from ``sweep-efficiency``)."""
    frac = [float(r["fraction"]) for r in rows]
    mean = _positive(float(r["mean_error"]) for r in rows)
    std = [float(r["std_error"]) for r in rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        ax.errorbar(frac, mean, yerr=std, marker="o", capsize=3)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("fraction of training transitions")
        ax.set_ylabel("max relative composite error")
        for f, m, r in zip(frac, mean, rows):
            ax.annotate(str(r["n_samples"]), (f, m), textcoords="offset points", xytext=(4, 4), fontsize=7)
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_heights(traj, path):
    """Center-of-mass height of every rod against time."""
    import numpy as np

    t = np.arange(traj.n_steps + 1) * traj.dt
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        for i in range(traj.n_rods):
            ax.plot(t, traj.states.p[:, i, 2], lw=1, label=f"rod {i}")
        ax.set_xlabel("time [s]")
        ax.set_ylabel("height [m]")
        if traj.n_rods <= 8:
            ax.legend(ncol=2)
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_comparison(values: dict, path, ylabel="one-step MSE"):
    """Bar chart of one scalar per method (log scale)."""
    names = list(values)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(0.7))
        ax.bar(names, _positive(values.values()))
        ax.set_yscale("log")
        ax.set_ylabel(ylabel)
        fig.savefig(path)
        plt.close(fig)
    return path
