"""Static figures for experiment reports."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def rate_figure(pairs, slope, intercept, path, xlabel="resolution", ylabel="error", title=None):
    """Log-log scatter of (resolution, error) with the fitted power law."""
    x = np.array([p[0] for p in pairs], dtype=float)
    y = np.array([p[1] for p in pairs], dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(x, y, "o", label="measured")
    xs = np.geomspace(x.min(), x.max(), 50)
    ax.loglog(xs, np.exp(intercept) * xs**slope, "-", label=f"fit, slope {slope:.3f}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def series_figure(times, series: dict, path, ylabel="value", title=None):
    fig, ax = plt.subplots(figsize=(5, 4))
    for name, values in series.items():
        ax.plot(times, values, marker=".", label=name)
    ax.set_xlabel("time")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def deviation_figure(names, deviations, tolerance, path, title=None):
    """Worst deviation per identity on a log axis against the tolerance."""
    vals = np.maximum(np.asarray(deviations, dtype=float), 1e-18)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.barh(names, vals)
    ax.set_xscale("log")
    ax.axvline(tolerance, color="k", linestyle="--", label="tolerance")
    ax.set_xlabel("worst deviation")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
