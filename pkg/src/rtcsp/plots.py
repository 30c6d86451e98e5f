"""Optional SVG figures for experiment outputs (presentation only)."""

from __future__ import annotations

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "rtcsp"
    return plt


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})


def accuracy_bars(table, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 3.5))
    n = len(table.methods)
    width = 0.8 / n
    x = np.arange(len(table.subjects))
    for i, m in enumerate(table.methods):
        vals = [np.nan if v is None else v for v in table.column(m)]
        ax.bar(x + i * width, vals, width, label=m)
    ax.set_xticks(x + 0.4 - width / 2, table.subjects)
    ax.set_ylabel("test accuracy (%)")
    ax.legend(fontsize="small", ncol=n)
    _save(fig, path)
    plt.close(fig)


def curve_lines(curve, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    pct = 100 * np.asarray(curve.fractions)
    for m in curve.methods:
        ax.plot(pct, curve.smoothed[m], label=m)
    ax.set_xlabel("target training data (%)")
    ax.set_ylabel("test accuracy (%)")
    ax.legend(fontsize="small")
    _save(fig, path)
    plt.close(fig)


def mvr_bars(reports, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    x = np.arange(len(reports))
    ax.bar(x - 0.2, [r.mean_base for r in reports], 0.4, yerr=[r.sem_base for r in reports], label="CSP")
    ax.bar(x + 0.2, [r.mean_rt for r in reports], 0.4, yerr=[r.sem_rt for r in reports], label="RTCSP")
    ax.set_xticks(x, [f"{100 * r.fraction:g}%" for r in reports])
    ax.set_ylabel("MVR")
    ax.legend(fontsize="small")
    _save(fig, path)
    plt.close(fig)
