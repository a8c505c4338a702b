"""Figure rendering for the report paths; every report CSV gets a companion
PNG written next to it."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_META = {"Software": None, "CreationDate": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return str(path)


def sweep_figure(rows, metric: str, path):
    """Metric against n: per-seed scatter plus the per-n median, log-log."""
    rows = list(rows)
    ns = np.array([r["n"] for r in rows], dtype=float)
    vals = np.array([r["value"] for r in rows], dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(ns, vals, "o", ms=4, alpha=0.45, label="runs")
    uniq = np.unique(ns)
    med = [np.median(vals[ns == u]) for u in uniq]
    ax.plot(uniq, med, "k-", lw=1.5, label="median")
    if np.all(vals > 0):
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel(metric)
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def curve_figure(times, series: dict, path, ylabel: str = "", logy=False):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, vals in series.items():
        ax.plot(times, vals, lw=1.2, label=label)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def profile_figure(pf, path, component: int = 0):
    """Space-time heat map of one profile component."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    img = ax.imshow(pf.values[:, :, component].T, origin="lower", aspect="auto",
                    extent=[pf.times[0], pf.times[-1], 0.0, 1.0],
                    cmap="viridis")
    fig.colorbar(img, ax=ax, label="state")
    ax.set_xlabel("t")
    ax.set_ylabel("x")
    return _save(fig, path)


def degree_figure(degrees, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(degrees, bins=min(40, max(8, len(set(degrees)))), color="#46658a")
    ax.set_xlabel("degree")
    ax.set_ylabel("count")
    return _save(fig, path)


def concentration_figure(report, path):
    fig, ax = plt.subplots(figsize=(4.2, 3.5))
    vals = [max(report.empirical_tail, 1e-12), max(report.bound, 1e-12)]
    ax.bar(["empirical tail", "bound"], vals, color=["#46658a", "#b34f3f"])
    ax.set_yscale("log")
    ax.set_ylabel("probability")
    ax.set_title(f"threshold {report.epsilon_n:.4g}", fontsize=9)
    return _save(fig, path)


def trajectory_figure(tr, path, max_particles: int = 24):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    step = max(1, tr.n // max_particles)
    for i in range(0, tr.n, step):
        ax.plot(tr.times, tr.states[:, i, 0], lw=0.7, alpha=0.7)
    ax.set_xlabel("t")
    ax.set_ylabel("state (component 0)")
    return _save(fig, path)
