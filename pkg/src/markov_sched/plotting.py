"""Figures written next to the CSV artifacts."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {
    "figure.figsize": (5.0, 3.4),
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8,
    "savefig.dpi": 150,
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    # fixed metadata keeps reruns byte-stable
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_index_curve(curves, path: Path) -> Path:
    """``curves``: list of (label, pi array, W array)."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for label, x, w in curves:
            ax.plot(x, w, label=label)
        ax.set_xlabel("belief $\\pi$")
        ax.set_ylabel("Whittle index $W(\\pi)$")
        ax.legend()
        return _save(fig, path)


def plot_thresholds(omegas, thresholds, path: Path, delta: float) -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        pts = [(w, t) for w, t in zip(omegas, thresholds) if t is not None]
        ax.plot([w for w, _ in pts], [t for _, t in pts], "o-", ms=3)
        ax.axvline(delta, color="grey", ls=":", lw=1)
        ax.set_xlabel("subsidy $\\omega$")
        ax.set_ylabel("threshold $\\pi^*(\\omega)$")
        return _save(fig, path)


def plot_trace(traces, path: Path) -> Path:
    """``traces``: list of (label, t list, W list)."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for label, t, w in traces:
            ax.plot(t, w, "o-", ms=3, label=label)
        ax.set_xlabel("idle slots $t$")
        ax.set_ylabel("index value")
        ax.legend()
        return _save(fig, path)


def plot_lines(x, series: dict, xlabel: str, ylabel: str, path: Path, marker="o-") -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for label, y in series.items():
            ax.plot(x, y, marker, ms=3, label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend()
        return _save(fig, path)


def plot_gain_table(instances, gains, path: Path) -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        xs = [i for i, g in zip(instances, gains) if g is not None]
        ys = [g for g in gains if g is not None]
        ax.bar(xs, ys, color="tab:blue")
        ax.axhline(90.0, color="grey", ls=":", lw=1)
        ax.set_xlabel("instance")
        ax.set_ylabel("%gain")
        ax.set_ylim(0, 105)
        return _save(fig, path)


def plot_policy_values(names, values, path: Path) -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.bar(names, values, color="tab:green")
        ax.set_ylabel("expected discounted reward")
        return _save(fig, path)
