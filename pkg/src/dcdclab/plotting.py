"""PNG figures next to the CSV outputs (matplotlib, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_waveform(wave, channels, path, title: str = "") -> Path:
    channels = [c for c in channels if c in wave.names]
    fig, axes = plt.subplots(len(channels), 1, sharex=True, figsize=(8, 1.8 * len(channels) + 0.6),
                             squeeze=False)
    t_ms = wave.times * 1e3
    for ax, name in zip(axes[:, 0], channels):
        ax.plot(t_ms, wave[name], lw=0.8)
        ax.set_ylabel(name)
        ax.grid(alpha=0.3)
    for t_ev in wave.event_times("load_step"):
        for ax in axes[:, 0]:
            ax.axvline(t_ev * 1e3, color="k", ls="--", lw=0.7)
    axes[-1, 0].set_xlabel("t [ms]")
    if title:
        axes[0, 0].set_title(title)
    return _save(fig, path)


def plot_comparison(cmp, path) -> Path:
    fig, (a1, a2) = plt.subplots(2, 1, sharex=True, figsize=(8, 5))
    t_ms = cmp.t * 1e3
    a1.plot(t_ms, cmp.U_full, lw=0.9, label="full")
    a1.plot(t_ms, cmp.U_reduced, lw=0.9, ls="--", label="reduced")
    a1.set_ylabel("U_O [V]")
    a1.legend()
    a1.grid(alpha=0.3)
    a2.semilogy(t_ms, np.maximum(cmp.rel_err, 1e-18), lw=0.8)
    a2.set_ylabel("rel_err")
    a2.set_xlabel("t [ms]")
    a2.grid(alpha=0.3)
    return _save(fig, path)


def plot_sweep(result, path) -> Path:
    rows = result.rows
    v1 = np.array([r[0] for r in rows])
    c2 = np.array([r[2].c2 for r in rows])
    fig, ax = plt.subplots(figsize=(7, 4.5))
    if len(result.axes) == 1:
        ax.plot(v1, c2, marker="o", ms=3)
        ax.set_xlabel(result.axes[0])
        ax.set_ylabel("c2")
    else:
        v2 = np.array([r[1] for r in rows])
        n1, n2 = len(np.unique(v1)), len(np.unique(v2))
        Z = np.array([float(r[2].stable) for r in rows]).reshape(n1, n2)
        m = ax.pcolormesh(np.unique(v2), np.unique(v1), Z, shading="auto", vmin=0, vmax=1)
        fig.colorbar(m, ax=ax, label="both conditions hold")
        ax.set_xlabel(result.axes[1])
        ax.set_ylabel(result.axes[0])
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_trace(trace, path) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.semilogy(np.arange(1, len(trace) + 1), trace)
    ax.set_xlabel("evaluation")
    ax.set_ylabel("best objective")
    ax.grid(alpha=0.3)
    return _save(fig, path)
