"""Deterministic SVG rendering for trajectories and moment estimates.

Figures are written through the Agg backend with a fixed hash salt and no
date metadata, so the same inputs produce byte-identical SVG files; golden
tests and the CLI determinism contract rely on this.
"""

from __future__ import annotations

from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

__all__ = ["render_trajectory", "render_series"]

_MODE_BAND_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                     "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _new_axes(title: Optional[str]):
    plt.rcParams["svg.hashsalt"] = "episwitch"
    fig, ax = plt.subplots(figsize=(8.0, 4.5))
    if title:
        ax.set_title(title)
    ax.set_xlabel("t")
    return fig, ax


def _mode_spans(times: np.ndarray, modes: np.ndarray):
    """Merge consecutive equal modes into (mode, start, stop) spans."""
    spans = []
    start = times[0]
    current = modes[0]
    for t, j in zip(times[1:], modes[1:]):
        if j != current:
            spans.append((current, start, t))
            start, current = t, j
    spans.append((current, start, times[-1]))
    return spans


def render_trajectory(
    path,
    times: np.ndarray,
    states: np.ndarray,
    modes: np.ndarray,
    title: Optional[str] = None,
) -> None:
    """State curves x_i(t) over a shaded band showing the active mode."""
    times = np.asarray(times, dtype=float)
    states = np.atleast_2d(np.asarray(states, dtype=float))
    modes = np.asarray(modes, dtype=int)
    fig, ax = _new_axes(title)
    if times.shape[0] > 1:
        spans = _mode_spans(times, modes)
        # Band shading is unreadable (and slow) for thousands of segments.
        if len(spans) <= 400:
            for mode, start, stop in spans:
                ax.axvspan(start, stop, ymin=0.0, ymax=1.0, lw=0,
                           color=_MODE_BAND_COLORS[(mode - 1) % len(_MODE_BAND_COLORS)],
                           alpha=0.08)
    for i in range(states.shape[1]):
        ax.plot(times, states[:, i], lw=1.2, label=f"x{i + 1}")
    ax.set_ylabel("infected fraction")
    ax.legend(loc="upper right", fontsize=8)
    _save(fig, path)


def render_series(
    path,
    t: np.ndarray,
    curves: Sequence[tuple],
    title: Optional[str] = None,
    ylabel: str = "value",
) -> None:
    """Plot labelled curves, optionally with symmetric confidence bands.

    Each entry of ``curves`` is (label, values) or (label, values, band);
    bands are drawn as values +/- band.
    """
    t = np.asarray(t, dtype=float)
    fig, ax = _new_axes(title)
    for entry in curves:
        if len(entry) == 3:
            label, values, band = entry
            line, = ax.plot(t, values, lw=1.2, label=label)
            ax.fill_between(t, values - band, values + band,
                            color=line.get_color(), alpha=0.15, lw=0)
        else:
            label, values = entry
            ax.plot(t, values, lw=1.2, label=label)
    ax.set_ylabel(ylabel)
    ax.legend(loc="upper right", fontsize=8)
    _save(fig, path)
