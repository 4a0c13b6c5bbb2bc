"""Static figures written next to the CSV/JSON outputs of the CLI.

Figures are built on ``matplotlib.figure.Figure`` directly so that no
pyplot state or interactive backend is involved.
"""

from __future__ import annotations

import numpy as np
from matplotlib.figure import Figure

from .tessellation import TTess

STYLE = {"segment": "#1f4e79", "window": "black", "field": "#9c9c9c", "band": "#c6dbef"}


def _finish(fig: Figure, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120)


def draw_tessellation(ax, t: TTess, color=None, lw: float = 1.0) -> None:
    for ring in t.window.rings:
        r = np.asarray(ring + ring[:1])
        ax.plot(r[:, 0], r[:, 1], color=STYLE["window"], lw=1.2)
    for s in t.segment_geoms():
        ax.plot([s.a[0], s.b[0]], [s.a[1], s.b[1]], color=color or STYLE["segment"], lw=lw)
    ax.set_aspect("equal")
    ax.set_xticks([])
    ax.set_yticks([])


def plot_tessellation(t: TTess, path, title: str | None = None) -> None:
    fig = Figure(figsize=(4.5, 4.5))
    ax = fig.add_subplot()
    draw_tessellation(ax, t)
    if title:
        ax.set_title(title, fontsize=9)
    _finish(fig, path)


def plot_approximation(landscape, t: TTess, path) -> None:
    """Input fields beside the fitted T-tessellation."""
    fig = Figure(figsize=(9, 4.5))
    a0, a1 = fig.subplots(1, 2)
    for f in landscape.fields:
        for ring in f.rings:
            r = np.asarray(list(ring) + [ring[0]])
            a0.plot(r[:, 0], r[:, 1], color=STYLE["field"], lw=0.8)
    for ring in landscape.domain.rings:
        r = np.asarray(list(ring) + [ring[0]])
        a0.plot(r[:, 0], r[:, 1], color=STYLE["window"], lw=1.2)
    a0.set_aspect("equal")
    a0.set_title("fields", fontsize=9)
    draw_tessellation(a1, t)
    a1.set_title(f"T-tessellation, {len(t.cells)} cells", fontsize=9)
    _finish(fig, path)


def plot_cell_distributions(input_rows, output_rows, path) -> None:
    fig = Figure(figsize=(9, 3.2))
    axes = fig.subplots(1, 3)
    for ax, col in zip(axes, ("area", "perimeter", "n_vertices")):
        a = [r[col] for r in input_rows]
        b = [r[col] for r in output_rows]
        bins = np.histogram_bin_edges(np.concatenate([a, b]), bins=15)
        ax.hist(a, bins=bins, alpha=0.6, label="fields")
        ax.hist(b, bins=bins, alpha=0.6, label="cells")
        ax.set_xlabel(col.replace("_", " "))
    axes[0].legend(frameon=False, fontsize=8)
    _finish(fig, path)


def plot_feature_traces(features: np.ndarray, labels, path) -> None:
    features = np.atleast_2d(features)
    d = features.shape[1]
    fig = Figure(figsize=(7, 1.8 * d))
    axes = np.atleast_1d(fig.subplots(d, 1, sharex=True))
    for k, ax in enumerate(axes):
        ax.plot(features[:, k], lw=0.7)
        ax.set_ylabel(labels[k], fontsize=8)
    axes[-1].set_xlabel("retained sample")
    _finish(fig, path)


def plot_fit(fit, path) -> None:
    """Trajectory of the reference parameter and the observed-vs-simulated features."""
    trace = fit.outer_trace
    psi = np.array([p for p, _, _ in trace] + [fit.theta_hat])
    labels = [s.label for s in fit.specs] or [f"theta{k + 1}" for k in range(psi.shape[1])]
    fig = Figure(figsize=(9, 4))
    a0, a1 = fig.subplots(1, 2)
    if psi.shape[1] >= 2:
        a0.plot(psi[:, 0], psi[:, 1], "o-", ms=3)
        a0.plot(*psi[-1, :2], "r*", ms=10)
        a0.set_xlabel(labels[0])
        a0.set_ylabel(labels[1])
    else:
        a0.plot(psi[:, 0], "o-", ms=3)
        a0.set_xlabel("outer iteration")
        a0.set_ylabel(labels[0])
    a0.set_title("reference parameter", fontsize=9)
    if fit.sample is not None and fit.sample.features.shape[1] >= 2:
        f = fit.sample.features
        a1.plot(f[:, 0], f[:, 1], ".", ms=3, alpha=0.5)
        a1.plot(*fit.observed_features[:2], "r*", ms=12)
        a1.set_xlabel(labels[0])
        a1.set_ylabel(labels[1])
    elif fit.sample is not None:
        a1.hist(fit.sample.features[:, 0], bins=30)
        a1.axvline(fit.observed_features[0], color="r")
    a1.set_title("last Monte Carlo sample", fontsize=9)
    _finish(fig, path)


def plot_envelope(res, path) -> None:
    r = res.f_obs.r_grid
    fig = Figure(figsize=(5, 4))
    ax = fig.add_subplot()
    ax.fill_between(r, res.lower, res.upper, color=STYLE["band"], label="envelope")
    ax.plot(r, res.f_ref.values, "k--", lw=1, label="reference")
    ax.plot(r, res.f_obs.values, "r-", lw=1.2, label="observed")
    ax.set_xlabel("r")
    ax.set_ylabel("F(r)")
    ax.set_title(f"p = {res.p_value:.3g}", fontsize=9)
    ax.legend(frameon=False, fontsize=8)
    _finish(fig, path)


def plot_cell_histograms(rows, path) -> None:
    fig = Figure(figsize=(6, 3.2))
    a0, a1 = fig.subplots(1, 2)
    a0.hist([r["area"] for r in rows], bins=20)
    a0.set_xlabel("area")
    a1.hist([r["elongation"] for r in rows], bins=20)
    a1.set_xlabel("elongation")
    _finish(fig, path)
