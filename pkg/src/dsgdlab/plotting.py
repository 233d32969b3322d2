"""Static figures written next to the CSV outputs (non-interactive Agg backend)."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["figure", "save", "plot_traces", "plot_tune", "plot_sweep", "plot_slopes", "plot_lower_bound"]

_STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.4,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def figure(ncols: int = 1, width: float = 4.0, height: float | None = None):
    """Figure with ``ncols`` panels in a golden-ratio box per panel."""
    height = height or width * (math.sqrt(5) - 1) / 2
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(1, ncols, figsize=(width * ncols, height), squeeze=False)
    return fig, list(axes[0])


def save(fig, stem: str | Path, formats: Iterable[str] = ("png",)) -> list[Path]:
    """Write ``fig`` as ``stem.<fmt>`` for every format and close it."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    paths = []
    with plt.rc_context(_STYLE):
        for fmt in formats:
            path = stem.with_suffix(f".{fmt}")
            fig.savefig(path)
            paths.append(path)
    plt.close(fig)
    return paths


def plot_traces(traces: Mapping[str, object], stem, formats=("png",)) -> list[Path]:
    """``dist2`` and ``xi`` against ``t`` on log axes, one line per labelled trace."""
    fig, (ax_d, ax_x) = figure(2)
    for label, tr in traces.items():
        ax_d.semilogy(tr.t, tr.dist2, label=label)
        ax_x.semilogy(tr.t, [max(x, 1e-300) for x in tr.xi], label=label)
    ax_d.set(xlabel="iteration t", ylabel="mean squared distance to optimum")
    ax_x.set(xlabel="iteration t", ylabel="consensus distance")
    if len(traces) > 1:
        ax_d.legend(frameon=False)
    return save(fig, stem, formats)


def plot_tune(result, stem, formats=("png",)) -> list[Path]:
    """Iterations to target against stepsize; failed grid points drawn at the top."""
    fig, (ax,) = figure()
    pts = sorted(result.grid, key=lambda g: g.eta)
    ok = [(g.eta, g.T) for g in pts if g.T is not None]
    if ok:
        ax.loglog(*zip(*ok), "o-", ms=3, label="reached")
        top = max(T for _, T in ok) * 2
        bad = [g.eta for g in pts if g.T is None]
        if bad:
            ax.loglog(bad, [top] * len(bad), "x", color="grey", label="not reached")
    if result.eta_star is not None:
        ax.axvline(result.eta_star, ls=":", color="k")
    ax.set(xlabel="stepsize", ylabel=f"iterations to {result.eps:g}")
    ax.legend(frameon=False)
    return save(fig, stem, formats)


def plot_sweep(cells: Sequence, stem, formats=("png",)) -> list[Path]:
    """Tuned iterations per (noise, heterogeneity) cell, bars grouped by topology."""
    keys = sorted({(c.sigma_bar2, c.zeta_bar2) for c in cells})
    kinds = list(dict.fromkeys(c.topology for c in cells))
    lookup = {(c.topology, c.sigma_bar2, c.zeta_bar2): c.T for c in cells}
    fig, (ax,) = figure(width=max(4.0, 0.6 * len(keys) * len(kinds)))
    w = 0.8 / max(len(kinds), 1)
    for k, kind in enumerate(kinds):
        xs = [i + k * w for i in range(len(keys))]
        ys = [lookup.get((kind, s, z)) or float("nan") for s, z in keys]
        ax.bar(xs, ys, width=w, label=kind)
    ax.set_yscale("log")
    ax.set_xticks([i + 0.4 - w / 2 for i in range(len(keys))])
    ax.set_xticklabels([f"{s:g}/{z:g}" for s, z in keys], rotation=45, ha="right")
    ax.set(xlabel="noise / heterogeneity", ylabel="tuned iterations")
    ax.legend(frameon=False)
    return save(fig, stem, formats)


def plot_slopes(results: Mapping[str, object], stem, formats=("png",)) -> list[Path]:
    """Mean tuned iterations against ``1/sqrt(eps)`` with the fitted lines."""
    fig, (ax,) = figure()
    for kind, res in results.items():
        fit = res.fit
        line = ax.plot(res.x, res.T_mean, "o", ms=4, label=f"{kind} (slope {fit.slope:.3g})")[0]
        ax.plot(res.x, fit.slope * res.x + fit.intercept, "-", color=line.get_color(), lw=0.8)
    ax.set(xlabel="1/sqrt(eps)", ylabel="tuned iterations")
    ax.legend(frameon=False)
    return save(fig, stem, formats)


def plot_lower_bound(result, stem, formats=("png",)) -> list[Path]:
    """Measured iterations and the explicit lower bound against ``1/sqrt(eps)``."""
    fig, (ax,) = figure()
    rows = [r for r in result.rows if r.T is not None]
    ax.loglog([1 / math.sqrt(r.eps) for r in rows], [r.T for r in rows], "o-", ms=4, label="measured")
    valid = [r for r in result.rows if r.bound is not None]
    if valid:
        ax.loglog([1 / math.sqrt(r.eps) for r in valid], [r.bound for r in valid], "s--", ms=4, label="lower bound")
    ax.set(xlabel="1/sqrt(eps)", ylabel="iterations")
    ax.legend(frameon=False)
    return save(fig, stem, formats)
