"""Static figures rendered from the CSV outputs. Needs matplotlib (optional extra)."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_load_vs_vcc(path, vcc: np.ndarray, loads, capacity: np.ndarray | None = None, labels=None) -> Path:
    """One panel per cluster: VCC, optional true capacity and any number of load curves."""
    plt = _pyplot()
    T, D = vcc.shape
    loads = [np.asarray(x) for x in loads]
    labels = labels or ["sample loads"] + ["_nolegend_"] * (len(loads) - 1)
    fig, axes = plt.subplots(D, 1, figsize=(7, 1.8 * D + 0.6), sharex=True, squeeze=False)
    hours = np.arange(1, T + 1)
    for d, ax in enumerate(axes[:, 0]):
        for load, label in zip(loads, labels):
            ax.step(hours, load[:, d], where="mid", lw=0.8, alpha=0.6, label=label)
        ax.step(hours, vcc[:, d], where="mid", color="k", lw=1.6, label="VCC")
        if capacity is not None:
            ax.axhline(capacity[:, d].max(), color="r", ls="--", lw=0.8, label="capacity")
        ax.set_ylabel(f"cluster {d + 1}")
    axes[0, 0].legend(fontsize=7, ncol=4, loc="upper right")
    axes[-1, 0].set_xlabel("hour")
    return _save(fig, path)


def plot_schedule_heatmap(path, Y: np.ndarray, c: int, d: int | None = None) -> Path:
    """Heatmap of the planned fractions of class ``c`` (1-based) over submit and execution hour.

    With ``d=None`` the clusters are summed.
    """
    plt = _pyplot()
    grid = Y[:, c - 1].sum(axis=-1) if d is None else Y[:, c - 1, :, d - 1]
    fig, ax = plt.subplots(figsize=(6, 4))
    im = ax.imshow(grid, aspect="auto", origin="lower", cmap="viridis", extent=(0.5, grid.shape[1] + 0.5, 0.5, grid.shape[0] + 0.5))
    ax.set_xlabel("execution hour t")
    ax.set_ylabel("submit hour k")
    ax.set_title(f"class {c}" + ("" if d is None else f", cluster {d}"))
    fig.colorbar(im, ax=ax)
    return _save(fig, path)


def plot_sweep(path, rows: list[dict]) -> Path:
    plt = _pyplot()
    param = rows[0]["param"]
    x = [r["value"] for r in rows]
    fig, ax1 = plt.subplots(figsize=(6, 3.5))
    ax1.plot(x, [r["objective"] for r in rows], "o-", color="C0")
    ax1.set_xlabel(param)
    ax1.set_ylabel("planned cost", color="C0")
    ax2 = ax1.twinx()
    ax2.plot(x, [r["validation_violations"] for r in rows], "s--", color="C1")
    ax2.set_ylabel("validation VCC violations", color="C1")
    if param == "epsilon" and min(x) > 0:
        ax1.set_xscale("log")
    return _save(fig, path)


def plot_comparison(path, rows: list[dict]) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4, 3.5))
    ax.boxplot([[r["dro_pct"] for r in rows], [r["greedy_pct"] for r in rows]])
    ax.set_xticks([1, 2], ["DRO tracking", "greedy"])
    ax.set_ylabel("cost increase over oracle [%]")
    return _save(fig, path)


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    fig.clf()
    import matplotlib.pyplot as plt

    plt.close(fig)
    return path
