"""Figure rendering for the report path.

Every CLI command that writes delimited output can render a companion
PNG next to it.  All rendering uses the Agg backend so runs are headless
and reproducible.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "plot_trajectory",
    "plot_sweep",
    "plot_validation",
    "plot_parity",
    "plot_multi_topology",
]

_COMPARTMENT_COLORS = {
    "S": "tab:blue",
    "E": "tab:orange",
    "I": "tab:red",
    "R": "tab:green",
}


def _style(ax, xlabel, ylabel, title=None):
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3, linewidth=0.5)


def plot_trajectory(records, path, title=None) -> None:
    """Ensemble-mean compartment fractions over time, one line each."""
    grid = records[0].grid
    comps = records[0].compartments
    stack = np.stack([r.fractions for r in records])
    mean = stack.mean(axis=0)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for k, label in enumerate(comps):
        color = _COMPARTMENT_COLORS.get(label)
        ax.plot(grid, mean[k], label=label, color=color, linewidth=1.5)
        if stack.shape[0] > 1:
            lo = np.quantile(stack[:, k, :], 0.25, axis=0)
            hi = np.quantile(stack[:, k, :], 0.75, axis=0)
            ax.fill_between(grid, lo, hi, color=color, alpha=0.15, linewidth=0)
    _style(ax, "time (days)", "population fraction", title)
    ax.legend(loc="best", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def plot_sweep(rows, path, title=None) -> None:
    """Peak-I / final-R vs epsilon with bootstrap CIs, plus step counts."""
    eps = [r.epsilon for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.2, 3.8))
    peak = np.array([r.peak_i for r in rows])
    perr = np.array([[r.peak_i - r.peak_i_ci[0] for r in rows],
                     [r.peak_i_ci[1] - r.peak_i for r in rows]])
    ax1.errorbar(eps, peak, yerr=perr, marker="o", capsize=3, label="peak I")
    if rows and rows[0].final_r is not None:
        fin = np.array([r.final_r for r in rows])
        ferr = np.array([[r.final_r - r.final_r_ci[0] for r in rows],
                         [r.final_r_ci[1] - r.final_r for r in rows]])
        ax1.errorbar(eps, fin, yerr=ferr, marker="s", capsize=3, label="final R")
    ax1.set_xscale("log")
    _style(ax1, "epsilon", "fraction", title)
    ax1.legend(fontsize=9)
    ax2.plot(eps, [r.mean_steps for r in rows], marker="o")
    ax2.set_xscale("log")
    ax2.set_yscale("log")
    _style(ax2, "epsilon", "mean steps")
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def plot_validation(records_a, records_b, path, label_a="candidate",
                    label_b="reference", title=None) -> None:
    """Mean infectious fraction of both ensembles with the reference's
    25-75% band."""
    grid = records_a[0].grid
    i_idx = records_a[0].compartments.index("I")
    a = np.stack([r.fractions for r in records_a])[:, i_idx, :]
    b = np.stack([r.fractions for r in records_b])[:, i_idx, :]
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.fill_between(grid, np.quantile(b, 0.25, axis=0), np.quantile(b, 0.75, axis=0),
                    color="tab:red", alpha=0.2, linewidth=0, label=f"{label_b} IQR")
    ax.plot(grid, b.mean(axis=0), color="tab:red", linewidth=1.5, label=label_b)
    ax.plot(grid, a.mean(axis=0), color="tab:blue", linestyle="--", linewidth=1.5,
            label=label_a)
    _style(ax, "time (days)", "infectious fraction", title)
    ax.legend(fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def plot_parity(report, path) -> None:
    """One marker per (seed, variant): green if bit-identical, red at the
    first divergent step."""
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    bad = {(m.seed, m.variant): m.step for m in report.mismatches}
    for si, s in enumerate(report.seeds):
        for v in range(1, max((m.variant for m in report.mismatches), default=1) + 1):
            step = bad.get((s, v))
            if step is None:
                ax.scatter(si, v, color="tab:green", marker="o")
            else:
                ax.scatter(si, v, color="tab:red", marker="x")
                ax.annotate(f"step {step}", (si, v), fontsize=8,
                            xytext=(4, 4), textcoords="offset points")
    ax.set_xticks(range(len(report.seeds)))
    ax.set_xticklabels([str(s) for s in report.seeds])
    _style(ax, "seed", "variant index",
           "parity: green = bit-identical over all steps")
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def plot_multi_topology(data, path, title=None) -> None:
    """Grid of I(t)/N panels, one per (topology, size) cell."""
    keys = sorted(data.keys())
    if not keys:
        return
    topos = sorted({k[0] for k in keys})
    sizes = sorted({k[1] for k in keys})
    fig, axes = plt.subplots(
        len(topos), len(sizes),
        figsize=(3.6 * len(sizes), 2.8 * len(topos)),
        squeeze=False,
    )
    for r, topo in enumerate(topos):
        for c, n in enumerate(sizes):
            ax = axes[r][c]
            cell = data.get((topo, n))
            if cell is None:
                ax.axis("off")
                continue
            grid = cell["grid"]
            if cell["exact"] is not None:
                ax.fill_between(grid, cell["exact"]["q25"], cell["exact"]["q75"],
                                color="tab:red", alpha=0.2, linewidth=0)
                ax.plot(grid, cell["exact"]["mean"], color="tab:red",
                        linewidth=1.2, label="exact")
            for eps, curve in sorted(cell["eps_curves"].items()):
                ax.plot(grid, curve, linewidth=1.0, label=f"eps={eps:g}")
            ax.set_title(f"{topo}, N={n}", fontsize=9)
            ax.grid(alpha=0.3, linewidth=0.5)
            if r == 0 and c == 0:
                ax.legend(fontsize=7)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
