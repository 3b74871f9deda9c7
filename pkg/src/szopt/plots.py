"""Figure rendering for run logs, bound reports, and sweep results.

Every figure goes straight to a file (Agg backend, no display); the CSV
and JSON-lines artifacts remain the primary outputs and the figures are
rendered next to them.
"""

from __future__ import annotations

from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

import numpy as np  # noqa: E402


def learning_curve(rows: Sequence, path: str, title: Optional[str] = None) -> None:
    """Observed loss, its running mean, and dev checkpoints over iterations."""
    iters = np.array([r.iter for r in rows])
    loss = np.array([r.loss for r in rows])
    avg = np.array([r.avg_cum_loss for r in rows])
    fig, ax = plt.subplots(figsize=(7, 4.2))
    stride = max(1, len(iters) // 2000)
    ax.plot(iters[::stride], loss[::stride], ".", ms=2, alpha=0.25,
            color="tab:gray", label="observed loss")
    ax.plot(iters, avg, lw=1.8, color="tab:blue", label="avg cumulative loss")
    dev = [(r.iter, r.dev_metric) for r in rows if r.dev_metric is not None]
    if dev:
        dx, dy = zip(*dev)
        ax.plot(dx, dy, "o-", ms=4, lw=1.0, color="tab:red", label="dev metric")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _report_label(rep) -> str:
    p = rep.params
    bits = []
    for key in ("kind", "d", "p", "n_bar"):
        if key in p:
            bits.append(f"{key}={p[key]}")
    return ", ".join(bits) or "report"


def bound_chart(reports: Sequence, path: str, title: Optional[str] = None) -> None:
    """lhs estimates with 3-sigma whiskers against their rhs bounds."""
    n = len(reports)
    fig, ax = plt.subplots(figsize=(7, 1.0 + 0.5 * max(n, 2)))
    ys = np.arange(n)[::-1]
    for y, rep in zip(ys, reports):
        color = "tab:green" if rep.passed else "tab:red"
        ax.errorbar([rep.lhs], [y], xerr=[3 * rep.lhs_stderr], fmt="o",
                    color=color, capsize=3)
        ax.plot([rep.rhs], [y], "|", ms=14, color="black")
    ax.set_yticks(ys)
    ax.set_yticklabels([_report_label(r) for r in reports], fontsize=8)
    ax.set_xscale("symlog")
    ax.set_xlabel("lhs (dot, 3-sigma whisker) vs rhs bound (bar)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def sweep_curve(result, eps: float, path: str) -> None:
    """Median iterations-to-eps against the active dimension, log-log."""
    fig, ax = plt.subplots(figsize=(6, 4.2))
    meds = []
    for nb in result.n_bar_list:
        cells = result.per_nbar(nb)
        its = [c.iterations_at(eps) for c in cells]
        pts = [c.cap if it is None else it for it in its]
        ax.plot([nb] * len(pts), pts, "x", color="tab:gray", ms=5)
        meds.append(float(np.median(pts)))
    ax.plot(result.n_bar_list, meds, "o-", color="tab:blue", lw=1.8,
            label="median")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("active dimension")
    ax.set_ylabel(f"iterations to grad-sq {eps:.3g}")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
