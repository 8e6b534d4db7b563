"""Figure rendering for the benchmark reports.

Every report that writes delimited output also renders the matching
figure: ||v_k|| against iterations (and against cumulative CPU seconds
for comparisons), with circles marking the iterations that used the
second-order direction.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_COLORS = plt.rcParams["axes.prop_cycle"].by_key()["color"]


def _newton_marks(records):
    ks, vs = [], []
    for rec in records:
        if rec.phase == "newton" and rec.alpha > 0:
            ks.append(rec.k)
            vs.append(rec.v_norm)
    return ks, vs


def render_run_figure(traces_by_seed: dict, title: str, path) -> None:
    """Per-seed ||v_k|| curves of one run specification."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for i, (seed, trace) in enumerate(sorted(traces_by_seed.items())):
        color = _COLORS[i % len(_COLORS)]
        ks = [r.k for r in trace.records]
        vs = [max(r.v_norm, 1e-300) for r in trace.records]
        ax.semilogy(ks, vs, color=color, lw=1.0, label=f"seed {seed}")
        mk, mv = _newton_marks(trace.records)
        if mk:
            ax.semilogy(mk, mv, "o", color=color, mfc="none", ms=5)
    ax.set_xlabel("iteration")
    ax.set_ylabel(r"$\|v_k\|$")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_compare_figures(traces_by_algo: dict, title: str, path_iter, path_cpu) -> None:
    """Comparison figures: ||v_k|| vs iteration and vs CPU seconds."""
    for x_mode, path in (("iteration", path_iter), ("cpu", path_cpu)):
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        for i, (algo, trace) in enumerate(sorted(traces_by_algo.items())):
            color = _COLORS[i % len(_COLORS)]
            vs = [max(r.v_norm, 1e-300) for r in trace.records]
            if x_mode == "iteration":
                xs = [r.k for r in trace.records]
            else:
                xs = list(np.cumsum([r.wall_ns for r in trace.records]) / 1e9)
            ax.semilogy(xs, vs, color=color, lw=1.0, label=algo)
            marks = [
                (x, max(r.v_norm, 1e-300))
                for x, r in zip(xs, trace.records)
                if r.phase == "newton" and r.alpha > 0
            ]
            if marks:
                ax.semilogy(*zip(*marks), "o", color=color, mfc="none", ms=5)
        ax.set_xlabel("iteration" if x_mode == "iteration" else "cpu seconds")
        ax.set_ylabel(r"$\|v_k\|$")
        ax.set_title(title)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(path, dpi=130)
        plt.close(fig)
