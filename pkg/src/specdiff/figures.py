"""Figure rendering for experiment reports.

Every renderer takes one metric table and draws a single PNG next to the
delimited output. Rendering is best-effort decoration: tables are the record,
figures are the quick look.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["render_figures"]


def _bar_compare(ax, labels, series, series_names):
    width = 0.8 / len(series)
    for idx, values in enumerate(series):
        offs = [i + idx * width for i in range(len(labels))]
        ax.bar(offs, values, width=width, label=series_names[idx])
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(labels))])
    ax.set_xticklabels(labels, rotation=45 if len(labels) > 8 else 0)
    ax.legend()


def _fig_exactness_joint(table, path):
    fig, ax = plt.subplots(figsize=(7, 4))
    labels = [r[0] for r in table.rows]
    _bar_compare(ax, labels,
                 [[r[1] for r in table.rows], [r[2] for r in table.rows],
                  [r[3] for r in table.rows]],
                 ["oracle", "speculative", "sequential"])
    ax.set_ylabel("probability")
    ax.set_title("joint law: oracle vs decoded")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _fig_identity_gaps(table, path):
    fig, ax = plt.subplots(figsize=(7, 4))
    gaps = [max(r[-1], 1e-18) for r in table.rows]
    ax.semilogy(range(len(gaps)), gaps, ".", markersize=4)
    ax.axhline(1e-9, color="red", linestyle="--", linewidth=1, label="tolerance")
    ax.set_xlabel("trial")
    ax.set_ylabel("identity gap")
    ax.set_title("prefix identity gap per random trial")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _fig_committed_length(table, path):
    fig, ax = plt.subplots(figsize=(7, 4))
    by_alpha: dict = {}
    for alpha, k, sim_mean, se, formula, _err, _verdict in table.rows:
        by_alpha.setdefault(alpha, []).append((k, sim_mean, se, formula))
    for alpha, cells in sorted(by_alpha.items()):
        cells.sort()
        ks = [c[0] for c in cells]
        line, = ax.plot(ks, [c[3] for c in cells], "-", label=f"alpha={alpha}")
        ax.errorbar(ks, [c[1] for c in cells], yerr=[3 * c[2] for c in cells],
                    fmt="o", markersize=3, color=line.get_color())
    ax.set_xscale("log", base=2)
    ax.set_xlabel("window size k")
    ax.set_ylabel("expected committed length")
    ax.set_title("committed length: formula (lines) vs simulation (points)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _fig_speedup_random(table, path):
    fig, ax = plt.subplots(figsize=(5, 5))
    ideal = [r[4] for r in table.rows]
    measured = [r[3] for r in table.rows]
    lo = min(ideal + measured) * 0.9
    hi = max(ideal + measured) * 1.1
    ax.plot([lo, hi], [lo, hi], "k--", linewidth=1)
    ax.plot(ideal, measured, "o")
    ax.set_xlabel("ideal speedup at measured acceptance")
    ax.set_ylabel("measured speedup")
    ax.set_title("speedup calibration across random pairs")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _fig_acceptance_mass(table, path):
    fig, ax = plt.subplots(figsize=(5, 5))
    predicted = [r[1] for r in table.rows]
    measured = [r[2] for r in table.rows]
    ax.plot([0, 1], [0, 1], "k--", linewidth=1)
    ax.plot(predicted, measured, "o")
    ax.set_xlabel("overlap mass sum(min(pi, rho))")
    ax.set_ylabel("measured acceptance rate")
    ax.set_title("acceptance rate vs overlap mass")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _fig_factorization_masses(table, path):
    fig, ax = plt.subplots(figsize=(7, 4))
    labels = [r[0] for r in table.rows]
    _bar_compare(ax, labels,
                 [[r[1] for r in table.rows], [r[2] for r in table.rows],
                  [r[3] for r in table.rows], [r[4] for r in table.rows]],
                 ["oracle", "meanfield", "independent", "speculative"])
    ax.set_ylabel("probability")
    ax.set_title("factorization gap on the joint law")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _fig_train_contexts(table, path):
    fig, ax = plt.subplots(figsize=(7, 4))
    tvs = sorted((r[-1] for r in table.rows), reverse=True)
    ax.bar(range(len(tvs)), tvs)
    ax.set_xlabel("context (sorted by tv)")
    ax.set_ylabel("tv to enumerated conditional")
    ax.set_title("learned vs exact conditionals")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _fig_full_inference(table, path):
    rows = [r for r in table.rows if not (isinstance(r[3], float) and math.isnan(r[3]))]
    if not rows:
        return
    fig, ax = plt.subplots(figsize=(7, 4))
    labels = [f"{r[0]}|{r[1]}" for r in rows]
    ax.bar(range(len(rows)), [r[3] for r in rows])
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("tv to enumerated conditional")
    ax.set_title("re-corruption pass conditionals per cell")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


_RENDERERS = {
    "exactness_joint": _fig_exactness_joint,
    "identity_gaps": _fig_identity_gaps,
    "committed_length": _fig_committed_length,
    "speedup_random": _fig_speedup_random,
    "acceptance_mass": _fig_acceptance_mass,
    "factorization_masses": _fig_factorization_masses,
    "train_contexts": _fig_train_contexts,
    "full_inference_cells": _fig_full_inference,
}


def render_figures(report, outdir) -> list[Path]:
    """Render one PNG per recognized table family; returns written paths."""
    out = Path(outdir)
    written: list[Path] = []
    for table in report.tables:
        renderer = _RENDERERS.get(table.name)
        if renderer is None or not table.rows:
            continue
        path = out / f"{table.name}.png"
        renderer(table, path)
        if path.exists():
            written.append(path)
    return written
