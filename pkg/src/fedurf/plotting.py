"""Figure rendering for CLI reports. Every function writes a PNG file."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from scipy.cluster.hierarchy import dendrogram as _draw_dendrogram

from .affinity import AffinityMatrix
from .bench import BenchRow, median_table
from .cluster import ClusterAssignment, Dendrogram, StabilityReport
from .federated import FederationReport
from .importance import ImportanceVector
from .synth import LabeledDataset


def _finish(fig, path: str | Path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_affinity_heatmap(path: str | Path, affinity: AffinityMatrix) -> None:
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(affinity.values, cmap="viridis", vmin=0.0, vmax=1.0)
    ax.set_title("Sample affinity")
    ax.set_xlabel("sample")
    ax.set_ylabel("sample")
    fig.colorbar(im, ax=ax, label="affinity")
    _finish(fig, path)


def save_dendrogram(path: str | Path, dend: Dendrogram) -> None:
    linkage = np.array([[a, b, h, s] for a, b, h, s in dend.merges], dtype=np.float64)
    fig, ax = plt.subplots(figsize=(8, 4))
    _draw_dendrogram(linkage, ax=ax, no_labels=dend.n_leaves > 40)
    ax.set_title("Ward dendrogram")
    ax.set_ylabel("merge height")
    _finish(fig, path)


def save_silhouette_scores(path: str | Path, scores: dict[int, float], chosen: int) -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    ks = sorted(scores)
    ax.plot(ks, [scores[k] for k in ks], marker="o")
    ax.axvline(chosen, color="tab:red", linestyle="--", label=f"selected k={chosen}")
    ax.set_xlabel("number of clusters k")
    ax.set_ylabel("mean silhouette width")
    ax.legend()
    _finish(fig, path)


def save_benchmark(path: str | Path, rows: Sequence[BenchRow]) -> None:
    medians = median_table(rows)
    scenarios = sorted({r.scenario for r in rows})
    methods = sorted({r.method for r in rows})
    fig, axes = plt.subplots(
        1, len(scenarios), figsize=(4 * len(scenarios), 3.5), squeeze=False
    )
    for ax, scenario in zip(axes[0], scenarios):
        params = sorted({r.param for r in rows if r.scenario == scenario})
        for method in methods:
            ax.plot(
                params,
                [medians[(scenario, p, method)] for p in params],
                marker="o",
                label=method,
            )
        ax.set_title(scenario)
        ax.set_xlabel("parameter")
        ax.set_ylim(-0.1, 1.05)
    axes[0][0].set_ylabel("median ARI")
    axes[0][-1].legend(loc="best", fontsize=8)
    _finish(fig, path)


def save_winloss(path: str | Path, report: FederationReport) -> None:
    counts = report.win_counts()
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    keys = ["global", "local", "tie"]
    ax.bar(keys, [counts[k] for k in keys], color=["tab:blue", "tab:orange", "tab:gray"])
    ax.set_ylabel("client-iterations won")
    ax.set_title(f"global vs local ({report.eval_mode})")
    _finish(fig, path)


def save_importance_heatmap(
    path: str | Path, feature_ids: Sequence[str], vectors: Sequence[ImportanceVector]
) -> None:
    matrix = np.column_stack([v.scores for v in vectors])
    order = np.argsort(-matrix.max(axis=1))[:50]  # top features only, keeps the plot legible
    fig, ax = plt.subplots(figsize=(6, max(3, 0.15 * order.size)))
    im = ax.imshow(matrix[order], aspect="auto", cmap="magma")
    ax.set_xticks(range(len(vectors)), [f"cluster {v.cluster_id}" for v in vectors])
    ax.set_yticks(range(order.size), [feature_ids[i] for i in order], fontsize=6)
    fig.colorbar(im, ax=ax, label="importance")
    _finish(fig, path)


def save_correlation_heatmap(path: str | Path, corr: np.ndarray) -> None:
    k = corr.shape[0]
    fig, ax = plt.subplots(figsize=(4.5, 4))
    im = ax.imshow(corr, cmap="coolwarm", vmin=-1.0, vmax=1.0)
    ax.set_xticks(range(k), [f"c{i}" for i in range(k)])
    ax.set_yticks(range(k), [f"c{i}" for i in range(k)])
    for i in range(k):
        for j in range(k):
            ax.text(j, i, f"{corr[i, j]:.2f}", ha="center", va="center", fontsize=8)
    ax.set_title("importance correlation")
    fig.colorbar(im, ax=ax)
    _finish(fig, path)


def save_scatter(path: str | Path, ds: LabeledDataset) -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    xy = ds.data.values
    ax.scatter(xy[:, 0], xy[:, 1], c=ds.labels.labels, cmap="tab10", s=12)
    ax.set_xlabel(ds.data.feature_ids[0])
    ax.set_ylabel(ds.data.feature_ids[1])
    ax.set_aspect("equal")
    _finish(fig, path)


def save_stability(path: str | Path, report: StabilityReport) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    budgets = sorted(report.tree_grid)
    for k in report.k_range:
        ax.plot(
            budgets,
            [report.median(k, t) for t in budgets],
            marker="o",
            label=f"k={k}",
        )
    ax.set_xlabel("trees used")
    ax.set_ylabel("median ARI vs full-forest clustering")
    ax.set_ylim(-0.05, 1.05)
    ax.legend()
    _finish(fig, path)


def save_cluster_scatter(path: str | Path, values: np.ndarray, assignment: ClusterAssignment) -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(values[:, 0], values[:, 1], c=assignment.labels, cmap="tab10", s=12)
    ax.set_title(f"k={assignment.k} clusters (first two features)")
    _finish(fig, path)
