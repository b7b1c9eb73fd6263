"""Cluster-specific feature importance on a trained unsupervised forest.

The forest is grown without labels; importance is assessed afterwards by
relabeling samples one-vs-all for a target cluster and accumulating the
weighted Gini decrease of every split onto its feature.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .cluster import ClusterAssignment
from .data import OmicsMatrix
from .errors import EmptyCluster, SampleMismatch
from .forest import Forest, _layer_values
from .metrics import pearson


@dataclass(frozen=True)
class ImportanceVector:
    """Per-feature importance scores for one cluster (one-vs-all)."""

    cluster_id: int
    scores: np.ndarray
    normalized: bool

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        object.__setattr__(self, "scores", scores)
        if scores.min(initial=0.0) < 0.0:
            raise ValueError("importance scores must be non-negative")
        if self.normalized and scores.size and scores.max() not in (0.0, 1.0):
            raise ValueError("normalized scores must peak at 1 (or be all zero)")


def _tree_importance(tree, values: np.ndarray, positives: np.ndarray, p: int) -> np.ndarray:
    """Weighted Gini decrease per feature for one tree, all samples routed."""
    n = values.shape[0]
    scores = np.zeros(p)
    # Preorder ids guarantee parents come before children.
    node_rows: dict[int, np.ndarray] = {0: np.arange(n)}
    for node in tree.nodes:
        rows = node_rows.pop(node.id, None)
        if node.is_leaf:
            continue
        if rows is None or rows.size == 0:
            node_rows[node.left] = np.empty(0, dtype=np.int64)
            node_rows[node.right] = np.empty(0, dtype=np.int64)
            continue
        go_left = values[rows, node.feature] <= node.threshold
        left_rows = rows[go_left]
        right_rows = rows[~go_left]
        node_rows[node.left] = left_rows
        node_rows[node.right] = right_rows

        total = rows.size
        pos = float(positives[rows].sum())

        def gini(count, positive):
            if count == 0:
                return 0.0
            q = positive / count
            return 2.0 * q * (1.0 - q)

        decrease = gini(total, pos) - (
            left_rows.size * gini(left_rows.size, float(positives[left_rows].sum()))
            + right_rows.size * gini(right_rows.size, float(positives[right_rows].sum()))
        ) / total
        scores[node.feature] += (total / n) * decrease
    return scores


def cluster_importance(
    f: Forest,
    layer: OmicsMatrix | np.ndarray,
    assignment: ClusterAssignment,
    cluster_id: int,
    normalize: bool = False,
) -> ImportanceVector:
    """Mean decrease in Gini impurity under one-vs-all labels for one cluster.

    All samples are routed through every tree; each split's impurity decrease,
    weighted by the fraction of samples reaching the node, accrues to its
    split feature. Scores are averaged over trees; the normalized variant
    divides by the maximum score.
    """
    values = _layer_values(layer)
    if not 0 <= cluster_id < assignment.k:
        raise ValueError(f"cluster_id {cluster_id} out of range for k={assignment.k}")
    if values.shape[0] != assignment.n:
        raise SampleMismatch("assignment does not cover the layer's samples")
    positives = assignment.labels == cluster_id
    if not positives.any():
        raise EmptyCluster(f"cluster {cluster_id} has no samples")
    if positives.all():
        raise EmptyCluster("one-vs-all needs at least one sample outside the cluster")

    totals = np.zeros(f.n_features)
    for tree in f.trees:
        totals += _tree_importance(tree, values, positives, f.n_features)
    totals /= f.n_trees
    if totals.min() < -1e-12:
        raise RuntimeError(f"negative importance {totals.min()} exceeds tolerance")
    totals = np.maximum(totals, 0.0)
    if normalize:
        peak = totals.max()
        if peak > 0:
            totals = totals / peak
    return ImportanceVector(cluster_id=cluster_id, scores=totals, normalized=normalize)


def importance_correlation(vectors: Sequence[ImportanceVector]) -> np.ndarray:
    """Pearson correlation of importance scores between clusters (diag = 1)."""
    if len(vectors) < 2:
        raise ValueError("need at least two importance vectors")
    length = vectors[0].scores.size
    if any(v.scores.size != length for v in vectors):
        raise ValueError("importance vectors must have equal length")
    k = len(vectors)
    corr = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            corr[i, j] = corr[j, i] = pearson(vectors[i].scores, vectors[j].scores)
    return corr


def write_importance_csv(
    path: str | Path, feature_ids: Sequence[str], vectors: Sequence[ImportanceVector]
) -> None:
    """Columns: feature_id, cluster_0, ..., cluster_{k-1}."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature_id", *(f"cluster_{v.cluster_id}" for v in vectors)])
        for j, fid in enumerate(feature_ids):
            writer.writerow([fid, *(repr(float(v.scores[j])) for v in vectors)])


def write_correlation_csv(path: str | Path, corr: np.ndarray) -> None:
    k = corr.shape[0]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cluster", *(f"cluster_{i}" for i in range(k))])
        for i in range(k):
            writer.writerow([f"cluster_{i}", *(repr(float(v)) for v in corr[i])])
