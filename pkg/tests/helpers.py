"""Shared construction helpers for tests."""

from __future__ import annotations

import numpy as np

from fedurf import ClusterAssignment, OmicsMatrix, Tree, TreeNode


def make_matrix(values, missing=None, prefix="s") -> OmicsMatrix:
    values = np.asarray(values, dtype=np.float64)
    if missing is None:
        missing = np.isnan(values)
    n, p = values.shape
    return OmicsMatrix(
        sample_ids=tuple(f"{prefix}{i}" for i in range(n)),
        feature_ids=tuple(f"f{j}" for j in range(p)),
        values=values,
        missing_mask=np.asarray(missing, dtype=bool),
    )


def assignment(labels, prefix="s") -> ClusterAssignment:
    labels = np.asarray(labels, dtype=np.int64)
    return ClusterAssignment(
        labels=labels,
        k=int(labels.max()) + 1,
        sample_ids=tuple(f"{prefix}{i}" for i in range(labels.size)),
    )


def stump(feature: int, threshold: float, layer_index: int = 0, seed: int = 0) -> Tree:
    """Depth-1 tree: root split, two leaves (ids 1=left, 2=right)."""
    nodes = [
        TreeNode(id=0, depth=0, feature=feature, threshold=threshold, left=1, right=2),
        TreeNode(id=1, depth=1),
        TreeNode(id=2, depth=1),
    ]
    return Tree(nodes=nodes, layer_index=layer_index, seed=seed)


def single_leaf_tree(layer_index: int = 0, seed: int = 0) -> Tree:
    return Tree(nodes=[TreeNode(id=0, depth=0)], layer_index=layer_index, seed=seed)
