"""Leaf co-occurrence counting, affinity normalization, fusion, distances."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import OmicsMatrix
from .errors import FeatureMismatch, SampleMismatch
from .forest import Forest, Tree, _layer_values


@dataclass(frozen=True)
class CountMatrix:
    """Symmetric tally of how many trees put each sample pair in one leaf."""

    counts: np.ndarray
    n_trees: int
    sample_ids: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        counts = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "counts", counts)
        n = len(self.sample_ids)
        if counts.shape != (n, n):
            raise SampleMismatch(f"counts shape {counts.shape} vs {n} sample ids")
        if not np.array_equal(counts, counts.T):
            raise ValueError("count matrix must be symmetric")
        if (counts < 0).any() or (counts > self.n_trees).any():
            raise ValueError("counts must lie in [0, n_trees]")
        if not np.all(np.diag(counts) == self.n_trees):
            raise ValueError("diagonal must equal the number of trees counted")


@dataclass(frozen=True)
class AffinityMatrix:
    """Co-occurrence counts normalized by their maximum; values in [0, 1]."""

    values: np.ndarray
    sample_ids: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        n = len(self.sample_ids)
        if values.shape != (n, n):
            raise SampleMismatch(f"affinity shape {values.shape} vs {n} sample ids")
        if not np.array_equal(values, values.T):
            raise ValueError("affinity must be symmetric")
        if values.min() < 0.0 or values.max() != 1.0:
            raise ValueError("affinities must lie in [0, 1] with max exactly 1")
        if not np.all(np.diag(values) == 1.0):
            raise ValueError("affinity diagonal must be 1")


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric dissimilarities with a zero diagonal."""

    values: np.ndarray
    sample_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if self.sample_ids is not None:
            object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
            if values.shape[0] != len(self.sample_ids):
                raise SampleMismatch("distance size vs sample ids")
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("distance matrix must be square")
        if not np.array_equal(values, values.T):
            raise ValueError("distance matrix must be symmetric")
        if values.min() < 0.0:
            raise ValueError("distances must be non-negative")
        if np.any(np.diag(values) != 0.0):
            raise ValueError("distance diagonal must be 0")

    @property
    def n(self) -> int:
        return self.values.shape[0]


def co_occurrence_counts(trees: Sequence[Tree], values: np.ndarray) -> np.ndarray:
    """Sum of per-tree binary same-leaf indicators over the given rows."""
    n = values.shape[0]
    counts = np.zeros((n, n), dtype=np.int64)
    for tree in trees:
        leaves = tree.route(values)
        order = np.argsort(leaves, kind="stable")
        sorted_leaves = leaves[order]
        cuts = np.nonzero(np.diff(sorted_leaves))[0] + 1
        for group in np.split(order, cuts):
            counts[np.ix_(group, group)] += 1
    return counts


def count_matrix(f: Forest, layer: OmicsMatrix | np.ndarray) -> CountMatrix:
    """Count, over all trees, how often each sample pair shares a leaf."""
    values = _layer_values(layer)
    if values.shape[1] != f.n_features:
        raise FeatureMismatch(
            f"layer has {values.shape[1]} features, forest expects {f.n_features}"
        )
    ids = layer.sample_ids if isinstance(layer, OmicsMatrix) else tuple(
        f"s{i}" for i in range(values.shape[0])
    )
    return CountMatrix(
        counts=co_occurrence_counts(f.trees, values), n_trees=f.n_trees, sample_ids=ids
    )


def normalize(c: CountMatrix) -> AffinityMatrix:
    """Divide counts by their maximum entry (the diagonal)."""
    peak = int(c.counts.max())
    if peak <= 0:
        raise ValueError("cannot normalize an all-zero count matrix")
    return AffinityMatrix(values=c.counts / peak, sample_ids=c.sample_ids)


def fuse(layer_counts: Sequence[CountMatrix]) -> AffinityMatrix:
    """Element-wise sum of per-layer counts, then normalize by the global max."""
    if not layer_counts:
        raise ValueError("need at least one count matrix")
    first = layer_counts[0]
    total = first.counts.copy()
    n_trees = first.n_trees
    for other in layer_counts[1:]:
        if other.sample_ids != first.sample_ids:
            raise SampleMismatch("count matrices must share sample ids and order")
        total += other.counts
        n_trees += other.n_trees
    return normalize(CountMatrix(counts=total, n_trees=n_trees, sample_ids=first.sample_ids))


def to_distance(a: AffinityMatrix) -> DistanceMatrix:
    """Distance = 1 - affinity (diagonal exactly 0)."""
    return DistanceMatrix(values=1.0 - a.values, sample_ids=a.sample_ids)


def euclidean_distance(
    values: np.ndarray, sample_ids: Sequence[str] | None = None, standardize: bool = False
) -> DistanceMatrix:
    """Pairwise Euclidean distances, optionally on z-scored features."""
    X = np.asarray(values, dtype=np.float64)
    if standardize:
        sd = X.std(axis=0, ddof=1)
        X = (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    sq = (X * X).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    d = np.sqrt(np.maximum(d2, 0.0))
    d = (d + d.T) / 2.0  # enforce exact symmetry
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(values=d, sample_ids=tuple(sample_ids) if sample_ids else None)


def write_square_csv(
    path: str | Path, sample_ids: Sequence[str], values: np.ndarray
) -> None:
    """Full symmetric matrix as CSV: header of sample ids, id-led rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", *sample_ids])
        for sid, row in zip(sample_ids, values):
            writer.writerow([sid, *(repr(float(v)) for v in row)])
