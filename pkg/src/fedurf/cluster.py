"""Ward agglomerative clustering and the tree-reduction stability diagnostic."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .affinity import DistanceMatrix, count_matrix, normalize, to_distance
from .data import OmicsMatrix
from .errors import SampleMismatch
from .forest import Forest, assign_leaves, majority_vote, mix_seed


@dataclass(frozen=True)
class Dendrogram:
    """Agglomerative merge history.

    Leaves are clusters 0..n_leaves-1; merge t creates cluster n_leaves + t.
    Each merge is (cluster_a, cluster_b, height, new_size) with a < b.
    """

    merges: tuple[tuple[int, int, float, int], ...]
    n_leaves: int
    sample_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "merges", tuple(tuple(m) for m in self.merges))
        if len(self.merges) != self.n_leaves - 1:
            raise ValueError(f"expected {self.n_leaves - 1} merges, got {len(self.merges)}")
        seen: set[int] = set()
        for a, b, _, _ in self.merges:
            if a in seen or b in seen or a == b:
                raise ValueError("each cluster id may be merged at most once")
            seen.update((a, b))
        if self.sample_ids is not None:
            object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
            if len(self.sample_ids) != self.n_leaves:
                raise SampleMismatch("sample ids vs dendrogram leaves")


@dataclass(frozen=True)
class ClusterAssignment:
    """Flat labels in [0, k) with every cluster nonempty."""

    labels: np.ndarray
    k: int
    sample_ids: tuple[str, ...]

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        if labels.shape != (len(self.sample_ids),):
            raise SampleMismatch("labels vs sample ids length")
        if labels.min(initial=0) < 0 or labels.max(initial=-1) >= self.k:
            raise ValueError(f"labels must lie in [0, {self.k})")
        if len(np.unique(labels)) != self.k:
            raise ValueError("every cluster must be nonempty")

    @property
    def n(self) -> int:
        return len(self.sample_ids)


@dataclass(frozen=True)
class StabilityReport:
    """ARI of reduced-forest predictions against the full-forest clustering."""

    grid: dict[tuple[int, int], tuple[float, ...]]
    k_range: tuple[int, ...]
    tree_grid: tuple[int, ...]
    reps: int
    seed: int

    def __post_init__(self):
        for cell, values in self.grid.items():
            if len(values) != self.reps:
                raise ValueError(f"cell {cell} has {len(values)} values, expected {self.reps}")
            if any(not -1.0 <= v <= 1.0 for v in values):
                raise ValueError(f"cell {cell} holds an ARI outside [-1, 1]")

    def median(self, k: int, n_trees: int) -> float:
        return float(np.median(self.grid[(k, n_trees)]))


def ward_linkage(d: DistanceMatrix) -> Dendrogram:
    """Agglomerate by Ward's method via the Lance-Williams update.

    The update runs on squared input distances; merge heights are the square
    roots of the updated values, so two singletons merge at their input
    distance. Ties in the minimal merge distance break toward the smallest
    (a, b) id pair.
    """
    n = d.n
    if n < 2:
        raise ValueError("need at least two samples to cluster")
    total = 2 * n - 1
    # Working matrix over all cluster ids ever created; inactive rows at +inf.
    W = np.full((total, total), np.inf)
    W[:n, :n] = d.values * d.values
    np.fill_diagonal(W, np.inf)
    sizes = np.zeros(total, dtype=np.int64)
    sizes[:n] = 1
    active = np.zeros(total, dtype=bool)
    active[:n] = True
    merges = []
    for step in range(n - 1):
        limit = n + step
        flat = int(np.argmin(W[:limit, :limit]))
        a, b = divmod(flat, limit)
        if a > b:
            a, b = b, a
        height = float(np.sqrt(W[a, b]))
        new = n + step
        na, nb = int(sizes[a]), int(sizes[b])
        others = np.nonzero(active)[0]
        others = others[(others != a) & (others != b)]
        nk = sizes[others]
        W[new, others] = (
            (na + nk) * W[a, others] + (nb + nk) * W[b, others] - nk * W[a, b]
        ) / (na + nb + nk)
        W[others, new] = W[new, others]
        W[a, :limit] = np.inf
        W[:limit, a] = np.inf
        W[b, :limit] = np.inf
        W[:limit, b] = np.inf
        active[a] = active[b] = False
        active[new] = True
        sizes[new] = na + nb
        merges.append((a, b, height, na + nb))
    return Dendrogram(merges=tuple(merges), n_leaves=n, sample_ids=d.sample_ids)


def cut(dend: Dendrogram, k: int) -> ClusterAssignment:
    """Flat clustering with k clusters: undo the last k-1 merges.

    Cluster labels follow the order of each cluster's smallest sample index.
    """
    n = dend.n_leaves
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    for t, (a, b, _, _) in enumerate(dend.merges[: n - k]):
        merged = members.pop(a) + members.pop(b)
        members[n + t] = merged
    clusters = sorted(members.values(), key=min)
    labels = np.empty(n, dtype=np.int64)
    for lab, group in enumerate(clusters):
        labels[group] = lab
    ids = dend.sample_ids if dend.sample_ids is not None else tuple(str(i) for i in range(n))
    return ClusterAssignment(labels=labels, k=k, sample_ids=ids)


def select_k_silhouette(
    d: DistanceMatrix, k_min: int, k_max: int
) -> tuple[int, dict[int, float]]:
    """Pick k in [k_min, k_max] maximizing mean silhouette width (ties: smaller k)."""
    from .metrics import silhouette

    if not 2 <= k_min <= k_max <= d.n - 1:
        raise ValueError(f"need 2 <= k_min <= k_max <= n-1, got [{k_min}, {k_max}] for n={d.n}")
    dend = ward_linkage(d)
    scores: dict[int, float] = {}
    for k in range(k_min, k_max + 1):
        scores[k] = silhouette(d, cut(dend, k))[0]
    best = k_min
    for k in range(k_min + 1, k_max + 1):
        if scores[k] > scores[best]:
            best = k
    return best, scores


def leaf_majority_labels(
    f: Forest, layer: OmicsMatrix | np.ndarray, labels: np.ndarray
) -> list[dict[int, int]]:
    """Per-tree map leaf id -> majority label of the samples routed there.

    Ties go to the lower class index. Leaves receiving no samples are absent
    from the map.
    """
    labels = np.asarray(labels, dtype=np.int64)
    leaves = assign_leaves(f, layer)
    n_classes = int(labels.max()) + 1
    maps: list[dict[int, int]] = []
    for t, tree in enumerate(f.trees):
        tally = np.zeros((tree.n_nodes, n_classes), dtype=np.int64)
        np.add.at(tally, (leaves[:, t], labels), 1)
        mapping = {
            int(leaf): int(tally[leaf].argmax())
            for leaf in np.unique(leaves[:, t])
        }
        maps.append(mapping)
    return maps


def stability_diagnostic(
    f: Forest,
    layer: OmicsMatrix | np.ndarray,
    k_range: Sequence[int],
    tree_grid: Sequence[int] = (500, 400, 300, 200, 100, 50),
    reps: int = 10,
    seed: int = 0,
) -> StabilityReport:
    """Measure how stably reduced ensembles reproduce the full-forest clustering.

    For each k the full forest's affinity is clustered to give base labels and
    every leaf is labeled by the majority base label of its routed samples.
    Each (k, tree budget, repetition) cell draws that many trees without
    replacement and records the ARI between their majority vote and the base
    labels.
    """
    from .metrics import ari

    k_range = tuple(int(k) for k in k_range)
    tree_grid = tuple(int(t) for t in tree_grid)
    if min(k_range) < 2:
        raise ValueError("k_range must start at 2 or above")
    if max(tree_grid) > f.n_trees:
        raise ValueError(f"tree grid exceeds forest size {f.n_trees}")
    if reps < 1:
        raise ValueError("reps must be >= 1")

    dend = ward_linkage(to_distance(normalize(count_matrix(f, layer))))
    leaves = assign_leaves(f, layer)
    n = leaves.shape[0]
    grid: dict[tuple[int, int], tuple[float, ...]] = {}
    for k in k_range:
        base = cut(dend, k)
        # Per-tree predicted label of every sample under majority-leaf labeling.
        votes = np.empty_like(leaves)
        for t, tree in enumerate(f.trees):
            tally = np.zeros((tree.n_nodes, k), dtype=np.int64)
            np.add.at(tally, (leaves[:, t], base.labels), 1)
            votes[:, t] = tally.argmax(axis=1)[leaves[:, t]]
        for budget in tree_grid:
            values = []
            for rep in range(reps):
                rng = np.random.default_rng(mix_seed(seed, k, budget, rep))
                chosen = rng.choice(f.n_trees, size=budget, replace=False)
                pred = majority_vote(votes[:, chosen], n_classes=k)
                values.append(ari(pred, base.labels))
            grid[(k, budget)] = tuple(values)
    return StabilityReport(
        grid=grid, k_range=k_range, tree_grid=tree_grid, reps=reps, seed=seed
    )


def suggest_k(report: StabilityReport, epsilon: float = 0.05) -> int:
    """Largest k whose median ARI at the smallest tree budget stays within
    epsilon of its full-forest median. Heuristic extension of the visual
    diagnostic; falls back to the smallest k when nothing qualifies."""
    smallest = min(report.tree_grid)
    fullest = max(report.tree_grid)
    stable = [
        k
        for k in report.k_range
        if report.median(k, smallest) >= report.median(k, fullest) - epsilon
    ]
    return max(stable) if stable else min(report.k_range)


def write_dendrogram_csv(path: str | Path, dend: Dendrogram) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cluster_a", "cluster_b", "height", "new_size"])
        for a, b, h, size in dend.merges:
            writer.writerow([a, b, repr(float(h)), size])


def write_labels_csv(path: str | Path, assignment: ClusterAssignment) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "label"])
        for sid, lab in zip(assignment.sample_ids, assignment.labels):
            writer.writerow([sid, int(lab)])


def read_labels_csv(path: str | Path) -> ClusterAssignment:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        ids, labels = [], []
        for row in reader:
            ids.append(row["sample_id"])
            labels.append(int(row["label"]))
    # compact arbitrary label values to 0..k-1, keeping numeric order
    uniq = sorted(set(labels))
    lut = {v: i for i, v in enumerate(uniq)}
    arr = np.asarray([lut[v] for v in labels], dtype=np.int64)
    return ClusterAssignment(labels=arr, k=len(uniq), sample_ids=tuple(ids))


def stability_to_json(report: StabilityReport) -> dict:
    return {
        "seed": report.seed,
        "reps": report.reps,
        "k_range": list(report.k_range),
        "tree_grid": list(report.tree_grid),
        "grid": {
            f"k={k},trees={t}": list(values) for (k, t), values in sorted(report.grid.items())
        },
        "suggested_k": suggest_k(report),
    }


def write_stability_json(path: str | Path, report: StabilityReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(stability_to_json(report), fh, indent=2)
        fh.write("\n")
