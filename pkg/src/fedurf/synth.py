"""Synthetic two-feature benchmark scenarios with ground-truth labels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cluster import ClusterAssignment
from .data import OmicsMatrix

KINDS = ("globular_equal", "globular_outliers", "globular_varying", "rings", "moons")

_EQUAL_CENTERS = ((1.0, 0.0), (0.0, 1.0), (1.0, 1.0))
_OUTLIER_CENTERS = ((3.0, 0.0), (0.0, 3.0), (3.0, 3.0))
_VARYING_CENTERS = ((0.0, 0.0), (1.0, 1.0), (-2.0, 2.0))


@dataclass(frozen=True)
class ScenarioSpec:
    """One synthetic dataset configuration.

    The field that matters depends on ``kind``: ``std`` for globular_equal,
    ``outlier_fraction`` for globular_outliers, ``m`` for globular_varying,
    ``separation`` for rings, ``noise`` for moons.
    """

    kind: str
    n_per_cluster: int = 100
    seed: int = 0
    std: float = 0.3
    outlier_fraction: float = 0.04
    m: int = 1
    separation: float = 1.0
    noise: float = 0.1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}; choose from {KINDS}")
        if self.n_per_cluster < 1:
            raise ValueError("n_per_cluster must be >= 1")
        if self.std <= 0:
            raise ValueError("std must be positive")
        if not 0.0 <= self.outlier_fraction <= 0.5:
            raise ValueError("outlier_fraction must lie in [0, 0.5]")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.separation < 0:
            raise ValueError("separation must be >= 0")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")

    @property
    def n_clusters(self) -> int:
        return 2 if self.kind in ("rings", "moons") else 3


@dataclass(frozen=True)
class LabeledDataset:
    data: OmicsMatrix
    labels: ClusterAssignment


def _gaussian_blobs(rng, centers, stds, counts) -> tuple[np.ndarray, np.ndarray]:
    points, labels = [], []
    for idx, (center, std, count) in enumerate(zip(centers, stds, counts)):
        points.append(rng.normal(loc=center, scale=std, size=(count, 2)))
        labels.append(np.full(count, idx, dtype=np.int64))
    return np.vstack(points), np.concatenate(labels)


def generate(spec: ScenarioSpec) -> LabeledDataset:
    """Draw one labeled dataset, deterministic per (spec, seed).

    Globular kinds draw isotropic Gaussian clusters. Outliers are extra
    points from wide Gaussians at distant centers, each labeled with the
    cluster its generating center maps to. Rings are uniform in angle and in
    radius within each annulus of width 1; the second annulus starts
    ``separation`` beyond the first. Moons are two interleaved noisy
    semicircles.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n_per_cluster

    if spec.kind == "globular_equal":
        points, labels = _gaussian_blobs(rng, _EQUAL_CENTERS, [spec.std] * 3, [n] * 3)
    elif spec.kind == "globular_outliers":
        points, labels = _gaussian_blobs(rng, _EQUAL_CENTERS, [0.25] * 3, [n] * 3)
        n_out = int(round(spec.outlier_fraction * 3 * n))
        if n_out:
            per = [n_out // 3 + (1 if c < n_out % 3 else 0) for c in range(3)]
            extra, extra_labels = _gaussian_blobs(rng, _OUTLIER_CENTERS, [1.0] * 3, per)
            points = np.vstack([points, extra])
            labels = np.concatenate([labels, extra_labels])
    elif spec.kind == "globular_varying":
        stds = [0.1, 0.1 + spec.m * 0.1, 0.1 + spec.m * 0.2]
        points, labels = _gaussian_blobs(rng, _VARYING_CENTERS, stds, [n] * 3)
    elif spec.kind == "rings":
        inner = (1.0, 2.0)
        outer = (2.0 + spec.separation, 3.0 + spec.separation)
        points_list, labels_list = [], []
        for idx, (r_min, r_max) in enumerate((inner, outer)):
            radius = rng.uniform(r_min, r_max, n)
            angle = rng.uniform(0.0, 2.0 * np.pi, n)
            points_list.append(np.c_[radius * np.cos(angle), radius * np.sin(angle)])
            labels_list.append(np.full(n, idx, dtype=np.int64))
        points = np.vstack(points_list)
        labels = np.concatenate(labels_list)
    else:  # moons
        t = rng.uniform(0.0, np.pi, n)
        upper = np.c_[np.cos(t), np.sin(t)]
        t = rng.uniform(0.0, np.pi, n)
        lower = np.c_[1.0 - np.cos(t), 0.5 - np.sin(t)]
        points = np.vstack([upper, lower])
        if spec.noise > 0:
            points = points + rng.normal(scale=spec.noise, size=points.shape)
        labels = np.concatenate([np.zeros(n, dtype=np.int64), np.ones(n, dtype=np.int64)])

    ids = tuple(f"s{i:05d}" for i in range(points.shape[0]))
    matrix = OmicsMatrix(
        sample_ids=ids,
        feature_ids=("x", "y"),
        values=points,
        missing_mask=np.zeros(points.shape, dtype=bool),
    )
    assignment = ClusterAssignment(labels=labels, k=spec.n_clusters, sample_ids=ids)
    return LabeledDataset(data=matrix, labels=assignment)
