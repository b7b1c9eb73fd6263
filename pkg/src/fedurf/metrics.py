"""Clustering and survival evaluation metrics.

Adjusted Rand index, silhouette widths, the multi-group log-rank test,
Pearson correlation, and Kaplan-Meier table emission.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import gammaincc

from .affinity import DistanceMatrix
from .cluster import ClusterAssignment
from .data import SurvivalRecord
from .errors import SampleMismatch, ZeroVariance


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray
    row_marginals: np.ndarray
    col_marginals: np.ndarray
    n: int

    @classmethod
    def from_labels(cls, a: np.ndarray, b: np.ndarray) -> "ContingencyTable":
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        counts = np.zeros((int(a.max()) + 1, int(b.max()) + 1), dtype=np.int64)
        np.add.at(counts, (a, b), 1)
        return cls(
            counts=counts,
            row_marginals=counts.sum(axis=1),
            col_marginals=counts.sum(axis=0),
            n=int(a.size),
        )


def _labels_of(x) -> np.ndarray:
    if isinstance(x, ClusterAssignment):
        return x.labels
    return np.asarray(x, dtype=np.int64)


def ari(a, b) -> float:
    """Adjusted Rand index between two partitions of the same samples.

    1 for identical partitions up to relabeling; 0 expected under the
    permutation null. Accepts ClusterAssignments or plain label arrays.
    """
    la, lb = _labels_of(a), _labels_of(b)
    if la.shape != lb.shape:
        raise SampleMismatch(f"partitions cover {la.shape} vs {lb.shape} samples")
    if isinstance(a, ClusterAssignment) and isinstance(b, ClusterAssignment):
        if a.sample_ids != b.sample_ids:
            raise SampleMismatch("partitions must cover the same samples in the same order")
    table = ContingencyTable.from_labels(la, lb)

    def comb2(x):
        return (x.astype(np.float64) * (x - 1)) / 2.0

    sum_ij = comb2(table.counts).sum()
    sum_a = comb2(table.row_marginals).sum()
    sum_b = comb2(table.col_marginals).sum()
    pairs = table.n * (table.n - 1) / 2.0
    expected = sum_a * sum_b / pairs if pairs > 0 else 0.0
    maximum = (sum_a + sum_b) / 2.0
    if maximum == expected:
        return 1.0
    return float((sum_ij - expected) / (maximum - expected))


def silhouette(d: DistanceMatrix, a: ClusterAssignment) -> tuple[float, np.ndarray]:
    """Mean and per-sample silhouette widths from a precomputed distance matrix.

    s(i) = (b(i) - a(i)) / max(a(i), b(i)); members of singleton clusters
    score 0 by convention.
    """
    if a.k < 2:
        raise ValueError("silhouette needs at least two clusters")
    labels = a.labels
    if d.values.shape[0] != labels.size:
        raise SampleMismatch("distance matrix and assignment sizes differ")
    n = labels.size
    sizes = np.bincount(labels, minlength=a.k)
    # column c holds each sample's summed distance to cluster c
    sums = np.zeros((n, a.k))
    for c in range(a.k):
        sums[:, c] = d.values[:, labels == c].sum(axis=1)
    scores = np.zeros(n)
    for i in range(n):
        c = labels[i]
        if sizes[c] <= 1:
            continue
        within = sums[i, c] / (sizes[c] - 1)
        others = [sums[i, o] / sizes[o] for o in range(a.k) if o != c]
        nearest = min(others)
        denom = max(within, nearest)
        scores[i] = 0.0 if denom == 0 else (nearest - within) / denom
    return float(scores.mean()), scores


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation in [-1, 1]."""
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    if xv.shape != yv.shape or xv.size < 2:
        raise ValueError("need two equal-length vectors with at least 2 entries")
    xc = xv - xv.mean()
    yc = yv - yv.mean()
    vx = float(xc @ xc)
    vy = float(yc @ yc)
    if vx == 0.0 or vy == 0.0:
        raise ZeroVariance("correlation undefined for a constant vector")
    r = float(xc @ yc) / np.sqrt(vx * vy)
    return float(np.clip(r, -1.0, 1.0))


def chi_square_sf(x: float, df: int) -> float:
    """Upper tail of the chi-square distribution via the regularized
    incomplete gamma function."""
    if x < 0:
        raise ValueError("chi-square statistic must be >= 0")
    return float(gammaincc(df / 2.0, x / 2.0))


@dataclass(frozen=True)
class LogRankResult:
    chi_square: float
    degrees_of_freedom: int
    p_value: float
    observed: np.ndarray
    expected: np.ndarray
    group_sizes: np.ndarray


def _match_groups(
    records: Sequence[SurvivalRecord], a: ClusterAssignment
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    index = {sid: i for i, sid in enumerate(a.sample_ids)}
    times, events, groups = [], [], []
    for rec in records:
        if rec.sample_id not in index:
            raise SampleMismatch(f"survival record for unknown sample {rec.sample_id!r}")
        times.append(rec.time)
        events.append(rec.event)
        groups.append(a.labels[index[rec.sample_id]])
    return (
        np.asarray(times, dtype=np.float64),
        np.asarray(events, dtype=bool),
        np.asarray(groups, dtype=np.int64),
    )


def logrank_test(records: Sequence[SurvivalRecord], a: ClusterAssignment) -> LogRankResult:
    """Multi-group log-rank test on grouped event times.

    At each distinct event time the observed events per group are compared
    with their hypergeometric expectation; the chi-square statistic uses the
    summed covariance matrix restricted to g-1 groups (generalized inverse
    when singular) and df = g-1.
    """
    times, events, groups = _match_groups(records, a)
    present = np.unique(groups)
    if present.size < 2:
        raise ValueError("log-rank needs at least two nonempty groups")
    if not events.any():
        raise ValueError("log-rank needs at least one observed event")
    g = int(groups.max()) + 1

    observed = np.zeros(g)
    expected = np.zeros(g)
    cov = np.zeros((g, g))
    for tau in np.unique(times[events]):
        at_risk = times >= tau
        n_risk = float(at_risk.sum())
        if n_risk < 1:
            continue
        group_risk = np.bincount(groups[at_risk], minlength=g).astype(np.float64)
        died = events & (times == tau)
        d = float(died.sum())
        observed += np.bincount(groups[died], minlength=g)
        frac = group_risk / n_risk
        expected += d * frac
        if n_risk > 1:
            scale = d * (n_risk - d) / (n_risk - 1)
            cov += scale * (np.diag(frac) - np.outer(frac, frac))

    diff = (observed - expected)[:-1]
    reduced = cov[:-1, :-1]
    try:
        solved = np.linalg.solve(reduced, diff)
    except np.linalg.LinAlgError:
        solved = np.linalg.pinv(reduced) @ diff
    chi2 = float(max(diff @ solved, 0.0))
    df = int(present.size - 1)
    return LogRankResult(
        chi_square=chi2,
        degrees_of_freedom=df,
        p_value=chi_square_sf(chi2, df),
        observed=observed,
        expected=expected,
        group_sizes=np.bincount(groups, minlength=g),
    )


@dataclass(frozen=True)
class KMRow:
    group: int
    time: float
    at_risk: int
    events: int
    survival: float


def km_table(records: Sequence[SurvivalRecord], a: ClusterAssignment) -> list[KMRow]:
    """Kaplan-Meier product-limit table per group, one row per distinct time."""
    times, events, groups = _match_groups(records, a)
    rows: list[KMRow] = []
    for grp in np.unique(groups):
        sel = groups == grp
        t = times[sel]
        e = events[sel]
        survival = 1.0
        for tau in np.unique(t):
            at_risk = int((t >= tau).sum())
            d = int((e & (t == tau)).sum())
            if at_risk > 0 and d > 0:
                survival *= 1.0 - d / at_risk
            rows.append(KMRow(int(grp), float(tau), at_risk, d, survival))
    return rows


def write_km_csv(path: str | Path, rows: Sequence[KMRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "time", "at_risk", "events", "survival"])
        for row in rows:
            writer.writerow(
                [row.group, repr(row.time), row.at_risk, row.events, repr(row.survival)]
            )
