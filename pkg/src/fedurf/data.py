"""Matrix ingestion, preprocessing, and client partitioning.

Input matrices are dense samples x features CSV/TSV files with a feature
header row and a sample-id first column (``transpose=True`` for
feature-major files). Missing cells are tracked in a boolean mask and
resolved by k-nearest-neighbor imputation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateId,
    FeatureAllMissing,
    MatrixParseError,
    PreprocessError,
    SampleMismatch,
)

NA_TOKENS = {"", "NA", "NaN"}


@dataclass(frozen=True)
class OmicsMatrix:
    """Dense samples x features matrix with identifiers and a missing mask.

    Missing cells hold NaN in ``values`` and True in ``missing_mask``;
    every non-missing value is finite.
    """

    sample_ids: tuple[str, ...]
    feature_ids: tuple[str, ...]
    values: np.ndarray
    missing_mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        object.__setattr__(self, "feature_ids", tuple(self.feature_ids))
        values = np.asarray(self.values, dtype=np.float64)
        mask = np.asarray(self.missing_mask, dtype=bool)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing_mask", mask)
        n, p = len(self.sample_ids), len(self.feature_ids)
        if n < 1 or p < 1:
            raise MatrixParseError("matrix must have at least one sample and one feature")
        if values.shape != (n, p) or mask.shape != (n, p):
            raise MatrixParseError(
                f"shape mismatch: {values.shape} values vs {n} samples x {p} features"
            )
        if len(set(self.sample_ids)) != n:
            raise DuplicateId("duplicate sample id")
        if len(set(self.feature_ids)) != p:
            raise DuplicateId("duplicate feature id")
        if not np.all(np.isfinite(values[~mask])):
            raise MatrixParseError("non-missing values must be finite")

    @property
    def n(self) -> int:
        return len(self.sample_ids)

    @property
    def p(self) -> int:
        return len(self.feature_ids)

    def subset(self, sample_indices: np.ndarray) -> "OmicsMatrix":
        """New matrix restricted to the given sample rows, order preserved."""
        idx = np.asarray(sample_indices)
        return OmicsMatrix(
            sample_ids=tuple(self.sample_ids[i] for i in idx),
            feature_ids=self.feature_ids,
            values=self.values[idx],
            missing_mask=self.missing_mask[idx],
        )


@dataclass(frozen=True)
class SurvivalRecord:
    """One right-censored survival observation (event=False means censored)."""

    sample_id: str
    time: float
    event: bool

    def __post_init__(self):
        if not (self.time >= 0):
            raise ValueError(f"survival time must be >= 0, got {self.time}")


@dataclass(frozen=True)
class MultiOmicsDataset:
    """Ordered data layers over one shared sample set, plus optional survival."""

    layers: tuple[OmicsMatrix, ...]
    survival: tuple[SurvivalRecord, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.survival is not None:
            object.__setattr__(self, "survival", tuple(self.survival))
        if not self.layers:
            raise ValueError("dataset needs at least one layer")
        ids = self.layers[0].sample_ids
        for layer in self.layers[1:]:
            if layer.sample_ids != ids:
                raise SampleMismatch("all layers must share sample ids in identical order")
        if self.survival:
            known = set(ids)
            for rec in self.survival:
                if rec.sample_id not in known:
                    raise ValueError(f"survival record for unknown sample {rec.sample_id!r}")

    @property
    def n(self) -> int:
        return self.layers[0].n

    @property
    def sample_ids(self) -> tuple[str, ...]:
        return self.layers[0].sample_ids

    def subset(self, sample_indices: np.ndarray) -> "MultiOmicsDataset":
        layers = tuple(layer.subset(sample_indices) for layer in self.layers)
        survival = None
        if self.survival is not None:
            kept = set(layers[0].sample_ids)
            survival = tuple(r for r in self.survival if r.sample_id in kept)
        return MultiOmicsDataset(layers=layers, survival=survival)


@dataclass(frozen=True)
class PreprocessConfig:
    max_missing_fraction: float = 0.2
    impute_k: int = 5
    top_variance_features: int | None = None
    standardize: bool = True

    def __post_init__(self):
        if not 0.0 <= self.max_missing_fraction <= 1.0:
            raise ValueError("max_missing_fraction must be in [0, 1]")
        if self.impute_k < 1:
            raise ValueError("impute_k must be positive")
        if self.top_variance_features is not None and self.top_variance_features < 1:
            raise ValueError("top_variance_features must be positive")


def parse_matrix(path: str | Path, delimiter: str = ",", transpose: bool = False) -> OmicsMatrix:
    """Parse a delimited numeric matrix file.

    Default orientation: header row of feature names, first column holds
    sample ids. ``transpose=True`` reads feature-major files (header row of
    sample ids, first column of feature names). NA tokens and unparseable
    cells become missing entries.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    rows = [r for r in rows if r]
    if len(rows) < 2:
        raise MatrixParseError(f"{path}: need a header row and at least one data row")
    header = [c.strip() for c in rows[0]]
    width = len(header)
    if width < 2:
        raise MatrixParseError(f"{path}: need at least one data column")
    col_ids = header[1:]
    row_ids = []
    cells = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise MatrixParseError(
                f"{path}:{lineno}: expected {width} columns, found {len(row)}"
            )
        row_ids.append(row[0].strip())
        cells.append([c.strip() for c in row[1:]])

    values = np.empty((len(row_ids), len(col_ids)), dtype=np.float64)
    mask = np.zeros_like(values, dtype=bool)
    for i, row in enumerate(cells):
        for j, cell in enumerate(row):
            if cell in NA_TOKENS:
                values[i, j] = np.nan
                mask[i, j] = True
                continue
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if math.isfinite(v):
                values[i, j] = v
            else:
                values[i, j] = np.nan
                mask[i, j] = True

    if transpose:
        row_ids, col_ids = col_ids, row_ids
        values = values.T.copy()
        mask = mask.T.copy()
    return OmicsMatrix(
        sample_ids=tuple(row_ids), feature_ids=tuple(col_ids), values=values, missing_mask=mask
    )


def load_survival(path: str | Path) -> list[SurvivalRecord]:
    """Read a survival CSV with columns sample_id,time,event (event in {0,1})."""
    path = Path(path)
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"sample_id", "time", "event"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise MatrixParseError(f"{path}: survival file needs columns sample_id,time,event")
        for lineno, row in enumerate(reader, start=2):
            try:
                time = float(row["time"])
                event = int(row["event"])
            except (TypeError, ValueError) as exc:
                raise MatrixParseError(f"{path}:{lineno}: bad survival row: {exc}") from exc
            if event not in (0, 1):
                raise MatrixParseError(f"{path}:{lineno}: event must be 0 or 1")
            records.append(SurvivalRecord(row["sample_id"], time, bool(event)))
    return records


def knn_impute(m: OmicsMatrix, k: int) -> OmicsMatrix:
    """Fill missing cells with the mean of the k nearest samples.

    Sample distance is the root mean squared difference over co-observed
    features; samples sharing no observed features are not usable as
    neighbors. Ties are broken by lower sample index. A cell whose k
    neighbors are all missing for that feature falls back to the feature's
    observed mean. Observed cells are never altered.
    """
    if k < 1:
        raise ValueError("k must be positive")
    if k >= m.n:
        raise PreprocessError(f"impute_k={k} must be smaller than n={m.n}")
    mask = m.missing_mask
    if not mask.any():
        return m
    obs = ~mask
    if not obs.any(axis=0).all():
        bad = [m.feature_ids[j] for j in np.nonzero(~obs.any(axis=0))[0]]
        raise FeatureAllMissing(f"features with no observed values: {bad}")
    if not obs.any(axis=1).all():
        bad = [m.sample_ids[i] for i in np.nonzero(~obs.any(axis=1))[0]]
        raise PreprocessError(f"samples with no observed values: {bad}")

    X0 = np.where(mask, 0.0, m.values)
    O = obs.astype(np.float64)
    shared = O @ O.T
    sq = X0 * X0
    # sum over co-observed features of (x_i - x_j)^2
    cross = sq @ O.T + O @ sq.T - 2.0 * (X0 @ X0.T)
    with np.errstate(invalid="ignore", divide="ignore"):
        dist = np.sqrt(np.maximum(cross, 0.0) / shared)
    dist[shared == 0] = np.inf

    col_means = np.sum(X0, axis=0) / np.maximum(obs.sum(axis=0), 1)
    values = m.values.copy()
    n = m.n
    for i in np.nonzero(mask.any(axis=1))[0]:
        d = dist[i].copy()
        d[i] = np.inf
        order = np.argsort(d, kind="stable")  # stable: equal distances keep index order
        order = order[np.isfinite(d[order])]
        neighbors = order[:k]
        for j in np.nonzero(mask[i])[0]:
            seen = neighbors[obs[neighbors, j]]
            if seen.size:
                values[i, j] = m.values[seen, j].mean()
            else:
                values[i, j] = col_means[j]
    return OmicsMatrix(
        sample_ids=m.sample_ids,
        feature_ids=m.feature_ids,
        values=values,
        missing_mask=np.zeros_like(mask),
    )


def standardize_matrix(m: OmicsMatrix) -> OmicsMatrix:
    """Z-score each feature (sample standard deviation; constant features untouched)."""
    if m.missing_mask.any():
        raise PreprocessError("standardize requires a complete matrix; impute first")
    mean = m.values.mean(axis=0)
    sd = m.values.std(axis=0, ddof=1) if m.n > 1 else np.ones(m.p)
    sd = np.where(sd > 0, sd, 1.0)
    return replace(m, values=(m.values - mean) / sd)


def preprocess(m: OmicsMatrix, cfg: PreprocessConfig = PreprocessConfig()) -> OmicsMatrix:
    """Filter, impute, select, and standardize a raw matrix.

    Steps, in order: drop samples then features whose missing fraction
    exceeds ``max_missing_fraction``; kNN-impute what remains; keep the
    ``top_variance_features`` by variance when set; z-score features when
    ``standardize``. Output has an empty missing mask.
    """
    frac_s = m.missing_mask.mean(axis=1)
    keep_s = np.nonzero(frac_s <= cfg.max_missing_fraction)[0]
    if keep_s.size == 0:
        raise PreprocessError("all samples exceed the missing-value threshold")
    m = m.subset(keep_s)
    frac_f = m.missing_mask.mean(axis=0)
    keep_f = np.nonzero(frac_f <= cfg.max_missing_fraction)[0]
    if keep_f.size == 0:
        raise PreprocessError("all features exceed the missing-value threshold")
    m = OmicsMatrix(
        sample_ids=m.sample_ids,
        feature_ids=tuple(m.feature_ids[j] for j in keep_f),
        values=m.values[:, keep_f],
        missing_mask=m.missing_mask[:, keep_f],
    )
    if m.n < 2:
        raise PreprocessError("fewer than 2 samples left after filtering")

    if m.missing_mask.any():
        m = knn_impute(m, cfg.impute_k)

    if cfg.top_variance_features is not None and cfg.top_variance_features < m.p:
        var = m.values.var(axis=0, ddof=1)
        ranked = np.argsort(-var, kind="stable")[: cfg.top_variance_features]
        keep = np.sort(ranked)  # preserve original feature order
        m = OmicsMatrix(
            sample_ids=m.sample_ids,
            feature_ids=tuple(m.feature_ids[j] for j in keep),
            values=m.values[:, keep],
            missing_mask=m.missing_mask[:, keep],
        )

    if cfg.standardize:
        m = standardize_matrix(m)
    return m


def partition_clients(
    d: MultiOmicsDataset, n_clients: int, seed: int
) -> list[MultiOmicsDataset]:
    """Shuffle samples and split them into near-equal disjoint client datasets.

    Group sizes differ by at most one; every layer is partitioned by the same
    sample split and survival records follow their samples. Deterministic for
    a fixed seed.
    """
    if n_clients < 1:
        raise ValueError("n_clients must be positive")
    if n_clients > d.n:
        raise ValueError(f"cannot split {d.n} samples across {n_clients} clients")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(d.n)
    base, extra = divmod(d.n, n_clients)
    parts = []
    start = 0
    for c in range(n_clients):
        size = base + (1 if c < extra else 0)
        parts.append(d.subset(perm[start : start + size]))
        start += size
    return parts


def write_matrix_csv(path: str | Path, m: OmicsMatrix, delimiter: str = ",") -> None:
    """Write a matrix in the same orientation parse_matrix reads by default."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow(["sample_id", *m.feature_ids])
        for i, sid in enumerate(m.sample_ids):
            row = [sid] + ["" if m.missing_mask[i, j] else repr(float(v))
                           for j, v in enumerate(m.values[i])]
            writer.writerow(row)
