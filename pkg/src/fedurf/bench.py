"""Synthetic-scenario benchmark: forest affinity vs Euclidean baselines."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .affinity import count_matrix, euclidean_distance, normalize, to_distance
from .cluster import cut, ward_linkage
from .forest import ForestConfig, mix_seed, train_forest
from .metrics import ari
from .synth import KINDS, LabeledDataset, ScenarioSpec, generate

METHODS = ("urf", "euclidean", "euclidean_scaled")

# Parameter swept per scenario and its grid.
PARAM_GRIDS: dict[str, tuple[str, tuple[float, ...]]] = {
    "globular_equal": ("std", (0.1, 0.2, 0.3, 0.4, 0.5)),
    "globular_outliers": ("outlier_fraction", (0.02, 0.04, 0.06, 0.08, 0.10)),
    "globular_varying": ("m", (1, 2, 3, 4, 5)),
    "rings": ("separation", (1.0, 1.5, 2.0, 2.5, 3.0)),
    "moons": ("noise", (0.05, 0.10, 0.15)),
}

DEFAULT_SCENARIOS = ("globular_equal", "globular_outliers", "globular_varying", "rings")


@dataclass(frozen=True)
class BenchRow:
    scenario: str
    param: float
    replicate: int
    method: str
    ari: float


def evaluate_dataset(ds: LabeledDataset, cfg: ForestConfig, k: int) -> dict[str, float]:
    """ARI of Ward clustering under the three affinity constructions."""
    values = ds.data.values
    truth = ds.labels

    forest = train_forest(ds.data, cfg)
    dist_urf = to_distance(normalize(count_matrix(forest, ds.data)))
    out = {"urf": ari(cut(ward_linkage(dist_urf), k), truth)}

    for method, standardize in (("euclidean", False), ("euclidean_scaled", True)):
        dist = euclidean_distance(values, ds.data.sample_ids, standardize=standardize)
        out[method] = ari(cut(ward_linkage(dist), k), truth)
    return out


def run_benchmark(
    scenarios: Sequence[str] = DEFAULT_SCENARIOS,
    replicates: int = 30,
    cfg: ForestConfig = ForestConfig(n_trees=500, mtry=1, min_leaf=5),
    seed: int = 0,
    n_per_cluster: int = 100,
    param_grids: dict[str, tuple[str, tuple[float, ...]]] | None = None,
) -> list[BenchRow]:
    """Long-format ARI rows over scenario x parameter x replicate x method."""
    grids = param_grids or PARAM_GRIDS
    rows: list[BenchRow] = []
    for s_idx, scenario in enumerate(scenarios):
        if scenario not in KINDS:
            raise ValueError(f"unknown scenario {scenario!r}")
        field, grid = grids[scenario]
        for p_idx, value in enumerate(grid):
            for rep in range(replicates):
                spec = ScenarioSpec(
                    kind=scenario,
                    n_per_cluster=n_per_cluster,
                    seed=mix_seed(seed, s_idx, p_idx, rep),
                    **{field: value},
                )
                ds = generate(spec)
                run_cfg = replace(cfg, seed=mix_seed(seed, s_idx, p_idx, rep, 1))
                scores = evaluate_dataset(ds, run_cfg, spec.n_clusters)
                for method in METHODS:
                    rows.append(
                        BenchRow(
                            scenario=scenario,
                            param=float(value),
                            replicate=rep,
                            method=method,
                            ari=scores[method],
                        )
                    )
    return rows


def median_table(rows: Sequence[BenchRow]) -> dict[tuple[str, float, str], float]:
    """(scenario, param, method) -> median ARI."""
    buckets: dict[tuple[str, float, str], list[float]] = {}
    for row in rows:
        buckets.setdefault((row.scenario, row.param, row.method), []).append(row.ari)
    return {key: float(np.median(vals)) for key, vals in buckets.items()}


def write_results_csv(path: str | Path, rows: Sequence[BenchRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "param", "replicate", "method", "ari"])
        for row in rows:
            writer.writerow(
                [row.scenario, repr(row.param), row.replicate, row.method, repr(row.ari)]
            )
