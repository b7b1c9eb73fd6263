"""Model exchange and the simulated federated protocol.

Clients train forests locally and share only the trees (split features,
thresholds, structure). The global model is the concatenation of everyone's
trees; each client routes its own samples through it to get a global
affinity matrix, so no sample ever leaves a client.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .affinity import (
    AffinityMatrix,
    CountMatrix,
    co_occurrence_counts,
    count_matrix,
    fuse,
    normalize,
    to_distance,
)
from .cluster import ClusterAssignment, cut, select_k_silhouette, ward_linkage
from .data import MultiOmicsDataset, partition_clients, standardize_matrix
from .errors import (
    DuplicateId,
    EmptyBundle,
    FeatureMismatch,
    FormatVersionError,
    SampleMismatch,
)
from .forest import Forest, ForestConfig, Tree, TreeNode, mix_seed, train_forest
from .metrics import ari, logrank_test

FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelBundle:
    """All trees one client shares, tagged with the client identity."""

    client_id: str
    trees: tuple[Tree, ...]
    n_features_per_layer: tuple[int, ...]
    config: ForestConfig
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "n_features_per_layer", tuple(self.n_features_per_layer))
        if not self.trees:
            raise EmptyBundle(f"bundle {self.client_id!r} has no trees")
        n_layers = len(self.n_features_per_layer)
        for t in self.trees:
            if not 0 <= t.layer_index < n_layers:
                raise FeatureMismatch(f"tree layer_index {t.layer_index} out of range")
            if t.max_feature() >= self.n_features_per_layer[t.layer_index]:
                raise FeatureMismatch("tree references a feature beyond its layer width")


@dataclass(frozen=True)
class GlobalModel:
    """Concatenation of client bundles, client order then tree order."""

    bundles: tuple[ModelBundle, ...]

    def __post_init__(self):
        object.__setattr__(self, "bundles", tuple(self.bundles))
        if not self.bundles:
            raise EmptyBundle("global model needs at least one bundle")
        ids = [b.client_id for b in self.bundles]
        if len(set(ids)) != len(ids):
            raise DuplicateId("duplicate client_id in global model")
        widths = self.bundles[0].n_features_per_layer
        for b in self.bundles[1:]:
            if b.n_features_per_layer != widths:
                raise FeatureMismatch(
                    f"bundle {b.client_id!r} layer widths {b.n_features_per_layer} "
                    f"differ from {widths}"
                )

    @property
    def total_trees(self) -> int:
        return sum(len(b.trees) for b in self.bundles)

    @property
    def n_features_per_layer(self) -> tuple[int, ...]:
        return self.bundles[0].n_features_per_layer


def _node_to_json(node: TreeNode) -> dict:
    return {
        "id": node.id,
        "leaf": node.is_leaf,
        "feature": None if node.is_leaf else int(node.feature),
        "threshold": None if node.is_leaf else float(node.threshold),
        "left": None if node.is_leaf else int(node.left),
        "right": None if node.is_leaf else int(node.right),
    }


def bundle_to_json(bundle: ModelBundle) -> dict:
    """Wire representation: structure and split rules only, no sample data."""
    cfg = bundle.config
    return {
        "format_version": bundle.format_version,
        "client_id": bundle.client_id,
        "config": {
            "n_trees": cfg.n_trees,
            "mtry": cfg.mtry,
            "min_leaf": cfg.min_leaf,
            "bootstrap": cfg.bootstrap,
            "seed": cfg.seed,
        },
        "layers": [
            {"layer_index": i, "n_features": p}
            for i, p in enumerate(bundle.n_features_per_layer)
        ],
        "trees": [
            {
                "layer_index": t.layer_index,
                "seed": t.seed,
                "nodes": [_node_to_json(nd) for nd in t.nodes],
            }
            for t in bundle.trees
        ],
    }


def bundle_from_json(obj: dict) -> ModelBundle:
    version = obj.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatVersionError(f"unsupported model format version {version!r}")
    cfg = ForestConfig(**obj["config"])
    widths = [None] * len(obj["layers"])
    for entry in obj["layers"]:
        widths[entry["layer_index"]] = entry["n_features"]
    trees = []
    for tree_obj in obj["trees"]:
        nodes = []
        for nd in tree_obj["nodes"]:
            if nd["leaf"]:
                nodes.append(TreeNode(id=nd["id"], depth=0))
            else:
                nodes.append(
                    TreeNode(
                        id=nd["id"],
                        depth=0,
                        feature=nd["feature"],
                        threshold=nd["threshold"],
                        left=nd["left"],
                        right=nd["right"],
                    )
                )
        nodes = _restore_depths(nodes)
        trees.append(Tree(nodes=nodes, layer_index=tree_obj["layer_index"], seed=tree_obj["seed"]))
    return ModelBundle(
        client_id=obj["client_id"],
        trees=tuple(trees),
        n_features_per_layer=tuple(widths),
        config=cfg,
    )


def _restore_depths(nodes: list[TreeNode]) -> list[TreeNode]:
    """Recompute node depths from child links (depth is not serialized)."""
    depth = {0: 0}
    for nd in nodes:
        if not nd.is_leaf:
            depth[nd.left] = depth[nd.id] + 1
            depth[nd.right] = depth[nd.id] + 1
    return [replace(nd, depth=depth.get(nd.id, 0)) for nd in nodes]


def save_bundle(bundle: ModelBundle, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(bundle_to_json(bundle), fh, indent=2)
        fh.write("\n")


def load_bundle(path: str | Path) -> ModelBundle:
    with open(path, encoding="utf-8") as fh:
        return bundle_from_json(json.load(fh))


def export_model(
    forests: Sequence[Forest], client_id: str, path: str | Path | None = None
) -> ModelBundle:
    """Bundle per-layer forests for sharing; optionally write the JSON file.

    The wire format is lossless for routing: node structure, split features,
    and thresholds round-trip exactly. Nothing about the training samples is
    included.
    """
    if not forests:
        raise EmptyBundle("no forests to export")
    trees: list[Tree] = []
    for layer_index, forest in enumerate(forests):
        for tree in forest.trees:
            if tree.layer_index != layer_index:
                tree = replace(tree, layer_index=layer_index)
            trees.append(tree)
    bundle = ModelBundle(
        client_id=client_id,
        trees=tuple(trees),
        n_features_per_layer=tuple(f.n_features for f in forests),
        config=forests[0].config,
    )
    if path is not None:
        save_bundle(bundle, path)
    return bundle


def merge_models(bundles: Sequence[ModelBundle]) -> GlobalModel:
    """Concatenate client bundles into the global model; trees are untouched."""
    if not bundles:
        raise EmptyBundle("need at least one bundle to merge")
    return GlobalModel(bundles=tuple(bundles))


def save_global_model(model: GlobalModel, path: str | Path) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": "global",
        "bundles": [bundle_to_json(b) for b in model.bundles],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_global_model(path: str | Path) -> GlobalModel:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format_version") != FORMAT_VERSION:
        raise FormatVersionError(f"unsupported format version {payload.get('format_version')!r}")
    return GlobalModel(bundles=tuple(bundle_from_json(b) for b in payload["bundles"]))


def global_count_matrix(model: GlobalModel, local: MultiOmicsDataset) -> CountMatrix:
    """Route the client's own samples through every tree of every bundle."""
    if len(local.layers) != len(model.n_features_per_layer):
        raise FeatureMismatch(
            f"client has {len(local.layers)} layers, model expects "
            f"{len(model.n_features_per_layer)}"
        )
    for i, (layer, width) in enumerate(zip(local.layers, model.n_features_per_layer)):
        if layer.p != width:
            raise FeatureMismatch(f"layer {i} has {layer.p} features, model expects {width}")
    n = local.n
    counts = np.zeros((n, n), dtype=np.int64)
    total = 0
    for layer_index, layer in enumerate(local.layers):
        trees = [
            t for b in model.bundles for t in b.trees if t.layer_index == layer_index
        ]
        if not trees:
            continue
        counts += co_occurrence_counts(trees, layer.values)
        total += len(trees)
    return CountMatrix(counts=counts, n_trees=total, sample_ids=local.sample_ids)


def global_affinity(model: GlobalModel, local: MultiOmicsDataset) -> AffinityMatrix:
    """Per-client global affinity: counts over all shared trees, normalized."""
    return normalize(global_count_matrix(model, local))


@dataclass(frozen=True)
class ClientRecord:
    iteration: int
    client_id: str
    metric_local: float
    metric_global: float
    k_local: int
    k_global: int
    labels_local: ClusterAssignment
    labels_global: ClusterAssignment


@dataclass(frozen=True)
class FederationReport:
    records: tuple[ClientRecord, ...]
    seed: int
    n_clients: int
    iterations: int
    eval_mode: str
    config: ForestConfig

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))

    def winner(self, record: ClientRecord) -> str:
        """'global' when the global model scored better on this client."""
        if record.metric_global == record.metric_local:
            return "tie"
        if self.eval_mode == "logrank":  # smaller p-value wins
            return "global" if record.metric_global < record.metric_local else "local"
        return "global" if record.metric_global > record.metric_local else "local"

    def win_counts(self) -> dict[str, int]:
        counts = {"global": 0, "local": 0, "tie": 0}
        for rec in self.records:
            counts[self.winner(rec)] += 1
        return counts


def _resolve_mtry(requested: int | str, p: int) -> int:
    if requested == "sqrt":
        return min(p, max(1, math.ceil(math.sqrt(p))))
    return min(int(requested), p)


def _cluster_distance(dist, k: int | None, k_max: int):
    """Ward labels at fixed k, or at the silhouette-selected k."""
    dend = ward_linkage(dist)
    if k is not None:
        chosen = min(k, dist.n)
        return cut(dend, chosen), chosen
    hi = min(k_max, dist.n - 1)
    chosen, _ = select_k_silhouette(dist, 2, hi)
    return cut(dend, chosen), chosen


def _train_client(
    part: MultiOmicsDataset, cfg: ForestConfig, mtry: int | str | None
) -> list[Forest]:
    forests = []
    for layer_index, layer in enumerate(part.layers):
        layer_cfg = replace(cfg, mtry=_resolve_mtry(mtry if mtry is not None else cfg.mtry, layer.p))
        forests.append(train_forest(layer, layer_cfg, layer_index=layer_index))
    return forests


def _local_affinity(forests: Sequence[Forest], part: MultiOmicsDataset) -> AffinityMatrix:
    return fuse([count_matrix(f, layer) for f, layer in zip(forests, part.layers)])


def _restrict(reference: ClusterAssignment, ids: Sequence[str]) -> ClusterAssignment:
    index = {sid: i for i, sid in enumerate(reference.sample_ids)}
    try:
        rows = [index[sid] for sid in ids]
    except KeyError as exc:
        raise SampleMismatch(f"reference labels missing sample {exc.args[0]!r}") from exc
    labels = reference.labels[rows]
    # compact to 0..k'-1 so ClusterAssignment invariants hold on the subset
    uniq = np.unique(labels)
    lut = {int(v): i for i, v in enumerate(uniq)}
    return ClusterAssignment(
        labels=np.asarray([lut[int(v)] for v in labels], dtype=np.int64),
        k=len(uniq),
        sample_ids=tuple(ids),
    )


def simulate(
    d: MultiOmicsDataset,
    n_clients: int,
    cfg: ForestConfig,
    iterations: int,
    seed: int,
    eval_mode: str = "ari",
    *,
    k: int | None = None,
    k_max: int = 8,
    mtry: int | str | None = None,
    reference: ClusterAssignment | None = None,
    standardize: str = "local",
) -> FederationReport:
    """Run the end-to-end federated comparison of local vs global clustering.

    Per iteration: samples are partitioned across clients; each client trains
    per-layer forests on its own (by default locally standardized) data,
    clusters its local fused affinity, and shares only the trees. All bundles
    are merged and every client re-clusters its own samples under the global
    model. Both solutions are scored per client: ``logrank`` compares
    log-rank p-values on the client's survival records, ``ari`` compares
    agreement with reference labels (given, or computed once on the pooled
    data before partitioning).

    ``mtry`` overrides cfg.mtry: an int is capped at each layer's feature
    count, the string "sqrt" selects ceil(sqrt(p)) per layer.
    """
    if n_clients < 2:
        raise ValueError("simulate needs at least two clients")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if eval_mode not in ("ari", "logrank"):
        raise ValueError(f"unknown eval mode {eval_mode!r}")
    if eval_mode == "logrank" and not d.survival:
        raise ValueError("log-rank evaluation needs survival records")
    if standardize not in ("local", "global", "none"):
        raise ValueError(f"unknown standardize mode {standardize!r}")

    if standardize == "global":
        d = MultiOmicsDataset(
            layers=tuple(standardize_matrix(layer) for layer in d.layers),
            survival=d.survival,
        )

    if eval_mode == "ari" and reference is None:
        pooled_cfg = replace(cfg, seed=mix_seed(seed, 0x9001))
        pooled = (
            MultiOmicsDataset(
                layers=tuple(standardize_matrix(l) for l in d.layers), survival=d.survival
            )
            if standardize == "local"
            else d
        )
        forests = _train_client(pooled, pooled_cfg, mtry)
        dist = to_distance(_local_affinity(forests, pooled))
        reference, _ = _cluster_distance(dist, k, k_max)

    records: list[ClientRecord] = []
    for iteration in range(iterations):
        partition = partition_clients(d, n_clients, seed=mix_seed(seed, iteration))
        if standardize == "local":
            partition = [
                MultiOmicsDataset(
                    layers=tuple(standardize_matrix(l) for l in part.layers),
                    survival=part.survival,
                )
                for part in partition
            ]

        bundles = []
        local_results = []
        for ci, part in enumerate(partition):
            client_cfg = replace(cfg, seed=mix_seed(seed, iteration, ci))
            forests = _train_client(part, client_cfg, mtry)
            dist = to_distance(_local_affinity(forests, part))
            labels_local, k_local = _cluster_distance(dist, k, k_max)
            bundles.append(export_model(forests, client_id=f"client_{ci}"))
            local_results.append((labels_local, k_local))

        model = merge_models(bundles)
        for ci, part in enumerate(partition):
            labels_local, k_local = local_results[ci]
            dist_g = to_distance(global_affinity(model, part))
            labels_global, k_global = _cluster_distance(dist_g, k, k_max)
            if eval_mode == "ari":
                ref = _restrict(reference, part.sample_ids)
                metric_local = ari(labels_local, ref)
                metric_global = ari(labels_global, ref)
            else:
                metric_local = logrank_test(part.survival, labels_local).p_value
                metric_global = logrank_test(part.survival, labels_global).p_value
            records.append(
                ClientRecord(
                    iteration=iteration,
                    client_id=f"client_{ci}",
                    metric_local=float(metric_local),
                    metric_global=float(metric_global),
                    k_local=k_local,
                    k_global=k_global,
                    labels_local=labels_local,
                    labels_global=labels_global,
                )
            )
    return FederationReport(
        records=tuple(records),
        seed=seed,
        n_clients=n_clients,
        iterations=iterations,
        eval_mode=eval_mode,
        config=cfg,
    )


def report_to_json(report: FederationReport) -> dict:
    cfg = report.config
    return {
        "seed": report.seed,
        "n_clients": report.n_clients,
        "iterations": report.iterations,
        "eval_mode": report.eval_mode,
        "config": {
            "n_trees": cfg.n_trees,
            "mtry": cfg.mtry,
            "min_leaf": cfg.min_leaf,
            "bootstrap": cfg.bootstrap,
            "seed": cfg.seed,
        },
        "win_counts": report.win_counts(),
        "records": [
            {
                "iteration": rec.iteration,
                "client_id": rec.client_id,
                "metric_local": rec.metric_local,
                "metric_global": rec.metric_global,
                "k_local": rec.k_local,
                "k_global": rec.k_global,
                "winner": report.winner(rec),
                "labels_local": {
                    "sample_ids": list(rec.labels_local.sample_ids),
                    "labels": [int(v) for v in rec.labels_local.labels],
                },
                "labels_global": {
                    "sample_ids": list(rec.labels_global.sample_ids),
                    "labels": [int(v) for v in rec.labels_global.labels],
                },
            }
            for rec in report.records
        ],
    }


def write_report_json(path: str | Path, report: FederationReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_to_json(report), fh, indent=2)
        fh.write("\n")


def write_winloss_csv(path: str | Path, report: FederationReport) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["iteration", "client_id", "metric_local", "metric_global", "winner"]
        )
        for rec in report.records:
            writer.writerow(
                [
                    rec.iteration,
                    rec.client_id,
                    repr(rec.metric_local),
                    repr(rec.metric_global),
                    report.winner(rec),
                ]
            )
