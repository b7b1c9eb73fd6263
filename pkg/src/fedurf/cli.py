"""Command-line interface.

Subcommands: cluster, fed-sim, synth, synth-bench, importance,
model export|merge|inspect. Exit codes: 0 success, 1 data/runtime error,
2 usage error. Delimited/JSON outputs are deterministic for a fixed seed;
figures are rendered alongside them unless --no-plots is given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .affinity import count_matrix, fuse, to_distance, write_square_csv
from .bench import DEFAULT_SCENARIOS, PARAM_GRIDS, run_benchmark, write_results_csv
from .cluster import (
    cut,
    read_labels_csv,
    select_k_silhouette,
    stability_diagnostic,
    suggest_k,
    ward_linkage,
    write_dendrogram_csv,
    write_labels_csv,
    write_stability_json,
)
from .data import (
    MultiOmicsDataset,
    OmicsMatrix,
    PreprocessConfig,
    load_survival,
    parse_matrix,
    preprocess,
    write_matrix_csv,
)
from .errors import FedurfError
from .federated import (
    export_model,
    load_bundle,
    load_global_model,
    merge_models,
    save_global_model,
    simulate,
    write_report_json,
    write_winloss_csv,
)
from .forest import ForestConfig, train_forest
from .importance import (
    cluster_importance,
    importance_correlation,
    write_correlation_csv,
    write_importance_csv,
)
from .metrics import km_table, silhouette, write_km_csv
from .synth import KINDS, ScenarioSpec, generate


class UsageError(Exception):
    pass


def _resolve_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("URF_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"URF_SEED must be an integer, got {env!r}") from exc
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="master seed (default: URF_SEED or 0)")
    parser.add_argument("--out", type=Path, required=True, help="output directory")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker thread cap for tree growth")
    parser.add_argument("--no-plots", action="store_true", help="skip figure rendering")


def _add_layers(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--layer", action="append", required=True, metavar="PATH",
                        help="input matrix CSV; repeat for multiple omics layers")
    parser.add_argument("--delimiter", default=",", help="cell delimiter (default comma)")
    parser.add_argument("--transpose", action="store_true",
                        help="input files are feature-major (features in rows)")


def _add_forest(parser: argparse.ArgumentParser, trees: int = 500, mtry: int | None = 2) -> None:
    parser.add_argument("--trees", type=int, default=trees, help="number of trees per forest")
    parser.add_argument("--mtry", type=int, default=mtry,
                        help="features sampled per node (default: %(default)s)")
    parser.add_argument("--min-leaf", type=int, default=5, help="minimum samples per leaf")
    parser.add_argument("--no-bootstrap", action="store_true", help="grow on the full sample")


def _add_preprocess(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--max-missing", type=float, default=0.2,
                        help="drop samples/features above this missing fraction")
    parser.add_argument("--impute-k", type=int, default=5, help="k for kNN imputation")
    parser.add_argument("--top-variance", type=int, default=None,
                        help="keep only this many highest-variance features")
    parser.add_argument("--no-standardize", action="store_true", help="skip z-scoring")
    parser.add_argument("--skip-preprocess", action="store_true",
                        help="use input matrices as-is (must be complete)")


def _add_kmode(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k", type=int, default=None, help="fixed cluster count")
    parser.add_argument("--k-max", type=int, default=8, help="largest k for selection")
    parser.add_argument("--k-mode", choices=("silhouette", "fixed", "stability"),
                        default=None, help="how to choose k (default: fixed if --k else silhouette)")


def _forest_config(args, seed: int) -> ForestConfig:
    mtry = args.mtry if args.mtry is not None else 2
    return ForestConfig(
        n_trees=args.trees,
        mtry=mtry,
        min_leaf=args.min_leaf,
        bootstrap=not args.no_bootstrap,
        seed=seed,
    )


def _preprocess_config(args) -> PreprocessConfig:
    return PreprocessConfig(
        max_missing_fraction=args.max_missing,
        impute_k=args.impute_k,
        top_variance_features=args.top_variance,
        standardize=not args.no_standardize,
    )


def _load_layers(args, force_no_standardize: bool = False) -> list[OmicsMatrix]:
    layers = [parse_matrix(p, delimiter=args.delimiter, transpose=args.transpose)
              for p in args.layer]
    if not args.skip_preprocess:
        cfg = _preprocess_config(args)
        if force_no_standardize:
            cfg = PreprocessConfig(
                max_missing_fraction=cfg.max_missing_fraction,
                impute_k=cfg.impute_k,
                top_variance_features=cfg.top_variance_features,
                standardize=False,
            )
        layers = [preprocess(m, cfg) for m in layers]
    layers = _align_layers(layers)
    return layers


def _align_layers(layers: list[OmicsMatrix]) -> list[OmicsMatrix]:
    """Restrict all layers to shared samples, in first-layer order."""
    if len(layers) == 1:
        return layers
    common = set(layers[0].sample_ids)
    for layer in layers[1:]:
        common &= set(layer.sample_ids)
    if not common:
        raise FedurfError("layers share no samples")
    order = [sid for sid in layers[0].sample_ids if sid in common]
    aligned = []
    for layer in layers:
        index = {sid: i for i, sid in enumerate(layer.sample_ids)}
        aligned.append(layer.subset(np.asarray([index[sid] for sid in order])))
    if len(order) != layers[0].n:
        print(f"note: restricted to {len(order)} samples present in all layers",
              file=sys.stderr)
    return aligned


def _resolve_k_mode(args) -> str:
    if args.k_mode is not None:
        if args.k_mode == "fixed" and args.k is None:
            raise UsageError("--k-mode fixed requires --k")
        if args.k_mode != "fixed" and args.k is not None:
            raise UsageError("--k conflicts with --k-mode " + args.k_mode)
        return args.k_mode
    return "fixed" if args.k is not None else "silhouette"


def _write_run_meta(outdir: Path, command: str, seed: int, config: dict) -> None:
    meta = {
        "command": command,
        "seed": seed,
        "version": __version__,
        "config": config,
    }
    with open(outdir / "run_meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, default=str)
        fh.write("\n")


def _public_args(args) -> dict:
    skip = {"func"}
    return {k: (str(v) if isinstance(v, Path) else v)
            for k, v in vars(args).items() if k not in skip}


def cmd_cluster(args) -> int:
    seed = _resolve_seed(args.seed)
    k_mode = _resolve_k_mode(args)
    outdir = args.out
    outdir.mkdir(parents=True, exist_ok=True)
    layers = _load_layers(args)
    cfg = _forest_config(args, seed)

    forests = [train_forest(layer, cfg, layer_index=i, threads=args.threads)
               for i, layer in enumerate(layers)]
    counts = [count_matrix(f, layer) for f, layer in zip(forests, layers)]
    affinity = fuse(counts)
    dist = to_distance(affinity)
    dend = ward_linkage(dist)

    n = dist.n
    k_hi = min(args.k_max, n - 1)
    scores: dict[int, float] = {}
    stability = None
    if k_mode == "fixed":
        k = args.k
        if not 1 <= k <= n:
            raise UsageError(f"--k must lie in [1, {n}]")
    elif k_mode == "silhouette":
        k, scores = select_k_silhouette(dist, 2, k_hi)
    else:  # stability
        if len(layers) > 1:
            raise UsageError("--k-mode stability supports a single --layer")
        grid = tuple(t for t in (500, 400, 300, 200, 100, 50) if t <= cfg.n_trees)
        if not grid:
            grid = (cfg.n_trees,)
        stability = stability_diagnostic(
            forests[0], layers[0], k_range=range(2, k_hi + 1),
            tree_grid=grid, reps=10, seed=seed,
        )
        k = suggest_k(stability)
    if not scores and n > 2:
        _, scores = select_k_silhouette(dist, 2, k_hi)
    assignment = cut(dend, k)

    write_square_csv(outdir / "affinity.csv", affinity.sample_ids, affinity.values)
    write_square_csv(outdir / "distance.csv", affinity.sample_ids, dist.values)
    write_dendrogram_csv(outdir / "dendrogram.csv", dend)
    write_labels_csv(outdir / "labels.csv", assignment)
    with open(outdir / "silhouette.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "selected_k": k,
                "k_mode": k_mode,
                "mean_silhouette": silhouette(dist, assignment)[0] if k >= 2 else None,
                "scores_by_k": {str(kk): v for kk, v in sorted(scores.items())},
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    if stability is not None:
        write_stability_json(outdir / "stability.json", stability)
    _write_run_meta(outdir, "cluster", seed, _public_args(args))

    if not args.no_plots:
        from . import plotting

        plotting.save_affinity_heatmap(outdir / "affinity.png", affinity)
        plotting.save_dendrogram(outdir / "dendrogram.png", dend)
        if scores:
            plotting.save_silhouette_scores(outdir / "silhouette.png", scores, k)
        if layers[0].p >= 2:
            plotting.save_cluster_scatter(outdir / "clusters.png", layers[0].values, assignment)
        if stability is not None:
            plotting.save_stability(outdir / "stability.png", stability)
    return 0


def cmd_fed_sim(args) -> int:
    seed = _resolve_seed(args.seed)
    if args.clients < 2:
        raise UsageError("--clients must be at least 2")
    if args.iterations < 1:
        raise UsageError("--iterations must be at least 1")
    if args.eval == "logrank" and not args.survival:
        raise UsageError("--eval logrank requires --survival")
    k_mode = _resolve_k_mode(args)
    if k_mode == "stability":
        raise UsageError("fed-sim supports --k-mode fixed or silhouette")
    outdir = args.out
    outdir.mkdir(parents=True, exist_ok=True)

    # z-scoring is governed by --standardize-mode inside the simulation, so
    # upfront preprocessing only filters and imputes
    layers = _load_layers(args, force_no_standardize=True)
    survival = load_survival(args.survival) if args.survival else None
    dataset = MultiOmicsDataset(layers=tuple(layers), survival=survival)
    cfg = _forest_config(args, seed)

    report = simulate(
        dataset,
        n_clients=args.clients,
        cfg=cfg,
        iterations=args.iterations,
        seed=seed,
        eval_mode=args.eval,
        k=args.k,
        k_max=args.k_max,
        mtry=args.mtry if args.mtry is not None else "sqrt",
        standardize=args.standardize_mode,
    )
    write_report_json(outdir / "federation_report.json", report)
    write_winloss_csv(outdir / "winloss.csv", report)
    _write_run_meta(outdir, "fed-sim", seed, _public_args(args))
    if not args.no_plots:
        from . import plotting

        plotting.save_winloss(outdir / "winloss.png", report)
    return 0


def cmd_synth(args) -> int:
    seed = _resolve_seed(args.seed)
    outdir = args.out
    outdir.mkdir(parents=True, exist_ok=True)
    if args.spec_json:
        with open(args.spec_json, encoding="utf-8") as fh:
            payload = json.load(fh)
        payload.setdefault("seed", seed)
        spec = ScenarioSpec(**payload)
    else:
        spec = ScenarioSpec(
            kind=args.kind,
            n_per_cluster=args.n_per_cluster,
            seed=seed,
            std=args.std,
            outlier_fraction=args.outlier_fraction,
            m=args.m,
            separation=args.separation,
            noise=args.noise,
        )
    ds = generate(spec)
    write_matrix_csv(outdir / "data.csv", ds.data)
    write_labels_csv(outdir / "labels.csv", ds.labels)
    _write_run_meta(outdir, "synth", spec.seed, _public_args(args))
    if not args.no_plots:
        from . import plotting

        plotting.save_scatter(outdir / "scatter.png", ds)
    return 0


def cmd_synth_bench(args) -> int:
    seed = _resolve_seed(args.seed)
    outdir = args.out
    outdir.mkdir(parents=True, exist_ok=True)
    scenarios = tuple(args.scenario) if args.scenario else DEFAULT_SCENARIOS
    for s in scenarios:
        if s not in PARAM_GRIDS:
            raise UsageError(f"unknown scenario {s!r}; choose from {sorted(PARAM_GRIDS)}")
    mtry = args.mtry if args.mtry is not None else 1
    cfg = ForestConfig(n_trees=args.trees, mtry=mtry, min_leaf=args.min_leaf,
                       bootstrap=not args.no_bootstrap, seed=seed)
    rows = run_benchmark(
        scenarios=scenarios,
        replicates=args.replicates,
        cfg=cfg,
        seed=seed,
        n_per_cluster=args.n_per_cluster,
    )
    write_results_csv(outdir / "results.csv", rows)
    _write_run_meta(outdir, "synth-bench", seed, _public_args(args))
    if not args.no_plots:
        from . import plotting

        plotting.save_benchmark(outdir / "benchmark.png", rows)
    return 0


def cmd_importance(args) -> int:
    seed = _resolve_seed(args.seed)
    outdir = args.out
    outdir.mkdir(parents=True, exist_ok=True)
    layers = _load_layers(args)
    labels = read_labels_csv(args.labels)

    index = {sid: i for i, sid in enumerate(labels.sample_ids)}
    layer_ids = layers[0].sample_ids
    missing = [sid for sid in layer_ids if sid not in index]
    if missing:
        raise FedurfError(f"labels file lacks samples: {missing[:5]}")
    unknown = [sid for sid in labels.sample_ids if sid not in set(layer_ids)]
    if unknown:
        raise FedurfError(f"labels file has unknown sample ids: {unknown[:5]}")
    from .cluster import ClusterAssignment

    ordered = ClusterAssignment(
        labels=labels.labels[[index[sid] for sid in layer_ids]],
        k=labels.k,
        sample_ids=layer_ids,
    )

    cfg = _forest_config(args, seed)
    raw_vectors = []
    norm_vectors = []
    feature_ids: list[str] = []
    per_layer = []
    for i, layer in enumerate(layers):
        forest = train_forest(layer, cfg, layer_index=i, threads=args.threads)
        per_layer.append((layer, forest))
    seen = set()
    for i, (layer, _) in enumerate(per_layer):
        for fid in layer.feature_ids:
            feature_ids.append(fid if fid not in seen else f"L{i}:{fid}")
            seen.add(fid)
    for cid in range(ordered.k):
        raw_parts, norm_parts = [], []
        for i, (layer, forest) in enumerate(per_layer):
            raw = cluster_importance(forest, layer, ordered, cid)
            raw_parts.append(raw.scores)
        scores = np.concatenate(raw_parts)
        from .importance import ImportanceVector

        raw_vectors.append(ImportanceVector(cluster_id=cid, scores=scores, normalized=False))
        peak = scores.max()
        norm_vectors.append(
            ImportanceVector(
                cluster_id=cid,
                scores=scores / peak if peak > 0 else scores,
                normalized=True,
            )
        )

    write_importance_csv(outdir / "importance.csv", feature_ids, raw_vectors)
    write_importance_csv(outdir / "importance_normalized.csv", feature_ids, norm_vectors)
    corr = importance_correlation(raw_vectors)
    write_correlation_csv(outdir / "importance_corr.csv", corr)
    if args.survival:
        records = load_survival(args.survival)
        write_km_csv(outdir / "km.csv", km_table(records, ordered))
    _write_run_meta(outdir, "importance", seed, _public_args(args))
    if not args.no_plots:
        from . import plotting

        plotting.save_importance_heatmap(outdir / "importance.png", feature_ids, raw_vectors)
        plotting.save_correlation_heatmap(outdir / "importance_corr.png", corr)
    return 0


def cmd_model_export(args) -> int:
    seed = _resolve_seed(args.seed)
    layers = _load_layers(args)
    cfg = _forest_config(args, seed)
    forests = [train_forest(layer, cfg, layer_index=i, threads=args.threads)
               for i, layer in enumerate(layers)]
    args.out_file.parent.mkdir(parents=True, exist_ok=True)
    export_model(forests, client_id=args.client_id, path=args.out_file)
    return 0


def cmd_model_merge(args) -> int:
    bundles = [load_bundle(p) for p in args.bundles]
    model = merge_models(bundles)
    args.out_file.parent.mkdir(parents=True, exist_ok=True)
    save_global_model(model, args.out_file)
    return 0


def cmd_model_inspect(args) -> int:
    with open(args.model_file, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("kind") == "global":
        model = load_global_model(args.model_file)
        summary = {
            "kind": "global",
            "clients": [b.client_id for b in model.bundles],
            "total_trees": model.total_trees,
            "layers": [
                {"layer_index": i, "n_features": p}
                for i, p in enumerate(model.n_features_per_layer)
            ],
        }
    else:
        bundle = load_bundle(args.model_file)
        summary = {
            "kind": "bundle",
            "client_id": bundle.client_id,
            "n_trees": len(bundle.trees),
            "layers": [
                {"layer_index": i, "n_features": p}
                for i, p in enumerate(bundle.n_features_per_layer)
            ],
            "total_nodes": sum(t.n_nodes for t in bundle.trees),
            "max_depth": max(max(nd.depth for nd in t.nodes) for t in bundle.trees),
            "config": asdict(bundle.config),
        }
    json.dump(summary, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedurf",
        description="Unsupervised random-forest clustering with a fixation-index "
        "split rule, multi-omics fusion, and a simulated federated protocol.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cluster", help="train, fuse layers, cluster, emit reports")
    _add_layers(p)
    _add_forest(p)
    _add_preprocess(p)
    _add_kmode(p)
    _add_common(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("fed-sim", help="simulate the federated local-vs-global comparison")
    _add_layers(p)
    p.add_argument("--survival", type=Path, default=None, help="survival CSV (sample_id,time,event)")
    p.add_argument("--clients", type=int, default=3, help="number of simulated clients")
    p.add_argument("--iterations", type=int, default=50, help="repetitions of the protocol")
    p.add_argument("--eval", choices=("ari", "logrank"), default="ari",
                   help="per-client comparison metric")
    p.add_argument("--standardize-mode", choices=("local", "global", "none"),
                   default="local", help="where z-scoring happens")
    _add_forest(p, trees=500, mtry=None)
    _add_preprocess(p)
    _add_kmode(p)
    _add_common(p)
    p.set_defaults(func=cmd_fed_sim)

    p = sub.add_parser("synth", help="generate one synthetic dataset")
    p.add_argument("--kind", choices=KINDS, default="globular_equal")
    p.add_argument("--n-per-cluster", type=int, default=100)
    p.add_argument("--std", type=float, default=0.3)
    p.add_argument("--outlier-fraction", type=float, default=0.04)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--separation", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--spec-json", type=Path, default=None,
                   help="JSON file with ScenarioSpec fields (overrides flags)")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("synth-bench", help="ARI benchmark over synthetic scenarios")
    p.add_argument("--scenario", action="append", default=None,
                   help=f"scenario to run (repeatable; default: {', '.join(DEFAULT_SCENARIOS)})")
    p.add_argument("--replicates", type=int, default=30)
    p.add_argument("--n-per-cluster", type=int, default=100)
    _add_forest(p, trees=500, mtry=None)
    _add_common(p)
    p.set_defaults(func=cmd_synth_bench)

    p = sub.add_parser("importance", help="cluster-specific feature importance")
    _add_layers(p)
    p.add_argument("--labels", type=Path, required=True, help="labels CSV (sample_id,label)")
    p.add_argument("--survival", type=Path, default=None,
                   help="optional survival CSV; adds km.csv")
    _add_forest(p)
    _add_preprocess(p)
    _add_common(p)
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("model", help="export, merge, or inspect model files")
    model_sub = p.add_subparsers(dest="model_command", required=True)

    q = model_sub.add_parser("export", help="train locally and write a model bundle")
    _add_layers(q)
    q.add_argument("--client-id", required=True)
    q.add_argument("--out-file", type=Path, required=True)
    q.add_argument("--seed", type=int, default=None)
    q.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    _add_forest(q)
    _add_preprocess(q)
    q.set_defaults(func=cmd_model_export)

    q = model_sub.add_parser("merge", help="concatenate bundles into a global model")
    q.add_argument("bundles", nargs="+", type=Path)
    q.add_argument("--out-file", type=Path, required=True)
    q.set_defaults(func=cmd_model_merge)

    q = model_sub.add_parser("inspect", help="print a model file summary")
    q.add_argument("model_file", type=Path)
    q.set_defaults(func=cmd_model_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FedurfError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
