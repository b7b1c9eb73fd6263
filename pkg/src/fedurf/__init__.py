"""Unsupervised random-forest clustering with a fixation-index split rule.

The library trains forests without any response vector, turns leaf
co-occurrence into sample affinities, clusters them with Ward linkage, and
supports multi-omics fusion, cluster-specific feature importance, and a
simulated federated protocol where clients exchange trees but never samples.
"""

__version__ = "0.1.0"

from .affinity import (
    AffinityMatrix,
    CountMatrix,
    DistanceMatrix,
    count_matrix,
    euclidean_distance,
    fuse,
    normalize,
    to_distance,
)
from .cluster import (
    ClusterAssignment,
    Dendrogram,
    StabilityReport,
    cut,
    leaf_majority_labels,
    select_k_silhouette,
    stability_diagnostic,
    suggest_k,
    ward_linkage,
)
from .data import (
    MultiOmicsDataset,
    OmicsMatrix,
    PreprocessConfig,
    SurvivalRecord,
    knn_impute,
    parse_matrix,
    partition_clients,
    preprocess,
    standardize_matrix,
)
from .federated import (
    FederationReport,
    GlobalModel,
    ModelBundle,
    export_model,
    global_affinity,
    load_bundle,
    merge_models,
    save_bundle,
    simulate,
)
from .forest import (
    Forest,
    ForestConfig,
    SplitCandidate,
    Tree,
    TreeNode,
    assign_leaves,
    best_split,
    between_dispersion,
    fst_score,
    grow_tree,
    predict_labels,
    train_forest,
    within_dispersion,
)
from .importance import ImportanceVector, cluster_importance, importance_correlation
from .metrics import (
    ContingencyTable,
    KMRow,
    LogRankResult,
    ari,
    km_table,
    logrank_test,
    pearson,
    silhouette,
)
from .synth import LabeledDataset, ScenarioSpec, generate
