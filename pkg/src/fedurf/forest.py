"""Unsupervised decision forests split by a fixation-index criterion.

Each node split minimizes the ratio of mean within-group pairwise squared
difference to between-group pairwise squared difference of one feature.
No response vector is involved; trees exist to co-locate similar samples
in leaves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from concurrent.futures import ThreadPoolExecutor
from typing import Mapping, Sequence

import numpy as np

from .data import OmicsMatrix
from .errors import FeatureMismatch, MissingLeafLabel, ZeroBetweenDispersion


def mix_seed(*parts: int) -> int:
    """Stable integer seed derived from a tuple of integers."""
    words = [int(p) & 0xFFFFFFFFFFFFFFFF for p in parts]
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 500
    mtry: int = 2
    min_leaf: int = 5
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.mtry < 1:
            raise ValueError("mtry must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")


@dataclass(frozen=True)
class SplitCandidate:
    feature: int
    threshold: float
    score: float
    n_left: int
    n_right: int


@dataclass(frozen=True)
class TreeNode:
    id: int
    depth: int
    feature: int | None = None
    threshold: float | None = None
    left: int | None = None
    right: int | None = None
    split: SplitCandidate | None = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def __post_init__(self):
        internal = (self.feature, self.threshold, self.left, self.right)
        if self.is_leaf:
            if any(x is not None for x in internal) or self.split is not None:
                raise ValueError("leaf nodes carry no split or children")
        elif any(x is None for x in internal):
            raise ValueError("internal nodes need feature, threshold, and both children")


@dataclass
class Tree:
    """One grown tree. Routing state is precomputed as flat arrays.

    ``bag_indices``/``bag_leaf_ids`` record which rows grew the tree and the
    leaf each growing sample ended in; they stay in memory only and are never
    serialized.
    """

    nodes: list[TreeNode]
    layer_index: int = 0
    seed: int = 0
    bag_indices: np.ndarray | None = None
    bag_leaf_ids: np.ndarray | None = None
    _feature: np.ndarray = field(init=False, repr=False)
    _threshold: np.ndarray = field(init=False, repr=False)
    _left: np.ndarray = field(init=False, repr=False)
    _right: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.nodes:
            raise ValueError("tree needs at least one node")
        if [nd.id for nd in self.nodes] != list(range(len(self.nodes))):
            raise ValueError("node ids must be 0..n_nodes-1 in order")
        m = len(self.nodes)
        for nd in self.nodes:
            if not nd.is_leaf and not (nd.id < nd.left < m and nd.id < nd.right < m):
                raise ValueError("child ids must point forward (preorder); no cycles")
        self._feature = np.full(m, -1, dtype=np.int64)
        self._threshold = np.full(m, np.nan)
        self._left = np.full(m, -1, dtype=np.int64)
        self._right = np.full(m, -1, dtype=np.int64)
        for nd in self.nodes:
            if not nd.is_leaf:
                self._feature[nd.id] = nd.feature
                self._threshold[nd.id] = nd.threshold
                self._left[nd.id] = nd.left
                self._right[nd.id] = nd.right

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def leaf_ids(self) -> np.ndarray:
        return np.nonzero(self._feature < 0)[0]

    def max_feature(self) -> int:
        return int(self._feature.max(initial=-1))

    def route(self, values: np.ndarray) -> np.ndarray:
        """Leaf node id for every row; value <= threshold goes left."""
        node = np.zeros(values.shape[0], dtype=np.int64)
        while True:
            live = np.nonzero(self._feature[node] >= 0)[0]
            if live.size == 0:
                return node
            cur = node[live]
            go_left = values[live, self._feature[cur]] <= self._threshold[cur]
            node[live] = np.where(go_left, self._left[cur], self._right[cur])


@dataclass(frozen=True)
class Forest:
    trees: tuple[Tree, ...]
    config: ForestConfig
    n_features: int

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        if len(self.trees) != self.config.n_trees:
            raise ValueError(
                f"forest holds {len(self.trees)} trees but config says {self.config.n_trees}"
            )
        for t in self.trees:
            if t.max_feature() >= self.n_features:
                raise FeatureMismatch(
                    f"tree references feature {t.max_feature()} beyond p={self.n_features}"
                )

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def within_dispersion(values: Sequence[float]) -> float:
    """Mean squared difference over ordered pairs; 0 for a single value."""
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    if n == 0:
        raise ValueError("need at least one value")
    if n == 1 or v.min() == v.max():
        return 0.0
    total = 2.0 * (n * float(v @ v) - float(v.sum()) ** 2)
    return max(total, 0.0) / (n * (n - 1))


def between_dispersion(left: Sequence[float], right: Sequence[float]) -> float:
    """Mean squared difference over all cross pairs of the two groups."""
    a = np.asarray(left, dtype=np.float64)
    b = np.asarray(right, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both groups must be nonempty")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if lo == hi:
        return 0.0
    total = b.size * float(a @ a) + a.size * float(b @ b) - 2.0 * float(a.sum()) * float(b.sum())
    return max(total, 0.0) / (a.size * b.size)


def fst_score(left: Sequence[float], right: Sequence[float]) -> float:
    """Split score: mean of the two within-dispersions over the between-dispersion.

    Lower is better (tight groups, far apart). Raises ZeroBetweenDispersion
    when the groups are indistinguishable on this feature.
    """
    between = between_dispersion(left, right)
    if between <= 0.0:
        raise ZeroBetweenDispersion("between-group dispersion is zero")
    within = (within_dispersion(left) + within_dispersion(right)) / 2.0
    return within / between


def best_split(
    values: np.ndarray, candidate_features: Sequence[int], min_leaf: int
) -> SplitCandidate | None:
    """Minimal-score split of the in-node samples over the candidate features.

    ``values`` holds the in-node sample rows (all features). Thresholds are
    midpoints between consecutive distinct sorted values of a candidate
    feature; candidates leaving fewer than ``min_leaf`` samples on a side are
    discarded. Ties break toward the lower feature index, then threshold.
    Returns None when no valid candidate exists.
    """
    values = np.asarray(values, dtype=np.float64)
    N = values.shape[0]
    if N < 2 * min_leaf:
        return None
    best: SplitCandidate | None = None
    positions = np.arange(1, N)
    for f in sorted(int(f) for f in candidate_features):
        v = values[:, f]
        sv = np.sort(v, kind="stable")
        ok = sv[:-1] != sv[1:]
        ok &= (positions >= min_leaf) & (positions <= N - min_leaf)
        if not ok.any():
            continue
        s1 = np.cumsum(sv)
        s2 = np.cumsum(sv * sv)
        nl = positions[ok].astype(np.float64)
        nr = N - nl
        sum_l = s1[:-1][ok]
        sq_l = s2[:-1][ok]
        sum_r = s1[-1] - sum_l
        sq_r = s2[-1] - sq_l
        within_l = np.maximum(2.0 * (nl * sq_l - sum_l * sum_l), 0.0)
        within_r = np.maximum(2.0 * (nr * sq_r - sum_r * sum_r), 0.0)
        disp_l = np.where(nl > 1, within_l / (nl * np.maximum(nl - 1.0, 1.0)), 0.0)
        disp_r = np.where(nr > 1, within_r / (nr * np.maximum(nr - 1.0, 1.0)), 0.0)
        cross = np.maximum(nr * sq_l + nl * sq_r - 2.0 * sum_l * sum_r, 0.0)
        between = cross / (nl * nr)
        scores = np.full(nl.shape, np.inf)
        positive = between > 0.0
        scores[positive] = (disp_l[positive] + disp_r[positive]) / 2.0 / between[positive]
        j = int(np.argmin(scores))
        if not np.isfinite(scores[j]):
            continue
        pos = int(nl[j])
        cand = SplitCandidate(
            feature=f,
            threshold=float((sv[pos - 1] + sv[pos]) / 2.0),
            score=float(scores[j]),
            n_left=pos,
            n_right=N - pos,
        )
        if (
            best is None
            or cand.score < best.score
            or (cand.score == best.score and (cand.feature, cand.threshold) < (best.feature, best.threshold))
        ):
            best = cand
    return best


def _layer_values(layer: OmicsMatrix | np.ndarray) -> np.ndarray:
    if isinstance(layer, OmicsMatrix):
        if layer.missing_mask.any():
            raise ValueError("layer has missing values; impute before training/routing")
        return layer.values
    values = np.asarray(layer, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("expected a 2-D samples x features array")
    return values


def grow_tree(
    layer: OmicsMatrix | np.ndarray,
    cfg: ForestConfig,
    tree_seed: int,
    layer_index: int = 0,
) -> Tree:
    """Grow one tree on (a bootstrap of) the layer, deterministically per seed."""
    X = _layer_values(layer)
    n, p = X.shape
    if cfg.mtry > p:
        raise ValueError(f"mtry={cfg.mtry} exceeds feature count {p}")
    if n < 1:
        raise ValueError("cannot grow a tree on an empty layer")
    rng = np.random.default_rng(tree_seed)
    bag = rng.integers(0, n, size=n) if cfg.bootstrap else np.arange(n)
    Xg = X[bag]
    min_leaf = cfg.min_leaf

    nodes: list[TreeNode | None] = []
    bag_leaf_ids = np.full(n, -1, dtype=np.int64)

    def build(idx: np.ndarray, depth: int) -> int:
        nid = len(nodes)
        nodes.append(None)
        cand = None
        if idx.size >= 2 * min_leaf:
            feats = rng.choice(p, size=cfg.mtry, replace=False)
            cand = best_split(Xg[idx], feats, min_leaf)
        if cand is None:
            nodes[nid] = TreeNode(id=nid, depth=depth)
            bag_leaf_ids[idx] = nid
            return nid
        mask = Xg[idx, cand.feature] <= cand.threshold
        left = build(idx[mask], depth + 1)
        right = build(idx[~mask], depth + 1)
        nodes[nid] = TreeNode(
            id=nid,
            depth=depth,
            feature=cand.feature,
            threshold=cand.threshold,
            left=left,
            right=right,
            split=cand,
        )
        return nid

    build(np.arange(n), 0)
    return Tree(
        nodes=nodes,  # type: ignore[arg-type]
        layer_index=layer_index,
        seed=int(tree_seed),
        bag_indices=bag,
        bag_leaf_ids=bag_leaf_ids,
    )


def train_forest(
    layer: OmicsMatrix | np.ndarray,
    cfg: ForestConfig,
    layer_index: int = 0,
    threads: int = 1,
) -> Forest:
    """Grow cfg.n_trees independent trees with per-tree derived seeds.

    The result does not depend on ``threads``; per-tree seeds are fixed up
    front and trees are collected in index order.
    """
    X = _layer_values(layer)
    seeds = [mix_seed(cfg.seed, layer_index, i) for i in range(cfg.n_trees)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(lambda s: grow_tree(X, cfg, s, layer_index), seeds))
    else:
        trees = [grow_tree(X, cfg, s, layer_index) for s in seeds]
    return Forest(trees=tuple(trees), config=cfg, n_features=X.shape[1])


def assign_leaves(f: Forest, layer: OmicsMatrix | np.ndarray) -> np.ndarray:
    """Route every sample through every tree: (n_samples, n_trees) leaf ids."""
    X = _layer_values(layer)
    if X.shape[1] != f.n_features:
        raise FeatureMismatch(f"layer has {X.shape[1]} features, forest expects {f.n_features}")
    out = np.empty((X.shape[0], f.n_trees), dtype=np.int64)
    for t, tree in enumerate(f.trees):
        out[:, t] = tree.route(X)
    return out


def majority_vote(votes: np.ndarray, n_classes: int | None = None) -> np.ndarray:
    """Row-wise majority over integer votes; ties go to the lower class index."""
    votes = np.asarray(votes)
    if n_classes is None:
        n_classes = int(votes.max()) + 1
    n = votes.shape[0]
    counts = np.zeros((n, n_classes), dtype=np.int64)
    np.add.at(counts, (np.repeat(np.arange(n), votes.shape[1]), votes.ravel()), 1)
    return counts.argmax(axis=1)


def predict_labels(
    f: Forest,
    leaf_labels: Sequence[Mapping[int, int]],
    layer: OmicsMatrix | np.ndarray,
) -> np.ndarray:
    """Majority class over trees, each tree voting its leaf's label."""
    if len(leaf_labels) != f.n_trees:
        raise MissingLeafLabel(
            f"need one leaf-label map per tree ({f.n_trees}), got {len(leaf_labels)}"
        )
    leaves = assign_leaves(f, layer)
    votes = np.empty_like(leaves)
    for t, (tree, mapping) in enumerate(zip(f.trees, leaf_labels)):
        lut = np.full(tree.n_nodes, -1, dtype=np.int64)
        for leaf_id, cls in mapping.items():
            lut[leaf_id] = cls
        votes[:, t] = lut[leaves[:, t]]
        if (votes[:, t] < 0).any():
            missing = int(leaves[votes[:, t] < 0, t][0])
            raise MissingLeafLabel(f"tree {t} leaf {missing} has no label")
    return majority_vote(votes)
