import numpy as np
import pytest

from fedurf import (
    DistanceMatrix,
    ForestConfig,
    cut,
    leaf_majority_labels,
    predict_labels,
    select_k_silhouette,
    stability_diagnostic,
    suggest_k,
    train_forest,
    ward_linkage,
)
from fedurf.affinity import count_matrix, euclidean_distance, normalize, to_distance
from fedurf.cluster import (
    Dendrogram,
    read_labels_csv,
    stability_to_json,
    write_dendrogram_csv,
    write_labels_csv,
)
from fedurf.metrics import ari

import oracles
from helpers import make_matrix


def random_distance(n, rng):
    d = rng.uniform(0.1, 2.0, size=(n, n))
    d = (d + d.T) / 2.0
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(values=d)


class TestWardLinkage:
    def test_two_points(self):
        d = DistanceMatrix(values=np.array([[0.0, 3.5], [3.5, 0.0]]))
        dend = ward_linkage(d)
        assert len(dend.merges) == 1
        a, b, height, size = dend.merges[0]
        assert (a, b, size) == (0, 1, 2)
        assert height == pytest.approx(3.5)

    def test_three_collinear_points(self):
        points = np.array([[0.0], [1.0], [10.0]])
        dend = ward_linkage(euclidean_distance(points))
        a, b, _, _ = dend.merges[0]
        assert (a, b) == (0, 1)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            d = random_distance(8, rng)
            dend = ward_linkage(d)
            expected = oracles.naive_ward(d.values)
            for got, want in zip(dend.merges, expected):
                assert got[:2] == want[:2]
                assert got[3] == want[3]
                assert got[2] == pytest.approx(want[2], rel=1e-9, abs=1e-12)

    def test_matches_scipy_on_euclidean(self):
        from scipy.cluster.hierarchy import linkage
        from scipy.spatial.distance import pdist, squareform

        rng = np.random.default_rng(1)
        X = rng.normal(size=(12, 3))
        dend = ward_linkage(DistanceMatrix(values=squareform(pdist(X))))
        Z = linkage(pdist(X), method="ward")
        for (a, b, h, s), row in zip(dend.merges, Z):
            assert {a, b} == {int(row[0]), int(row[1])}
            assert h == pytest.approx(row[2], rel=1e-9)
            assert s == int(row[3])

    def test_heights_non_decreasing(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            dend = ward_linkage(random_distance(10, rng))
            heights = [m[2] for m in dend.merges]
            assert all(b >= a - 1e-9 for a, b in zip(heights, heights[1:]))

    def test_tie_breaks_lexicographic(self):
        # all pairwise distances equal: first merge must be (0, 1)
        d = np.ones((4, 4)) - np.eye(4)
        dend = ward_linkage(DistanceMatrix(values=d))
        assert dend.merges[0][:2] == (0, 1)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            DistanceMatrix(values=np.array([[0.0, 1.0], [2.0, 0.0]]))
        with pytest.raises(ValueError):
            DistanceMatrix(values=np.array([[0.0, -1.0], [-1.0, 0.0]]))


class TestCut:
    def _three_point_dend(self):
        return ward_linkage(euclidean_distance(np.array([[0.0], [1.0], [10.0]])))

    def test_k_one(self):
        labels = cut(self._three_point_dend(), 1)
        assert labels.k == 1 and set(labels.labels) == {0}

    def test_k_n(self):
        labels = cut(self._three_point_dend(), 3)
        assert list(labels.labels) == [0, 1, 2]

    def test_k_two_from_oracle_sequence(self):
        labels = cut(self._three_point_dend(), 2)
        assert labels.labels[0] == labels.labels[1] != labels.labels[2]

    def test_label_order_by_smallest_index(self):
        # cluster containing sample 0 must be labeled 0
        rng = np.random.default_rng(3)
        dend = ward_linkage(random_distance(9, rng))
        for k in (2, 3, 4):
            labels = cut(dend, k).labels
            firsts = {}
            for i, lab in enumerate(labels):
                firsts.setdefault(int(lab), i)
            order = [firsts[lab] for lab in sorted(firsts)]
            assert order == sorted(order)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            cut(self._three_point_dend(), 4)
        with pytest.raises(ValueError):
            cut(self._three_point_dend(), 0)

    def test_partition_covers_everything(self):
        rng = np.random.default_rng(4)
        dend = ward_linkage(random_distance(12, rng))
        labels = cut(dend, 5)
        assert labels.n == 12 and labels.k == 5


class TestDendrogram:
    def test_merge_count_enforced(self):
        with pytest.raises(ValueError):
            Dendrogram(merges=((0, 1, 1.0, 2),), n_leaves=4)

    def test_csv_export(self, tmp_path):
        dend = ward_linkage(euclidean_distance(np.array([[0.0], [1.0], [10.0]])))
        path = tmp_path / "dend.csv"
        write_dendrogram_csv(path, dend)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "cluster_a,cluster_b,height,new_size"
        assert len(lines) == 3

    def test_labels_csv_roundtrip(self, tmp_path):
        labels = cut(ward_linkage(euclidean_distance(np.arange(6.0)[:, None])), 3)
        path = tmp_path / "labels.csv"
        write_labels_csv(path, labels)
        back = read_labels_csv(path)
        assert back.sample_ids == labels.sample_ids
        np.testing.assert_array_equal(back.labels, labels.labels)


class TestSelectK:
    def test_two_tight_blobs(self):
        rng = np.random.default_rng(5)
        X = np.vstack([rng.normal(0, 0.05, (12, 2)), rng.normal(5, 0.05, (12, 2))])
        k, scores = select_k_silhouette(euclidean_distance(X), 2, 5)
        assert k == 2
        assert scores[2] > 0.9

    def test_scores_match_direct_silhouette(self):
        rng = np.random.default_rng(6)
        d = random_distance(9, rng)
        _, scores = select_k_silhouette(d, 2, 4)
        dend = ward_linkage(d)
        for k, score in scores.items():
            labels = cut(dend, k).labels
            direct = np.mean(oracles.silhouette_direct(d.values, labels))
            assert score == pytest.approx(direct, abs=1e-12)

    def test_invalid_range(self):
        rng = np.random.default_rng(7)
        d = random_distance(6, rng)
        with pytest.raises(ValueError):
            select_k_silhouette(d, 1, 4)
        with pytest.raises(ValueError):
            select_k_silhouette(d, 2, 6)


class TestStability:
    def _forest_and_layer(self, n_trees=30):
        rng = np.random.default_rng(8)
        X = np.vstack([rng.normal(0, 0.2, (15, 2)), rng.normal(4, 0.2, (15, 2))])
        layer = make_matrix(X)
        cfg = ForestConfig(n_trees=n_trees, mtry=1, min_leaf=5, seed=1)
        return train_forest(layer, cfg), layer

    def test_deterministic(self):
        forest, layer = self._forest_and_layer()
        kwargs = dict(k_range=(2, 3), tree_grid=(30, 10), reps=3, seed=9)
        a = stability_diagnostic(forest, layer, **kwargs)
        b = stability_diagnostic(forest, layer, **kwargs)
        assert a.grid == b.grid

    def test_full_budget_two_blobs_is_perfect(self):
        forest, layer = self._forest_and_layer()
        report = stability_diagnostic(
            forest, layer, k_range=(2,), tree_grid=(30,), reps=3, seed=0
        )
        assert report.median(2, 30) == pytest.approx(1.0)

    def test_cell_matches_predict_labels_route(self):
        from dataclasses import replace
        from fedurf import Forest
        from fedurf.forest import mix_seed

        forest, layer = self._forest_and_layer()
        k, budget, rep, seed = 2, 12, 0, 4
        report = stability_diagnostic(
            forest, layer, k_range=(k,), tree_grid=(budget,), reps=1, seed=seed
        )
        base = cut(
            ward_linkage(to_distance(normalize(count_matrix(forest, layer)))), k
        )
        rng = np.random.default_rng(mix_seed(seed, k, budget, rep))
        chosen = rng.choice(forest.n_trees, size=budget, replace=False)
        sub = Forest(
            trees=tuple(forest.trees[i] for i in chosen),
            config=replace(forest.config, n_trees=budget),
            n_features=forest.n_features,
        )
        maps = leaf_majority_labels(sub, layer, base.labels)
        pred = predict_labels(sub, maps, layer)
        assert report.grid[(k, budget)][0] == pytest.approx(ari(pred, base.labels))

    def test_guards(self):
        forest, layer = self._forest_and_layer()
        with pytest.raises(ValueError):
            stability_diagnostic(forest, layer, k_range=(1, 2), tree_grid=(10,), reps=1)
        with pytest.raises(ValueError):
            stability_diagnostic(forest, layer, k_range=(2,), tree_grid=(31,), reps=1)
        with pytest.raises(ValueError):
            stability_diagnostic(forest, layer, k_range=(2,), tree_grid=(10,), reps=0)

    def test_suggest_k_prefers_largest_stable(self):
        from fedurf.cluster import StabilityReport

        grid = {
            (2, 50): (1.0, 1.0), (2, 10): (1.0, 0.98),
            (3, 50): (1.0, 1.0), (3, 10): (0.99, 0.97),
            (4, 50): (0.9, 0.92), (4, 10): (0.4, 0.5),
        }
        report = StabilityReport(
            grid=grid, k_range=(2, 3, 4), tree_grid=(50, 10), reps=2, seed=0
        )
        assert suggest_k(report) == 3

    def test_json_shape(self):
        forest, layer = self._forest_and_layer()
        report = stability_diagnostic(
            forest, layer, k_range=(2,), tree_grid=(10,), reps=2, seed=0
        )
        payload = stability_to_json(report)
        assert payload["k_range"] == [2]
        assert "k=2,trees=10" in payload["grid"]
        assert len(payload["grid"]["k=2,trees=10"]) == 2


class TestLeafMajorityLabels:
    def test_majority_and_tie(self):
        from fedurf import Forest
        from helpers import stump

        forest = Forest(
            trees=(stump(0, 0.5),), config=ForestConfig(n_trees=1), n_features=1
        )
        layer = np.array([[0.0], [0.2], [1.0], [2.0]])
        labels = np.array([1, 0, 0, 1])  # left leaf: {1,0} tie -> 0; right: {0,1} tie -> 0
        maps = leaf_majority_labels(forest, layer, labels)
        assert maps[0][1] == 0 and maps[0][2] == 0
