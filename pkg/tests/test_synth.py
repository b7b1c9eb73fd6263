import numpy as np
import pytest

from fedurf import ScenarioSpec, cut, generate, ward_linkage
from fedurf.affinity import euclidean_distance
from fedurf.metrics import ari


class TestGenerate:
    def test_deterministic(self):
        spec = ScenarioSpec(kind="rings", separation=2.0, seed=42)
        a, b = generate(spec), generate(spec)
        np.testing.assert_array_equal(a.data.values, b.data.values)
        np.testing.assert_array_equal(a.labels.labels, b.labels.labels)

    def test_different_seeds_differ(self):
        a = generate(ScenarioSpec(kind="globular_equal", seed=0))
        b = generate(ScenarioSpec(kind="globular_equal", seed=1))
        assert not np.array_equal(a.data.values, b.data.values)

    def test_ring_radii_exact_bounds(self):
        ds = generate(ScenarioSpec(kind="rings", separation=3.0, seed=7))
        radius = np.linalg.norm(ds.data.values, axis=1)
        inner = radius[ds.labels.labels == 0]
        outer = radius[ds.labels.labels == 1]
        assert inner.min() >= 1.0 and inner.max() <= 2.0
        assert outer.min() >= 5.0 and outer.max() <= 6.0

    def test_label_counts(self):
        ds = generate(ScenarioSpec(kind="globular_varying", m=2, n_per_cluster=50, seed=1))
        assert list(np.bincount(ds.labels.labels)) == [50, 50, 50]

    def test_outlier_counts_added(self):
        ds = generate(
            ScenarioSpec(kind="globular_outliers", outlier_fraction=0.10, n_per_cluster=100, seed=2)
        )
        assert ds.data.n == 330  # 300 + 10% of 300
        counts = np.bincount(ds.labels.labels)
        assert counts.sum() == 330 and len(counts) == 3

    def test_globular_means_near_centers(self):
        ds = generate(ScenarioSpec(kind="globular_equal", std=0.1, n_per_cluster=200, seed=3))
        centers = [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
        for c, center in enumerate(centers):
            m = ds.data.values[ds.labels.labels == c].mean(axis=0)
            tol = 4 * 0.1 / np.sqrt(200)
            assert abs(m[0] - center[0]) < tol and abs(m[1] - center[1]) < tol

    def test_varying_stds_grow_with_m(self):
        small = generate(ScenarioSpec(kind="globular_varying", m=1, seed=4, n_per_cluster=400))
        large = generate(ScenarioSpec(kind="globular_varying", m=5, seed=4, n_per_cluster=400))
        spread_small = small.data.values[small.labels.labels == 2].std(axis=0).mean()
        spread_large = large.data.values[large.labels.labels == 2].std(axis=0).mean()
        # stds are 0.3 vs 1.1 for the third cluster
        assert spread_large > spread_small * 2

    def test_moons_two_clusters(self):
        ds = generate(ScenarioSpec(kind="moons", noise=0.05, seed=5))
        assert ds.labels.k == 2
        assert ds.data.n == 200

    def test_tight_globular_ward_sanity(self):
        ds = generate(ScenarioSpec(kind="globular_equal", std=0.1, seed=6))
        labels = cut(ward_linkage(euclidean_distance(ds.data.values)), 3)
        assert ari(labels.labels, ds.labels.labels) > 0.98

    def test_validation(self):
        with pytest.raises(ValueError):
            ScenarioSpec(kind="nope")
        with pytest.raises(ValueError):
            ScenarioSpec(kind="rings", separation=-1.0)
        with pytest.raises(ValueError):
            ScenarioSpec(kind="globular_equal", std=0.0)
        with pytest.raises(ValueError):
            ScenarioSpec(kind="globular_outliers", outlier_fraction=0.9)
