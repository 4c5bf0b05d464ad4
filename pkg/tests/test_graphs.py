import json
import os

import numpy as np
import pytest

from betagraph import graphs
from betagraph.graphs import DatasetError


class TestLoadDataset:
    def test_toy3(self, toy3_dir):
        g = graphs.load_dataset(toy3_dir)
        assert g.n == 3
        assert g.class_count == 2
        assert g.edge_count == 2
        assert g.name == "toy3"

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError, match="missing"):
            graphs.load_dataset(tmp_path)

    def test_edge_out_of_range(self, tmp_path, toy3_dir):
        for f in ("features.csv", "labels.csv", "meta.json"):
            (tmp_path / f).write_text(open(os.path.join(toy3_dir, f)).read())
        (tmp_path / "edges.tsv").write_text("2\t9\n")
        with pytest.raises(DatasetError, match="out of range"):
            graphs.load_dataset(tmp_path)

    def test_non_numeric_feature_cell(self, tmp_path, toy3_dir):
        for f in ("edges.tsv", "labels.csv", "meta.json"):
            (tmp_path / f).write_text(open(os.path.join(toy3_dir, f)).read())
        (tmp_path / "features.csv").write_text("1.0,oops\n0.0,1.0\n1.0,1.0\n")
        with pytest.raises(DatasetError, match="non-numeric"):
            graphs.load_dataset(tmp_path)

    def test_duplicate_and_reversed_edges_deduplicated(self, tmp_path):
        (tmp_path / "edges.tsv").write_text("0\t1\n1\t0\n0\t1\n1\t1\n")
        (tmp_path / "features.csv").write_text("0.0\n1.0\n")
        (tmp_path / "labels.csv").write_text("0\n1\n")
        (tmp_path / "meta.json").write_text(
            json.dumps({"n": 2, "F": 1, "C": 2}))
        g = graphs.load_dataset(tmp_path)
        assert g.edge_count == 1
        dense = g.adjacency.to_dense()
        assert np.array_equal(dense, np.array([[0.0, 1.0], [1.0, 0.0]]))

    def test_roundtrip_csv_exact(self, tmp_path):
        g = graphs.gen_planted_partition(3, 8, 0.4, 0.05, 4, 2.0, seed=1)
        graphs.save_dataset(g, tmp_path / "ds", feature_format="csv")
        back = graphs.load_dataset(tmp_path / "ds")
        assert back.n == g.n
        assert np.array_equal(back.labels, g.labels)
        assert np.array_equal(back.features, g.features)
        assert np.array_equal(back.adjacency.to_dense(), g.adjacency.to_dense())

    def test_roundtrip_bin(self, tmp_path):
        g = graphs.gen_erdos_renyi(20, 0.2, 3, seed=2)
        g = graphs.Graph(n=g.n, adjacency=g.adjacency,
                         features=g.features.astype(np.float32).astype(np.float64),
                         labels=g.labels, class_count=g.class_count)
        graphs.save_dataset(g, tmp_path / "ds", feature_format="bin")
        back = graphs.load_dataset(tmp_path / "ds")
        assert np.array_equal(back.features, g.features)
        assert np.array_equal(back.adjacency.to_dense(), g.adjacency.to_dense())

    def test_zscore_on_load(self, tmp_path):
        g = graphs.gen_planted_partition(2, 10, 0.4, 0.1, 3, 4.0, seed=3)
        graphs.save_dataset(g, tmp_path / "ds", feature_format="csv")
        norm = graphs.load_dataset(tmp_path / "ds", normalize_features=True)
        assert np.abs(norm.features.mean(axis=0)).max() < 1e-9
        assert np.abs(norm.features.std(axis=0) - 1.0).max() < 1e-9


class TestNormalizeAdjacency:
    def test_single_node(self):
        g = graphs.build_graph(np.zeros((0, 2)), np.zeros((1, 2)),
                               np.zeros(1), 1)
        assert np.array_equal(graphs.normalize_adjacency(g).to_dense(),
                              np.array([[1.0]]))

    def test_two_nodes_one_edge(self):
        g = graphs.build_graph(np.array([[0, 1]]), np.zeros((2, 2)),
                               np.zeros(2), 1)
        dense = graphs.normalize_adjacency(g).to_dense()
        assert dense == pytest.approx(np.full((2, 2), 0.5))

    def test_path_graph(self):
        g = graphs.build_graph(np.array([[0, 1], [1, 2]]), np.zeros((3, 2)),
                               np.zeros(3), 1)
        dense = graphs.normalize_adjacency(g).to_dense()
        assert dense[0, 1] == pytest.approx(1 / np.sqrt(6))
        assert dense[0, 0] == pytest.approx(1 / 2)
        assert dense[1, 1] == pytest.approx(1 / 3)

    def test_symmetry_and_degree_reconstruction(self):
        # D^{1/2} Ahat D^{1/2} must equal A + I, so its row sums are deg + 1
        rng = np.random.default_rng(8)
        for _ in range(10):
            n = rng.integers(2, 9)
            dense = np.triu((rng.random((n, n)) < 0.4), 1).astype(float)
            dense = dense + dense.T
            edges = np.argwhere(np.triu(dense) > 0)
            g = graphs.build_graph(edges.reshape(-1, 2), np.zeros((n, 1)),
                                   np.zeros(n), 1)
            ahat = graphs.normalize_adjacency(g).to_dense()
            assert np.abs(ahat - ahat.T).max() < 1e-12
            deg = dense.sum(axis=1) + 1
            rec = np.sqrt(deg)[:, None] * ahat * np.sqrt(deg)[None, :]
            assert np.abs(rec - (dense + np.eye(n))).max() < 1e-12


class TestMakeSplit:
    def test_ratio_sizes(self):
        g = graphs.gen_planted_partition(2, 50, 0.3, 0.1, 4, 2.0, seed=4)
        split = graphs.make_split(g, (), seed=0)
        assert split.train.size == 10
        assert split.val.size == 10
        assert split.test.size == 80

    def test_all_classes_ood_rejected(self):
        g = graphs.gen_planted_partition(3, 10, 0.4, 0.1, 4, 2.0, seed=5)
        with pytest.raises(ValueError):
            graphs.make_split(g, (0, 1, 2), seed=0)
        with pytest.raises(ValueError):
            graphs.make_split(g, (0, 1), seed=0)

    def test_deterministic(self):
        g = graphs.gen_planted_partition(4, 25, 0.3, 0.05, 4, 2.0, seed=6)
        a = graphs.make_split(g, (3,), seed=9)
        b = graphs.make_split(g, (3,), seed=9)
        for f in ("train", "val", "test", "ood_val", "ood_test"):
            assert np.array_equal(getattr(a, f), getattr(b, f))

    def test_partition_exact_and_disjoint(self):
        g = graphs.gen_planted_partition(4, 25, 0.3, 0.05, 4, 2.0, seed=6)
        split = graphs.make_split(g, (2, 3), seed=1)
        id_nodes = np.flatnonzero(~np.isin(g.labels, (2, 3)))
        combined = np.concatenate([split.train, split.val, split.test])
        assert np.array_equal(np.sort(combined), id_nodes)
        ood_nodes = np.flatnonzero(np.isin(g.labels, (2, 3)))
        assert np.array_equal(
            np.sort(np.concatenate([split.ood_val, split.ood_test])), ood_nodes)
        assert split.ood_val.size == int(round(0.2 * ood_nodes.size))

    def test_every_big_class_in_train(self):
        g = graphs.gen_planted_partition(5, 30, 0.3, 0.05, 4, 2.0, seed=6)
        for seed in range(20):
            split = graphs.make_split(g, (4,), seed=seed)
            train_classes = set(g.labels[split.train].tolist())
            assert train_classes >= {0, 1, 2, 3}

    def test_json_roundtrip(self):
        g = graphs.gen_planted_partition(3, 20, 0.3, 0.05, 4, 2.0, seed=6)
        split = graphs.make_split(g, (2,), seed=3)
        back = graphs.SplitSpec.from_json(split.to_json())
        assert back.id_classes == split.id_classes
        assert np.array_equal(back.train, split.train)
        assert np.array_equal(back.ood_test, split.ood_test)


class TestErdosRenyi:
    def test_zero_density(self):
        g = graphs.gen_erdos_renyi(50, 0.0, 4, seed=0)
        assert g.edge_count == 0

    def test_edge_count_within_binomial_bound(self):
        n, p = 2000, 0.005
        g = graphs.gen_erdos_renyi(n, p, 4, seed=13)
        total = n * (n - 1) / 2
        mean, sd = total * p, np.sqrt(total * p * (1 - p))
        assert abs(g.edge_count - mean) < 3 * sd

    def test_deterministic(self):
        a = graphs.gen_erdos_renyi(300, 0.01, 4, seed=5)
        b = graphs.gen_erdos_renyi(300, 0.01, 4, seed=5)
        assert np.array_equal(a.adjacency.indices, b.adjacency.indices)
        assert np.array_equal(a.features, b.features)

    def test_simple_graph_structure(self):
        g = graphs.gen_erdos_renyi(200, 0.05, 4, seed=5)
        dense = g.adjacency.to_dense()
        assert np.array_equal(dense, dense.T)
        assert np.all(np.diag(dense) == 0)
        assert set(np.unique(dense)) <= {0.0, 1.0}

    def test_pair_distribution_uniformity(self):
        # every pair should be hit with roughly equal frequency
        hits = np.zeros((40, 40))
        for seed in range(60):
            g = graphs.gen_erdos_renyi(40, 0.1, 2, seed=seed)
            hits += g.adjacency.to_dense()
        upper = hits[np.triu_indices(40, 1)]
        assert abs(upper.mean() - 6.0) < 0.5    # 60 draws * p = 6

    def test_labels_round_robin(self):
        g = graphs.gen_erdos_renyi(10, 0.1, 2, seed=1, class_count=3)
        assert np.array_equal(g.labels, np.arange(10) % 3)


class TestPlantedPartition:
    def test_no_cross_block_edges_when_p_out_zero(self):
        g = graphs.gen_planted_partition(3, 20, 0.3, 0.0, 4, 2.0, seed=3)
        dense = g.adjacency.to_dense()
        labels = g.labels
        cross = dense[labels[:, None] != labels[None, :]]
        assert cross.sum() == 0

    def test_zero_separation_means_no_feature_signal(self):
        g = graphs.gen_planted_partition(4, 200, 0.05, 0.01, 6, 0.0, seed=3)
        means = np.stack([g.features[g.labels == b].mean(axis=0)
                          for b in range(4)])
        # per-block means only differ by sampling noise ~ 1/sqrt(200)
        assert np.abs(means).max() < 4 / np.sqrt(200)

    def test_labels_are_blocks(self):
        g = graphs.gen_planted_partition(3, 5, 0.5, 0.1, 2, 1.0, seed=0)
        assert np.array_equal(g.labels, np.repeat([0, 1, 2], 5))

    def test_requires_p_in_greater(self):
        with pytest.raises(ValueError):
            graphs.gen_planted_partition(2, 5, 0.1, 0.2, 2, 1.0, seed=0)

    def test_separation_controls_mean_norm(self):
        g = graphs.gen_planted_partition(3, 400, 0.02, 0.01, 8, 3.0, seed=9)
        for b in range(3):
            mu = g.features[g.labels == b].mean(axis=0)
            assert np.linalg.norm(mu) == pytest.approx(3.0, abs=0.5)

    def test_ppm6_frozen_reference(self):
        a = graphs.gen_ppm6()
        b = graphs.gen_ppm6()
        assert a.n == 1200 and a.class_count == 6
        assert np.array_equal(a.adjacency.indices, b.adjacency.indices)
        assert np.array_equal(a.features, b.features)


def test_zscore_features_helper():
    g = graphs.gen_planted_partition(2, 30, 0.3, 0.1, 5, 2.0, seed=2)
    z = graphs.zscore_features(g)
    assert np.abs(z.features.mean(axis=0)).max() < 1e-9
    assert np.abs(z.features.std(axis=0) - 1).max() < 1e-9
    assert z.adjacency is g.adjacency
