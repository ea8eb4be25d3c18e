import math

import numpy as np
import pytest

from paradock.errors import ConfigError, NoContacts
from paradock.graphs import (
    GraphConfig,
    build_graph,
    extract_pockets,
    positional_embedding,
    rbf_expand,
    track_pockets,
)
from paradock.geometry import RigidTransform, random_transform
from paradock.pdbio import ProteinStructure

from conftest import random_points


def graph_from_points(pts, **cfg_kwargs):
    cfg = GraphConfig(**cfg_kwargs) if cfg_kwargs else GraphConfig()
    return build_graph(ProteinStructure.from_arrays(pts), cfg)


class TestPositionalEmbedding:
    def test_zero_index_is_zero_vector(self):
        assert np.array_equal(positional_embedding(0, 64), np.zeros(64))

    def test_printed_formula_values(self):
        out = positional_embedding(2, 4)
        assert abs(out[0] - 1.682942) < 1e-6
        assert abs(out[1] - 1.080605) < 1e-6
        # full scalar oracle: pairs are [i sin(w_d), i cos(w_d)]
        for d in range(2):
            w = 10000.0 ** (-2.0 * d / 4.0)
            assert abs(out[2 * d] - 2.0 * math.sin(w)) < 1e-15
            assert abs(out[2 * d + 1] - 2.0 * math.cos(w)) < 1e-15

    def test_linear_in_index(self):
        assert np.array_equal(positional_embedding(3, 16),
                              3.0 * positional_embedding(1, 16))

    def test_odd_width_rejected(self):
        with pytest.raises(ConfigError):
            positional_embedding(1, 5)

    def test_negative_index_rejected(self):
        with pytest.raises(ConfigError):
            positional_embedding(-1, 4)


class TestRbfExpand:
    def test_center_hit_is_one(self):
        cfg = GraphConfig()
        centers = np.linspace(0.0, cfg.rbf_span, cfg.rbf_size)
        out = rbf_expand(centers[3], cfg)
        assert out[3] == 1.0

    def test_zero_distance_first_entry_maximal(self):
        out = rbf_expand(0.0, GraphConfig())
        assert out[0] == out.max()
        assert np.all(np.diff(out) < 0)

    def test_scalar_oracle(self, rng):
        cfg = GraphConfig()
        centers = np.linspace(0.0, cfg.rbf_span, cfg.rbf_size)
        for d in rng.uniform(0.0, 25.0, size=10):
            out = rbf_expand(d, cfg)
            expect = np.array(
                [math.exp(-0.5 * ((d - c) / cfg.radial_cut) ** 2) for c in centers]
            )
            assert np.abs(out - expect).max() < 1e-15
            assert np.all(out > 0.0) and np.all(out <= 1.0)


class TestKnn:
    def test_collinear_fixture(self):
        pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0], [10.0, 0, 0]])
        g = graph_from_points(pts, k=2)
        assert set(g.neighbors[0]) == {1, 2}
        assert list(g.neighbors[0]) == [1, 2]  # nearest first

    def test_large_k_gives_full_connectivity(self, rng):
        pts = random_points(rng, 6)
        g = graph_from_points(pts, k=50)
        assert g.neighbors.shape == (6, 5)
        for i in range(6):
            assert set(g.neighbors[i]) == set(range(6)) - {i}

    def test_matches_brute_force(self, rng):
        for n in (5, 37, 200):
            pts = random_points(rng, n, scale=15.0)
            g = graph_from_points(pts, k=10)
            n_nbr = min(10, n - 1)
            for i in range(n):
                dists = np.linalg.norm(pts - pts[i], axis=1)
                order = sorted((d, j) for j, d in enumerate(dists) if j != i)
                expect = [j for _, j in order[:n_nbr]]
                assert list(g.neighbors[i]) == expect

    def test_ties_break_toward_lower_index(self):
        pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [-1.0, 0, 0], [0.0, 1.0, 0]])
        g = graph_from_points(pts, k=2)
        # nodes 1, 2, 3 all sit at distance 1 from node 0
        assert list(g.neighbors[0]) == [1, 2]

    def test_duplicate_coordinates_allowed(self):
        pts = np.array([[0.0, 0, 0], [0.0, 0, 0], [5.0, 0, 0]])
        g = graph_from_points(pts, k=1)
        assert list(g.neighbors[0]) == [1]
        assert list(g.neighbors[1]) == [0]

    def test_single_node_graph(self):
        g = graph_from_points(np.zeros((1, 3)))
        assert g.neighbors.shape == (1, 0)
        assert g.edge_features.shape == (1, 0, GraphConfig().edge_dim)


class TestResultantFeature:
    COL = GraphConfig().rbf_size  # first force column in the edge features

    def test_two_body_antiparallel(self):
        g = graph_from_points(np.array([[0.0, 0, 0], [3.8, 0, 0]]), k=1)
        for alpha_idx in range(3):
            assert abs(g.edge_features[0, 0, self.COL + alpha_idx] - (-1.0)) < 1e-12
            assert abs(g.edge_features[1, 0, self.COL + alpha_idx] - (-1.0)) < 1e-12

    def test_four_node_brute_force(self, rng):
        pts = random_points(rng, 4, scale=5.0)
        cfg = GraphConfig(k=3)
        g = build_graph(ProteinStructure.from_arrays(pts), cfg)
        for a_i, alpha in enumerate(cfg.force_orders):
            res = np.zeros((4, 3))
            for i in range(4):
                acc = np.zeros(3)
                for j in g.neighbors[i]:
                    s = pts[i] - pts[j]
                    acc += np.linalg.norm(s) ** (-(alpha + 1)) * s
                res[i] = acc / np.linalg.norm(acc)
            for i in range(4):
                for slot, j in enumerate(g.neighbors[i]):
                    expect = float(res[i] @ res[j])
                    got = g.edge_features[i, slot, self.COL + a_i]
                    assert abs(got - expect) < 1e-12

    def test_bounded_by_one(self, rng):
        g = graph_from_points(random_points(rng, 30), k=10)
        f = g.edge_features[:, :, self.COL:self.COL + 3]
        assert np.abs(f).max() <= 1.0 + 1e-12

    def test_zero_resultant_sentinel(self):
        # the middle node's weighted offsets cancel exactly
        pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])
        g = graph_from_points(pts, k=2)
        mid_rows = g.edge_features[1, :, self.COL:self.COL + 3]
        assert np.array_equal(mid_rows, np.zeros_like(mid_rows))


class TestEdgeLayout:
    def test_last_column_is_distance(self, rng):
        pts = random_points(rng, 8)
        g = graph_from_points(pts, k=3)
        for i in range(8):
            for slot, j in enumerate(g.neighbors[i]):
                d = np.linalg.norm(pts[i] - pts[j])
                assert abs(g.edge_features[i, slot, -1] - d) < 1e-12

    def test_edge_dim(self):
        cfg = GraphConfig()
        assert cfg.edge_dim == 24
        g = graph_from_points(np.eye(3) * 4.0, k=2)
        assert g.edge_features.shape[-1] == 24

    def test_rbf_block_matches_direct_expansion(self, rng):
        pts = random_points(rng, 6)
        cfg = GraphConfig(k=2)
        g = build_graph(ProteinStructure.from_arrays(pts), cfg)
        for i in range(6):
            for slot, j in enumerate(g.neighbors[i]):
                d = np.linalg.norm(pts[i] - pts[j])
                assert np.abs(
                    g.edge_features[i, slot, : cfg.rbf_size] - rbf_expand(d, cfg)
                ).max() < 1e-12


class TestRigidInvariance:
    def test_features_invariant_under_motion(self, rng):
        pts = random_points(rng, 25)
        base = graph_from_points(pts)
        for _ in range(20):
            t = random_transform(rng)
            moved = t.apply(pts).numpy()
            g = graph_from_points(moved)
            assert np.array_equal(g.neighbors, base.neighbors)
            assert np.array_equal(g.node_features, base.node_features)
            assert np.abs(g.edge_features - base.edge_features).max() < 1e-9

    def test_chain_positions_restart_per_chain(self):
        text_pts = np.arange(12, dtype=np.float64).reshape(4, 3) * 4.0
        s1 = ProteinStructure.from_arrays(text_pts[:2], chain_id="A")
        s2 = ProteinStructure.from_arrays(text_pts[2:], chain_id="B")
        merged = ProteinStructure(s1.chains + s2.chains)
        g = build_graph(merged)
        assert np.array_equal(g.node_features[0], g.node_features[2])
        assert np.array_equal(g.node_features[1], g.node_features[3])


class TestExtractPockets:
    def test_single_pair_midpoint(self):
        p = extract_pockets(np.array([[0.0, 0, 0]]), np.array([[7.0, 0, 0]]))
        assert p.size == 1
        assert np.array_equal(p.midpoints, [[3.5, 0.0, 0.0]])
        assert list(p.ligand_indices) == [0]
        assert list(p.receptor_indices) == [0]

    def test_nine_angstrom_gap_raises(self):
        with pytest.raises(NoContacts):
            extract_pockets(np.array([[0.0, 0, 0]]), np.array([[9.0, 0, 0]]))

    def test_threshold_is_strict(self):
        with pytest.raises(NoContacts):
            extract_pockets(np.array([[0.0, 0, 0]]), np.array([[8.0, 0, 0]]))

    def test_brute_force_oracle(self, rng):
        lig = random_points(rng, 5, scale=6.0)
        rec = random_points(rng, 5, scale=6.0)
        p = extract_pockets(lig, rec)
        expect = []
        for i in range(5):
            for j in range(5):
                if np.linalg.norm(lig[i] - rec[j]) < 8.0:
                    expect.append((i, j))
        assert expect, "fixture must produce contacts"
        got = list(zip(p.ligand_indices.tolist(), p.receptor_indices.tolist()))
        assert got == expect
        for k, (i, j) in enumerate(expect):
            assert np.abs(p.midpoints[k] - 0.5 * (lig[i] + rec[j])).max() < 1e-15

    def test_symmetry_under_swap(self, rng):
        lig = random_points(rng, 6, scale=5.0)
        rec = random_points(rng, 4, scale=5.0)
        fwd = extract_pockets(lig, rec)
        bwd = extract_pockets(rec, lig)
        fwd_pairs = set(zip(fwd.ligand_indices.tolist(), fwd.receptor_indices.tolist()))
        bwd_pairs = set(zip(bwd.receptor_indices.tolist(), bwd.ligand_indices.tolist()))
        assert fwd_pairs == bwd_pairs


class TestTrackPockets:
    def pockets(self, rng):
        lig = random_points(rng, 5, scale=4.0)
        rec = random_points(rng, 5, scale=4.0)
        return extract_pockets(lig, rec)

    def test_identity_unchanged(self, rng):
        p = self.pockets(rng)
        out = track_pockets(p, RigidTransform.identity(), "ligand")
        assert np.array_equal(out.midpoints, p.midpoints)
        assert np.array_equal(out.ligand_indices, p.ligand_indices)

    def test_round_trip(self, rng):
        p = self.pockets(rng)
        t = random_transform(rng)
        back = track_pockets(track_pockets(p, t, "ligand"), t.inverse(), "ligand")
        assert np.abs(back.midpoints - p.midpoints).max() < 1e-12

    def test_pointwise_oracle(self, rng):
        p = self.pockets(rng)
        t = random_transform(rng)
        out = track_pockets(p, t, "receptor")
        q, tr = t.numpy()
        for k in range(p.size):
            assert np.abs(out.midpoints[k] - (q @ p.midpoints[k] + tr)).max() < 1e-12

    def test_bad_side_rejected(self, rng):
        with pytest.raises(ConfigError):
            track_pockets(self.pockets(rng), RigidTransform.identity(), "both")


class TestGraphConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            GraphConfig(k=0)
        with pytest.raises(ConfigError):
            GraphConfig(rbf_size=0)
        with pytest.raises(ConfigError):
            GraphConfig(radial_cut=0.0)
        with pytest.raises(ConfigError):
            GraphConfig(pos_dim=63)

    def test_force_orders_coerced_to_tuple(self):
        cfg = GraphConfig(force_orders=[2, 3])
        assert cfg.force_orders == (2, 3)
        assert cfg.edge_dim == cfg.rbf_size + 3
