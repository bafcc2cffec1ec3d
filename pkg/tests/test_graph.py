"""Attribute-graph construction: proximities, pools, dynamic sampling."""

import math

import numpy as np
import pytest

from attrgraphrec.graph import (
    AttributeGraph,
    GraphError,
    ProximityMatrix,
    attribute_proximity,
    build_candidate_pools,
    combine_proximities,
    cosine_distance,
    load_graph,
    preference_proximity,
    rating_rows,
    sample_neighbors,
    save_graph,
)
from attrgraphrec.seeding import rng_for


def cosine_distance_oracle(w, v):
    """Straight-line scalar reimplementation, independent of the library."""
    dot = sum(a * b for a, b in zip(w, v))
    nw = math.sqrt(sum(a * a for a in w))
    nv = math.sqrt(sum(a * a for a in v))
    if nw == 0 or nv == 0:
        return 1.0
    return 1.0 - dot / (nw * nv)


class TestCosineDistance:
    def test_identical_vectors_give_zero(self):
        v = np.array([1.0, 2.0, 3.0])
        assert cosine_distance(v, v) == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal_vectors_give_one(self):
        assert cosine_distance([1.0, 0.0], [0.0, 2.0]) == pytest.approx(1.0, abs=1e-12)

    def test_known_value(self):
        # 1 - 1/sqrt(2)
        assert cosine_distance([1.0, 0.0], [1.0, 1.0]) == pytest.approx(0.2928932188134524, abs=1e-12)

    def test_zero_vector_is_neutral(self):
        assert cosine_distance([0.0, 0.0], [1.0, 2.0]) == 1.0

    def test_scale_invariance(self):
        rng = rng_for(0, "scale-inv")
        for _ in range(50):
            w = rng.uniform(-2, 2, size=6)
            v = rng.uniform(-2, 2, size=6)
            alpha = rng.uniform(0.01, 100.0)
            assert cosine_distance(alpha * w, v) == pytest.approx(cosine_distance(w, v), abs=1e-10)

    def test_opposite_vectors_give_two(self):
        assert cosine_distance([1.0, 1.0], [-1.0, -1.0]) == pytest.approx(2.0, abs=1e-12)


class TestProximityMatrices:
    def test_identical_rating_rows_give_zero(self):
        rows = np.array([[5.0, 3.0, 0.0], [5.0, 3.0, 0.0]])
        dist, avail = preference_proximity(rows)
        assert dist[0, 1] == pytest.approx(0.0, abs=1e-12)
        assert avail.all()

    def test_cold_node_flagged_unavailable(self):
        rows = np.array([[5.0, 3.0], [0.0, 0.0]])
        _, avail = preference_proximity(rows)
        assert avail.tolist() == [True, False]

    def test_three_user_toy_matches_brute_force(self):
        rows = np.array([[5.0, 0.0, 3.0, 1.0],
                         [4.0, 2.0, 0.0, 1.0],
                         [0.0, 5.0, 4.0, 0.0]])
        dist, _ = preference_proximity(rows)
        for i in range(3):
            for j in range(3):
                want = 0.0 if i == j else cosine_distance_oracle(rows[i], rows[j])
                assert dist[i, j] == pytest.approx(want, abs=1e-12)

    def test_attribute_proximity_identical_and_disjoint(self):
        rows = np.array([[1.0, 1.0, 0.0],
                         [1.0, 1.0, 0.0],
                         [0.0, 0.0, 1.0]])
        dist = attribute_proximity(rows)
        assert dist[0, 1] == pytest.approx(0.0, abs=1e-12)
        assert dist[0, 2] == pytest.approx(1.0, abs=1e-12)

    def test_four_node_attribute_toy_matches_brute_force(self):
        rng = rng_for(1, "attr-toy")
        rows = (rng.uniform(size=(4, 6)) < 0.4).astype(float)
        dist = attribute_proximity(rows)
        for i in range(4):
            for j in range(4):
                want = 0.0 if i == j else cosine_distance_oracle(rows[i], rows[j])
                assert dist[i, j] == pytest.approx(want, abs=1e-12)


class TestCombineProximities:
    def test_all_equal_distances_degenerate_to_similarity_two(self):
        pref = np.full((3, 3), 0.4)
        attr = np.full((3, 3), 0.7)
        np.fill_diagonal(pref, 0.0)
        np.fill_diagonal(attr, 0.0)
        prox = combine_proximities(pref, attr, np.array([True] * 3))
        off = ~np.eye(3, dtype=bool)
        np.testing.assert_allclose(prox.sim[off], 2.0)

    def test_three_node_hand_computed(self):
        pref = np.array([[0.0, 0.2, 0.6], [0.2, 0.0, 0.4], [0.6, 0.4, 0.0]])
        attr = np.array([[0.0, 0.1, 0.5], [0.1, 0.0, 0.3], [0.5, 0.3, 0.0]])
        prox = combine_proximities(pref, attr, np.array([True] * 3))
        # min-max over off-diagonal: pref {.2,.4,.6} -> {0,.5,1}; attr likewise
        assert prox.sim[0, 1] == pytest.approx(2.0)
        assert prox.sim[1, 2] == pytest.approx(1.0)
        assert prox.sim[0, 2] == pytest.approx(0.0)
        assert not prox.pref_missing.any()

    def test_cold_pair_uses_attribute_term_only(self):
        pref = np.array([[0.0, 0.2, 1.0], [0.2, 0.0, 1.0], [1.0, 1.0, 0.0]])
        attr = np.array([[0.0, 0.1, 0.5], [0.1, 0.0, 0.3], [0.5, 0.3, 0.0]])
        avail = np.array([True, True, False])
        prox = combine_proximities(pref, attr, avail)
        attr_norm = (attr - 0.1) / 0.4
        assert prox.pref_missing[0, 2] and prox.pref_missing[1, 2]
        assert not prox.pref_missing[0, 1]
        assert prox.sim[0, 2] == pytest.approx(2.0 * (1.0 - attr_norm[0, 2]))
        assert prox.sim[1, 2] == pytest.approx(2.0 * (1.0 - attr_norm[1, 2]))
        # the only available pref pair normalizes degenerately to 0
        assert prox.sim[0, 1] == pytest.approx(1.0 + (1.0 - attr_norm[0, 1]))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(GraphError):
            combine_proximities(np.zeros((2, 2)), np.zeros((3, 3)), np.array([True, True]))


def random_prox(n, seed):
    rng = rng_for(seed, "prox")
    sim = rng.uniform(0.0, 2.0, size=(n, n))
    sim = (sim + sim.T) / 2
    np.fill_diagonal(sim, 0.0)
    return ProximityMatrix(sim=sim, pref_missing=np.zeros((n, n), dtype=bool))


class TestCandidatePools:
    def test_full_percent_pool_is_everyone_else(self):
        g = build_candidate_pools(random_prox(7, 0), 100.0)
        for u in range(7):
            assert sorted(g.pool_ids[u].tolist()) == [v for v in range(7) if v != u]

    def test_pool_size_formula_at_ml_scale(self):
        g = build_candidate_pools(random_prox(943, 1), 5.0)
        assert all(len(ids) == 48 for ids in g.pool_ids)  # ceil(0.05 * 942)

    def test_pool_size_is_ceiling(self):
        g = build_candidate_pools(random_prox(11, 2), 25.0)
        assert all(len(ids) == math.ceil(0.25 * 10) for ids in g.pool_ids)

    def test_pools_hold_highest_similarity_nodes(self):
        prox = random_prox(30, 3)
        g = build_candidate_pools(prox, 20.0)
        for u in range(30):
            sim_u = prox.sim[u].copy()
            sim_u[u] = -1.0
            top = set(np.argsort(-sim_u)[: len(g.pool_ids[u])].tolist())
            assert set(g.pool_ids[u].tolist()) == top

    def test_ties_break_by_ascending_id(self):
        sim = np.ones((5, 5))
        np.fill_diagonal(sim, 0.0)
        prox = ProximityMatrix(sim=sim, pref_missing=np.zeros((5, 5), dtype=bool))
        g = build_candidate_pools(prox, 40.0)  # pool size ceil(0.4*4) = 2
        assert g.pool_ids[0].tolist() == [1, 2]
        assert g.pool_ids[3].tolist() == [0, 1]

    def test_rank_based_selection_invariant_under_monotone_transform(self):
        prox = random_prox(25, 4)
        g1 = build_candidate_pools(prox, 30.0)
        warped = ProximityMatrix(sim=np.exp(prox.sim) - 0.5, pref_missing=prox.pref_missing)
        g2 = build_candidate_pools(warped, 30.0)
        for a, b in zip(g1.pool_ids, g2.pool_ids):
            np.testing.assert_array_equal(a, b)

    def test_pool_weight_is_similarity(self):
        prox = random_prox(10, 5)
        g = build_candidate_pools(prox, 50.0)
        for u in range(10):
            np.testing.assert_allclose(g.pool_weights[u], prox.sim[u, g.pool_ids[u]])

    def test_too_few_nodes_rejected(self):
        with pytest.raises(GraphError):
            build_candidate_pools(random_prox(1, 6), 10.0)

    def test_bad_percent_rejected(self):
        for bad in (0.0, -5.0, 101.0):
            with pytest.raises(GraphError):
                build_candidate_pools(random_prox(5, 7), bad)


class TestSampling:
    def test_k_at_least_pool_returns_whole_pool(self):
        g = build_candidate_pools(random_prox(8, 0), 50.0)
        got = sample_neighbors(g, 100, rng_for(0, "s"))
        for u in range(8):
            np.testing.assert_array_equal(got[u], np.sort(g.pool_ids[u]))

    def test_same_seed_identical_sample(self):
        g = build_candidate_pools(random_prox(40, 1), 25.0)
        a = sample_neighbors(g, 3, rng_for(5, "epoch", 2))
        b = sample_neighbors(g, 3, rng_for(5, "epoch", 2))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_resampling_differs_across_epochs(self):
        g = build_candidate_pools(random_prox(40, 1), 50.0)
        a = sample_neighbors(g, 3, rng_for(5, "epoch", 1))
        b = sample_neighbors(g, 3, rng_for(5, "epoch", 2))
        assert any(x.tolist() != y.tolist() for x, y in zip(a, b))

    def test_no_self_loops_or_duplicates(self):
        g = build_candidate_pools(random_prox(30, 2), 40.0)
        got = sample_neighbors(g, 5, rng_for(9, "s"))
        for u, nbrs in enumerate(got):
            lst = nbrs.tolist()
            assert u not in lst
            assert len(lst) == len(set(lst))

    def test_weighted_frequency_three_to_one(self):
        g = AttributeGraph(pool_ids=[np.array([1, 2])],
                           pool_weights=[np.array([3.0, 1.0])],
                           pool_percent=100.0)
        rng = rng_for(123, "freq")
        hits = sum(sample_neighbors(g, 1, rng)[0][0] == 1 for _ in range(10000))
        assert hits / 10000 == pytest.approx(0.75, abs=0.02)

    def test_empty_pool_gives_empty_sample(self):
        g = AttributeGraph(pool_ids=[np.empty(0, dtype=np.int64)],
                           pool_weights=[np.empty(0)], pool_percent=1.0)
        assert sample_neighbors(g, 4, rng_for(0, "s"))[0].size == 0

    def test_bad_k_rejected(self):
        g = build_candidate_pools(random_prox(5, 3), 50.0)
        with pytest.raises(GraphError):
            sample_neighbors(g, 0, rng_for(0, "s"))


class TestGraphRoundTrip:
    def test_json_roundtrip(self, tmp_path):
        g = build_candidate_pools(random_prox(12, 8), 30.0)
        p = tmp_path / "graph.json"
        save_graph(g, p)
        back = load_graph(p)
        assert back.pool_percent == g.pool_percent
        for a, b in zip(g.pool_ids, back.pool_ids):
            np.testing.assert_array_equal(a, b)
        for a, b in zip(g.pool_weights, back.pool_weights):
            np.testing.assert_array_equal(a, b)

    def test_rewrite_byte_identical(self, tmp_path):
        g = build_candidate_pools(random_prox(12, 8), 30.0)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_graph(g, p1)
        save_graph(load_graph(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestRatingRows:
    def test_user_and_item_axes(self):
        triples = [(0, 1, 4.0), (1, 0, 2.0), (1, 1, 5.0)]
        u = rating_rows(triples, 2, 2, "user")
        np.testing.assert_array_equal(u, [[0.0, 4.0], [2.0, 5.0]])
        i = rating_rows(triples, 2, 2, "item")
        np.testing.assert_array_equal(i, [[0.0, 2.0], [4.0, 5.0]])
