import numpy as np
import pytest

from sagediff.grouping import (SimilarityGraph, brute_force_cliques, build_graph,
                               cosine, cosine_matrix, enumerate_cliques,
                               greedy_partition, read_groups, write_groups)
from sagediff.numerics import Rng


# ---------------------------------------------------------------------------
# cosine


def test_cosine_identical_vectors():
    v = np.array([0.3, -0.4, 1.2])
    assert cosine(v, v) == pytest.approx(1.0, abs=1e-12)


def test_cosine_orthogonal_vectors():
    assert cosine(np.array([1.0, 0.0]), np.array([0.0, 2.0])) == 0.0


def test_cosine_forty_five_degrees():
    a = np.array([1.0, 1.0]) / np.sqrt(2.0)
    b = np.array([1.0, 0.0])
    assert cosine(a, b) == pytest.approx(0.7071, abs=1e-4)
    assert abs(cosine(a, b) - np.sqrt(0.5)) <= 1e-9


def test_cosine_rejects_zero_vector():
    with pytest.raises(ValueError):
        cosine(np.zeros(3), np.ones(3))


# ---------------------------------------------------------------------------
# build_graph


def _graph_from_adjacency(adj):
    adj = np.array(adj, dtype=bool)
    return SimilarityGraph(np.eye(adj.shape[0]), adj, 0.0, 1.0)


def test_identical_embeddings_excluded_by_open_window():
    e = np.tile(np.array([1.0, 0.0]), (4, 1))
    graph = build_graph(e, 0.6, 0.9)
    assert not graph.adjacency.any()


def test_window_admits_intermediate_similarity():
    a = np.array([1.0, 0.0])
    theta = np.arccos(0.75)
    b = np.array([np.cos(theta), np.sin(theta)])
    graph = build_graph(np.stack([a, b]), 0.6, 0.9)
    assert graph.adjacency[0, 1] and graph.adjacency[1, 0]
    assert graph.adjacency.sum() == 2


def test_everything_below_window_gives_empty_graph():
    e = np.eye(5)  # pairwise cosine 0
    graph = build_graph(e, 0.6, 0.9)
    assert not graph.adjacency.any()


def test_adjacency_symmetric_irreflexive():
    rng = Rng(3, 0)
    e = rng.gaussian(40).reshape(10, 4)
    graph = build_graph(e, 0.2, 0.8)
    assert np.array_equal(graph.adjacency, graph.adjacency.T)
    assert not graph.adjacency.diagonal().any()


def test_graph_window_must_be_ordered():
    with pytest.raises(ValueError):
        build_graph(np.eye(3), 0.9, 0.6)


# ---------------------------------------------------------------------------
# enumerate_cliques


def test_triangle_yields_all_four_cliques():
    graph = _graph_from_adjacency([[0, 1, 1], [1, 0, 1], [1, 1, 0]])
    cliques = [g.member_ids for g in enumerate_cliques(graph, 2, 5)]
    assert cliques == [(0, 1), (0, 1, 2), (0, 2), (1, 2)]
    assert sorted(cliques) == brute_force_cliques(graph, 2, 5)


def test_edgeless_graph_has_no_cliques():
    graph = _graph_from_adjacency(np.zeros((4, 4)))
    assert enumerate_cliques(graph, 2, 5) == []


def test_complete_k6_count_with_size_cap():
    graph = _graph_from_adjacency(1 - np.eye(6))
    cliques = enumerate_cliques(graph, 2, 5)
    # C(6,2) + C(6,3) + C(6,4) + C(6,5) = 15 + 20 + 15 + 6
    assert len(cliques) == 56
    assert max(g.size for g in cliques) == 5


def test_matches_brute_force_on_random_graphs():
    rng = Rng(17, 0)
    for trial in range(100):
        n = 4 + trial % 9  # up to 12 nodes
        p = 0.15 + 0.6 * rng.uniform()
        adj = np.zeros((n, n), dtype=bool)
        for i in range(n):
            for j in range(i + 1, n):
                adj[i, j] = adj[j, i] = rng.uniform() < p
        graph = _graph_from_adjacency(adj)
        ours = sorted(g.member_ids for g in enumerate_cliques(graph, 2, 5))
        assert ours == brute_force_cliques(graph, 2, 5), f"trial {trial}"


def test_output_is_lexicographic_and_cap_is_a_prefix():
    graph = _graph_from_adjacency(1 - np.eye(6))
    full = [g.member_ids for g in enumerate_cliques(graph, 2, 5)]
    assert full == sorted(full)
    capped = [g.member_ids for g in enumerate_cliques(graph, 2, 5, cap=10)]
    assert capped == full[:10]


def test_clique_members_expose_centroid():
    e = np.stack([np.array([1.0, 0.0]), np.array([0.8, 0.6])])
    graph = build_graph(e, 0.5, 0.9)
    (group,) = enumerate_cliques(graph, 2, 5)
    assert np.array_equal(group.centroid, e.mean(axis=0))


# ---------------------------------------------------------------------------
# greedy_partition


def test_dissimilar_prompts_stay_singletons():
    e = np.eye(4)
    groups = greedy_partition(e, threshold=0.5)
    assert [g.member_ids for g in groups] == [(0,), (1,), (2,), (3,)]


def test_identical_prompts_share_one_group():
    e = np.tile(np.array([0.6, 0.8]), (7, 1))
    groups = greedy_partition(e, threshold=0.9)
    assert len(groups) == 1 and groups[0].size == 7


def test_first_fit_order_dependence_documented_case():
    # sim(A,B) = sim(A,C) = 0.9, sim(B,C) = 0.4: C cannot join {A, B}.
    def unit(angle):
        return np.array([np.cos(angle), np.sin(angle)])

    a = unit(0.0)
    b = unit(np.arccos(0.9))
    c = unit(-np.arccos(0.9))
    assert cosine(b, c) < 0.8
    groups = greedy_partition(np.stack([a, b, c]), threshold=0.8)
    assert [g.member_ids for g in groups] == [(0, 1), (2,)]


def test_partition_covers_and_respects_threshold():
    rng = Rng(23, 0)
    for _ in range(20):
        e = rng.gaussian(15 * 6).reshape(15, 6)
        threshold = -0.2 + 0.9 * rng.uniform()
        groups = greedy_partition(e, threshold)
        seen = sorted(i for g in groups for i in g.member_ids)
        assert seen == list(range(15))
        sims = cosine_matrix(e)
        for g in groups:
            for i, a in enumerate(g.member_ids):
                for b in g.member_ids[i + 1:]:
                    assert sims[a, b] >= threshold


def test_partition_max_size_cap():
    e = np.tile(np.array([1.0, 0.0]), (5, 1))
    groups = greedy_partition(e, threshold=0.5, max_size=2)
    assert [g.size for g in groups] == [2, 2, 1]


def test_partition_deterministic_for_fixed_order():
    e = Rng(5, 0).gaussian(12 * 4).reshape(12, 4)
    a = [g.member_ids for g in greedy_partition(e, 0.3)]
    b = [g.member_ids for g in greedy_partition(e, 0.3)]
    assert a == b


def test_threshold_domain():
    with pytest.raises(ValueError):
        greedy_partition(np.eye(2), threshold=1.0)


# ---------------------------------------------------------------------------
# groups file


def test_groups_file_round_trip(tmp_path):
    path = tmp_path / "groups.txt"
    members = [(0, 2, 5), (1, 3)]
    provenance = {"tau_min": 0.6, "tau_max": 0.9, "threshold": 0.6, "n": 2}
    write_groups(path, members, provenance)
    loaded, header = read_groups(path)
    assert loaded == members
    assert header == provenance
    assert path.read_text().startswith("# {")
