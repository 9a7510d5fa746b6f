from __future__ import annotations

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurofuse.errors import NumericalError, ValidationError
from neurofuse.netmetrics import (
    assortativity,
    betweenness,
    clustering_transitivity,
    community_partition,
    compare_networks,
    compute_metrics,
    degree_density,
    eigenvector_centrality,
    find_hubs,
    largest_component,
    modularity,
    participation_coefficient,
    path_efficiency,
    rewire_degree_preserving,
    small_world_norms,
)

from oracles import (
    assortativity_pairs,
    betweenness_exhaustive,
    clustering_triples,
    efficiency_and_length,
    eigenvector_dense,
    modularity_direct,
    participation_direct,
    random_graph,
)


def _from_edges(n, edges):
    a = np.zeros((n, n), bool)
    for i, j in edges:
        a[i, j] = a[j, i] = True
    return a


def _path(n):
    return _from_edges(n, [(i, i + 1) for i in range(n - 1)])


def _star(leaves):
    return _from_edges(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


def _complete(n):
    return ~np.eye(n, dtype=bool)


def _atlas_graphs():
    for g in nx.graph_atlas_g()[1:]:
        if g.number_of_nodes() >= 2:
            yield nx.to_numpy_array(g, nodelist=sorted(g.nodes)).astype(bool)


def _random_graphs():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        yield random_graph(rng, 12, rng.uniform(0.1, 0.6))


def _suite():
    return list(_atlas_graphs()) + list(_random_graphs())


# ---------------------------------------------------------------- hand values


def test_density_anchors():
    _, avg, dens = degree_density(_complete(5))
    assert (avg, dens) == (4.0, 1.0)
    _, avg, dens = degree_density(np.zeros((4, 4), bool))
    assert (avg, dens) == (0.0, 0.0)


def test_density_needs_two_nodes():
    with pytest.raises(ValidationError):
        degree_density(np.zeros((1, 1), bool))


def test_path_and_star_betweenness():
    assert betweenness(_path(3)).tolist() == [0.0, 1.0, 0.0]
    assert betweenness(_star(4)).tolist() == [6.0, 0.0, 0.0, 0.0, 0.0]
    assert betweenness(_star(4), normalized=True)[0] == pytest.approx(1.0)


def test_triangle_and_path_clustering():
    c, t = clustering_transitivity(_complete(3))
    assert c.tolist() == [1.0, 1.0, 1.0] and t == 1.0
    c, t = clustering_transitivity(_path(3))
    assert c.tolist() == [0.0, 0.0, 0.0] and t == 0.0


def test_path3_efficiency_and_length():
    length, eff = path_efficiency(_path(3))
    assert length == pytest.approx(4 / 3)
    assert eff == pytest.approx(5 / 6)


def test_complete_graph_values():
    k4 = _complete(4)
    length, eff = path_efficiency(k4)
    assert (length, eff) == (1.0, 1.0)
    assert clustering_transitivity(k4)[1] == 1.0
    np.testing.assert_allclose(eigenvector_centrality(k4), 0.5)


def test_edgeless_graph_path_length_is_nan():
    length, eff = path_efficiency(np.zeros((3, 3), bool))
    assert np.isnan(length) and eff == 0.0


def test_assortativity_hand_values():
    assert assortativity(_star(4)) == pytest.approx(-1.0)
    assert assortativity(_path(4)) == pytest.approx(-0.5)
    with pytest.raises(NumericalError):
        assortativity(_from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)]))


def test_two_triangles_partition():
    a = _from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])
    part = community_partition(a, seed=0)
    assert part.modules.tolist() == [0, 0, 0, 1, 1, 1]
    assert part.modularity == pytest.approx(0.5)


def test_participation_hand_values():
    a = _star(2)  # centre 0 with leaves 1 and 2
    assert participation_coefficient(a, [0, 0, 0]).tolist() == [0.0, 0.0, 0.0]
    assert participation_coefficient(a, [0, 0, 1])[0] == pytest.approx(0.5)


def test_bad_input_rejected():
    with pytest.raises(ValidationError):
        betweenness(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValidationError):
        betweenness(np.eye(2))


# ---------------------------------------------------------------- oracle suite


def test_betweenness_matches_exhaustive_paths():
    for a in _suite():
        np.testing.assert_allclose(betweenness(a), betweenness_exhaustive(a), atol=1e-9)


def test_clustering_matches_triples():
    for a in _suite():
        c, t = clustering_transitivity(a)
        c_ref, t_ref = clustering_triples(a)
        np.testing.assert_allclose(c, c_ref, atol=1e-12)
        assert t == pytest.approx(t_ref, abs=1e-12)


def test_efficiency_and_length_match_bfs():
    for a in _suite():
        length, eff = path_efficiency(a)
        eff_ref, length_ref = efficiency_and_length(a)
        assert eff == pytest.approx(eff_ref, abs=1e-12)
        if np.isnan(length_ref):
            assert np.isnan(length)
        else:
            assert length == pytest.approx(length_ref, abs=1e-12)


def test_assortativity_matches_pairs():
    for a in _suite():
        ref = assortativity_pairs(a)
        if np.isnan(ref):
            with pytest.raises((ValidationError, NumericalError)):
                assortativity(a)
        else:
            assert assortativity(a) == pytest.approx(ref, abs=1e-9)


def test_eigenvector_matches_dense_solver():
    for a in _suite():
        if not a.any():
            continue
        comp = largest_component(a)
        if comp.size < 2:
            continue
        vals = np.linalg.eigvalsh(a[np.ix_(comp, comp)].astype(float))
        if vals[-1] - vals[-2] < 1e-6:
            continue  # principal vector not unique within the component
        x = eigenvector_centrality(a)
        np.testing.assert_allclose(x[comp], eigenvector_dense(a, comp), atol=1e-8)
        mask = np.ones(a.shape[0], bool)
        mask[comp] = False
        assert not x[mask].any()


def test_modularity_and_participation_match_direct_sums():
    rng = np.random.default_rng(7)
    for a in _suite():
        modules = rng.integers(0, 3, a.shape[0])
        assert modularity(a, modules) == pytest.approx(modularity_direct(a, modules), abs=1e-12)
        np.testing.assert_allclose(participation_coefficient(a, modules), participation_direct(a, modules), atol=1e-12)


def test_louvain_beats_singletons():
    for a in _random_graphs():
        part = community_partition(a, seed=0)
        assert part.modularity >= modularity(a, np.arange(a.shape[0])) - 1e-12
        assert part.modularity == pytest.approx(modularity_direct(a, part.modules), abs=1e-12)


# ---------------------------------------------------------------- properties


@settings(max_examples=40, deadline=None)
@given(st.integers(4, 12), st.floats(0.1, 0.8), st.integers(0, 10_000))
def test_relabel_invariance(n, p, seed):
    rng = np.random.default_rng(seed)
    a = random_graph(rng, n, p)
    perm = rng.permutation(n)
    b = np.empty_like(a)
    b[np.ix_(perm, perm)] = a
    np.testing.assert_allclose(betweenness(b)[perm], betweenness(a), atol=1e-9)
    np.testing.assert_allclose(clustering_transitivity(b)[0][perm], clustering_transitivity(a)[0], atol=1e-12)
    assert path_efficiency(b)[1] == pytest.approx(path_efficiency(a)[1])


@settings(max_examples=40, deadline=None)
@given(st.integers(5, 15), st.floats(0.2, 0.7), st.integers(0, 10_000))
def test_rewiring_preserves_degrees(n, p, seed):
    rng = np.random.default_rng(seed)
    a = random_graph(rng, n, p)
    b, _ = rewire_degree_preserving(a, 50, rng)
    assert np.array_equal(a.sum(axis=1), b.sum(axis=1))
    assert np.array_equal(b, b.T) and not b.diagonal().any()


def test_dense_random_graph_small_world_near_one():
    a = random_graph(np.random.default_rng(3), 30, 0.5)
    sw = small_world_norms(a, n_null=20, seed=0)
    assert 0.8 <= sw.gamma <= 1.2
    assert 0.8 <= sw.lam <= 1.2


def test_small_world_seed_reproducible():
    a = random_graph(np.random.default_rng(4), 20, 0.3)
    assert small_world_norms(a, n_null=5, seed=1) == small_world_norms(a, n_null=5, seed=1)


# ---------------------------------------------------------------- hubs and report


def test_hubs_either_and_both():
    deg = [1, 1, 1, 1, 8, 1]
    btw = [0, 0, 9, 0, 9, 0]
    either = find_hubs(deg, btw, "either")
    assert either.hubs == [2, 4]
    assert either.criteria[4] == ["degree", "betweenness"]
    assert find_hubs(deg, btw, "both").hubs == [4]


def test_uniform_degree_has_no_hubs():
    assert find_hubs([2, 2, 2, 2], [0, 0, 0, 0]).hubs == []


def test_compare_networks_methods():
    a = np.arange(10.0)
    res = compare_networks(a, a + 5)
    assert res.statistic < 0
    perm = compare_networks(a, a + 5, method="permutation", n_perm=999, seed=0)
    assert perm.p_value < 0.01
    with pytest.raises(ValidationError):
        compare_networks([], a)


def test_compute_metrics_bundle():
    a = random_graph(np.random.default_rng(5), 16, 0.3)
    rep = compute_metrics(a, seed=0, n_null=5)
    names = [f"n{i}" for i in range(16)]
    d = rep.to_dict(names)
    assert d["scalars"]["n_nodes"] == 16
    assert set(d["nodal"]) == {"degree", "betweenness", "clustering", "eigenvector", "participation"}
    assert set(d["modules"]) == set(names)


def test_compute_metrics_edgeless_records_notes():
    rep = compute_metrics(np.zeros((4, 4), bool), n_null=2)
    assert rep.scalars["density"] == 0.0
    assert np.isnan(rep.scalars["path_length"])
    assert rep.notes
