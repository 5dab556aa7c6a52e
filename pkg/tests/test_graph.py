import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdcn.errors import FormatError, ParameterError
from sdcn.graph import (
    SparseGraph,
    build_knn_graph,
    dot_product_similarity,
    heat_kernel_similarity,
    load_edge_list,
    normalize_adjacency,
    random_graph,
    similarity,
    write_edge_list,
)


def test_heat_kernel_trivial_values():
    x = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
    s = heat_kernel_similarity(x, 1.0)
    assert s[0, 1] == 1.0
    assert s[0, 2] == pytest.approx(np.exp(-1))


def test_heat_kernel_three_points_on_a_line():
    # points 0, 1, 3 with t = 2: exp(-d^2 / 2)
    s = heat_kernel_similarity(np.array([[0.0], [1.0], [3.0]]), 2.0)
    d2 = np.array([[0, 1, 9], [1, 0, 4], [9, 4, 0]], dtype=float)
    np.testing.assert_allclose(s, np.exp(-d2 / 2.0), atol=1e-15)


def test_heat_kernel_rejects_nonpositive_t():
    with pytest.raises(ParameterError):
        heat_kernel_similarity(np.ones((2, 2)), 0.0)


def test_dot_product_cases():
    s = dot_product_similarity(np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert s[0, 1] == 0.0
    u = np.array([[0.6, 0.8], [0.6, 0.8]])
    assert dot_product_similarity(u)[0, 1] == pytest.approx(1.0)


def test_dot_product_counts_shared_words():
    docs = np.array([
        [1, 1, 0, 1, 0],
        [1, 0, 0, 1, 1],
        [0, 1, 1, 0, 0],
    ], dtype=float)
    s = similarity(docs)  # binary input picks the dot product
    assert s[0, 1] == 2 and s[0, 2] == 1 and s[1, 2] == 0


def test_knn_collinear_points():
    x = np.array([[0.0], [1.0], [3.0]])
    g = build_knn_graph(similarity(x, "heat"), 1)
    # 0 and 2 both pick 1, 1 picks 0
    assert sorted(map(tuple, g.edges.tolist())) == [(0, 1), (1, 2)]


def test_knn_ties_take_lowest_index():
    s = np.ones((4, 4))
    g = build_knn_graph(s, 1)
    # every node picks node 0 (node 0 itself picks 1)
    assert sorted(map(tuple, g.edges.tolist())) == [(0, 1), (0, 2), (0, 3)]


def test_knn_separated_blobs_have_no_cross_edges():
    rng = np.random.default_rng(0)
    x = np.vstack([rng.normal(0, 0.1, (5, 2)), rng.normal(10, 0.1, (5, 2))])
    g = build_knn_graph(similarity(x, "heat"), 2)
    assert all((i < 5) == (j < 5) for i, j in g.edges)


def test_knn_bad_k():
    with pytest.raises(ParameterError):
        build_knn_graph(np.eye(3), 3)
    with pytest.raises(ParameterError):
        build_knn_graph(np.eye(3), 0)


def _brute_knn(s, k):
    n = len(s)
    edges = set()
    for i in range(n):
        cand = sorted((j for j in range(n) if j != i), key=lambda j: (-s[i, j], j))[:k]
        edges |= {(min(i, j), max(i, j)) for j in cand}
    return sorted(edges)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 12), seed=st.integers(0, 10**6), data=st.data())
def test_knn_matches_brute_force(n, seed, data):
    k = data.draw(st.integers(1, n - 1))
    x = np.random.default_rng(seed).standard_normal((n, 3))
    s = similarity(x, "heat")
    assert sorted(map(tuple, build_knn_graph(s, k).edges.tolist())) == _brute_knn(s, k)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(3, 12), seed=st.integers(0, 10**6))
def test_knn_invariant_to_row_order(n, seed):
    rng = np.random.default_rng(seed)
    s = similarity(rng.standard_normal((n, 2)), "heat")
    perm = rng.permutation(n)
    g = build_knn_graph(s, 2)
    gp = build_knn_graph(s[np.ix_(perm, perm)], 2)
    mapped = {tuple(sorted((perm[i], perm[j]))) for i, j in gp.edges}
    assert mapped == set(map(tuple, g.edges.tolist()))


def test_normalization_hand_cases():
    np.testing.assert_allclose(normalize_adjacency(SparseGraph(2, [[0, 1]])).toarray(), [[0.5, 0.5], [0.5, 0.5]])
    np.testing.assert_array_equal(normalize_adjacency(SparseGraph(3, np.zeros((0, 2), int))).toarray(), np.eye(3))
    tri = SparseGraph(3, [[0, 1], [1, 2], [0, 2]])
    np.testing.assert_allclose(normalize_adjacency(tri).toarray(), np.full((3, 3), 1 / 3))


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 15), p=st.floats(0, 1), seed=st.integers(0, 10**6))
def test_normalized_symmetric_with_unit_spectral_radius(n, p, seed):
    g = random_graph(n, p, np.random.default_rng(seed))
    a = g.normalized.toarray()
    assert np.array_equal(a, a.T)
    assert np.all(a.sum(axis=1) > 0)
    ev = np.linalg.eigvalsh(a)
    assert ev.max() <= 1 + 1e-12 and ev.min() > -1
    # sqrt of the self-loop degrees is the eigenvector for eigenvalue 1
    r = np.sqrt(g.degrees() + 1.0)
    np.testing.assert_allclose(a @ r, r, atol=1e-12)


def test_row_sums_can_exceed_one_on_irregular_graphs():
    path = SparseGraph(3, [[0, 1], [1, 2]])
    assert path.normalized.toarray()[1].sum() == pytest.approx(1 / 3 + 2 / np.sqrt(6))


def test_regular_graph_rows_sum_to_one():
    n = 6
    ring = SparseGraph(n, [[i, (i + 1) % n] for i in range(n)])
    np.testing.assert_allclose(ring.normalized.toarray().sum(axis=1), 1.0)


def test_edge_list_parsing(tmp_path):
    f = tmp_path / "e.txt"
    f.write_text("0 1\n")
    assert load_edge_list(f, 2).edges.tolist() == [[0, 1]]
    f.write_text("# comment\n0 1\n1 0\n")
    assert load_edge_list(f, 2).edges.tolist() == [[0, 1]]
    f.write_text("0 1\n0 5\n")
    with pytest.raises(FormatError, match=":2"):
        load_edge_list(f, 3)


def test_edge_list_round_trip(tmp_path):
    g = random_graph(10, 0.3, np.random.default_rng(4))
    write_edge_list(g, tmp_path / "g.txt")
    assert np.array_equal(load_edge_list(tmp_path / "g.txt", 10).edges, g.edges)
