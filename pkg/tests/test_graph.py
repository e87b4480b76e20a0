import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from vdfhcd.graph import (
    OperatorKind,
    build_knn_graph,
    distance_matrix,
    edge_weights,
    knn_indices,
    restrict_graph,
    to_shift_operator,
)


def random_graph(seed, n=30, k=4, d=3):
    rng = np.random.default_rng(seed)
    X = rng.random((n, d))
    return X, build_knn_graph(X, k)


def test_distance_examples(rng):
    D = distance_matrix(np.eye(2))
    np.testing.assert_array_equal(D, [[0, 2], [2, 0]])
    X = rng.normal(size=(20, 5))
    D = distance_matrix(X)
    oracle = np.array([[sum((X[i, c] - X[j, c]) ** 2 for c in range(5)) for j in range(20)] for i in range(20)])
    np.testing.assert_allclose(D, oracle, atol=1e-12)
    assert (np.diag(D) == 0).all() and (D == D.T).all() and (D >= 0).all()
    with pytest.raises(ValueError):
        distance_matrix(np.zeros((1, 3)))


def test_knn_three_points():
    g = build_knn_graph(np.array([[0.0], [1.0], [10.0]]), 1)
    assert [list(s) for s in g.neighbor_sets] == [[1], [0, 2], [1]]


def test_knn_complete_when_k_is_n_minus_1():
    _, g = random_graph(0, n=7, k=6)
    assert g.adjacency.nnz == 7 * 6


def test_knn_ties_go_to_lower_index():
    # vertex 0 is equidistant from 1, 2 and 3
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
    nn = knn_indices(distance_matrix(X), 2)
    assert list(nn[0]) == [1, 2]


@pytest.mark.parametrize("seed", range(4))
def test_knn_matches_full_sort(seed):
    X, g = random_graph(seed, n=40, k=5)
    D = distance_matrix(X)
    out = [set(sorted((j for j in range(40) if j != i), key=lambda j: (D[i, j], j))[:5]) for i in range(40)]
    expected = [set(out[i]) | {j for j in range(40) if i in out[j]} for i in range(40)]
    assert [set(s.tolist()) for s in g.neighbor_sets] == expected


@settings(max_examples=30, deadline=None)
@given(st.integers(5, 40), st.integers(1, 6), st.integers(0, 10**6))
def test_graph_invariants(n, k, seed):
    k = min(k, n - 1)
    X, g = random_graph(seed, n=n, k=k)
    assert g.is_symmetric()
    assert (g.adjacency.diagonal() == 0).all()
    assert (g.degrees >= k).all()
    _, g2 = random_graph(seed, n=n, k=k)
    assert (g.adjacency != g2.adjacency).nnz == 0


@pytest.mark.parametrize("scheme", ["binary", "inverse-distance", "gaussian"])
def test_operator_identities(scheme):
    _, g = random_graph(5)
    ones = np.ones(g.n)
    P = to_shift_operator(g, "p", scheme).dense()
    Lrw = to_shift_operator(g, "lrw", scheme).dense()
    L = to_shift_operator(g, "laplacian", scheme).dense()
    W = to_shift_operator(g, "weight", scheme).dense()
    np.testing.assert_allclose(P @ ones, ones, atol=1e-12)
    np.testing.assert_allclose(Lrw @ ones, 0, atol=1e-12)
    np.testing.assert_allclose(Lrw, np.eye(g.n) - P, atol=1e-12)
    np.testing.assert_allclose(L @ ones, 0, atol=1e-12)
    assert (np.diag(W) == 0).all()
    Lsym = to_shift_operator(g, "lsym", scheme).dense()
    np.testing.assert_allclose(Lsym, Lsym.T, atol=1e-12)


def test_binary_p_equals_wavg():
    _, g = random_graph(6)
    A = to_shift_operator(g, "adjacency").dense()
    Wavg = to_shift_operator(g, "wavg").dense()
    np.testing.assert_array_equal(to_shift_operator(g, "p", "binary").dense(), Wavg)
    np.testing.assert_allclose(Wavg, A / A.sum(axis=1, keepdims=True))
    assert (np.diag(A) == 0).all()


def test_weight_schemes():
    X = np.array([[0.0], [2.0], [2.0]])
    g = build_knn_graph(X, 1)
    inv = edge_weights(g, "inverse-distance").toarray()
    assert inv[0, 1] == pytest.approx(0.5)
    assert inv[1, 2] == pytest.approx(1e12)
    gauss = edge_weights(g, "gaussian", sigma=1.0).toarray()
    assert gauss[0, 1] == pytest.approx(np.exp(-4 / 2))
    with pytest.raises(ValueError):
        edge_weights(g, "bogus")


def test_operator_kind_aliases():
    assert OperatorKind.parse("W") is OperatorKind.WEIGHT
    assert OperatorKind.parse("avg") is OperatorKind.AVERAGE_WEIGHT
    assert OperatorKind.parse(OperatorKind.RW_LAPLACIAN) is OperatorKind.RW_LAPLACIAN
    with pytest.raises(ValueError):
        OperatorKind.parse("nope")


def test_restrict_examples():
    _, g = random_graph(8, n=20, k=3)
    full = restrict_graph(g, range(20))
    assert (full.adjacency != g.adjacency).nnz == 0
    empty = restrict_graph(g, [])
    np.testing.assert_array_equal(to_shift_operator(empty, "wavg").dense(), np.eye(20))
    v = 4
    cut = restrict_graph(g, [i for i in range(20) if i != v])
    for i, nbrs in enumerate(cut.neighbor_sets):
        expected = [j for j in g.neighbor_sets[i] if j != v] or [i]
        assert list(nbrs) == expected


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sets(st.integers(0, 24)), st.sets(st.integers(0, 24)))
def test_restrict_is_monotone_and_row_constant(seed, s1, s2):
    _, g = random_graph(seed, n=25, k=3)
    big, small = s1 | s2, s1
    a_big = restrict_graph(g, sorted(big)).adjacency
    a_small = restrict_graph(g, sorted(small)).adjacency
    off = sp.identity(25, format="csr", dtype=bool)
    # edges to other vertices only shrink; self-loops mark isolated rows
    extra = (a_small.astype(int) - a_big.astype(int)).multiply((~off.toarray()).astype(int))
    assert (extra.toarray() <= 0).all()
    for kind in ("wavg", "p", "lrw"):
        op = to_shift_operator(restrict_graph(g, sorted(small)), kind).dense()
        target = 0.0 if kind == "lrw" else 1.0
        np.testing.assert_allclose(op.sum(axis=1), target, atol=1e-12)


def test_restrict_refill_gives_isolated_vertices_k_neighbors():
    _, g = random_graph(9, n=30, k=4)
    keep = list(range(15))
    r = restrict_graph(g, keep, isolated="refill")
    plain = restrict_graph(g, keep)
    for i in range(30):
        nbrs = set(r.neighbor_sets[i].tolist())
        if list(plain.neighbor_sets[i]) == [i]:
            assert len(nbrs) == 4 and nbrs <= set(keep) and i not in nbrs
        else:
            assert nbrs == set(plain.neighbor_sets[i].tolist())


def test_save_adjacency_list(tmp_path):
    g = build_knn_graph(np.array([[0.0], [1.0], [10.0]]), 1)
    g.save(tmp_path / "g.txt", weights=edge_weights(g, "inverse-distance"))
    lines = (tmp_path / "g.txt").read_text().splitlines()
    assert lines[1].startswith("1: 0 2 | ")


def test_restrict_keep_preserves_rows_of_isolated_vertices():
    _, g = random_graph(10, n=30, k=4)
    keep = list(range(10))
    r = restrict_graph(g, keep, isolated="keep")
    plain = restrict_graph(g, keep)
    for i in range(30):
        if list(plain.neighbor_sets[i]) == [i]:
            assert list(r.neighbor_sets[i]) == list(g.neighbor_sets[i])
        else:
            assert list(r.neighbor_sets[i]) == list(plain.neighbor_sets[i])
    with pytest.raises(ValueError):
        restrict_graph(g, keep, isolated="bogus")
