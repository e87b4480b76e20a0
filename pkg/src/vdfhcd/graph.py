"""KNN graphs over feature matrices and the shift operators derived from them.

Adjacency is held as a sparse boolean matrix so that operators stay cheap to
build and to multiply at N in the thousands; ``ShiftOperator.dense()`` gives
the full matrix when needed.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import cdist

ZERO_DISTANCE_EPS = 1e-12


class OperatorKind(str, Enum):
    ADJACENCY = "adjacency"
    WEIGHT = "weight"
    AVERAGE_WEIGHT = "wavg"
    RANDOM_WALK = "p"
    LAPLACIAN = "laplacian"
    RW_LAPLACIAN = "lrw"
    SYM_LAPLACIAN = "lsym"

    @classmethod
    def parse(cls, value) -> "OperatorKind":
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        aliases = {"a": "adjacency", "w": "weight", "l": "laplacian", "avg": "wavg"}
        return cls(aliases.get(key, key))


# Kinds whose rows act as constant-sum averages; only these are valid for
# change levels, unnormalized weights leak the modality's scale.
ROW_CONSTANT_KINDS = frozenset(
    {OperatorKind.AVERAGE_WEIGHT, OperatorKind.RANDOM_WALK, OperatorKind.RW_LAPLACIAN}
)


def distance_matrix(X) -> np.ndarray:
    """Pairwise squared Euclidean distances between the rows of ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise ValueError("need at least two feature rows")
    dist = cdist(X, X, metric="sqeuclidean")
    dist = 0.5 * (dist + dist.T)
    np.fill_diagonal(dist, 0.0)
    return dist


@dataclass(frozen=True)
class KnnGraph:
    """Symmetric KNN graph, possibly restricted to an unchanged vertex subset.

    Attributes
    ----------
    adjacency : scipy.sparse.csr_matrix of bool, shape (N, N)
        Row ``i`` marks the neighbor set of vertex ``i``. Symmetric as built;
        restriction removes columns only.
    k : int
        Neighbor parameter used to build the graph.
    dist : ndarray, shape (N, N)
        Squared feature distances the graph was built from; edge weights
        other than binary are derived from it.
    """

    adjacency: sp.csr_matrix
    k: int
    dist: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def neighbor_sets(self) -> list[np.ndarray]:
        adj = self.adjacency
        return [adj.indices[adj.indptr[i]:adj.indptr[i + 1]] for i in range(self.n)]

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    def is_symmetric(self) -> bool:
        return (self.adjacency != self.adjacency.T).nnz == 0

    def save(self, path, weights=None) -> Path:
        """Write one line per vertex: ``index: neighbors`` and optionally ``| weights``."""
        path = Path(path)
        w = None if weights is None else sp.csr_matrix(weights)
        with open(path, "w") as fh:
            for i, nbrs in enumerate(self.neighbor_sets):
                line = f"{i}: " + " ".join(str(j) for j in nbrs)
                if w is not None:
                    row = w[i].toarray().ravel()
                    line += " | " + " ".join(repr(float(row[j])) for j in nbrs)
                fh.write(line + "\n")
        return path


def knn_indices(dist, k: int, candidates=None, rows=None) -> np.ndarray:
    """Indices of the ``k`` nearest other vertices per row, ties to lower index.

    ``dist`` holds one row per query vertex; ``rows`` gives their vertex
    indices when it is not the full square matrix. ``candidates``
    optionally limits the search to a sorted subset of columns. Returns an
    (n_rows, k) array sorted by (distance, index).
    """
    dist = np.asarray(dist, dtype=float)
    n = dist.shape[0]
    rows = np.arange(n) if rows is None else np.asarray(rows, dtype=np.int64)
    cols_all = np.arange(dist.shape[1]) if candidates is None else np.asarray(candidates, dtype=np.int64)
    if not 1 <= k <= cols_all.size - 1:
        raise ValueError(f"K={k} out of range [1, {cols_all.size - 1}]")
    d = dist[:, cols_all]
    is_self = cols_all[None, :] == rows[:, None]
    d[is_self] = np.inf
    kth = np.partition(d, k - 1, axis=1)[:, k - 1 : k]
    less = d < kth
    tied = d == kth
    # Fill the remaining slots with the lowest-index ties.
    need = k - less.sum(axis=1, keepdims=True)
    chosen = less | (tied & (np.cumsum(tied, axis=1) <= need))
    _, pos = np.nonzero(chosen)
    pos = pos.reshape(n, k)
    order = np.lexsort((pos, np.take_along_axis(d, pos, axis=1)), axis=1)
    return cols_all[np.take_along_axis(pos, order, axis=1)]


def build_knn_graph(X, k: int, dist=None) -> KnnGraph:
    """Union-symmetrized KNN graph: ``j`` neighbors ``i`` if either is among the other's K nearest."""
    if dist is None:
        dist = distance_matrix(X)
    n = dist.shape[0]
    nn = knn_indices(dist, k)
    rows = np.repeat(np.arange(n), k)
    out = sp.csr_matrix((np.ones(n * k, dtype=bool), (rows, nn.ravel())), shape=(n, n))
    adj = (out + out.T).astype(bool).tocsr()
    adj.sort_indices()
    return KnnGraph(adjacency=adj, k=k, dist=dist)


def _with_self_loops(adj: sp.csr_matrix) -> sp.csr_matrix:
    isolated = np.flatnonzero(np.diff(adj.indptr) == 0)
    if isolated.size:
        loops = sp.csr_matrix(
            (np.ones(isolated.size, dtype=bool), (isolated, isolated)), shape=adj.shape
        )
        adj = (adj + loops).astype(bool).tocsr()
    adj.sort_indices()
    return adj


def restrict_graph(g: KnnGraph, unchanged, isolated: str = "self-loop") -> KnnGraph:
    """Keep only vertices in ``unchanged`` as neighbors (signal sources).

    Edges to every other vertex are deleted; rows are kept so operators
    stay N x N. A vertex left without neighbors is handled by ``isolated``:

    ``"self-loop"``
        it gets a self-loop and receives no foreign signal;
    ``"keep"``
        it keeps its original neighbor set;
    ``"refill"``
        it is linked to its K nearest unchanged vertices.
    """
    if isolated not in ("self-loop", "keep", "refill"):
        raise ValueError(f"unknown isolated-vertex rule {isolated!r}")
    keep = np.zeros(g.n, dtype=bool)
    keep[np.fromiter(unchanged, dtype=np.int64)] = True
    adj = (g.adjacency @ sp.diags(keep.astype(float))).astype(bool).tocsr()
    adj.eliminate_zeros()
    lonely = np.flatnonzero(np.diff(adj.indptr) == 0)
    if isolated == "keep" and lonely.size:
        rows = np.zeros(g.n)
        rows[lonely] = 1.0
        adj = (adj + sp.diags(rows) @ g.adjacency).astype(bool).tocsr()
    elif isolated == "refill" and lonely.size and keep.sum() > g.k:
        if g.dist is None:
            raise ValueError("refill needs the graph's distance matrix")
        nn = knn_indices(g.dist[lonely], g.k, np.flatnonzero(keep), rows=lonely)
        extra = sp.csr_matrix(
            (np.ones(nn.size, dtype=bool), (np.repeat(lonely, g.k), nn.ravel())), shape=adj.shape
        )
        adj = (adj + extra).astype(bool).tocsr()
    return KnnGraph(adjacency=_with_self_loops(adj), k=g.k, dist=g.dist)


def edge_weights(g: KnnGraph, scheme: str = "binary", sigma: float | None = None) -> sp.csr_matrix:
    """Positive weights on the graph's edges.

    ``binary`` gives 1 per edge, ``inverse-distance`` gives ``1 / ||X_i - X_j||``
    (zero distances perturbed by 1e-12) and ``gaussian`` gives
    ``exp(-||X_i - X_j||^2 / (2 sigma^2))``. Self-loops always weigh 1.
    """
    adj = g.adjacency.tocoo()
    rows, cols = adj.row, adj.col
    if scheme == "binary":
        vals = np.ones(rows.size)
    else:
        if g.dist is None:
            raise ValueError(f"weight scheme {scheme!r} needs the graph's distance matrix")
        d2 = g.dist[rows, cols]
        if scheme in ("inverse-distance", "inverse_distance", "inverse"):
            norm = np.sqrt(np.maximum(d2, 0.0))
            vals = 1.0 / np.where(norm > 0, norm, ZERO_DISTANCE_EPS)
        elif scheme == "gaussian":
            if sigma is None:
                off = d2[rows != cols]
                sigma = float(np.sqrt(np.median(off))) if off.size and np.median(off) > 0 else 1.0
            if sigma <= 0:
                raise ValueError("gaussian sigma must be positive")
            vals = np.exp(-d2 / (2.0 * sigma**2))
        else:
            raise ValueError(f"unknown weight scheme {scheme!r}")
        vals = np.where(rows == cols, 1.0, vals)
    if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        raise ValueError("edge weights must be positive and finite")
    return sp.csr_matrix((vals, (rows, cols)), shape=adj.shape)


@dataclass(frozen=True)
class ShiftOperator:
    """A graph shift operator of a given kind.

    ``matrix`` is sparse (CSR); use ``dense()`` for an ndarray.
    """

    kind: OperatorKind
    matrix: sp.csr_matrix
    source: str = ""

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    @property
    def row_constant(self) -> bool:
        return self.kind in ROW_CONSTANT_KINDS


def _row_scale(m: sp.csr_matrix, scale) -> sp.csr_matrix:
    return (sp.diags(scale) @ m).tocsr()


def to_shift_operator(
    g: KnnGraph,
    kind="wavg",
    weight_scheme: str = "binary",
    sigma: float | None = None,
    source: str = "",
) -> ShiftOperator:
    """Build A, W, W^avg, P, L, L^rw or L^sym from a KNN graph.

    W^avg always uses the binary adjacency; P, L, L^rw and L^sym use the
    weights from ``weight_scheme``.
    """
    kind = OperatorKind.parse(kind)
    n = g.n
    A = g.adjacency.astype(float).tocsr()
    if kind is OperatorKind.ADJACENCY:
        mat = A
    elif kind is OperatorKind.AVERAGE_WEIGHT:
        mat = _row_scale(A, 1.0 / np.asarray(A.sum(axis=1)).ravel())
    else:
        W = edge_weights(g, weight_scheme, sigma)
        dw = np.asarray(W.sum(axis=1)).ravel()
        eye = sp.identity(n, format="csr")
        if kind is OperatorKind.WEIGHT:
            mat = W
        elif kind is OperatorKind.RANDOM_WALK:
            mat = _row_scale(W, 1.0 / dw)
        elif kind is OperatorKind.LAPLACIAN:
            mat = (sp.diags(dw) - W).tocsr()
        elif kind is OperatorKind.RW_LAPLACIAN:
            mat = (eye - _row_scale(W, 1.0 / dw)).tocsr()
        elif kind is OperatorKind.SYM_LAPLACIAN:
            s = sp.diags(1.0 / np.sqrt(dw))
            mat = (s @ (sp.diags(dw) - W) @ s).tocsr()
        else:  # pragma: no cover
            raise ValueError(f"unsupported operator kind {kind}")
    mat.sort_indices()
    return ShiftOperator(kind=kind, matrix=mat, source=source)
