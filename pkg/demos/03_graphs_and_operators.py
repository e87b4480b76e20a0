"""KNN graphs and the shift operators built from them."""

import numpy as np

from vdfhcd.graph import build_knn_graph, distance_matrix, restrict_graph, to_shift_operator

rng = np.random.default_rng(0)
X = rng.random((40, 3))
k = int(np.sqrt(len(X)))
g = build_knn_graph(X, k, distance_matrix(X))
print(f"N={g.n} K={k} symmetric={g.is_symmetric()} degrees {g.degrees.min()}..{g.degrees.max()}")

ones = np.ones(g.n)
for kind in ("wavg", "p", "lrw", "laplacian"):
    S = to_shift_operator(g, kind, "gaussian").dense()
    print(f"{kind:10s} S @ 1 ranges over [{(S @ ones).min():+.3f}, {(S @ ones).max():+.3f}]")

# Cutting vertices 0..9 out of every neighbor set leaves the rows row-stochastic.
keep = np.arange(10, g.n)
r = restrict_graph(g, keep)
W = to_shift_operator(r, "wavg").dense()
print("restricted graph: columns 0..9 empty:", not W[:, :10].any(), " rows sum to 1:", np.allclose(W.sum(1), 1))
