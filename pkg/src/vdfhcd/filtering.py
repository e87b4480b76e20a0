"""Polynomial graph filters and the change-level row sums they induce.

A filter is ``H(S) = sum_{m=1..M} h_m S^m``. For a distance matrix ``dist``
the change level of vertex ``i`` between operators ``S_a`` and ``S_b`` is::

    f_i = sum_m h_m sum_j ((S_b^m)_ij - (S_a^m)_ij) * dist_ij

Because ``dist`` is a full matrix, every entry of ``S^m`` is needed, so the
powers are accumulated explicitly.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import ROW_CONSTANT_KINDS, OperatorKind, ShiftOperator


class LeakageError(ValueError):
    """Raised when an operator without constant row action is used for change levels."""


@dataclass(frozen=True)
class TransferSpec:
    """Truncation transfer function ``H(g) = (sign(g - cutoff) + 1) / 2`` on [-1, 1]."""

    cutoff: float = 0.9
    grid_points: int = 201

    def grid(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.grid_points)

    def target(self, gamma=None) -> np.ndarray:
        gamma = self.grid() if gamma is None else np.asarray(gamma, dtype=float)
        return (np.sign(gamma - self.cutoff) + 1.0) / 2.0


@dataclass(frozen=True)
class PolynomialFilter:
    """Coefficients ``h_1..h_M`` of a polynomial in the shift operator (no constant term)."""

    coefficients: tuple
    target: TransferSpec | None = None

    def __post_init__(self):
        coeffs = tuple(float(c) for c in np.ravel(self.coefficients))
        if len(coeffs) < 1:
            raise ValueError("filter order must be >= 1")
        if not all(np.isfinite(coeffs)):
            raise ValueError("filter coefficients must be finite")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def order(self) -> int:
        return len(self.coefficients)

    def response(self, gamma) -> np.ndarray:
        """Evaluate ``sum_m h_m gamma^m``."""
        gamma = np.asarray(gamma, dtype=float)
        return sum(h * gamma ** (m + 1) for m, h in enumerate(self.coefficients))

    def residual(self) -> float:
        """Sum of squared fit errors on the target grid."""
        if self.target is None:
            raise ValueError("filter has no target transfer function")
        grid = self.target.grid()
        return float(np.sum((self.response(grid) - self.target.target(grid)) ** 2))

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["order", "coefficient"])
            for m, h in enumerate(self.coefficients, start=1):
                writer.writerow([m, repr(h)])
        return path


def fit_lowpass_coeffs(order: int, cutoff: float = 0.9, grid_points: int = 201) -> PolynomialFilter:
    """Least-squares fit of ``sum_{m=1..M} h_m g^m`` to the truncation function.

    The fit uses a uniform grid on [-1, 1] and solves the normal equations
    of the monomial basis ``g, g^2, ..., g^M``.
    """
    if order < 1:
        raise ValueError("filter order must be >= 1")
    if not -1.0 < cutoff < 1.0:
        raise ValueError("cutoff must lie in (-1, 1)")
    if grid_points < order + 1:
        raise ValueError("grid_points must be at least order + 1")
    spec = TransferSpec(cutoff=cutoff, grid_points=grid_points)
    grid = spec.grid()
    basis = np.stack([grid**m for m in range(1, order + 1)], axis=1)
    gram = basis.T @ basis
    if np.linalg.cond(gram) > 1.0 / np.finfo(float).eps:
        raise np.linalg.LinAlgError("singular normal equations for the filter fit")
    coeffs = np.linalg.solve(gram, basis.T @ spec.target(grid))
    return PolynomialFilter(tuple(coeffs), spec)


def _hadamard_rowsum(C, dist) -> np.ndarray:
    if sp.issparse(C):
        return np.asarray(C.multiply(dist).sum(axis=1)).ravel()
    return np.einsum("ij,ij->i", C, dist)


def _as_matrix(S):
    return S.matrix if isinstance(S, ShiftOperator) else S


def power_hadamard_rowsum(S, dist, order: int, workers: int = 1, reference: bool = False) -> list:
    """Row sums of ``S^m * dist`` (elementwise) for ``m = 1..order``.

    Parameters
    ----------
    S : ShiftOperator, sparse matrix or ndarray
    dist : ndarray, shape (N, N)
    order : int
    workers : int
        Threads for the row-blocked products; 1 runs serially.
    reference : bool
        Use plain dense products ``C <- C @ S`` throughout. Slow, kept as the
        ground truth the sparse path is checked against.
    """
    mat = _as_matrix(S)
    dist = np.asarray(dist, dtype=float)
    if mat.shape != dist.shape:
        raise ValueError(f"operator {mat.shape} and distance matrix {dist.shape} differ in size")
    if order < 1:
        raise ValueError("order must be >= 1")

    if reference:
        S_dense = mat.toarray() if sp.issparse(mat) else np.asarray(mat, dtype=float)
        C = S_dense.copy()
        sums = [_hadamard_rowsum(C, dist)]
        for _ in range(order - 1):
            C = C @ S_dense
            sums.append(_hadamard_rowsum(C, dist))
        return sums

    S_sparse = sp.csr_matrix(mat, dtype=float)
    C = S_sparse
    sums = [_hadamard_rowsum(C, dist)]
    for _ in range(order - 1):
        if sp.issparse(C):
            C = S_sparse @ C
            if C.nnz > 0.25 * C.shape[0] * C.shape[1]:
                C = C.toarray()
        else:
            C = _left_multiply(S_sparse, C, workers)
        sums.append(_hadamard_rowsum(C, dist))
    return sums


def _left_multiply(S_sparse, C, workers):
    # S^{m+1} = S @ S^m; sparse-times-dense costs nnz(S) * N per step.
    if workers <= 1:
        return np.asarray(S_sparse @ C)
    n = S_sparse.shape[0]
    blocks = np.array_split(np.arange(n), workers)
    out = np.empty_like(C)

    def run(rows):
        out[rows[0]:rows[-1] + 1] = S_sparse[rows[0]:rows[-1] + 1] @ C

    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(run, [b for b in blocks if b.size]))
    return out


def _check_kind(op):
    if isinstance(op, ShiftOperator) and op.kind not in ROW_CONSTANT_KINDS:
        raise LeakageError(
            f"operator kind {op.kind.value!r} is not row-normalized; use one of "
            + ", ".join(sorted(k.value for k in ROW_CONSTANT_KINDS))
        )


def change_level(S_a, S_b, dist, filt: PolynomialFilter, workers: int = 1, reference: bool = False) -> np.ndarray:
    """Per-vertex change level of a signal with distances ``dist`` between two graphs.

    ``f = sum_m h_m (rowsum(S_b^m * dist) - rowsum(S_a^m * dist))``.
    """
    _check_kind(S_a)
    _check_kind(S_b)
    M = filt.order
    r_a = power_hadamard_rowsum(S_a, dist, M, workers=workers, reference=reference)
    r_b = power_hadamard_rowsum(S_b, dist, M, workers=workers, reference=reference)
    f = np.zeros(np.shape(dist)[0])
    for h, ra, rb in zip(filt.coefficients, r_a, r_b):
        f += h * (rb - ra)
    return f


def first_order_di(A_t1, A_t2, dist, k: int) -> np.ndarray:
    """Adjacency-difference score ``(1/K) rowsum((A_t2 - A_t1) * dist)``.

    This is the first-order, degree-K special case of ``change_level``.
    """
    for op in (A_t1, A_t2):
        if isinstance(op, ShiftOperator) and op.kind is not OperatorKind.ADJACENCY:
            raise ValueError("first_order_di expects adjacency operators")
    diff = sp.csr_matrix(_as_matrix(A_t2), dtype=float) - sp.csr_matrix(_as_matrix(A_t1), dtype=float)
    return _hadamard_rowsum(diff, np.asarray(dist, dtype=float)) / k
