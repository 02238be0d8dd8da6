"""Neuron similarity graph of a dense layer.

Neurons are the columns of the [d, n] weight matrix. Each column is scaled
by ``1 / (||w_j|| + eps)``, pairwise cosines form the similarity matrix, and
pairs whose cosine exceeds ``tau`` become weighted undirected edges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InvalidThreshold, NonFiniteInput

DEFAULT_EPSILON = 1e-8


@dataclass
class SimilarityMatrix:
    s: np.ndarray

    @property
    def n(self) -> int:
        return self.s.shape[0]


@dataclass
class SimilarityGraph:
    """Symmetric CSR adjacency with an empty diagonal."""

    adjacency: sp.csr_matrix
    tau: float
    epsilon: float = DEFAULT_EPSILON

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def num_edges(self) -> int:
        return self.adjacency.nnz // 2

    def edges(self) -> list[tuple[int, int, float]]:
        """Upper-triangle edges ``(i, j, weight)`` with ``i < j``, lexicographic."""
        upper = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return [(int(upper.row[k]), int(upper.col[k]), float(upper.data[k])) for k in order]

    def to_json(self) -> dict:
        return {"n": self.n, "tau": self.tau, "edges": [list(e) for e in self.edges()]}


def column_norms(w: np.ndarray) -> np.ndarray:
    """L2 norm of every column, each summed in the same order."""
    cols = np.ascontiguousarray(np.asarray(w, dtype=np.float64).T)
    return np.sqrt(np.sum(cols * cols, axis=1))


def normalize_columns(w: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Return ``w_j / (||w_j||_2 + epsilon)`` for every column; zero columns stay zero."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise ValueError(f"expected a [d, n] matrix, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise NonFiniteInput("weight matrix contains NaN or Inf")
    cols = np.ascontiguousarray(w.T)
    return (cols / (column_norms(w) + epsilon)[:, None]).T.copy()


def similarity_matrix(w_hat: np.ndarray) -> SimilarityMatrix:
    """Cosine similarities ``w_hat.T @ w_hat``.

    Only the upper triangle is kept and mirrored, so the result is exactly
    symmetric. Off-diagonal entries are clamped to [-1, 1]. The diagonal is
    self-similarity: 1.0 for nonzero columns, 0.0 for zero columns.
    """
    w_hat = np.asarray(w_hat, dtype=np.float64)
    n = w_hat.shape[1]
    cols = np.ascontiguousarray(w_hat.T)
    s = np.zeros((n, n), dtype=np.float64)
    for i in range(n - 1):
        # same summation order for every pair, whatever its position
        s[i, i + 1 :] = np.sum(cols[i + 1 :] * cols[i], axis=1)
    np.clip(s, -1.0, 1.0, out=s)
    s = s + s.T
    nonzero = np.any(w_hat != 0.0, axis=0)
    s[np.arange(n), np.arange(n)] = nonzero.astype(np.float64)
    return SimilarityMatrix(s)


def build_graph(s: SimilarityMatrix | np.ndarray, tau: float, epsilon: float = DEFAULT_EPSILON) -> SimilarityGraph:
    """Keep edges ``(i, j)`` with ``i != j`` and ``s[i, j] > tau``."""
    if not (0.0 <= tau < 1.0):
        raise InvalidThreshold(f"tau must lie in [0, 1), got {tau}")
    mat = s.s if isinstance(s, SimilarityMatrix) else np.asarray(s, dtype=np.float64)
    n = mat.shape[0]
    mask = mat > tau
    mask[np.arange(n), np.arange(n)] = False
    rows, cols = np.nonzero(mask)
    adjacency = sp.csr_matrix((mat[rows, cols], (rows, cols)), shape=(n, n), dtype=np.float64)
    adjacency.sort_indices()
    return SimilarityGraph(adjacency=adjacency, tau=float(tau), epsilon=float(epsilon))


def layer_graph(weights: np.ndarray, tau: float, epsilon: float = DEFAULT_EPSILON) -> SimilarityGraph:
    """Weights [d, n] straight to the thresholded similarity graph."""
    return build_graph(similarity_matrix(normalize_columns(weights, epsilon)), tau, epsilon)
