"""Eigenvector centrality of a similarity graph by power iteration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import EmptyGraph, NotConverged
from .graph import SimilarityGraph

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 1000

_NEG_CLAMP = 1e-12
_STRAY_SCORE = 1e-9


@dataclass
class CentralityScores:
    scores: np.ndarray
    eigenvalue: float
    iterations: int
    converged: bool
    residual: float = 0.0

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    def to_json(self) -> dict:
        return {
            "centrality": [float(v) for v in self.scores],
            "lambda": float(self.eigenvalue),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
        }


def _as_matrix(g: SimilarityGraph | sp.spmatrix | np.ndarray) -> sp.csr_matrix:
    if isinstance(g, SimilarityGraph):
        return g.adjacency
    return sp.csr_matrix(g, dtype=np.float64)


def _clean(x: np.ndarray, isolated: np.ndarray, labels: np.ndarray) -> np.ndarray:
    x = x.copy()
    if x.sum() < 0:
        x = -x
    x[(x < 0) & (x >= -_NEG_CLAMP)] = 0.0
    x[isolated] = 0.0
    lead = labels[int(np.argmax(x))]
    x[(labels != lead) & (np.abs(x) < _STRAY_SCORE)] = 0.0
    norm = np.linalg.norm(x)
    return x / norm if norm > 0 else x


def eigenvector_centrality(
    g: SimilarityGraph | sp.spmatrix | np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    strict: bool = True,
) -> CentralityScores:
    """Dominant eigenvector of the adjacency matrix, scaled to unit L2 norm.

    Iterates ``x <- (A + sigma I) x / ||.||`` from the uniform vector, with
    ``sigma`` half the largest row sum. The positive shift leaves the
    eigenvectors unchanged but stops the iterate from oscillating on
    bipartite graphs, where ``-lambda`` is also an eigenvalue.

    Convergence is declared on the returned vector ``c`` itself: with
    ``lambda = c.A.c``, ``||A c - lambda c|| <= tol * lambda``. Isolated
    nodes get exactly zero, as do sub-1e-9 leftovers outside the component
    holding the largest score.

    If ``max_iter`` runs out, :class:`NotConverged` is raised carrying the
    best iterate (``converged=False``); with ``strict=False`` that result is
    returned instead.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    a = _as_matrix(g)
    n = a.shape[0]
    if n == 0:
        raise EmptyGraph("graph has no nodes")
    if a.nnz == 0:
        return CentralityScores(np.zeros(n), 0.0, 0, True, 0.0)

    row_nnz = np.diff(a.indptr)
    isolated = row_nnz == 0
    _, labels = connected_components(a, directed=False)
    shift = 0.5 * float(np.max(np.abs(a).sum(axis=1)))

    x = np.full(n, 1.0 / np.sqrt(n))
    best = None
    for it in range(max_iter + 1):
        c = _clean(x, isolated, labels)
        ac = a @ c
        lam = float(c @ ac)
        residual = float(np.linalg.norm(ac - lam * c))
        if best is None or residual < best.residual:
            best = CentralityScores(c, max(lam, 0.0), it, False, residual)
        if lam > 0 and residual <= tol * lam:
            return CentralityScores(c, lam, it, True, residual)
        if it == max_iter:
            break
        y = a @ x + shift * x
        x = y / np.linalg.norm(y)

    if strict:
        raise NotConverged(
            f"power iteration did not reach tol={tol} in {max_iter} iterations "
            f"(best residual {best.residual:.3e})",
            scores=best,
        )
    return best


def rank_neurons(c: CentralityScores | np.ndarray) -> np.ndarray:
    """Indices sorted by ascending score; equal scores keep index order."""
    scores = c.scores if isinstance(c, CentralityScores) else np.asarray(c, dtype=np.float64)
    if scores.ndim != 1 or scores.size == 0:
        raise ValueError("need at least one score")
    return np.lexsort((np.arange(scores.size), scores))
