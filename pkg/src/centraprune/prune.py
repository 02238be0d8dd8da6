"""Prune plans and column slicing of dense layers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .centrality import CentralityScores, rank_neurons
from .errors import InvalidRatio, PlanMismatch
from .graph import column_norms
from .tensor_io import LayerBundle


@dataclass
class PrunePlan:
    n: int
    p: float
    k: int
    pruned: list[int]
    kept: list[int]
    scores: np.ndarray
    method: str = "centrality"
    params: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def noop(self) -> bool:
        return self.k == 0

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "p": self.p,
            "tau": self.params.get("tau"),
            "method": self.method,
            "pruned": list(self.pruned),
            "kept": list(self.kept),
            "scores": [float(s) for s in self.scores],
        }


@dataclass
class PrunedLayer:
    weights: np.ndarray
    bias: np.ndarray
    kept: list[int]

    def bundle(self, name: str = "dense", activation: str = "linear") -> LayerBundle:
        return LayerBundle(self.weights, self.bias, name=name, activation=activation)


def prune_count(n: int, p: float) -> int:
    """``floor(p * n)``, reading ``p`` as the decimal the caller typed.

    A product within 1e-9 of an integer is snapped to it first, so that
    ``0.29 * 100`` gives 29 rather than the 28 that binary floating point
    would produce.
    """
    prod = p * n
    nearest = round(prod)
    if abs(prod - nearest) <= 1e-9 * max(1.0, abs(prod)):
        return int(nearest)
    return math.floor(prod)


def _check_ratio(p: float) -> None:
    if not (0.0 < p < 1.0) or math.isnan(p):
        raise InvalidRatio(f"pruning ratio must lie in (0, 1), got {p}")


def _plan_from_scores(scores: np.ndarray, p: float, method: str, params: dict) -> PrunePlan:
    _check_ratio(p)
    n = scores.shape[0]
    if n < 1:
        raise ValueError("need at least one neuron")
    k = prune_count(n, p)
    order = rank_neurons(scores)
    pruned = sorted(int(i) for i in order[:k])
    kept = sorted(int(i) for i in order[k:])
    warnings = []
    if k == 0:
        warnings.append(f"floor({p} * {n}) = 0: nothing to prune")
    return PrunePlan(n, float(p), k, pruned, kept, np.array(scores, dtype=np.float64), method, dict(params), warnings)


def make_plan(c: CentralityScores | np.ndarray, p: float, **params) -> PrunePlan:
    """Mark the ``floor(p * n)`` least central neurons for removal.

    ``params`` (tau, epsilon, tol, ...) are recorded on the plan as-is.
    """
    scores = c.scores if isinstance(c, CentralityScores) else np.asarray(c, dtype=np.float64)
    return _plan_from_scores(scores, p, "centrality", params)


def magnitude_plan(layer: LayerBundle | np.ndarray, p: float) -> PrunePlan:
    """Baseline: remove the neurons whose weight columns have the smallest L2 norm."""
    weights = layer.weights if isinstance(layer, LayerBundle) else np.asarray(layer, dtype=np.float64)
    _check_ratio(p)
    return _plan_from_scores(column_norms(weights), p, "magnitude", {})


def dense_preactivation(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """``x @ weights + bias`` accumulated input by input, in a fixed order.

    Each output unit's value depends only on its own column and bias, never
    on which other columns sit beside it, so slicing columns before or after
    the product gives bitwise-identical results. BLAS matmul does not
    guarantee that.
    """
    x = np.asarray(x, dtype=np.float64)
    z = np.empty((x.shape[0], weights.shape[1]), dtype=np.float64)
    z[:] = bias
    for k in range(weights.shape[0]):
        z += x[:, k, None] * weights[k]
    return z


def apply_plan(layer: LayerBundle, plan: PrunePlan) -> PrunedLayer:
    if plan.n != layer.n:
        raise PlanMismatch(f"plan is for {plan.n} neurons, layer has {layer.n}")
    kept = np.asarray(plan.kept, dtype=np.intp)
    return PrunedLayer(
        weights=np.ascontiguousarray(layer.weights[:, kept]),
        bias=layer.bias[kept].copy(),
        kept=list(plan.kept),
    )


def slice_downstream(next_weights: np.ndarray, plan: PrunePlan) -> np.ndarray:
    """Drop the consumer's input rows that fed pruned neurons."""
    next_weights = np.asarray(next_weights)
    if next_weights.ndim != 2 or next_weights.shape[0] != plan.n:
        raise PlanMismatch(f"consumer has input dim {next_weights.shape[0]}, plan is for {plan.n} neurons")
    return np.ascontiguousarray(next_weights[np.asarray(plan.kept, dtype=np.intp), :])
