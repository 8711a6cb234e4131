"""Server-side aggregation: FedAvg and FedTruth.

FedTruth alternates between estimating the true global update as a weighted
mean of the client updates and re-weighting each client by how far its update
sits from that estimate. With Euclidean distance and the reciprocal
regulation function the iteration is a Weiszfeld scheme for the geometric
median, so far-away (e.g. boosted) updates end up with tiny weights.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .params import (
    DimensionError,
    ModelUpdate,
    ZeroNormError,
    angular_distance,
    as_vector,
    euclidean_distance,
    weighted_sum,
)

__all__ = [
    "ModelUpdate",
    "Distance",
    "Regulation",
    "FedTruthResult",
    "FedTruthError",
    "PERFORMANCE_FLOOR",
    "fedavg",
    "compute_performances",
    "compute_weights",
    "fedtruth",
    "update_matrix",
]

PERFORMANCE_FLOOR = 1e-8


class FedTruthError(ArithmeticError):
    def __init__(self, iteration: int, what: str):
        super().__init__(f"FedTruth iteration {iteration}: {what}")
        self.iteration = iteration


@dataclass(frozen=True)
class Distance:
    """Distance between the truth estimate and a client update.

    ``kind`` is ``"euclidean"``, ``"angular"`` or ``"hybrid"``; ``alpha`` is
    the Euclidean share of the hybrid mix. A zero-norm vector has no
    direction, so its angular part is taken as the maximum value 1.
    """

    kind: str = "euclidean"
    alpha: float = 0.5

    def __post_init__(self):
        if self.kind not in ("euclidean", "angular", "hybrid"):
            raise ValueError(f"unknown distance kind {self.kind!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")

    def _angular(self, a, b) -> float:
        try:
            return angular_distance(a, b)
        except ZeroNormError:
            return 1.0

    def rows(self, truth: np.ndarray, matrix: np.ndarray) -> list[float]:
        """Distance from ``truth`` to every row of a validated update matrix."""
        diff = matrix - truth
        d_l = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        if self.kind == "euclidean" or (self.kind == "hybrid" and self.alpha == 1.0):
            return d_l.tolist()
        norms = np.sqrt(np.einsum("ij,ij->i", matrix, matrix))
        t_norm = float(np.sqrt(np.dot(truth, truth)))
        with np.errstate(divide="ignore", invalid="ignore"):
            cos = (matrix @ truth) / (norms * t_norm)
        d_a = np.arccos(np.clip(cos, -1.0, 1.0)) / math.pi
        d_a[(norms == 0.0) | (t_norm == 0.0)] = 1.0
        if self.kind == "angular":
            return d_a.tolist()
        return (self.alpha * d_l + (1.0 - self.alpha) * d_a).tolist()

    def __call__(self, a: np.ndarray, b: np.ndarray) -> float:
        if self.kind == "euclidean":
            return euclidean_distance(a, b)
        if self.kind == "angular":
            return self._angular(a, b)
        d_l = euclidean_distance(a, b)
        if self.alpha == 1.0:
            return d_l
        return self.alpha * d_l + (1.0 - self.alpha) * self._angular(a, b)


@dataclass(frozen=True)
class Regulation:
    """Decreasing map from performance to unnormalised weight.

    ``"reciprocal"`` is ``1/p``, ``"neg_log"`` is ``-log p``. Inputs are
    floored at ``PERFORMANCE_FLOOR`` first.
    """

    kind: str = "reciprocal"

    def __post_init__(self):
        if self.kind not in ("reciprocal", "neg_log"):
            raise ValueError(f"unknown regulation kind {self.kind!r}")

    def __call__(self, p: float) -> float:
        p = max(float(p), PERFORMANCE_FLOOR)
        if self.kind == "reciprocal":
            return 1.0 / p
        return -math.log(p)


@dataclass
class FedTruthResult:
    truth: np.ndarray
    weights: list[float]
    performances: list[float]
    iterations: int
    objective_trace: list[float] = field(default_factory=list)
    distances: list[float] = field(default_factory=list)
    # per-iteration (weights, performances) for invariant checks
    weight_trace: list[list[float]] = field(default_factory=list, repr=False)
    performance_trace: list[list[float]] = field(default_factory=list, repr=False)
    converged: bool = False


def _deltas(updates: Sequence[ModelUpdate]) -> list[np.ndarray]:
    if len(updates) == 0:
        raise ValueError("no updates to aggregate")
    dim = updates[0].dim
    for u in updates:
        if u.dim != dim:
            raise DimensionError(f"client {u.client_id} update has dim {u.dim}, expected {dim}")
    return [u.delta for u in updates]


def update_matrix(updates: Sequence[ModelUpdate]) -> np.ndarray:
    """Stack update deltas row-wise (client order preserved)."""
    return np.vstack(_deltas(updates))


def _accumulate(matrix: np.ndarray, weights: Sequence[float]) -> np.ndarray:
    # same left-to-right order as weighted_sum, without per-call validation
    out = weights[0] * matrix[0]
    for w, row in zip(weights[1:], matrix[1:]):
        out += w * row
    return out


def fedavg(updates: Sequence[ModelUpdate]) -> tuple[np.ndarray, list[float]]:
    """Sample-count weighted mean of the update deltas."""
    deltas = _deltas(updates)
    total = sum(u.sample_count for u in updates)
    weights = [u.sample_count / total for u in updates]
    return weighted_sum(deltas, weights), weights


def _performances_from_distances(dists: Sequence[float]) -> list[float]:
    total = math.fsum(dists)
    if total == 0.0:
        return [1.0 / len(dists)] * len(dists)
    return [d / total for d in dists]


def compute_performances(truth: np.ndarray, updates: Sequence[ModelUpdate], dist: Distance = Distance()) -> list[float]:
    """Each update's share of the total distance to ``truth`` (smaller is better)."""
    matrix = update_matrix(updates)
    truth = as_vector(truth, "truth")
    if truth.shape[0] != matrix.shape[1]:
        raise DimensionError(f"truth has dim {truth.shape[0]}, updates have {matrix.shape[1]}")
    return _performances_from_distances(dist.rows(truth, matrix))


def compute_weights(performances: Sequence[float], reg: Regulation = Regulation()) -> list[float]:
    p = [float(x) for x in performances]
    if any(x < 0 for x in p) or abs(math.fsum(p) - 1.0) > 1e-9:
        raise ValueError("performances must be non-negative and sum to 1")
    g = [reg(x) for x in p]
    total = math.fsum(g)
    if total == 0.0:
        # only reachable with neg_log and a single p == 1
        return [1.0 / len(g)] * len(g)
    return [x / total for x in g]


def fedtruth(
    updates: Sequence[ModelUpdate],
    dist: Distance = Distance(),
    reg: Regulation = Regulation(),
    tol: float = 1e-6,
    max_iter: int = 100,
) -> FedTruthResult:
    """Estimate the true global update by coordinate descent.

    Starts from uniform weights (the plain mean). Each iteration recomputes
    the truth from the current weights, then the performances and weights
    from that truth, and stops once the truth moves less than ``tol``.
    The returned weights and performances belong to the returned truth.
    """
    if tol <= 0 or max_iter < 1:
        raise ValueError("tol must be positive and max_iter at least 1")
    matrix = update_matrix(updates)
    n = matrix.shape[0]
    weights = [1.0 / n] * n
    res = FedTruthResult(truth=None, weights=weights, performances=[], iterations=0)
    prev = None
    for it in range(1, max_iter + 1):
        truth = _accumulate(matrix, weights)
        if not np.all(np.isfinite(truth)):
            raise FedTruthError(it, "non-finite truth estimate")
        dists = dist.rows(truth, matrix)
        perf = _performances_from_distances(dists)
        weights = compute_weights(perf, reg)
        objective = math.fsum(reg(p) * d for p, d in zip(perf, dists))
        if not math.isfinite(objective):
            raise FedTruthError(it, "non-finite objective")

        res.truth, res.weights, res.performances, res.distances = truth, weights, perf, dists
        res.iterations = it
        res.objective_trace.append(objective)
        res.weight_trace.append(weights)
        res.performance_trace.append(perf)
        if prev is not None and float(np.linalg.norm(truth - prev)) < tol:
            res.converged = True
            break
        prev = truth
    return res
