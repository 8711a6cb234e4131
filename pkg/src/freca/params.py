"""Flat parameter-vector arithmetic and distance functions.

Every model parameter set and every client update is handled as a 1-D
``float64`` numpy array. The helpers here validate shapes and finiteness so
the aggregation and contribution code can stay free of defensive checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "DimensionError",
    "ZeroNormError",
    "NonFiniteError",
    "ModelUpdate",
    "as_vector",
    "weighted_sum",
    "euclidean_distance",
    "angular_distance",
    "hybrid_distance",
]


class DimensionError(ValueError):
    """Raised when vectors of different length are combined."""


class ZeroNormError(ValueError):
    """Raised when a direction is requested from a zero vector."""


class NonFiniteError(ValueError):
    """Raised when a NaN or infinity shows up where finite values are required."""


def as_vector(values, name: str = "vector") -> np.ndarray:
    """Return ``values`` as a finite 1-D float64 array (no copy if already one)."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DimensionError(f"{name} must be a non-empty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return v


def _check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")


@dataclass(frozen=True)
class ModelUpdate:
    """One client's update for one round.

    ``delta`` follows the convention ``global_params - trained_params``.
    """

    client_id: int
    delta: np.ndarray
    sample_count: int

    def __post_init__(self):
        object.__setattr__(self, "delta", as_vector(self.delta, "delta"))
        if int(self.sample_count) < 1:
            raise ValueError(f"sample_count must be >= 1, got {self.sample_count}")

    @property
    def dim(self) -> int:
        return self.delta.shape[0]


def weighted_sum(vectors: Sequence[np.ndarray], weights: Sequence[float]) -> np.ndarray:
    """Component-wise ``sum_k weights[k] * vectors[k]``.

    Terms are accumulated strictly in list order so that results are
    bit-reproducible for a fixed input order.
    """
    if len(vectors) == 0:
        raise ValueError("weighted_sum needs at least one vector")
    if len(weights) != len(vectors):
        raise DimensionError(f"{len(vectors)} vectors but {len(weights)} weights")
    w = [float(x) for x in weights]
    if not all(math.isfinite(x) for x in w):
        raise NonFiniteError("weights must be finite")
    first = as_vector(vectors[0])
    out = w[0] * first
    for wk, vk in zip(w[1:], vectors[1:]):
        vk = as_vector(vk)
        _check_same_dim(first, vk)
        out += wk * vk
    return out


def euclidean_distance(a: np.ndarray, b: np.ndarray) -> float:
    a, b = as_vector(a), as_vector(b)
    _check_same_dim(a, b)
    diff = a - b
    scale = float(np.max(np.abs(diff)))
    if scale == 0.0:
        return 0.0
    # rescale so squaring cannot underflow or overflow
    return scale * float(np.linalg.norm(diff / scale))


def angular_distance(a: np.ndarray, b: np.ndarray) -> float:
    """``arccos(cos_sim(a, b)) / pi`` in [0, 1].

    Raises ZeroNormError if either vector is zero; a zero update has no
    direction, and callers choose the fallback.
    """
    a, b = as_vector(a), as_vector(b)
    _check_same_dim(a, b)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroNormError("angular distance undefined for a zero-norm vector")
    cos = float(np.dot(a, b) / (na * nb))
    cos = min(1.0, max(-1.0, cos))
    return math.acos(cos) / math.pi


def hybrid_distance(a: np.ndarray, b: np.ndarray, alpha: float) -> float:
    """Convex mix ``alpha * euclidean + (1 - alpha) * angular``."""
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    d_l = euclidean_distance(a, b)
    if alpha == 1.0:
        return d_l
    return alpha * d_l + (1.0 - alpha) * angular_distance(a, b)
