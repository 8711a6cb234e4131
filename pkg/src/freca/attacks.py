"""Byzantine client behaviours: update boosting and Gaussian-noise updates."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .params import ModelUpdate

__all__ = ["AttackSpec", "AttackConfigError", "boost_update", "gaussian_noise_update", "apply_attacks"]


class AttackConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AttackSpec:
    """Which clients misbehave and how.

    ``kind="boost"`` multiplies the honestly trained delta by ``factor``;
    ``kind="gaussian"`` replaces it with N(0, sigma^2) noise.
    """

    attacker_ids: frozenset[int] = frozenset()
    kind: str = "boost"
    factor: float = 10.0
    sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "attacker_ids", frozenset(int(i) for i in self.attacker_ids))
        if self.kind not in ("boost", "gaussian"):
            raise AttackConfigError(f"unknown attack kind {self.kind!r}")
        if self.kind == "boost" and not (math.isfinite(self.factor) and self.factor > 0):
            raise AttackConfigError(f"boost factor must be finite and positive, got {self.factor}")
        if self.kind == "gaussian" and not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise AttackConfigError(f"sigma must be finite and non-negative, got {self.sigma}")


def boost_update(u: ModelUpdate, factor: float) -> ModelUpdate:
    if not (math.isfinite(factor) and factor > 0):
        raise AttackConfigError(f"boost factor must be finite and positive, got {factor}")
    return replace(u, delta=u.delta * factor)


def gaussian_noise_update(dim: int, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if dim < 1 or sigma < 0:
        raise AttackConfigError("dim must be >= 1 and sigma >= 0")
    return sigma * rng.standard_normal(dim)


def apply_attacks(updates: Sequence[ModelUpdate], spec: AttackSpec | None, round_idx: int) -> list[ModelUpdate]:
    """Replace attacker entries; honest entries are passed through untouched."""
    updates = list(updates)
    if spec is None or not spec.attacker_ids:
        return updates
    present = {u.client_id for u in updates}
    missing = sorted(spec.attacker_ids - present)
    if missing:
        raise AttackConfigError(f"attacker ids {missing} are not among the round's updates")
    out = []
    for u in updates:
        if u.client_id not in spec.attacker_ids:
            out.append(u)
        elif spec.kind == "boost":
            out.append(boost_update(u, spec.factor))
        else:
            rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(u.client_id, round_idx)))
            out.append(replace(u, delta=gaussian_noise_update(u.dim, spec.sigma, rng)))
    return out
