"""Per-client contribution metrics.

FRECA's two metrics (the converged FedTruth aggregation weight and the net
contribution derived from each client's share of the gap distance) need only
the round's updates. The Shapley value and leave-one-out baselines need a
utility oracle that rebuilds sub-models and scores them on validation data;
the oracle counts its evaluations so the cost difference can be asserted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .aggregation import PERFORMANCE_FLOOR, Distance, FedTruthResult, Regulation, fedavg, update_matrix
from .data import LabeledDataset
from .model import ModelSpec, apply_server_step, evaluate_accuracy
from .params import DimensionError, ModelUpdate

__all__ = [
    "METRIC_FIELDS",
    "ClientScores",
    "ContributionReport",
    "UtilityOracle",
    "freca_aw",
    "gap_distance",
    "loss_share",
    "net_contribution",
    "shapley_from_utility",
    "loo_from_utility",
    "shapley",
    "loo",
    "normalize_scores",
    "average_across_rounds",
    "build_report",
]

MAX_SHAPLEY_CLIENTS = 12

METRIC_FIELDS = (
    "aw", "gap_share", "net",
    "sv_raw", "sv_minmax", "sv_softmax",
    "loo_raw", "loo_minmax", "loo_softmax",
)


@dataclass
class ClientScores:
    """One client's metrics for one round; ``None`` where a metric was not computed."""

    aw: float | None = None
    gap_share: float | None = None
    net: float | None = None
    sv_raw: float | None = None
    sv_minmax: float | None = None
    sv_softmax: float | None = None
    loo_raw: float | None = None
    loo_minmax: float | None = None
    loo_softmax: float | None = None

    def as_dict(self) -> dict[str, float | None]:
        return {k: getattr(self, k) for k in METRIC_FIELDS}


@dataclass
class ContributionReport:
    round: int
    per_client: dict[int, ClientScores] = field(default_factory=dict)


@dataclass
class UtilityOracle:
    """Accuracy of ``base_model`` after one server step with the FedAvg of a subset.

    The empty subset scores ``base_model`` itself.
    """

    base_model: np.ndarray
    server_eta: float
    validation: LabeledDataset
    spec: ModelSpec
    evaluations: int = 0

    def __call__(self, subset: Sequence[ModelUpdate]) -> float:
        self.evaluations += 1
        if len(subset) == 0:
            return evaluate_accuracy(self.spec, self.base_model, self.validation)
        agg, _ = fedavg(subset)
        w = apply_server_step(self.base_model, agg, self.server_eta)
        return evaluate_accuracy(self.spec, w, self.validation)


def freca_aw(result: FedTruthResult) -> list[float]:
    """The FRECA performance metric is the converged FedTruth weight itself."""
    return list(result.weights)


def gap_distance(
    updates: Sequence[ModelUpdate],
    result: FedTruthResult,
    dist: Distance = Distance(),
    reg: Regulation = Regulation(),
) -> tuple[float, list[float]]:
    """Total and per-client regulated distance between the updates and the truth."""
    if len(updates) != len(result.performances):
        raise DimensionError(f"{len(updates)} updates but {len(result.performances)} performances")
    dists = dist.rows(result.truth, update_matrix(updates))
    per_client = [reg(p) * d for p, d in zip(result.performances, dists)]
    return math.fsum(per_client), per_client


def loss_share(per_client_gap: Sequence[float]) -> list[float]:
    gaps = [float(g) for g in per_client_gap]
    if not gaps:
        raise ValueError("no gap entries")
    if any(g < 0 for g in gaps):
        raise ValueError("gap entries must be non-negative")
    total = math.fsum(gaps)
    if total == 0.0:
        return [1.0 / len(gaps)] * len(gaps)
    return [g / total for g in gaps]


def net_contribution(shares: Sequence[float]) -> list[float]:
    """Contributions inversely proportional to the loss shares, summing to 1.

    This is the unique solution of ``sum(C) = 1`` with
    ``share_i / share_k = C_k / C_i``. Shares are floored at 1e-8 first.
    """
    s = [float(x) for x in shares]
    if not s or any(x < 0 for x in s) or abs(math.fsum(s) - 1.0) > 1e-9:
        raise ValueError("shares must be non-negative and sum to 1")
    inv = [1.0 / max(x, PERFORMANCE_FLOOR) for x in s]
    total = math.fsum(inv)
    return [x / total for x in inv]


def shapley_from_utility(n: int, utility: Callable[[int], float]) -> list[float]:
    """Exact Shapley values from a utility over subset bitmasks.

    ``utility(mask)`` is called exactly once per subset of ``range(n)``.
    """
    if n < 1:
        raise ValueError("need at least one player")
    if n > MAX_SHAPLEY_CLIENTS:
        raise ValueError(f"exact Shapley is capped at {MAX_SHAPLEY_CLIENTS} clients, got {n}")
    table = [utility(mask) for mask in range(1 << n)]
    popcount = [bin(mask).count("1") for mask in range(1 << n)]
    coef = [1.0 / (n * math.comb(n - 1, s)) for s in range(n)]
    values = []
    for k in range(n):
        bit = 1 << k
        terms = [
            coef[popcount[mask]] * (table[mask | bit] - table[mask])
            for mask in range(1 << n)
            if not mask & bit
        ]
        values.append(math.fsum(terms))
    return values


def loo_from_utility(n: int, utility: Callable[[int], float]) -> list[float]:
    """``U(all) - U(all minus k)``; ``utility`` is called ``n + 1`` times."""
    if n < 1:
        raise ValueError("need at least one player")
    full = (1 << n) - 1
    u_full = utility(full)
    return [u_full - utility(full & ~(1 << k)) for k in range(n)]


def _subset_utility(updates: Sequence[ModelUpdate], oracle: Callable[[Sequence[ModelUpdate]], float]):
    def utility(mask: int) -> float:
        return oracle([u for i, u in enumerate(updates) if mask >> i & 1])
    return utility


def shapley(updates: Sequence[ModelUpdate], oracle: UtilityOracle) -> list[float]:
    if len(updates) == 0:
        raise ValueError("no updates")
    return shapley_from_utility(len(updates), _subset_utility(updates, oracle))


def loo(updates: Sequence[ModelUpdate], oracle: UtilityOracle) -> list[float]:
    if len(updates) == 0:
        raise ValueError("no updates")
    return loo_from_utility(len(updates), _subset_utility(updates, oracle))


def normalize_scores(raw: Sequence[float], method: str = "minmax") -> list[float]:
    x = np.asarray(raw, dtype=np.float64)
    if x.size == 0:
        raise ValueError("no scores")
    if not np.all(np.isfinite(x)):
        raise ValueError("scores must be finite")
    if method == "minmax":
        lo, hi = x.min(), x.max()
        if hi == lo:
            return [0.5] * x.size
        return ((x - lo) / (hi - lo)).tolist()
    if method == "softmax":
        e = np.exp(x - x.max())
        return (e / e.sum()).tolist()
    raise ValueError(f"unknown scaling method {method!r}")


def average_across_rounds(reports: Iterable[ContributionReport]) -> dict[int, dict[str, float | None]]:
    """Per-client mean of each metric over the rounds the client took part in."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to average")
    sums: dict[int, dict[str, list[float]]] = {}
    for rep in reports:
        for cid, scores in rep.per_client.items():
            bucket = sums.setdefault(cid, {k: [] for k in METRIC_FIELDS})
            for k, v in scores.as_dict().items():
                if v is not None:
                    bucket[k].append(v)
    return {
        cid: {k: (math.fsum(v) / len(v) if v else None) for k, v in bucket.items()}
        for cid, bucket in sorted(sums.items())
    }


def build_report(
    round_idx: int,
    client_ids: Sequence[int],
    aw: Sequence[float] | None = None,
    gap_share: Sequence[float] | None = None,
    net: Sequence[float] | None = None,
    sv: Sequence[float] | None = None,
    loo_values: Sequence[float] | None = None,
) -> ContributionReport:
    """Assemble a round report, scaling SV and LOO both ways."""
    cols: Mapping[str, Sequence[float] | None] = {
        "aw": aw,
        "gap_share": gap_share,
        "net": net,
        "sv_raw": sv,
        "sv_minmax": None if sv is None else normalize_scores(sv, "minmax"),
        "sv_softmax": None if sv is None else normalize_scores(sv, "softmax"),
        "loo_raw": loo_values,
        "loo_minmax": None if loo_values is None else normalize_scores(loo_values, "minmax"),
        "loo_softmax": None if loo_values is None else normalize_scores(loo_values, "softmax"),
    }
    per_client = {}
    for i, cid in enumerate(client_ids):
        per_client[int(cid)] = ClientScores(
            **{k: (None if v is None else float(v[i])) for k, v in cols.items()}
        )
    return ContributionReport(round=round_idx, per_client=per_client)
