"""The federated round loop and experiment driver.

Randomness is split into independent named streams derived from the single
``master_seed``: a stream for stream name ``s`` is seeded with
``SeedSequence(master_seed, spawn_key=(STREAMS[s],))``. Finer keys (client,
round, epoch) are appended as further spawn-key entries by the consumers, so
changing one knob never perturbs the randomness of another.
"""
from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .aggregation import Distance, FedTruthResult, Regulation, fedavg, fedtruth
from .attacks import AttackSpec, apply_attacks
from .contribution import (
    ContributionReport,
    UtilityOracle,
    average_across_rounds,
    build_report,
    freca_aw,
    gap_distance,
    loo,
    loss_share,
    net_contribution,
    shapley,
)
from .data import LabeledDataset, PartitionSpec, SyntheticSpec, generate_blobs, load_idx, partition
from .model import ModelSpec, TrainConfig, apply_server_step, init_params, local_train

__all__ = [
    "STREAMS",
    "METRICS",
    "IdxSource",
    "AggregatorSpec",
    "ExperimentConfig",
    "ExperimentState",
    "RoundRecord",
    "ExperimentReport",
    "ExperimentError",
    "derive_seed",
    "select_clients",
    "prepare",
    "run_round",
    "run_experiment",
]

STREAMS = {"data": 1, "partition": 2, "train": 3, "select": 4, "attack": 5, "init": 6, "validation": 7}
METRICS = ("aw", "net", "sv", "loo")


class ExperimentError(RuntimeError):
    pass


def derive_seed(master_seed: int, stream: str) -> int:
    ss = np.random.SeedSequence(master_seed, spawn_key=(STREAMS[stream],))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class IdxSource:
    images: str
    labels: str
    num_classes: int = 10


@dataclass(frozen=True)
class AggregatorSpec:
    kind: str = "fedtruth"
    distance: Distance = Distance()
    regulation: Regulation = Regulation()
    tol: float = 1e-6
    max_iter: int = 100

    def __post_init__(self):
        if self.kind not in ("fedavg", "fedtruth"):
            raise ValueError(f"unknown aggregator {self.kind!r}")
        if not self.tol > 0 or self.max_iter < 1:
            raise ValueError("tol must be positive and max_iter at least 1")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a run.

    Per-stream seeds inside ``data``, ``partition``, ``train`` and ``attack``
    are ignored; they are re-derived from ``master_seed`` at run time.
    """

    model: ModelSpec = ModelSpec()
    train: TrainConfig = TrainConfig()
    data: SyntheticSpec | IdxSource = SyntheticSpec()
    partition: PartitionSpec = PartitionSpec()
    case: str = "custom"
    attack: AttackSpec | None = None
    aggregator: AggregatorSpec = AggregatorSpec()
    rounds: int = 10
    clients_per_round: float = 1.0
    server_eta: float = 1.0
    metrics: tuple[str, ...] = METRICS
    master_seed: int = 0
    validation_fraction: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "metrics", tuple(m for m in METRICS if m in set(self.metrics)))
        if self.rounds < 1:
            raise ValueError("rounds must be positive")
        if not 0.0 < self.clients_per_round <= 1.0:
            raise ValueError("clients_per_round must lie in (0, 1]")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if not math.isfinite(self.server_eta):
            raise ValueError("server_eta must be finite")
        if self.attack is not None:
            extra = sorted(self.attack.attacker_ids - set(range(self.partition.clients)))
            if extra:
                raise ValueError(f"attacker ids {extra} are not valid client ids")


@dataclass
class ExperimentState:
    params: np.ndarray
    clients: dict[int, LabeledDataset]
    validation: LabeledDataset
    seeds: dict[str, int]


@dataclass
class RoundRecord:
    round: int
    selected: list[int]
    update_norms: dict[int, float]
    fedtruth: FedTruthResult | None
    contribution: ContributionReport
    global_model_hash: str
    utility_evaluations: dict[str, int]


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rounds: list[RoundRecord]
    averages: dict[int, dict[str, float | None]]
    tool_version: str = __version__
    # wall-clock seconds per metric family per round; not part of the serialised report
    timings: list[dict[str, float]] = field(default_factory=list, compare=False)


def params_hash(w: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(w, dtype=np.float64).tobytes()).hexdigest()


def select_clients(pool, fraction: float, round_idx: int, seed: int) -> list[int]:
    """``ceil(fraction * len(pool))`` clients without replacement, sorted."""
    pool = sorted(int(c) for c in pool)
    if not pool:
        raise ValueError("empty client pool")
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    k = math.ceil(fraction * len(pool))
    if k == len(pool):
        return pool
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(round_idx,)))
    return sorted(int(c) for c in rng.choice(pool, size=k, replace=False))


def _load_source(cfg: ExperimentConfig, seeds) -> LabeledDataset:
    if isinstance(cfg.data, IdxSource):
        data = load_idx(cfg.data.images, cfg.data.labels, cfg.data.num_classes)
    else:
        data = generate_blobs(replace(cfg.data, seed=seeds["data"]))
    if data.input_dim != cfg.model.input_dim or data.num_classes != cfg.model.num_classes:
        raise ExperimentError(
            f"data has {data.input_dim} features / {data.num_classes} classes, "
            f"model expects {cfg.model.input_dim} / {cfg.model.num_classes}"
        )
    return data


def prepare(cfg: ExperimentConfig) -> ExperimentState:
    """Build the source data, carve off validation rows, partition the rest."""
    seeds = {name: derive_seed(cfg.master_seed, name) for name in STREAMS}
    data = _load_source(cfg, seeds)
    n = len(data)
    n_val = max(1, round(cfg.validation_fraction * n))
    order = np.random.default_rng(seeds["validation"]).permutation(n)
    validation = data.subset(np.sort(order[:n_val]))
    pool = data.subset(np.sort(order[n_val:]))
    parts = partition(pool, replace(cfg.partition, seed=seeds["partition"]))
    return ExperimentState(
        params=init_params(cfg.model, seeds["init"]),
        clients=dict(enumerate(parts)),
        validation=validation,
        seeds=seeds,
    )


def run_round(state: ExperimentState, cfg: ExperimentConfig, round_idx: int):
    """One FL round; returns ``(new_params, RoundRecord, timings)``.

    All metrics are computed from the same post-attack update list.
    """
    selected = select_clients(list(state.clients), cfg.clients_per_round, round_idx, state.seeds["select"])
    train = replace(cfg.train, seed=state.seeds["train"])
    updates = [
        local_train(cfg.model, state.params, state.clients[cid], train, client_id=cid, round_idx=round_idx)
        for cid in selected
    ]
    attack = cfg.attack
    if attack is not None:
        attack = replace(attack, attacker_ids=attack.attacker_ids & set(selected), seed=state.seeds["attack"])
    updates = apply_attacks(updates, attack, round_idx)

    agg = cfg.aggregator
    timings: dict[str, float] = {}
    ft: FedTruthResult | None = None
    need_freca = "aw" in cfg.metrics or "net" in cfg.metrics
    if agg.kind == "fedtruth" or need_freca:
        t0 = time.perf_counter()
        ft = fedtruth(updates, agg.distance, agg.regulation, agg.tol, agg.max_iter)
        timings["fedtruth"] = time.perf_counter() - t0
    if agg.kind == "fedtruth":
        global_update = ft.truth
    else:
        global_update, _ = fedavg(updates)
    new_params = apply_server_step(state.params, global_update, cfg.server_eta)

    oracle = UtilityOracle(state.params, cfg.server_eta, state.validation, cfg.model)
    evals: dict[str, int] = {}
    aw = shares = net = sv = loo_values = None
    if need_freca:
        t0 = time.perf_counter()
        before = oracle.evaluations
        aw = freca_aw(ft)
        _, gaps = gap_distance(updates, ft, agg.distance, agg.regulation)
        shares = loss_share(gaps)
        net = net_contribution(shares)
        evals["freca"] = oracle.evaluations - before
        timings["freca"] = time.perf_counter() - t0 + timings["fedtruth"]
    if "sv" in cfg.metrics:
        t0 = time.perf_counter()
        before = oracle.evaluations
        sv = shapley(updates, oracle)
        evals["sv"] = oracle.evaluations - before
        timings["sv"] = time.perf_counter() - t0
    if "loo" in cfg.metrics:
        t0 = time.perf_counter()
        before = oracle.evaluations
        loo_values = loo(updates, oracle)
        evals["loo"] = oracle.evaluations - before
        timings["loo"] = time.perf_counter() - t0

    report = build_report(
        round_idx,
        selected,
        aw=aw if "aw" in cfg.metrics else None,
        gap_share=shares if "net" in cfg.metrics else None,
        net=net if "net" in cfg.metrics else None,
        sv=sv,
        loo_values=loo_values,
    )
    record = RoundRecord(
        round=round_idx,
        selected=selected,
        update_norms={u.client_id: float(np.linalg.norm(u.delta)) for u in updates},
        fedtruth=ft,
        contribution=report,
        global_model_hash=params_hash(new_params),
        utility_evaluations=evals,
    )
    return new_params, record, timings


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    try:
        state = prepare(cfg)
    except Exception as exc:
        raise ExperimentError(f"setting up case {cfg.case!r}: {exc}") from exc
    records, timings = [], []
    for t in range(cfg.rounds):
        try:
            state.params, record, tm = run_round(state, cfg, t)
        except Exception as exc:
            raise ExperimentError(f"round {t} of case {cfg.case!r}: {exc}") from exc
        records.append(record)
        timings.append(tm)
    averages = average_across_rounds(r.contribution for r in records)
    return ExperimentReport(config=cfg, rounds=records, averages=averages, timings=timings)
