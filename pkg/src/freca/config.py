"""YAML experiment configs with named case presets.

A config file is a mapping whose top-level ``case`` key picks a preset; every
other key overrides the preset section by section. Unknown keys are errors.
``dump_config`` writes the fully resolved form, which parses back to an
equal ``ExperimentConfig``.

Schema (all keys optional except where a preset is missing)::

    case: case1 | case2 | case3 | case4 | case5 | custom
    master_seed: int
    rounds: int
    clients_per_round: float in (0, 1]
    server_eta: float
    validation_fraction: float in (0, 1)
    metrics: [aw, net, sv, loo]
    model: {kind: linear | mlp, hidden_units: int | null}
    train: {local_epochs, batch_size, learning_rate}
    data: {source: synthetic, input_dim, num_classes, cluster_spread, samples}
        | {source: idx, images: path, labels: path, num_classes, input_dim}
    partition: {clients, samples_per_client, labels_per_client: [int] | null}
    attack: null | {attackers: [int], kind: boost | gaussian, factor, sigma}
    aggregator: {kind: fedavg | fedtruth, distance: euclidean | angular | hybrid,
                 alpha, regulation: reciprocal | neg_log, tol, max_iter}
"""
from __future__ import annotations

import copy
from pathlib import Path
from typing import Any

import yaml

from .aggregation import Distance, Regulation
from .attacks import AttackSpec
from .data import PartitionSpec, SyntheticSpec
from .model import ModelSpec, TrainConfig
from .orchestrator import METRICS, AggregatorSpec, ExperimentConfig, IdxSource

__all__ = ["ConfigError", "CASES", "preset", "config_from_dict", "config_to_dict", "parse_config", "dump_config"]


class ConfigError(ValueError):
    pass


_BASE: dict[str, Any] = {
    "case": "custom",
    "master_seed": 0,
    "rounds": 10,
    "clients_per_round": 1.0,
    "server_eta": 1.0,
    "validation_fraction": 0.2,
    "metrics": list(METRICS),
    "model": {"kind": "linear", "hidden_units": None},
    "train": {"local_epochs": 10, "batch_size": 64, "learning_rate": 0.001},
    "data": {"source": "synthetic", "input_dim": 20, "num_classes": 10, "cluster_spread": 0.5, "samples": 12000},
    "partition": {"clients": 8, "samples_per_client": 400, "labels_per_client": None},
    "attack": None,
    "aggregator": {
        "kind": "fedtruth",
        "distance": "euclidean",
        "alpha": 0.5,
        "regulation": "reciprocal",
        "tol": 1e-6,
        "max_iter": 100,
    },
}

_IDX_DATA = {"source": "idx", "images": None, "labels": None, "num_classes": 10, "input_dim": 784}
_ATTACK = {"attackers": [], "kind": "boost", "factor": 10.0, "sigma": 1.0}


def _boost(ids):
    return {"attackers": list(ids), "kind": "boost", "factor": 10.0, "sigma": 1.0}


CASES: dict[str, dict[str, Any]] = {
    "custom": {},
    "case1": {"partition": {"labels_per_client": [1, 2, 3, 4, 6, 8, 9, 10]}},
    "case2": {"partition": {"labels_per_client": [1, 1, 1, 1, 1, 1, 2, 2]}},
    "case3": {"attack": _boost([7])},
    "case4": {"attack": _boost([6, 7])},
    "case5": {"attack": _boost([5, 6, 7])},
}


def _merge(base: dict, override: dict, path: str, template: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in template:
            raise ConfigError(f"unknown config key {where!r}")
        sub = template[key]
        if isinstance(sub, dict) and isinstance(value, dict):
            out[key] = _merge(out.get(key) or sub, value, where, sub)
        else:
            out[key] = copy.deepcopy(value)
    return out


def preset(case: str) -> dict[str, Any]:
    if case not in CASES:
        raise ConfigError(f"unknown case {case!r}; choose one of {sorted(CASES)}")
    merged = _merge(_BASE, CASES[case], "", _TEMPLATE)
    merged["case"] = case
    return merged


def _template() -> dict:
    t = copy.deepcopy(_BASE)
    t["data"] = {**t["data"], **_IDX_DATA}
    t["attack"] = dict(_ATTACK)
    return t


_TEMPLATE = _template()


def _get(d: dict, key: str, kind, path: str):
    value = d.get(key)
    where = f"{path}.{key}" if path else key
    try:
        if kind is int:
            if isinstance(value, bool) or float(value) != int(value):
                raise ValueError
            return int(value)
        if kind is float:
            if isinstance(value, bool):
                raise ValueError
            return float(value)
        if kind is str:
            if not isinstance(value, str):
                raise ValueError
            return value
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected {kind.__name__}, got {value!r}") from None
    raise AssertionError(kind)


def config_from_dict(raw: dict[str, Any]) -> ExperimentConfig:
    """Expand the preset named by ``raw['case']`` and apply ``raw`` on top."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    case = raw.get("case", "custom")
    base = preset(case)
    data_override = raw.get("data")
    if isinstance(data_override, dict) and data_override.get("source") == "idx":
        base["data"] = dict(_IDX_DATA)
    if isinstance(raw.get("attack"), dict) and base["attack"] is None:
        base["attack"] = dict(_ATTACK)
    d = _merge(base, raw, "", _TEMPLATE)
    d["case"] = case

    try:
        return _build(d)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _section(d: dict, key: str) -> dict:
    sec = d.get(key)
    if not isinstance(sec, dict):
        raise ConfigError(f"{key}: expected a mapping, got {sec!r}")
    return sec


def _build(d: dict) -> ExperimentConfig:
    data_d = _section(d, "data")
    source = data_d.get("source")
    allowed = set(_IDX_DATA) if source == "idx" else set(_BASE["data"])
    stray = sorted(set(data_d) - allowed)
    if stray:
        raise ConfigError(f"data.{stray[0]} is not valid for source {source!r}")
    if source == "synthetic":
        data = SyntheticSpec(
            input_dim=_get(data_d, "input_dim", int, "data"),
            num_classes=_get(data_d, "num_classes", int, "data"),
            cluster_spread=_get(data_d, "cluster_spread", float, "data"),
            samples=_get(data_d, "samples", int, "data"),
        )
        input_dim = data.input_dim
    elif source == "idx":
        data = IdxSource(
            images=_get(data_d, "images", str, "data"),
            labels=_get(data_d, "labels", str, "data"),
            num_classes=_get(data_d, "num_classes", int, "data"),
        )
        input_dim = _get(data_d, "input_dim", int, "data")
    else:
        raise ConfigError(f"data.source: expected 'synthetic' or 'idx', got {source!r}")

    model_d = _section(d, "model")
    hidden = model_d.get("hidden_units")
    model = ModelSpec(
        kind=_get(model_d, "kind", str, "model"),
        input_dim=input_dim,
        num_classes=data.num_classes,
        hidden_units=None if hidden is None else _get(model_d, "hidden_units", int, "model"),
    )
    train_d = _section(d, "train")
    train = TrainConfig(
        local_epochs=_get(train_d, "local_epochs", int, "train"),
        batch_size=_get(train_d, "batch_size", int, "train"),
        learning_rate=_get(train_d, "learning_rate", float, "train"),
    )
    part_d = _section(d, "partition")
    counts = part_d.get("labels_per_client")
    if counts is not None and not isinstance(counts, list):
        raise ConfigError(f"partition.labels_per_client: expected a list, got {counts!r}")
    part = PartitionSpec(
        clients=_get(part_d, "clients", int, "partition"),
        samples_per_client=_get(part_d, "samples_per_client", int, "partition"),
        labels_per_client=None if counts is None else tuple(
            _get({"v": c}, "v", int, "partition.labels_per_client") for c in counts
        ),
    )
    attack = None
    if d.get("attack") is not None:
        a = _section(d, "attack")
        ids = a.get("attackers")
        if not isinstance(ids, list):
            raise ConfigError(f"attack.attackers: expected a list, got {ids!r}")
        attack = AttackSpec(
            attacker_ids=frozenset(_get({"v": i}, "v", int, "attack.attackers") for i in ids),
            kind=_get(a, "kind", str, "attack"),
            factor=_get(a, "factor", float, "attack"),
            sigma=_get(a, "sigma", float, "attack"),
        )
    agg_d = _section(d, "aggregator")
    aggregator = AggregatorSpec(
        kind=_get(agg_d, "kind", str, "aggregator"),
        distance=Distance(_get(agg_d, "distance", str, "aggregator"), _get(agg_d, "alpha", float, "aggregator")),
        regulation=Regulation(_get(agg_d, "regulation", str, "aggregator")),
        tol=_get(agg_d, "tol", float, "aggregator"),
        max_iter=_get(agg_d, "max_iter", int, "aggregator"),
    )
    metrics = d.get("metrics")
    if not isinstance(metrics, list) or any(m not in METRICS for m in metrics):
        raise ConfigError(f"metrics: expected a list drawn from {list(METRICS)}, got {metrics!r}")
    return ExperimentConfig(
        model=model,
        train=train,
        data=data,
        partition=part,
        case=d["case"],
        attack=attack,
        aggregator=aggregator,
        rounds=_get(d, "rounds", int, ""),
        clients_per_round=_get(d, "clients_per_round", float, ""),
        server_eta=_get(d, "server_eta", float, ""),
        metrics=tuple(metrics),
        master_seed=_get(d, "master_seed", int, ""),
        validation_fraction=_get(d, "validation_fraction", float, ""),
    )


def config_to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    """Fully resolved, JSON/YAML-safe form of ``cfg``."""
    if isinstance(cfg.data, IdxSource):
        data = {"source": "idx", "images": cfg.data.images, "labels": cfg.data.labels,
                "num_classes": cfg.data.num_classes, "input_dim": cfg.model.input_dim}
    else:
        data = {"source": "synthetic", "input_dim": cfg.data.input_dim, "num_classes": cfg.data.num_classes,
                "cluster_spread": cfg.data.cluster_spread, "samples": cfg.data.samples}
    attack = None
    if cfg.attack is not None:
        attack = {"attackers": sorted(cfg.attack.attacker_ids), "kind": cfg.attack.kind,
                  "factor": cfg.attack.factor, "sigma": cfg.attack.sigma}
    counts = cfg.partition.labels_per_client
    return {
        "case": cfg.case,
        "master_seed": cfg.master_seed,
        "rounds": cfg.rounds,
        "clients_per_round": cfg.clients_per_round,
        "server_eta": cfg.server_eta,
        "validation_fraction": cfg.validation_fraction,
        "metrics": list(cfg.metrics),
        "model": {"kind": cfg.model.kind, "hidden_units": cfg.model.hidden_units},
        "train": {"local_epochs": cfg.train.local_epochs, "batch_size": cfg.train.batch_size,
                  "learning_rate": cfg.train.learning_rate},
        "data": data,
        "partition": {"clients": cfg.partition.clients, "samples_per_client": cfg.partition.samples_per_client,
                      "labels_per_client": None if counts is None else list(counts)},
        "attack": attack,
        "aggregator": {"kind": cfg.aggregator.kind, "distance": cfg.aggregator.distance.kind,
                       "alpha": cfg.aggregator.distance.alpha, "regulation": cfg.aggregator.regulation.kind,
                       "tol": cfg.aggregator.tol, "max_iter": cfg.aggregator.max_iter},
    }


def load_raw(path) -> dict[str, Any]:
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"{path}: parse error{where}: {problem}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return raw


def parse_config(path, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Read a YAML config; ``overrides`` replace top-level keys before expansion."""
    raw = load_raw(path)
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return config_from_dict(raw)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def dump_config(cfg: ExperimentConfig, path=None) -> str:
    text = yaml.safe_dump(config_to_dict(cfg), sort_keys=False)
    if path is not None:
        Path(path).write_text(text)
    return text
