"""Small softmax classifiers with hand-written gradients and plain SGD.

Parameters live in one flat vector so that client updates can be compared
directly. Layout (row-major blocks):

* linear: ``W (input_dim x C) | b (C)``
* mlp:    ``W1 (input_dim x H) | b1 (H) | W2 (H x C) | b2 (C)`` with tanh hidden units
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .params import DimensionError, ModelUpdate, as_vector

__all__ = [
    "ModelSpec",
    "TrainConfig",
    "TrainingDivergedError",
    "init_params",
    "forward",
    "loss_and_gradient",
    "local_train",
    "evaluate_accuracy",
    "apply_server_step",
]


class TrainingDivergedError(ArithmeticError):
    def __init__(self, epoch: int, batch: int, client_id: int | None = None):
        who = "" if client_id is None else f"client {client_id}, "
        super().__init__(f"non-finite loss ({who}epoch {epoch}, batch {batch})")
        self.epoch = epoch
        self.batch = batch
        self.client_id = client_id


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "linear"
    input_dim: int = 20
    num_classes: int = 10
    hidden_units: int | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "mlp"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.input_dim < 1 or self.num_classes < 2:
            raise ValueError("input_dim >= 1 and num_classes >= 2 required")
        if self.kind == "mlp":
            if self.hidden_units is None or self.hidden_units < 1:
                raise ValueError("mlp needs a positive hidden_units")
        elif self.hidden_units is not None:
            raise ValueError("hidden_units only applies to the mlp kind")

    def shapes(self) -> list[tuple[int, ...]]:
        d, c = self.input_dim, self.num_classes
        if self.kind == "linear":
            return [(d, c), (c,)]
        h = self.hidden_units
        return [(d, h), (h,), (h, c), (c,)]

    @property
    def num_params(self) -> int:
        return sum(math.prod(s) for s in self.shapes())

    def unflatten(self, params: np.ndarray) -> list[np.ndarray]:
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.num_params,):
            raise DimensionError(f"expected {self.num_params} parameters, got {params.shape}")
        out, pos = [], 0
        for s in self.shapes():
            n = math.prod(s)
            out.append(params[pos:pos + n].reshape(s))
            pos += n
        return out

    def flatten(self, blocks) -> np.ndarray:
        return np.concatenate([np.asarray(b, dtype=np.float64).ravel() for b in blocks])


@dataclass(frozen=True)
class TrainConfig:
    local_epochs: int = 10
    batch_size: int = 64
    learning_rate: float = 0.001
    seed: int = 0

    def __post_init__(self):
        if self.local_epochs < 1 or self.batch_size < 1:
            raise ValueError("local_epochs and batch_size must be positive")
        if not (self.learning_rate >= 0 and math.isfinite(self.learning_rate)):
            raise ValueError("learning_rate must be finite and non-negative")


def init_params(spec: ModelSpec, seed: int = 0) -> np.ndarray:
    """Zeros for the linear model; scaled Gaussian hidden weights for the MLP."""
    if spec.kind == "linear":
        return np.zeros(spec.num_params)
    rng = np.random.default_rng(seed)
    w1 = rng.standard_normal((spec.input_dim, spec.hidden_units)) / math.sqrt(spec.input_dim)
    w2 = rng.standard_normal((spec.hidden_units, spec.num_classes)) / math.sqrt(spec.hidden_units)
    return spec.flatten([w1, np.zeros(spec.hidden_units), w2, np.zeros(spec.num_classes)])


def forward(spec: ModelSpec, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Class logits for a batch of feature rows."""
    blocks = spec.unflatten(params)
    if spec.kind == "linear":
        w, b = blocks
        return x @ w + b
    w1, b1, w2, b2 = blocks
    return np.tanh(x @ w1 + b1) @ w2 + b2


def _softmax_xent(logits: np.ndarray, labels: np.ndarray):
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    n = labels.shape[0]
    loss = float(np.mean(log_z - shifted[np.arange(n), labels]))
    probs = np.exp(shifted - log_z[:, None])
    probs[np.arange(n), labels] -= 1.0
    return loss, probs / n


def loss_and_gradient(spec: ModelSpec, params: np.ndarray, batch: LabeledDataset):
    """Mean cross-entropy over ``batch`` and its gradient w.r.t. ``params``."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    if batch.input_dim != spec.input_dim:
        raise DimensionError(f"batch has {batch.input_dim} features, model expects {spec.input_dim}")
    x, y = batch.features, batch.labels
    blocks = spec.unflatten(params)
    if spec.kind == "linear":
        w, b = blocks
        loss, g_logits = _softmax_xent(x @ w + b, y)
        return loss, spec.flatten([x.T @ g_logits, g_logits.sum(axis=0)])

    w1, b1, w2, b2 = blocks
    hidden = np.tanh(x @ w1 + b1)
    loss, g_logits = _softmax_xent(hidden @ w2 + b2, y)
    g_hidden = (g_logits @ w2.T) * (1.0 - hidden**2)
    grad = spec.flatten([x.T @ g_hidden, g_hidden.sum(axis=0), hidden.T @ g_logits, g_logits.sum(axis=0)])
    return loss, grad


def epoch_rng(seed: int, client_id: int, round_idx: int, epoch: int) -> np.random.Generator:
    """Shuffling stream for one client, round and epoch."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(client_id, round_idx, epoch)))


def local_train(
    spec: ModelSpec,
    global_params: np.ndarray,
    data: LabeledDataset,
    cfg: TrainConfig,
    client_id: int = 0,
    round_idx: int = 0,
) -> ModelUpdate:
    """Run mini-batch SGD from ``global_params``; return ``global - trained``."""
    if len(data) == 0:
        raise ValueError(f"client {client_id} has an empty dataset")
    w0 = as_vector(global_params, "global_params")
    if w0.shape[0] != spec.num_params:
        raise DimensionError(f"expected {spec.num_params} parameters, got {w0.shape[0]}")
    w = w0.copy()
    n = len(data)
    for epoch in range(cfg.local_epochs):
        order = epoch_rng(cfg.seed, client_id, round_idx, epoch).permutation(n)
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            loss, grad = loss_and_gradient(spec, w, data.subset(order[start:start + cfg.batch_size]))
            if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise TrainingDivergedError(epoch, b, client_id)
            w -= cfg.learning_rate * grad
    return ModelUpdate(client_id=client_id, delta=w0 - w, sample_count=n)


def evaluate_accuracy(spec: ModelSpec, params: np.ndarray, data: LabeledDataset) -> float:
    """Fraction of correct argmax predictions; ties go to the lowest class index."""
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    pred = np.argmax(forward(spec, params, data.features), axis=1)
    return float(np.mean(pred == data.labels))


def apply_server_step(w: np.ndarray, delta: np.ndarray, eta: float) -> np.ndarray:
    w, delta = as_vector(w, "w"), as_vector(delta, "delta")
    if w.shape != delta.shape:
        raise DimensionError(f"dimension mismatch: {w.shape[0]} vs {delta.shape[0]}")
    return w - eta * delta
