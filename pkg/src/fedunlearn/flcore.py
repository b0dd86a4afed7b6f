"""Minimal federated averaging engine.

Clients run local mini-batch SGD against a shared architecture and report the
parameter delta; the server combines deltas by weighted mean and applies the
result.  Everything is deterministic given explicit seeds.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .data import ClientDataset
from .models import Architecture

__all__ = [
    "DivergenceError",
    "GlobalModel",
    "ModelUpdate",
    "TrainConfig",
    "apply_update",
    "evaluate",
    "fedavg_aggregate",
    "load_model",
    "local_train",
    "save_model",
]

_CKPT_MAGIC = b"FUM1"


class DivergenceError(RuntimeError):
    """Local training produced non-finite parameters."""


@dataclass(frozen=True, eq=False)
class GlobalModel:
    """Flat parameter vector plus its round counter (0 = initial weights)."""

    weights: np.ndarray
    arch: Architecture
    round: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "weights", np.asarray(self.weights, dtype=np.float64)
        )
        if self.weights.shape != (self.arch.n_params,):
            raise ValueError("weight vector does not match the architecture")
        if self.round < 0:
            raise ValueError("round must be non-negative")


@dataclass(frozen=True, eq=False)
class ModelUpdate:
    """Parameter delta (trained weights minus the incoming global weights)."""

    delta: np.ndarray
    client_id: str
    round: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "delta", np.asarray(self.delta, dtype=np.float64))
        if self.delta.ndim != 1:
            raise ValueError("update delta must be a flat vector")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    local_epochs: int = 5
    batch_size: int = 16
    rounds: int = 20
    clients: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.rounds < 1:
            raise ValueError("rounds must be at least 1")
        if self.clients < 2:
            raise ValueError("need at least 2 clients")


def _resolve_np_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def local_train(
    model: GlobalModel,
    data: ClientDataset,
    cfg: TrainConfig,
    rng=None,
    epochs: int | None = None,
) -> ModelUpdate:
    """Mini-batch SGD from the incoming weights; returns the parameter delta.

    ``epochs`` overrides ``cfg.local_epochs`` (0 is allowed and yields a zero
    update, useful for debugging).  Batch order is drawn from ``rng``.
    """
    gen = _resolve_np_rng(rng)
    n_epochs = cfg.local_epochs if epochs is None else epochs
    if n_epochs < 0:
        raise ValueError("epochs must be non-negative")
    w = model.weights.copy()
    n = len(data)
    for _ in range(n_epochs):
        order = gen.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            _, grad = model.arch.loss_and_grad(w, data.X[batch], data.y[batch])
            w -= cfg.learning_rate * grad
    if not np.isfinite(w).all():
        raise DivergenceError(f"client {data.client_id} diverged during local training")
    return ModelUpdate(delta=w - model.weights, client_id=data.client_id, round=model.round)


def batches_per_round(data: ClientDataset, cfg: TrainConfig, epochs: int | None = None) -> int:
    """Number of SGD steps a local_train call performs (for cost accounting)."""
    n_epochs = cfg.local_epochs if epochs is None else epochs
    per_epoch = -(-len(data) // cfg.batch_size)
    return n_epochs * per_epoch


def fedavg_aggregate(updates, weights) -> ModelUpdate:
    """Weighted mean of update deltas: sum(w_k * U_k) / sum(w_k)."""
    updates = list(updates)
    if not updates:
        raise ValueError("nothing to aggregate")
    dim = updates[0].delta.shape[0]
    total_weight = 0.0
    acc = np.zeros(dim)
    for upd in updates:
        if upd.delta.shape[0] != dim:
            raise ValueError("update dimension mismatch")
        w = float(weights[upd.client_id])
        if not w > 0:
            raise ValueError("aggregation weights must be positive")
        acc += w * upd.delta
        total_weight += w
    return ModelUpdate(delta=acc / total_weight, client_id="server", round=updates[0].round)


def apply_update(model: GlobalModel, update: ModelUpdate) -> GlobalModel:
    """Add the aggregated delta and advance the round counter."""
    if update.delta.shape != model.weights.shape:
        raise ValueError("update dimension mismatch")
    return GlobalModel(
        weights=model.weights + update.delta, arch=model.arch, round=model.round + 1
    )


def evaluate(model: GlobalModel, X, y) -> tuple[float, float]:
    """(accuracy, mean cross-entropy) on the given examples."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise ValueError("empty evaluation set")
    predictions = model.arch.predict(model.weights, X)
    accuracy = float((predictions == y).mean())
    loss = model.arch.loss(model.weights, X, y)
    return accuracy, loss


def save_model(model: GlobalModel, path) -> None:
    """Length-prefixed binary checkpoint; round trips are bit-exact."""
    arch = model.arch
    kind = arch.kind.encode("ascii")
    act = arch.activation.encode("ascii")
    blob = b"".join(
        [
            _CKPT_MAGIC,
            struct.pack("<I", len(kind)),
            kind,
            struct.pack("<QQQ", arch.n_features, arch.n_classes, arch.hidden),
            struct.pack("<I", len(act)),
            act,
            struct.pack("<Q", model.round),
            struct.pack("<Q", model.weights.size),
            model.weights.astype("<f8", copy=False).tobytes(),
        ]
    )
    with open(path, "wb") as fh:
        fh.write(blob)


def load_model(path) -> GlobalModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _CKPT_MAGIC:
        raise ValueError("bad checkpoint magic")
    offset = 4
    (kind_len,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    kind = blob[offset : offset + kind_len].decode("ascii")
    offset += kind_len
    n_features, n_classes, hidden = struct.unpack_from("<QQQ", blob, offset)
    offset += 24
    (act_len,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    activation = blob[offset : offset + act_len].decode("ascii")
    offset += act_len
    (round_,) = struct.unpack_from("<Q", blob, offset)
    offset += 8
    (count,) = struct.unpack_from("<Q", blob, offset)
    offset += 8
    weights = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).copy()
    if offset + 8 * count != len(blob):
        raise ValueError("trailing bytes in checkpoint")
    arch = Architecture(
        kind=kind,
        n_features=int(n_features),
        n_classes=int(n_classes),
        hidden=int(hidden),
        activation=activation,
    )
    return GlobalModel(weights=weights, arch=arch, round=int(round_))
