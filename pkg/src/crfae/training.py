"""SGD-with-momentum training: step-decayed learning rate, global-norm
gradient clipping, per-epoch dev evaluation with best-checkpoint retention.

The default mode is single-threaded and bit-deterministic per seed: sentence
order, dropout masks and parameter updates all flow from one seeded
generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import ParamStore, backward
from .evaluation import SpanScores, span_f1
from .model import EncodedSentence, Tagger


class TrainingDiverged(RuntimeError):
    """Non-finite loss or gradient encountered; training aborts."""


@dataclass
class TrainConfig:
    lr0: float = 0.015
    momentum: float = 0.9
    decay_factor: float = 0.8
    decay_every: int = 5
    clip_norm: float = 5.0
    epochs: int = 40
    batch_size: int = 10
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if not 0.0 < self.decay_factor <= 1.0:
            raise ValueError("decay_factor must be in (0, 1]")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if self.decay_every < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("decay_every, epochs and batch_size must be >= 1")

    def to_dict(self) -> dict:
        return {
            "lr0": self.lr0,
            "momentum": self.momentum,
            "decay_factor": self.decay_factor,
            "decay_every": self.decay_every,
            "clip_norm": self.clip_norm,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seeds": list(self.seeds),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "seeds" in d:
            d["seeds"] = tuple(d["seeds"])
        return cls(**d)


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Step decay: lr0 * decay_factor^floor(epoch / decay_every), 0-based epochs."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return cfg.lr0 * cfg.decay_factor ** (epoch // cfg.decay_every)


def clip_global_norm(grads: dict[str, np.ndarray], clip_norm: float) -> dict[str, np.ndarray]:
    """Scale all gradients in place so the global L2 norm is at most clip_norm."""
    total = 0.0
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient in parameter {name!r}")
        total += float((g.astype(np.float64) ** 2).sum())
    norm = math.sqrt(total)
    if norm > clip_norm:
        scale = clip_norm / norm
        for g in grads.values():
            g *= scale
    return grads


def sgd_momentum_step(
    params: ParamStore,
    grads: dict[str, np.ndarray],
    lr: float,
    momentum: float,
    velocity: dict[str, np.ndarray],
) -> None:
    """Classical momentum: v <- momentum*v - lr*g; theta <- theta + v."""
    for name, value in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(value.data)
        v = velocity.get(name)
        if v is None:
            v = np.zeros_like(value.data)
        v = momentum * v - lr * g
        velocity[name] = v
        value.data += v


def evaluate(model: Tagger, encoded: Sequence[EncodedSentence]) -> SpanScores:
    labels = model.vocab.labels
    gold = [[labels[i] for i in enc.gold_ids] for enc in encoded]
    pred = [model.predict_labels(enc) for enc in encoded]
    return span_f1(gold, pred)


@dataclass
class TrainResult:
    history: list[dict]
    best_state: dict[str, np.ndarray]
    best_dev_f1: float
    best_epoch: int
    velocity: dict[str, np.ndarray] = field(default_factory=dict, repr=False)


def train_step(
    model: Tagger,
    batch: Sequence[EncodedSentence],
    lr: float,
    cfg: TrainConfig,
    velocity: dict[str, np.ndarray],
    rng: np.random.Generator,
) -> dict[str, float]:
    """One batched update; returns summed loss components for bookkeeping."""
    model.params.zero_grad()
    totals: dict[str, float] = {}
    for enc in batch:
        loss, comps = model.joint_loss(enc, train=True, rng=rng)
        if not np.isfinite(loss.data):
            raise TrainingDiverged(f"non-finite training loss {float(loss.data)}")
        backward(loss)
        for k, v in comps.items():
            totals[k] = totals.get(k, 0.0) + v
    grads = {}
    inv = 1.0 / len(batch)
    for name, value in model.params.items():
        g = value.grad
        if g is None:
            g = np.zeros_like(value.data)
        else:
            g *= inv  # average over the batch
        grads[name] = g
    clip_global_norm(grads, cfg.clip_norm)
    sgd_momentum_step(model.params, grads, lr, cfg.momentum, velocity)
    return totals


def train(
    model: Tagger,
    train_enc: Sequence[EncodedSentence],
    dev_enc: Sequence[EncodedSentence],
    cfg: TrainConfig,
    seed: int,
) -> TrainResult:
    """Run the full epoch budget; keep (and restore) the best-dev parameters.

    Early stopping acts as checkpoint selection only: all epochs always run,
    and the parameters scoring highest on dev are loaded back at the end.
    """
    if not train_enc:
        raise ValueError("empty training split")
    rng = np.random.default_rng(seed)
    velocity: dict[str, np.ndarray] = {}
    history: list[dict] = []
    best_state = model.params.state_dict()
    best_f1 = -1.0
    best_epoch = -1
    n = len(train_enc)
    for epoch in range(cfg.epochs):
        lr = lr_at(epoch, cfg)
        order = rng.permutation(n)
        totals: dict[str, float] = {}
        for lo in range(0, n, cfg.batch_size):
            batch = [train_enc[i] for i in order[lo : lo + cfg.batch_size]]
            batch_totals = train_step(model, batch, lr, cfg, velocity, rng)
            for k, v in batch_totals.items():
                totals[k] = totals.get(k, 0.0) + v
        scores = evaluate(model, dev_enc) if dev_enc else None
        record = {
            "epoch": epoch,
            "lr": lr,
            "train_loss": totals.get("loss", 0.0) / n,
            "train_nll": totals.get("nll", 0.0) / n,
        }
        for key in sorted(totals):
            if key.startswith("ae_"):
                record[f"train_{key}"] = totals[key] / n
        if scores is not None:
            record["dev_precision"] = scores.precision
            record["dev_recall"] = scores.recall
            record["dev_f1"] = scores.f1
            if scores.f1 > best_f1:
                best_f1 = scores.f1
                best_epoch = epoch
                best_state = model.params.state_dict()
            record["best_so_far"] = best_epoch == epoch
        history.append(record)
    if dev_enc:
        model.params.load_state_dict(best_state)
    else:
        best_state = model.params.state_dict()
        best_epoch = cfg.epochs - 1
    return TrainResult(history, best_state, best_f1, best_epoch, velocity)


def seed_statistics(scores: Sequence[float]) -> tuple[float, float]:
    """Mean and sample (n-1) standard deviation across per-seed scores."""
    if not scores:
        raise ValueError("no scores")
    mean = sum(scores) / len(scores)
    if len(scores) < 2:
        return mean, 0.0
    var = sum((s - mean) ** 2 for s in scores) / (len(scores) - 1)
    return mean, math.sqrt(var)
