"""Deterministic minibatch training over labeled scenes."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import Model
from .ops import softmax_cross_entropy
from .optim import AdamState, adam_step
from .scenes import LabeledSample


@dataclass
class TrainConfig:
    steps: int = 1000
    batch: int = 8
    seed: int = 0
    lr: float = 1e-3
    lr_schedule: Optional[Callable[[int], float]] = None  # step -> lr, overrides lr
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.batch < 1:
            raise ValueError(f"batch must be >= 1, got {self.batch}")


@dataclass
class LossLog:
    """Per-step, per-head cross-entropy values."""

    rows: list = field(default_factory=list)  # (step, head_level, loss)

    def add(self, step: int, head: int, loss: float) -> None:
        self.rows.append((int(step), int(head), float(loss)))

    def total_by_step(self) -> list:
        totals: dict[int, float] = {}
        for step, _, loss in self.rows:
            totals[step] = totals.get(step, 0.0) + loss
        return sorted(totals.items())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["step", "head", "loss"])
            for step, head, loss in self.rows:
                writer.writerow([step, head, f"{loss:.6f}"])


def _stack_batch(samples: list[LabeledSample], indices, levels) -> tuple:
    image = np.concatenate([samples[i].image for i in indices], axis=0)
    roi = np.concatenate([samples[i].roi for i in indices], axis=0)
    labels = {
        level: np.stack([samples[i].labels.plane(level) for i in indices]).astype(np.int64)
        for level in levels
    }
    return image, roi, labels


def train(model: Model, train_set: list[LabeledSample], config: TrainConfig):
    """Train in place; returns (model, LossLog).

    Deterministic under a fixed seed: the sample order is a seeded
    per-epoch permutation and heads reduce in ascending level order.
    """
    if not train_set:
        raise ValueError("training set is empty")
    levels = model.spec.head_levels
    for level in levels:
        n_classes = model.spec.classes_for(level)
        for i, sample in enumerate(train_set):
            top = int(sample.labels.plane(level).max())
            if top >= n_classes:
                raise ValueError(
                    f"sample {i} has level-{level} label id {top} but the head only has "
                    f"{n_classes} classes"
                )

    params = {name: gp.value for name, gp in model.params.items()}
    state = AdamState.for_params(params, lr=config.lr, beta1=config.beta1,
                                 beta2=config.beta2, eps=config.eps)
    rng = np.random.default_rng(config.seed)
    log = LossLog()
    order = rng.permutation(len(train_set))
    cursor = 0

    for step in range(config.steps):
        if cursor + config.batch > len(order):
            order = rng.permutation(len(train_set))
            cursor = 0
        indices = order[cursor : cursor + config.batch]
        if indices.size == 0:  # batch larger than the dataset: sample with wraparound
            indices = rng.integers(0, len(train_set), size=config.batch)
        cursor += config.batch

        image, roi, labels = _stack_batch(train_set, indices, levels)
        logits = model.forward(image, roi=roi if model.spec.needs_roi else None)
        model.zero_grads()
        grad_logits = {}
        for level in levels:
            loss, grad = softmax_cross_entropy(logits[level], labels[level])
            grad_logits[level] = grad
            log.add(step, level, loss)
        model.backward(grad_logits)

        if config.lr_schedule is not None:
            state.lr = float(config.lr_schedule(step))
        grads = {name: gp.grad for name, gp in model.params.items()}
        adam_step(params, grads, state)

    return model, log


def predict_labels(model: Model, image: np.ndarray, roi=None) -> dict:
    """Argmax label plane per head level; ties resolve to the lower class id."""
    logits = model.forward(image, roi=roi, retain=False)
    return {level: np.argmax(lg, axis=1) for level, lg in logits.items()}


def pixel_accuracy(model: Model, samples: list[LabeledSample], level: int,
                   batch: int = 8) -> float:
    """Fraction of pixels whose argmax prediction matches the labels."""
    correct = 0
    total = 0
    needs_roi = model.spec.needs_roi
    for start in range(0, len(samples), batch):
        chunk = samples[start : start + batch]
        image = np.concatenate([s.image for s in chunk], axis=0)
        roi = np.concatenate([s.roi for s in chunk], axis=0) if needs_roi else None
        pred = predict_labels(model, image, roi=roi)[level]
        gt = np.stack([s.labels.plane(level) for s in chunk]).astype(pred.dtype)
        correct += int((pred == gt).sum())
        total += gt.size
    return correct / total
