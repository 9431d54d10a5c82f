"""Training loop, dataset split, and classification metrics."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..util import atomic_write_text, fmt_float
from .loss import FocalLossParams
from .optim import AdamState, adam_step

HISTORY_CSV_HEADER = "epoch,loss,accuracy"
_EVAL_CHUNK = 8192


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 20
    dropout: float = 0.2
    seed: int = 0
    context_radius: int = 2

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    accuracy: float


@dataclass(frozen=True)
class Metrics:
    confusion: np.ndarray          # (3, 3); rows = true class, cols = predicted
    accuracy: float
    precision_macro: float
    recall_macro: float
    f1_macro: float
    precision_micro: float
    recall_micro: float
    f1_micro: float
    per_class_precision: np.ndarray
    per_class_recall: np.ndarray


def split_train_test(n: int, train_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Shuffled index split; train gets round(n * fraction) samples."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    perm = np.random.default_rng(seed).permutation(n)
    cut = int(round(n * train_fraction))
    return np.sort(perm[:cut]), np.sort(perm[cut:])


def train(model, sequences: np.ndarray, labels: np.ndarray, config: TrainConfig,
          loss_params: FocalLossParams, adam: AdamState | None = None) -> list[EpochStats]:
    """Shuffled mini-batch training; deterministic for a fixed config seed.

    Per-epoch loss/accuracy are accumulated from the training-time forward
    passes (dropout active).  epochs = 0 leaves the model untouched.
    """
    sequences = np.asarray(sequences, dtype=np.float64)
    labels = np.asarray(labels)
    n = len(sequences)
    if n < 1:
        raise ValueError("training needs at least one sequence")
    if len(np.unique(labels)) < 2:
        warnings.warn("training set holds a single class; proceeding anyway",
                      stacklevel=2)
    if adam is None:
        adam = AdamState.for_params(model.parameters())
    rng = np.random.default_rng(config.seed)
    history: list[EpochStats] = []
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            grads, loss, probs = model.backward(sequences[idx], labels[idx], loss_params,
                                                rng=rng, dropout=config.dropout)
            adam_step(adam, model.parameters(), grads)
            loss_sum += loss * len(idx)
            correct += int((probs.argmax(axis=1) == labels[idx]).sum())
        history.append(EpochStats(epoch=epoch, loss=loss_sum / n, accuracy=correct / n))
    model.loss_params = loss_params
    return history


def evaluate(model, sequences: np.ndarray, labels: np.ndarray) -> Metrics:
    """Argmax predictions, confusion matrix, and macro/micro-averaged scores."""
    sequences = np.asarray(sequences, dtype=np.float64)
    labels = np.asarray(labels)
    if len(sequences) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    preds = predict_classes(model, sequences)
    confusion = np.zeros((3, 3), dtype=np.int64)
    np.add.at(confusion, (labels, preds), 1)
    total = confusion.sum()
    diag = np.diag(confusion).astype(np.float64)
    row = confusion.sum(axis=1).astype(np.float64)
    col = confusion.sum(axis=0).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        recall = np.where(row > 0, diag / row, 0.0)
        precision = np.where(col > 0, diag / col, 0.0)
    pr = precision + recall
    f1 = np.where(pr > 0, 2.0 * precision * recall / np.where(pr > 0, pr, 1.0), 0.0)
    accuracy = float(diag.sum() / total)
    return Metrics(
        confusion=confusion,
        accuracy=accuracy,
        precision_macro=float(precision.mean()),
        recall_macro=float(recall.mean()),
        f1_macro=float(f1.mean()),
        precision_micro=accuracy,
        recall_micro=accuracy,
        f1_micro=accuracy,
        per_class_precision=precision,
        per_class_recall=recall,
    )


def predict_classes(model, sequences: np.ndarray) -> np.ndarray:
    """Argmax class per window, evaluated in bounded-memory chunks."""
    sequences = np.asarray(sequences, dtype=np.float64)
    preds = np.empty(len(sequences), dtype=np.int64)
    for start in range(0, len(sequences), _EVAL_CHUNK):
        stop = min(start + _EVAL_CHUNK, len(sequences))
        preds[start:stop] = model.forward(sequences[start:stop]).argmax(axis=1)
    return preds


def write_history_csv(path: str | Path, history: list[EpochStats]) -> None:
    lines = [HISTORY_CSV_HEADER]
    for rec in history:
        lines.append(f"{rec.epoch},{fmt_float(rec.loss)},{fmt_float(rec.accuracy)}")
    atomic_write_text(path, "\n".join(lines) + "\n")
