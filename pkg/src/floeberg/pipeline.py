"""High-level glue from labeled segment tables to trained classifiers and back.

Feature standardization is fitted on the training subset only and travels
with the model file, so classification of fresh tracks needs nothing beyond
the model.  Class codes 1..3 map to training labels 0..2; unlabeled
segments (code 0) are excluded from training and evaluation but still
contribute context to their neighbors' windows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autolabel import LabeledSegments
from .dtrain import make_model, train_parallel
from .ingest import FeatureScaler, compute_features
from .nnet import (AdamState, EpochStats, FocalLossParams, Metrics, TrainConfig,
                   build_sequences, evaluate, predict_classes, split_train_test, train)


@dataclass
class TrainResult:
    model: object
    history: list[EpochStats]
    test_metrics: Metrics | None
    train_positions: np.ndarray  # row positions of training samples
    test_positions: np.ndarray


def segment_windows(segments: np.ndarray, scaler: FeatureScaler | None = None) -> np.ndarray:
    """Standardized context windows for a segment table (gap-aware)."""
    features = compute_features(segments, scaler)
    return build_sequences(features, segments["index"])


def model_scaler(model) -> FeatureScaler | None:
    if model.feature_offset is None:
        return None
    return FeatureScaler(offset=model.feature_offset, scale=model.feature_scale)


def train_classifier(labeled: LabeledSegments, classifier: str = "lstm",
                     gamma: float = 2.0, alpha_mode: str = "inverse_frequency",
                     train_fraction: float = 0.8, epochs: int = 20,
                     batch_size: int = 32, learning_rate: float = 0.003,
                     dropout: float = 0.2, seed: int = 0,
                     workers: int = 1) -> TrainResult:
    """Train on the labeled segments (80/20 style split over labeled rows)."""
    positions = np.flatnonzero(labeled.classes >= 1)
    if positions.size < 2:
        raise ValueError("need at least two labeled segments to train")
    rel_train, rel_test = split_train_test(positions.size, train_fraction, seed)
    train_pos = positions[rel_train]
    test_pos = positions[rel_test]

    raw = compute_features(labeled.segments)
    scaler = FeatureScaler.fit(raw[train_pos])
    windows = build_sequences(scaler.transform(raw), labeled.segments["index"])
    labels = labeled.classes - 1

    train_labels = labels[train_pos]
    if alpha_mode == "inverse_frequency":
        loss_params = FocalLossParams.inverse_frequency(train_labels, gamma=gamma)
    elif alpha_mode == "ones":
        loss_params = FocalLossParams(gamma=gamma)
    else:
        raise ValueError(f"unknown alpha_mode {alpha_mode!r}")

    config = TrainConfig(batch_size=batch_size, epochs=epochs, dropout=dropout, seed=seed)
    if workers <= 1:
        model = make_model(classifier, seed=seed)
        adam = AdamState.for_params(model.parameters(), lr=learning_rate)
        history = train(model, windows[train_pos], train_labels, config, loss_params, adam)
    else:
        model, history, _ = train_parallel(windows[train_pos], train_labels, workers,
                                           config, loss_params, model_kind=classifier,
                                           lr=learning_rate)
    model.feature_offset = scaler.offset
    model.feature_scale = scaler.scale
    model.loss_params = loss_params

    metrics = None
    if test_pos.size:
        metrics = evaluate(model, windows[test_pos], labels[test_pos])
    return TrainResult(model=model, history=history, test_metrics=metrics,
                       train_positions=train_pos, test_positions=test_pos)


def classify_segments(model, segments: np.ndarray) -> np.ndarray:
    """Predicted surface-class codes (1..3) for a segment table."""
    windows = segment_windows(segments, model_scaler(model))
    return predict_classes(model, windows) + 1
