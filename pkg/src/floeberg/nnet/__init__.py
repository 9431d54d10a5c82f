"""From-scratch sea-ice classifiers: windowing, models, loss, optimizer, metrics."""

from .layers import set_nan_checks
from .loss import FocalLossParams, focal_loss, focal_loss_batch, focal_softmax_grad
from .models import (CONTEXT_RADIUS, LSTM_DENSE_UNITS, LSTM_UNITS, LstmModel,
                     MLP_HIDDEN_UNITS, MlpModel, N_CLASSES, N_FEATURES,
                     SEQUENCE_LENGTH, backward, build_sequences, forward)
from .optim import AdamState, DEFAULT_LEARNING_RATE, adam_step
from .serialize import ModelFormatError, load_model, save_model
from .training import (EpochStats, Metrics, TrainConfig, evaluate, predict_classes,
                       split_train_test, train, write_history_csv)

__all__ = [
    "AdamState", "CONTEXT_RADIUS", "DEFAULT_LEARNING_RATE", "EpochStats",
    "FocalLossParams", "LSTM_DENSE_UNITS", "LSTM_UNITS", "LstmModel",
    "MLP_HIDDEN_UNITS", "Metrics", "MlpModel", "ModelFormatError", "N_CLASSES",
    "N_FEATURES", "SEQUENCE_LENGTH", "TrainConfig", "adam_step", "backward",
    "build_sequences", "evaluate", "focal_loss", "focal_loss_batch",
    "focal_softmax_grad", "forward", "load_model", "predict_classes",
    "save_model", "set_nan_checks", "split_train_test", "train",
    "write_history_csv",
]
