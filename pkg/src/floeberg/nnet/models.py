"""Sequence windowing plus the two from-scratch classifiers.

Both models consume (B, 5, 6) windows: five consecutive 6-feature segment
vectors centered on the segment being classified.

* MlpModel: center vector -> dense 32 (ReLU, dropout when training) ->
  dense 3 softmax.
* LstmModel: 16-unit recurrent layer unrolled over the 5 steps (sigmoid
  gates, exponential-linear-unit candidate and cell-output activation),
  dropout on its final hidden state when training, then a dense stack of
  32, 96, 32, 16, 112, 48 and 64 exponential-linear units and a dense 3
  softmax head.

Backward passes are hand-derived (backpropagation through time for the
recurrent layer) and return mean-over-batch gradients in parameter
declaration order; the finite-difference suite pins them down.
"""

from __future__ import annotations

import numpy as np

from .layers import check_finite, dropout_mask, elu, elu_grad, relu, relu_grad, sigmoid, softmax
from .loss import FocalLossParams, focal_loss_batch, focal_softmax_grad

N_FEATURES = 6
N_CLASSES = 3
SEQUENCE_LENGTH = 5
CONTEXT_RADIUS = 2
LSTM_UNITS = 16
MLP_HIDDEN_UNITS = 32
LSTM_DENSE_UNITS = (32, 96, 32, 16, 112, 48, 64)


def build_sequences(features: np.ndarray, indices: np.ndarray | None = None,
                    radius: int = CONTEXT_RADIUS) -> np.ndarray:
    """Length-(2*radius+1) context windows for every feature row.

    *indices* carries each row's along-track bin index; window slots that fall
    on a missing bin (track ends or gaps) replicate the nearest present row
    (ties prefer the earlier row).  Contiguous rows are assumed when *indices*
    is omitted.
    """
    features = np.asarray(features, dtype=np.float64)
    n = len(features)
    width = 2 * radius + 1
    if n == 0:
        return np.zeros((0, width, features.shape[1] if features.ndim == 2 else N_FEATURES))
    if indices is None:
        indices = np.arange(n, dtype=np.int64)
    else:
        indices = np.asarray(indices, dtype=np.int64)
        if np.any(np.diff(indices) <= 0):
            raise ValueError("segment indices must be strictly increasing")
    out = np.empty((n, width, features.shape[1]), dtype=np.float64)
    for slot, offset in enumerate(range(-radius, radius + 1)):
        target = indices + offset
        right = np.searchsorted(indices, target)
        left = np.clip(right - 1, 0, n - 1)
        right = np.clip(right, 0, n - 1)
        pick_left = np.abs(indices[left] - target) <= np.abs(indices[right] - target)
        pos = np.where(pick_left, left, right)
        out[:, slot, :] = features[pos]
    return out


def _uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, shape)


class MlpModel:
    """Dense 6 -> 32 (ReLU) -> 3 softmax over the window's center vector."""

    kind = "mlp"

    def __init__(self, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.hidden_w = _uniform_init(rng, N_FEATURES, (N_FEATURES, MLP_HIDDEN_UNITS))
        self.hidden_b = np.zeros(MLP_HIDDEN_UNITS)
        self.out_w = _uniform_init(rng, MLP_HIDDEN_UNITS, (MLP_HIDDEN_UNITS, N_CLASSES))
        self.out_b = np.zeros(N_CLASSES)
        self.feature_offset: np.ndarray | None = None
        self.feature_scale: np.ndarray | None = None
        self.loss_params: FocalLossParams | None = None

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        return [("hidden_w", self.hidden_w), ("hidden_b", self.hidden_b),
                ("out_w", self.out_w), ("out_b", self.out_b)]

    def layer_descriptor(self) -> list[list]:
        return [["dense_relu", N_FEATURES, MLP_HIDDEN_UNITS],
                ["dense_softmax", MLP_HIDDEN_UNITS, N_CLASSES]]

    def _forward(self, batch: np.ndarray, training: bool,
                 rng: np.random.Generator | None, dropout: float):
        batch = _validate_batch(batch)
        x = batch[:, CONTEXT_RADIUS, :]
        pre_hidden = x @ self.hidden_w + self.hidden_b
        hidden = relu(pre_hidden)
        mask = dropout_mask(rng, hidden.shape, dropout) if (training and rng is not None) else None
        dropped = hidden * mask if mask is not None else hidden
        logits = dropped @ self.out_w + self.out_b
        probs = softmax(logits)
        check_finite("mlp probabilities", probs)
        return probs, (x, pre_hidden, dropped, mask)

    def forward(self, batch: np.ndarray, training: bool = False,
                rng: np.random.Generator | None = None, dropout: float = 0.0) -> np.ndarray:
        return self._forward(batch, training, rng, dropout)[0]

    def backward(self, batch: np.ndarray, labels: np.ndarray, loss_params: FocalLossParams,
                 rng: np.random.Generator | None = None, dropout: float = 0.0):
        """Mean-over-batch focal-loss gradients; returns (grads, loss, probs)."""
        probs, (x, pre_hidden, dropped, mask) = self._forward(
            batch, training=rng is not None, rng=rng, dropout=dropout)
        labels = np.asarray(labels)
        n = len(labels)
        losses = focal_loss_batch(probs, labels, loss_params)
        dlogits = focal_softmax_grad(probs, labels, loss_params) / n
        grad_out_w = dropped.T @ dlogits
        grad_out_b = dlogits.sum(axis=0)
        dhidden = dlogits @ self.out_w.T
        if mask is not None:
            dhidden = dhidden * mask
        dpre = dhidden * relu_grad(pre_hidden)
        grads = [("hidden_w", x.T @ dpre), ("hidden_b", dpre.sum(axis=0)),
                 ("out_w", grad_out_w), ("out_b", grad_out_b)]
        return grads, float(losses.mean()), probs


class LstmModel:
    """16-unit recurrent layer over 5 steps feeding a 7-layer dense stack."""

    kind = "lstm"

    def __init__(self, seed: int = 0):
        rng = np.random.default_rng(seed)
        gates = 4 * LSTM_UNITS  # [input, forget, output, candidate] blocks
        self.lstm_w = _uniform_init(rng, N_FEATURES, (N_FEATURES, gates))
        self.lstm_u = _uniform_init(rng, LSTM_UNITS, (LSTM_UNITS, gates))
        self.lstm_b = np.zeros(gates)
        # forget gate bias 1: the usual stabilizer for short unrolls
        self.lstm_b[LSTM_UNITS:2 * LSTM_UNITS] = 1.0
        self.dense_w: list[np.ndarray] = []
        self.dense_b: list[np.ndarray] = []
        fan_in = LSTM_UNITS
        for units in LSTM_DENSE_UNITS:
            self.dense_w.append(_uniform_init(rng, fan_in, (fan_in, units)))
            self.dense_b.append(np.zeros(units))
            fan_in = units
        self.out_w = _uniform_init(rng, fan_in, (fan_in, N_CLASSES))
        self.out_b = np.zeros(N_CLASSES)
        self.feature_offset: np.ndarray | None = None
        self.feature_scale: np.ndarray | None = None
        self.loss_params: FocalLossParams | None = None

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        params = [("lstm_w", self.lstm_w), ("lstm_u", self.lstm_u), ("lstm_b", self.lstm_b)]
        for i, (w, b) in enumerate(zip(self.dense_w, self.dense_b)):
            params.append((f"dense{i}_w", w))
            params.append((f"dense{i}_b", b))
        params.append(("out_w", self.out_w))
        params.append(("out_b", self.out_b))
        return params

    def layer_descriptor(self) -> list[list]:
        desc = [["lstm_elu", N_FEATURES, LSTM_UNITS]]
        fan_in = LSTM_UNITS
        for units in LSTM_DENSE_UNITS:
            desc.append(["dense_elu", fan_in, units])
            fan_in = units
        desc.append(["dense_softmax", fan_in, N_CLASSES])
        return desc

    def _forward(self, batch: np.ndarray, training: bool,
                 rng: np.random.Generator | None, dropout: float):
        batch = _validate_batch(batch)
        n = batch.shape[0]
        u = LSTM_UNITS
        h = np.zeros((n, u))
        c = np.zeros((n, u))
        steps = []
        for t in range(SEQUENCE_LENGTH):
            x_t = batch[:, t, :]
            pre = x_t @ self.lstm_w + h @ self.lstm_u + self.lstm_b
            # gate layout [input, forget, output | candidate]: one sigmoid call
            # covers the three gates
            gates = sigmoid(pre[:, :3 * u])
            gi = gates[:, 0 * u:1 * u]
            gf = gates[:, 1 * u:2 * u]
            go = gates[:, 2 * u:3 * u]
            gg = elu(pre[:, 3 * u:4 * u])
            c_next = gf * c + gi * gg
            cell_out = elu(c_next)
            h_next = go * cell_out
            steps.append((x_t, h, c, pre, gi, gf, gg, go, c_next, cell_out))
            h, c = h_next, c_next
        mask = dropout_mask(rng, h.shape, dropout) if (training and rng is not None) else None
        act = h * mask if mask is not None else h
        dense_pre: list[np.ndarray] = []
        dense_in: list[np.ndarray] = []
        for w, b in zip(self.dense_w, self.dense_b):
            dense_in.append(act)
            pre = act @ w + b
            dense_pre.append(pre)
            act = elu(pre)
        logits = act @ self.out_w + self.out_b
        probs = softmax(logits)
        check_finite("lstm probabilities", probs)
        return probs, (steps, mask, dense_in, dense_pre, act)

    def forward(self, batch: np.ndarray, training: bool = False,
                rng: np.random.Generator | None = None, dropout: float = 0.0) -> np.ndarray:
        return self._forward(batch, training, rng, dropout)[0]

    def backward(self, batch: np.ndarray, labels: np.ndarray, loss_params: FocalLossParams,
                 rng: np.random.Generator | None = None, dropout: float = 0.0):
        """Mean-over-batch focal-loss gradients via backpropagation through time."""
        probs, (steps, mask, dense_in, dense_pre, last_act) = self._forward(
            batch, training=rng is not None, rng=rng, dropout=dropout)
        labels = np.asarray(labels)
        n = len(labels)
        u = LSTM_UNITS
        losses = focal_loss_batch(probs, labels, loss_params)
        dlogits = focal_softmax_grad(probs, labels, loss_params) / n

        grad_out_w = last_act.T @ dlogits
        grad_out_b = dlogits.sum(axis=0)
        dact = dlogits @ self.out_w.T
        grad_dense_w = [None] * len(self.dense_w)
        grad_dense_b = [None] * len(self.dense_b)
        for i in range(len(self.dense_w) - 1, -1, -1):
            dpre = dact * elu_grad(dense_pre[i])
            grad_dense_w[i] = dense_in[i].T @ dpre
            grad_dense_b[i] = dpre.sum(axis=0)
            dact = dpre @ self.dense_w[i].T

        dh = dact * mask if mask is not None else dact
        dc = np.zeros((n, u))
        grad_w = np.zeros_like(self.lstm_w)
        grad_u = np.zeros_like(self.lstm_u)
        grad_b = np.zeros_like(self.lstm_b)
        for t in range(SEQUENCE_LENGTH - 1, -1, -1):
            x_t, h_prev, c_prev, pre, gi, gf, gg, go, c_next, cell_out = steps[t]
            dgo = dh * cell_out
            dc = dc + dh * go * elu_grad(c_next)
            dgi = dc * gg
            dgg = dc * gi
            dgf = dc * c_prev
            dpre = np.concatenate([
                dgi * gi * (1.0 - gi),
                dgf * gf * (1.0 - gf),
                dgo * go * (1.0 - go),
                dgg * elu_grad(pre[:, 3 * u:4 * u]),
            ], axis=1)
            grad_w += x_t.T @ dpre
            grad_u += h_prev.T @ dpre
            grad_b += dpre.sum(axis=0)
            dh = dpre @ self.lstm_u.T
            dc = dc * gf

        grads = [("lstm_w", grad_w), ("lstm_u", grad_u), ("lstm_b", grad_b)]
        for i in range(len(self.dense_w)):
            grads.append((f"dense{i}_w", grad_dense_w[i]))
            grads.append((f"dense{i}_b", grad_dense_b[i]))
        grads.append(("out_w", grad_out_w))
        grads.append(("out_b", grad_out_b))
        return grads, float(losses.mean()), probs


def _validate_batch(batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 3 or batch.shape[1] != SEQUENCE_LENGTH or batch.shape[2] != N_FEATURES:
        raise ValueError(f"expected (batch, {SEQUENCE_LENGTH}, {N_FEATURES}) windows, "
                         f"got {batch.shape}")
    return batch


def forward(model, batch: np.ndarray, training: bool = False,
            rng: np.random.Generator | None = None, dropout: float = 0.0) -> np.ndarray:
    """Class probabilities for a window batch (dropout only when training)."""
    return model.forward(batch, training=training, rng=rng, dropout=dropout)


def backward(model, batch: np.ndarray, labels: np.ndarray, loss_params: FocalLossParams,
             rng: np.random.Generator | None = None, dropout: float = 0.0):
    """Gradients (declaration order), mean loss, and probabilities for a batch."""
    return model.backward(batch, labels, loss_params, rng=rng, dropout=dropout)
