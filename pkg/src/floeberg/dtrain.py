"""Simulated synchronous data-parallel training.

Workers are threads inside one process connected in a ring of bounded FIFO
channels (rank r sends to (r+1) mod K).  Gradient averaging uses the
bandwidth-optimal ring all-reduce: a scatter-reduce phase of K-1 steps
followed by an allgather phase of K-1 steps, each worker sending exactly
2*(K-1)/K of the (padded) payload.  Every chunk of the result is finalized
on exactly one rank and copied verbatim to the others, so replicas stay
bit-identical by construction; a checksum after every synchronized step
enforces that invariant.
"""

from __future__ import annotations

import hashlib
import queue
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .nnet import (AdamState, EpochStats, FocalLossParams, LstmModel, MlpModel,
                   TrainConfig, adam_step)
from .util import atomic_write_text, fmt_float

_CHANNEL_CAPACITY = 2  # a rank can run at most one step ahead of its neighbor


class ReplicaDivergenceError(RuntimeError):
    """Synchronized replicas stopped being bit-identical."""


@dataclass
class AllReduceStats:
    workers: int
    tensor_length: int
    padded_length: int
    steps: int
    elements_sent_per_worker: int


class _RingContext:
    """Per-rank view of the ring: send right, receive from the left."""

    def __init__(self, group: "WorkerGroup", rank: int):
        self._group = group
        self.rank = rank
        self.elements_sent = 0

    def send_right(self, payload) -> None:
        self._group._channels[self.rank].put(payload)

    def recv_left(self):
        left = (self.rank - 1) % self._group.size
        return self._group._channels[left].get()


class WorkerGroup:
    """K simulated workers on a single ring; rank 0 is the root."""

    def __init__(self, size: int):
        if size < 1:
            raise ValueError("worker count must be >= 1")
        self.size = size
        self._channels = [queue.Queue(maxsize=_CHANNEL_CAPACITY) for _ in range(size)]

    def run(self, worker_fn: Callable[[int, _RingContext], object]) -> list:
        """Run *worker_fn* on every rank concurrently and collect the results."""
        if self.size == 1:
            return [worker_fn(0, _RingContext(self, 0))]
        results: list = [None] * self.size
        errors: list = [None] * self.size

        def runner(rank: int):
            try:
                results[rank] = worker_fn(rank, _RingContext(self, rank))
            except BaseException as exc:  # propagated after join
                errors[rank] = exc

        threads = [threading.Thread(target=runner, args=(r,), name=f"worker-{r}")
                   for r in range(self.size)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        for rank, exc in enumerate(errors):
            if exc is not None:
                raise exc
        return results


def broadcast_root(group: WorkerGroup, weights: Sequence[np.ndarray]) -> list[list[np.ndarray]]:
    """Rank 0's arrays passed around the ring; every rank ends bit-equal."""
    weights = list(weights)

    def worker(rank: int, ctx: _RingContext):
        if rank == 0:
            if group.size > 1:
                ctx.send_right([w.copy() for w in weights])
            return weights
        received = ctx.recv_left()
        if rank < group.size - 1:
            ctx.send_right([w.copy() for w in received])
        return received

    return group.run(worker)


def _ring_allreduce_mean(ctx: _RingContext, group_size: int, tensor: np.ndarray) -> np.ndarray:
    """One rank's share of the all-reduce; returns the element-wise mean."""
    n = tensor.shape[0]
    k = group_size
    if k == 1:
        return tensor.copy()
    chunk = -(-n // k)  # ceil
    padded = np.zeros(chunk * k, dtype=np.float64)
    padded[:n] = tensor
    rank = ctx.rank

    def sl(c: int) -> slice:
        return slice(c * chunk, (c + 1) * chunk)

    # scatter-reduce: after K-1 steps this rank holds the fully reduced
    # chunk (rank + 1) mod K
    for step in range(k - 1):
        send_chunk = (rank - step) % k
        ctx.send_right(padded[sl(send_chunk)].copy())
        ctx.elements_sent += chunk
        incoming = ctx.recv_left()
        padded[sl((rank - step - 1) % k)] += incoming
    owned = (rank + 1) % k
    padded[sl(owned)] /= k
    # allgather: circulate the finalized chunks
    for step in range(k - 1):
        ctx.send_right(padded[sl((rank + 1 - step) % k)].copy())
        ctx.elements_sent += chunk
        incoming = ctx.recv_left()
        padded[sl((rank - step) % k)] = incoming
    return padded[:n]


def ring_allreduce(group: WorkerGroup,
                   tensors: Sequence[np.ndarray]) -> tuple[list[np.ndarray], AllReduceStats]:
    """Element-wise mean of the per-rank tensors, identical at every rank."""
    if len(tensors) != group.size:
        raise ValueError(f"expected {group.size} tensors, got {len(tensors)}")
    arrays = [np.ascontiguousarray(t, dtype=np.float64).reshape(-1) for t in tensors]
    n = arrays[0].shape[0]
    if any(a.shape[0] != n for a in arrays):
        raise ValueError("all ranks must contribute tensors of the same length")
    sent = [0] * group.size

    def worker(rank: int, ctx: _RingContext):
        out = _ring_allreduce_mean(ctx, group.size, arrays[rank])
        sent[rank] = ctx.elements_sent
        return out

    results = group.run(worker)
    padded = (-(-n // group.size)) * group.size if group.size > 1 else n
    stats = AllReduceStats(workers=group.size, tensor_length=n, padded_length=padded,
                           steps=2 * (group.size - 1),
                           elements_sent_per_worker=sent[0])
    return results, stats


# ---------------------------------------------------------------------------
# Synchronized training
# ---------------------------------------------------------------------------

def _flatten(grads: list[tuple[str, np.ndarray]]) -> np.ndarray:
    return np.concatenate([g.reshape(-1) for _, g in grads])


def _unflatten_into(grads: list[tuple[str, np.ndarray]], flat: np.ndarray) -> list:
    out = []
    pos = 0
    for name, g in grads:
        out.append((name, flat[pos:pos + g.size].reshape(g.shape)))
        pos += g.size
    return out


def _weights_checksum(model) -> bytes:
    digest = hashlib.sha256()
    for _, arr in model.parameters():
        digest.update(arr.tobytes())
    return digest.digest()


def _check_replicas_identical(replicas) -> None:
    checksums = {_weights_checksum(m) for m in replicas}
    if len(checksums) != 1:
        raise ReplicaDivergenceError("replica weights diverged after synchronized step")


def data_parallel_step(group: WorkerGroup, replicas: Sequence, batches: Sequence,
                       loss_params: FocalLossParams, adam_states: Sequence[AdamState],
                       ) -> tuple[list[float], list[int]]:
    """One synchronized step: per-rank gradients, ring-averaged, identical Adam update.

    *batches* is one (sequences, labels) pair per rank.  Ragged shard sizes are
    handled by weighting each rank's mean gradient with its sample share, so
    the averaged gradient always equals the global-batch mean.  Returns the
    per-rank (mean loss, correct count); raises ReplicaDivergenceError if the
    replicas stop being bit-identical.
    """
    k = group.size
    if not (len(replicas) == len(batches) == len(adam_states) == k):
        raise ValueError("need one replica, batch, and optimizer state per rank")
    _check_replicas_identical(replicas)
    total = sum(len(labels) for _, labels in batches)
    losses = [0.0] * k
    corrects = [0] * k

    def worker(rank: int, ctx: _RingContext):
        model = replicas[rank]
        sequences, labels = batches[rank]
        grads, loss, probs = model.backward(sequences, labels, loss_params)
        losses[rank] = loss
        corrects[rank] = int((probs.argmax(axis=1) == labels).sum())
        flat = _flatten(grads)
        weight = len(labels) * k / total
        if weight != 1.0:
            flat *= weight
        mean_flat = _ring_allreduce_mean(ctx, k, flat)
        adam_step(adam_states[rank], model.parameters(), _unflatten_into(grads, mean_flat))
        return None

    group.run(worker)
    _check_replicas_identical(replicas)
    return losses, corrects


def make_model(kind: str, seed: int = 0):
    if kind == "mlp":
        return MlpModel(seed=seed)
    if kind == "lstm":
        return LstmModel(seed=seed)
    raise ValueError(f"unknown classifier kind {kind!r}")


def train_parallel(sequences: np.ndarray, labels: np.ndarray, workers: int,
                   config: TrainConfig, loss_params: FocalLossParams,
                   model_kind: str = "lstm", lr: float | None = None,
                   global_batch: bool = True):
    """Synchronized multi-worker training from a root-broadcast initial model.

    With *global_batch* the configured batch size is split across workers
    (global semantics); otherwise every worker processes a full batch per
    step.  Returns (trained model, per-epoch mean losses, wall seconds).
    """
    sequences = np.asarray(sequences, dtype=np.float64)
    labels = np.asarray(labels)
    n = len(sequences)
    if n < 1:
        raise ValueError("training needs at least one sequence")
    group = WorkerGroup(workers)
    seed_model = make_model(model_kind, seed=config.seed)
    broadcast = broadcast_root(group, [arr for _, arr in seed_model.parameters()])
    replicas = []
    for rank in range(workers):
        replica = make_model(model_kind, seed=config.seed)
        for (_, arr), src in zip(replica.parameters(), broadcast[rank]):
            arr[...] = src
        replicas.append(replica)
    adam_kwargs = {} if lr is None else {"lr": lr}
    adam_states = [AdamState.for_params(m.parameters(), **adam_kwargs) for m in replicas]
    step_batch = config.batch_size if global_batch else config.batch_size * workers

    order_rng = np.random.default_rng(config.seed)
    history: list = []
    started = time.perf_counter()
    for epoch in range(config.epochs):
        perm = order_rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, step_batch):
            idx = perm[start:start + step_batch]
            shards = np.array_split(idx, workers)
            if any(len(s) == 0 for s in shards):
                # tiny tail batch: every rank sees the whole of it
                losses, corrects = data_parallel_step(
                    group, replicas, [(sequences[idx], labels[idx])] * workers,
                    loss_params, adam_states)
                loss_sum += losses[0] * len(idx)
                correct += corrects[0]
                continue
            batches = [(sequences[s], labels[s]) for s in shards]
            losses, corrects = data_parallel_step(group, replicas, batches,
                                                  loss_params, adam_states)
            loss_sum += float(np.mean(losses)) * len(idx)
            correct += int(np.sum(corrects))
        history.append(EpochStats(epoch=epoch, loss=loss_sum / n, accuracy=correct / n))
    elapsed = time.perf_counter() - started
    replicas[0].loss_params = loss_params
    return replicas[0], history, elapsed


# ---------------------------------------------------------------------------
# Scaling report
# ---------------------------------------------------------------------------

SCALING_CSV_HEADER = "workers,time_s,time_per_epoch_s,samples_per_s,speedup"


@dataclass(frozen=True)
class ScalingRow:
    workers: int
    time_s: float
    time_per_epoch_s: float
    samples_per_s: float
    speedup: float


def scaling_report(sequences: np.ndarray, labels: np.ndarray,
                   workers_list: Sequence[int], config: TrainConfig,
                   loss_params: FocalLossParams, model_kind: str = "lstm",
                   lr: float | None = None) -> list[ScalingRow]:
    """Wall-clock training throughput per worker count, in the classic
    time / time-per-epoch / samples-per-second / speedup column layout."""
    rows = []
    n = len(sequences)
    for workers in workers_list:
        _, _, elapsed = train_parallel(sequences, labels, workers, config,
                                       loss_params, model_kind=model_kind, lr=lr)
        epochs = max(config.epochs, 1)
        rows.append(ScalingRow(workers=workers, time_s=elapsed,
                               time_per_epoch_s=elapsed / epochs,
                               samples_per_s=n * config.epochs / elapsed if elapsed > 0
                               else float("inf"),
                               speedup=0.0))
    base = rows[0].time_s
    return [ScalingRow(r.workers, r.time_s, r.time_per_epoch_s, r.samples_per_s,
                       base / r.time_s if r.time_s > 0 else float("inf")) for r in rows]


def write_scaling_csv(path: str | Path, rows: Sequence[ScalingRow]) -> None:
    lines = [SCALING_CSV_HEADER]
    for r in rows:
        lines.append(",".join((str(r.workers), fmt_float(r.time_s),
                               fmt_float(r.time_per_epoch_s),
                               fmt_float(r.samples_per_s), fmt_float(r.speedup))))
    atomic_write_text(path, "\n".join(lines) + "\n")
