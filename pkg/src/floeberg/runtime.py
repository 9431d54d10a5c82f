"""Chunked parallel map-reduce with halo exchange and phase timing.

Map functions receive immutable chunk descriptors and run concurrently in a
thread pool (numpy ufuncs release the GIL, so pure-array map functions scale
on real cores without any data copying).  The reducer consumes partials in
chunk order after all workers finish, which makes parallel output bit-equal
to sequential output for order-preserving reductions.

Phase timing:

* ``PhaseTimings`` (per job): load = input materialization, map = the
  concurrent phase, reduce = the merge.
* The benchmark harness reports one row per worker count in the classic
  load / map / reduce column layout of distributed map-reduce engines, where
  "map" is the (lazy, near-constant) plan construction and "reduce" is the
  action that actually executes the work.  Our engine is eager, so the plan
  column stays near zero and the reduce column carries the parallel
  execution plus the merge.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .util import atomic_write_text, fmt_float


@dataclass(frozen=True)
class Chunk:
    """One worker's slice: core range owned exclusively, halo range for context."""

    index: int
    core_start: int
    core_stop: int
    halo_start: int
    halo_stop: int


@dataclass(frozen=True)
class ChunkPlan:
    total: int
    workers: int
    halo: int
    chunks: tuple[Chunk, ...]


@dataclass
class PhaseTimings:
    load_s: float = 0.0
    map_s: float = 0.0
    reduce_s: float = 0.0


class ChunkFailedError(RuntimeError):
    """A worker raised while mapping a chunk."""

    def __init__(self, chunk_index: int, cause: BaseException):
        super().__init__(f"chunk {chunk_index} failed: {cause!r}")
        self.chunk_index = chunk_index
        self.cause = cause


def default_workers() -> int:
    return os.cpu_count() or 1


def partition_with_halo(total: int, workers: int, halo: int) -> ChunkPlan:
    """Near-equal core ranges (sizes differ by at most 1) with clipped halos."""
    if total < 0:
        raise ValueError("total must be >= 0")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if halo < 0:
        raise ValueError("halo must be >= 0")
    n_chunks = min(workers, total)
    chunks = []
    if n_chunks > 0:
        base = total // n_chunks
        extra = total % n_chunks
        start = 0
        for i in range(n_chunks):
            size = base + (1 if i < extra else 0)
            stop = start + size
            chunks.append(Chunk(index=i, core_start=start, core_stop=stop,
                                halo_start=max(0, start - halo),
                                halo_stop=min(total, stop + halo)))
            start = stop
    return ChunkPlan(total=total, workers=workers, halo=halo, chunks=tuple(chunks))


def parallel_map_reduce(plan: ChunkPlan,
                        map_fn: Callable[[Chunk], object],
                        reduce_fn: Callable[[list], object],
                        ) -> tuple[object, PhaseTimings]:
    """Apply *map_fn* to every chunk concurrently, then *reduce_fn* to the
    ordered partials.  Worker failures propagate as ChunkFailedError."""
    timings = PhaseTimings()
    t0 = time.perf_counter()
    if len(plan.chunks) <= 1:
        partials = [map_fn(chunk) for chunk in plan.chunks]
    else:
        with ThreadPoolExecutor(max_workers=len(plan.chunks)) as pool:
            futures = [pool.submit(map_fn, chunk) for chunk in plan.chunks]
            partials = []
            for chunk, fut in zip(plan.chunks, futures):
                try:
                    partials.append(fut.result())
                except Exception as exc:
                    raise ChunkFailedError(chunk.index, exc) from exc
    timings.map_s = time.perf_counter() - t0
    t1 = time.perf_counter()
    result = reduce_fn(partials)
    timings.reduce_s = time.perf_counter() - t1
    return result, timings


# ---------------------------------------------------------------------------
# Benchmark harness
# ---------------------------------------------------------------------------

BENCH_CSV_HEADER = "workers,load_s,map_s,reduce_s,speedup_load,speedup_reduce"


@dataclass(frozen=True)
class BenchRow:
    workers: int
    load_s: float
    map_s: float
    reduce_s: float
    speedup_load: float
    speedup_reduce: float


def bench_pipeline(load_fn: Callable[[], object],
                   action_fn: Callable[[object, int], object],
                   total_fn: Callable[[object], int],
                   halo: int,
                   workers_list: Sequence[int],
                   repeats: int = 3,
                   ) -> list[BenchRow]:
    """Measure load / plan / execute wall times per worker count.

    * load_s: one call of *load_fn* (input materialization).
    * map_s: chunk-plan construction (the near-constant declarative part).
    * reduce_s: median over *repeats* of *action_fn(data, workers)*, the
      phase that executes the distributed work and materializes the result.

    Speedups are relative to the first listed worker count.
    """
    rows: list[BenchRow] = []
    for workers in workers_list:
        t0 = time.perf_counter()
        data = load_fn()
        load_s = time.perf_counter() - t0

        t1 = time.perf_counter()
        partition_with_halo(total_fn(data), workers, halo)
        plan_s = time.perf_counter() - t1

        execs = []
        for _ in range(repeats):
            t2 = time.perf_counter()
            action_fn(data, workers)
            execs.append(time.perf_counter() - t2)
        exec_s = sorted(execs)[len(execs) // 2]
        rows.append(BenchRow(workers=workers, load_s=load_s, map_s=plan_s,
                             reduce_s=exec_s, speedup_load=0.0, speedup_reduce=0.0))
    base = rows[0]
    return [BenchRow(r.workers, r.load_s, r.map_s, r.reduce_s,
                     base.load_s / r.load_s if r.load_s > 0 else float("inf"),
                     base.reduce_s / r.reduce_s if r.reduce_s > 0 else float("inf"))
            for r in rows]


def write_bench_csv(path: str | Path, rows: Sequence[BenchRow]) -> None:
    lines = [BENCH_CSV_HEADER]
    for r in rows:
        lines.append(",".join((str(r.workers), fmt_float(r.load_s), fmt_float(r.map_s),
                               fmt_float(r.reduce_s), fmt_float(r.speedup_load),
                               fmt_float(r.speedup_reduce))))
    atomic_write_text(path, "\n".join(lines) + "\n")
