"""Transfer raster surface classes onto track segments, with manual overrides.

Labeling is a pure per-segment map (project the segment center, read the
shifted raster cell), so chunked parallel execution returns bit-identical
output for any worker count.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from . import runtime
from .geo import (LabelRaster, ShiftVector, SOUTH_POLAR_SEA_ICE, StereoParams,
                  project_forward_arrays, raster_lookup_arrays)
from .ingest import SEGMENT_DTYPE, Segment, parse_segment_csv_rows, segment_csv_lines, segment_row
from .util import atomic_write_text


class SurfaceClass(IntEnum):
    THICK_ICE = 1
    THIN_ICE = 2
    OPEN_WATER = 3


UNLABELED = 0  # raster nodata; such segments are kept but excluded from training

SOURCE_AUTO = 0
SOURCE_MANUAL = 1
_SOURCE_CHARS = {SOURCE_AUTO: "a", SOURCE_MANUAL: "m"}
_SOURCE_CODES = {v: k for k, v in _SOURCE_CHARS.items()}

LABELED_CSV_HEADER = ("index,center_along_track,lat,lon,n_photons,h_mean,h_median,"
                      "h_std,photon_rate,bg_rate_mean,d_photon_rate,d_bg_rate,class,source")


@dataclass(frozen=True)
class LabeledSegment:
    """Row view: a segment plus its surface class and label provenance."""

    segment: Segment
    surface_class: int  # 0 unlabeled, 1..3 per SurfaceClass
    source: str  # "a" auto, "m" manual


@dataclass
class LabeledSegments:
    """Columnar labeled track: segment table plus class / source columns."""

    segments: np.ndarray  # SEGMENT_DTYPE
    classes: np.ndarray   # i8, 0..3
    sources: np.ndarray   # u1, SOURCE_AUTO / SOURCE_MANUAL

    def __post_init__(self):
        self.classes = np.asarray(self.classes, dtype=np.int64)
        self.sources = np.asarray(self.sources, dtype=np.uint8)
        if not (len(self.segments) == len(self.classes) == len(self.sources)):
            raise ValueError("segment / class / source column lengths differ")
        bad = ~np.isin(self.classes, (0, 1, 2, 3))
        if np.any(bad):
            raise ValueError(f"invalid class codes {np.unique(self.classes[bad])}")

    def __len__(self) -> int:
        return len(self.segments)

    def row(self, i: int) -> LabeledSegment:
        return LabeledSegment(segment=segment_row(self.segments, i),
                              surface_class=int(self.classes[i]),
                              source=_SOURCE_CHARS[int(self.sources[i])])

    def copy(self) -> "LabeledSegments":
        return LabeledSegments(self.segments.copy(), self.classes.copy(), self.sources.copy())


@dataclass(frozen=True)
class OverrideSpan:
    """Manual class correction over an inclusive segment-index range."""

    start_index: int
    end_index: int
    surface_class: SurfaceClass

    def __post_init__(self):
        if self.start_index > self.end_index:
            raise ValueError("override span start exceeds end")


# block size for streaming label evaluation; keeps ufunc temporaries cache
# resident, which roughly halves wall time and lets worker threads scale
_LABEL_BLOCK = 131_072


def label_codes_from_arrays(lats: np.ndarray, lons: np.ndarray, raster: LabelRaster,
                            shift: ShiftVector = ShiftVector(),
                            params: StereoParams = SOUTH_POLAR_SEA_ICE) -> np.ndarray:
    """Raster class code per (lat, lon); the shared kernel behind both the
    sequential and the parallel labeling paths (per-element, so chunking can
    never change the result).  Runs in cache-sized blocks."""
    n = len(lats)
    out = np.empty(n, dtype=np.int64)
    for start in range(0, n, _LABEL_BLOCK):
        stop = min(start + _LABEL_BLOCK, n)
        x, y = project_forward_arrays(lats[start:stop], lons[start:stop], params)
        out[start:stop] = raster_lookup_arrays(raster, x, y, shift)
    return out


def label_codes(segments: np.ndarray, raster: LabelRaster,
                shift: ShiftVector = ShiftVector(),
                params: StereoParams = SOUTH_POLAR_SEA_ICE) -> np.ndarray:
    # contiguous copies first: ufuncs over strided structured-array fields
    # drag a full record per element through the cache
    lats = np.ascontiguousarray(segments["lat"])
    lons = np.ascontiguousarray(segments["lon"])
    return label_codes_from_arrays(lats, lons, raster, shift, params)


def label_segments(segments: np.ndarray, raster: LabelRaster,
                   shift: ShiftVector = ShiftVector(),
                   params: StereoParams = SOUTH_POLAR_SEA_ICE) -> LabeledSegments:
    """Project each segment center and read the shifted raster; nodata stays unlabeled."""
    return LabeledSegments(segments=segments,
                           classes=label_codes(segments, raster, shift, params),
                           sources=np.zeros(len(segments), dtype=np.uint8))


def apply_overrides(labeled: LabeledSegments, spans: list[OverrideSpan]) -> LabeledSegments:
    """Apply manual spans (matched on the segment index column); later spans win."""
    out = labeled.copy()
    if not spans:
        return out
    if len(out) == 0:
        raise ValueError("cannot apply overrides to an empty track")
    index = out.segments["index"]
    lo, hi = int(index.min()), int(index.max())
    for span in spans:
        if span.start_index < lo or span.end_index > hi:
            raise ValueError(f"override span [{span.start_index}, {span.end_index}] "
                             f"outside segment index range [{lo}, {hi}]")
        mask = (index >= span.start_index) & (index <= span.end_index)
        out.classes[mask] = int(span.surface_class)
        out.sources[mask] = SOURCE_MANUAL
    return out


def label_parallel(segments: np.ndarray, raster: LabelRaster,
                   shift: ShiftVector = ShiftVector(),
                   params: StereoParams = SOUTH_POLAR_SEA_ICE,
                   workers: int = 1) -> tuple[LabeledSegments, runtime.PhaseTimings]:
    """Chunk-parallel labeling; output is bit-identical to label_segments."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    plan = runtime.partition_with_halo(len(segments), workers, halo=0)
    lats = np.ascontiguousarray(segments["lat"])
    lons = np.ascontiguousarray(segments["lon"])

    def map_chunk(chunk: runtime.Chunk) -> np.ndarray:
        return label_codes_from_arrays(lats[chunk.core_start:chunk.core_stop],
                                       lons[chunk.core_start:chunk.core_stop],
                                       raster, shift, params)

    def reduce_parts(parts: list[np.ndarray]) -> np.ndarray:
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)

    codes, timings = runtime.parallel_map_reduce(plan, map_chunk, reduce_parts)
    labeled = LabeledSegments(segments=segments, classes=codes,
                              sources=np.zeros(len(segments), dtype=np.uint8))
    return labeled, timings


# ---------------------------------------------------------------------------
# CSV formats
# ---------------------------------------------------------------------------

def write_labeled_csv(path: str | Path, labeled: LabeledSegments) -> None:
    seg_lines = segment_csv_lines(labeled.segments)
    lines = [LABELED_CSV_HEADER]
    for line, cls, src in zip(seg_lines, labeled.classes, labeled.sources):
        lines.append(f"{line},{int(cls)},{_SOURCE_CHARS[int(src)]}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_labeled_csv(path: str | Path) -> LabeledSegments:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != LABELED_CSV_HEADER.split(","):
            raise ValueError(f"{path}: unexpected labeled CSV header {header}")
        rows = list(reader)
    segments = parse_segment_csv_rows([row[:12] for row in rows])
    classes = np.array([int(row[12]) for row in rows], dtype=np.int64)
    try:
        sources = np.array([_SOURCE_CODES[row[13]] for row in rows], dtype=np.uint8)
    except KeyError as exc:
        raise ValueError(f"{path}: invalid source flag {exc}") from exc
    return LabeledSegments(segments=segments, classes=classes, sources=sources)


def read_overrides_csv(path: str | Path) -> list[OverrideSpan]:
    spans = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["start_index", "end_index", "class"]:
            raise ValueError(f"{path}: unexpected override CSV header {header}")
        for row in reader:
            spans.append(OverrideSpan(int(row[0]), int(row[1]), SurfaceClass(int(row[2]))))
    return spans
