"""Local sea-surface estimation and freeboard computation.

Leads are maximal runs of open-water segments with contiguous bin indices
(class changes and track gaps both end a run).  Each lead gets a weighted
mean height: samples are weighted by exp(-((h_i - h_min) / sigma_i)^2),
normalized, with variance Sum alpha_i^2 sigma_i^2.  Sliding windows (10 km
long, 5 km stride) combine the leads they contain; the default combiner
weights leads by inverse variance, for which the window variance collapses
to 1 / Sum(1 / sigma_lead^2).  Windows without leads are filled by linear
interpolation between their valid neighbors (constant extrapolation at the
track ends), and per-segment references interpolate linearly between window
centers.  Freeboard is the plain difference between segment height and the
local reference; negative values are flagged, never clamped.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import runtime
from .autolabel import LabeledSegments, SurfaceClass
from .util import atomic_write_text, fmt_float

DEFAULT_WINDOW_LENGTH_M = 10_000.0
DEFAULT_STRIDE_M = 5_000.0
DEFAULT_MIN_LEAD_LENGTH = 1
SIGMA_SQ_FLOOR = 1e-12

# chunk halo for parallel lead extraction: one window radius of 2 m segments
SURFACE_HALO_SEGMENTS = 2500

FREEBOARD_CSV_HEADER = ("index,center_along_track,lat,lon,class,h_s,h_ref,"
                        "sigma_ref,h_f,negative_flag")
WINDOW_CSV_HEADER = "center,method,n_leads,h_ref,sigma_sq_ref,interpolated"
HISTOGRAM_CSV_HEADER = "bin_left,bin_right,count"

FREEBOARD_DTYPE = np.dtype([
    ("index", "i8"),
    ("center_along_track", "f8"),
    ("lat", "f8"),
    ("lon", "f8"),
    ("surface_class", "i8"),
    ("h_s", "f8"),
    ("h_ref", "f8"),
    ("sigma_ref", "f8"),
    ("h_f", "f8"),
    ("negative_flag", "i8"),
])


class NoReferenceError(ValueError):
    """The track holds no open water, so no sea-surface reference exists."""


class SeaSurfaceMethod(str, Enum):
    NASA_WEIGHTED = "nasa_weighted"
    MIN_ELEV = "min_elev"
    AVG_ELEV = "avg_elev"
    NEAREST_MIN_ELEV = "nearest_min_elev"


@dataclass(frozen=True)
class Lead:
    """Contiguous open-water run with its weighted height estimate."""

    start_index: int           # first segment bin index (inclusive)
    end_index: int             # last segment bin index (inclusive)
    along_track_mid: float     # midpoint of the run, meters
    heights: np.ndarray        # per-sample h_i
    sigma_sqs: np.ndarray      # per-sample sigma_i^2 (floored)
    n_samples: int
    h_min: float
    h_lead: float
    sigma_sq_lead: float


@dataclass(frozen=True)
class SeaSurfaceWindow:
    center_along_track: float
    half_width: float
    n_leads: int
    h_ref: float
    sigma_sq_ref: float
    method: SeaSurfaceMethod
    filled_by_interpolation: bool


@dataclass
class SeaSurfaceProfile:
    method: SeaSurfaceMethod
    windows: list[SeaSurfaceWindow]
    h_ref: np.ndarray         # per segment
    sigma_sq_ref: np.ndarray  # per segment


def lead_height(heights: np.ndarray, sigma_sqs: np.ndarray) -> tuple[float, float]:
    """Weighted mean height and error variance of one lead's samples.

    Weights are exp(-((h_i - h_min)/sigma_i)^2) normalized to sum 1; the
    minimum sample always carries weight exp(0) = 1, so the estimate is
    defined even when every variance sits at the floor.
    """
    heights = np.asarray(heights, dtype=np.float64)
    sigma_sqs = np.maximum(np.asarray(sigma_sqs, dtype=np.float64), SIGMA_SQ_FLOOR)
    if heights.size == 0:
        raise ValueError("a lead needs at least one sample")
    h_min = heights.min()
    z = (heights - h_min) / np.sqrt(sigma_sqs)
    weights = np.exp(-(z * z))
    alpha = weights / weights.sum()
    h_hat = float(alpha @ heights)
    var_hat = float((alpha * alpha) @ sigma_sqs)
    return h_hat, var_hat


def extract_leads(labeled: LabeledSegments,
                  min_length: int = DEFAULT_MIN_LEAD_LENGTH) -> list[Lead]:
    """Maximal index-contiguous open-water runs of at least *min_length* segments.

    Per-sample error variance is h_std^2 / n_photons (standard error of the
    2 m mean), floored at 1e-12.
    """
    if min_length < 1:
        raise ValueError("min_length must be >= 1")
    segments = labeled.segments
    n = len(segments)
    leads: list[Lead] = []
    water = labeled.classes == SurfaceClass.OPEN_WATER
    if n == 0 or not np.any(water):
        return leads
    indices = segments["index"]
    # run boundaries: class change or a gap in the bin indices
    breaks = np.flatnonzero(np.diff(indices) != 1) + 1
    run_starts = np.concatenate([[0], breaks])
    run_stops = np.concatenate([breaks, [n]])
    for lo, hi in zip(run_starts, run_stops):
        pos = lo
        while pos < hi:
            if not water[pos]:
                pos += 1
                continue
            end = pos
            while end + 1 < hi and water[end + 1]:
                end += 1
            if end - pos + 1 >= min_length:
                leads.append(_make_lead(segments, pos, end))
            pos = end + 1
    return leads


def _make_lead(segments: np.ndarray, lo: int, hi: int) -> Lead:
    rows = segments[lo:hi + 1]
    heights = np.ascontiguousarray(rows["h_mean"])
    sigma_sqs = np.maximum(rows["h_std"] ** 2 / rows["n_photons"], SIGMA_SQ_FLOOR)
    h_hat, var_hat = lead_height(heights, sigma_sqs)
    return Lead(start_index=int(rows["index"][0]), end_index=int(rows["index"][-1]),
                along_track_mid=float(0.5 * (rows["center_along_track"][0]
                                             + rows["center_along_track"][-1])),
                heights=heights, sigma_sqs=sigma_sqs, n_samples=len(rows),
                h_min=float(heights.min()), h_lead=h_hat, sigma_sq_lead=var_hat)


def window_reference(leads: list[Lead], method: SeaSurfaceMethod,
                     window_center: float | None = None) -> tuple[float, float]:
    """Combine the leads inside one window into (h_ref, sigma_sq_ref).

    nasa_weighted: inverse-variance weighting of the lead estimates.
    min_elev / avg_elev: minimum / mean over all lead samples in the window.
    nearest_min_elev: minimum sample of the lead nearest the window center.
    """
    if not leads:
        raise ValueError("window_reference needs at least one lead; empty "
                         "windows are filled by interpolation upstream")
    if method == SeaSurfaceMethod.NASA_WEIGHTED:
        variances = np.array([lead.sigma_sq_lead for lead in leads])
        estimates = np.array([lead.h_lead for lead in leads])
        inv = 1.0 / variances
        alpha = inv / inv.sum()
        return float(alpha @ estimates), float((alpha * alpha) @ variances)
    if method == SeaSurfaceMethod.MIN_ELEV:
        position = int(np.argmin([lead.heights.min() for lead in leads]))
        lead = leads[position]
        sample = int(np.argmin(lead.heights))
        return float(lead.heights[sample]), float(lead.sigma_sqs[sample])
    if method == SeaSurfaceMethod.AVG_ELEV:
        heights = np.concatenate([lead.heights for lead in leads])
        sigma_sqs = np.concatenate([lead.sigma_sqs for lead in leads])
        return float(heights.mean()), float(sigma_sqs.sum() / len(sigma_sqs) ** 2)
    if method == SeaSurfaceMethod.NEAREST_MIN_ELEV:
        if window_center is None:
            raise ValueError("nearest_min_elev needs the window center")
        nearest = min(leads, key=lambda lead: abs(lead.along_track_mid - window_center))
        sample = int(np.argmin(nearest.heights))
        return float(nearest.heights[sample]), float(nearest.sigma_sqs[sample])
    raise ValueError(f"unknown sea-surface method {method!r}")


def build_profile(labeled: LabeledSegments,
                  method: SeaSurfaceMethod = SeaSurfaceMethod.NASA_WEIGHTED,
                  window_length: float = DEFAULT_WINDOW_LENGTH_M,
                  stride: float = DEFAULT_STRIDE_M,
                  min_lead_length: int = DEFAULT_MIN_LEAD_LENGTH,
                  workers: int = 1) -> SeaSurfaceProfile:
    """Sliding-window sea-surface profile over the whole track.

    Window centers sit on multiples of *stride* spanning the track; a lead
    belongs to every window whose span contains its midpoint.  Lead
    extraction may run chunk-parallel (halo = 2500 segments per side, the
    window radius in 2 m bins); the result is bit-identical to sequential
    execution as long as no single lead outgrows the halo.
    """
    if window_length <= 0 or stride <= 0:
        raise ValueError("window_length and stride must be > 0")
    if len(labeled) == 0:
        raise NoReferenceError("empty track has no sea-surface reference")
    leads = (extract_leads(labeled, min_lead_length) if workers <= 1
             else _extract_leads_parallel(labeled, min_lead_length, workers))
    if not leads:
        raise NoReferenceError("no open-water segments: cannot build a "
                               "sea-surface reference")
    along = labeled.segments["center_along_track"]
    half_width = window_length / 2.0
    first = int(np.floor(along[0] / stride))
    last = int(np.ceil(along[-1] / stride))
    centers = np.arange(first, last + 1, dtype=np.float64) * stride

    mids = np.array([lead.along_track_mid for lead in leads])
    order = np.argsort(mids, kind="stable")
    mids = mids[order]
    leads = [leads[i] for i in order]

    windows: list[SeaSurfaceWindow] = []
    h_values = np.full(centers.size, np.nan)
    var_values = np.full(centers.size, np.nan)
    for i, center in enumerate(centers):
        lo = int(np.searchsorted(mids, center - half_width, side="left"))
        hi = int(np.searchsorted(mids, center + half_width, side="right"))
        members = leads[lo:hi]
        if members:
            h_ref, var_ref = window_reference(members, method, window_center=center)
            h_values[i] = h_ref
            var_values[i] = var_ref
        windows.append(SeaSurfaceWindow(center_along_track=float(center),
                                        half_width=half_width, n_leads=len(members),
                                        h_ref=float("nan"), sigma_sq_ref=float("nan"),
                                        method=method,
                                        filled_by_interpolation=not members))
    valid = ~np.isnan(h_values)
    if not np.any(valid):
        raise NoReferenceError("no window contains a lead")
    h_filled = np.interp(centers, centers[valid], h_values[valid])
    var_filled = np.interp(centers, centers[valid], var_values[valid])
    windows = [SeaSurfaceWindow(w.center_along_track, w.half_width, w.n_leads,
                                float(h), float(v), method, w.filled_by_interpolation)
               for w, h, v in zip(windows, h_filled, var_filled)]
    return SeaSurfaceProfile(method=method, windows=windows,
                             h_ref=np.interp(along, centers, h_filled),
                             sigma_sq_ref=np.interp(along, centers, var_filled))


def _extract_leads_parallel(labeled: LabeledSegments, min_length: int,
                            workers: int) -> list[Lead]:
    """Chunked lead extraction; a chunk owns the leads that start in its core."""
    plan = runtime.partition_with_halo(len(labeled), workers, SURFACE_HALO_SEGMENTS)

    def map_chunk(chunk: runtime.Chunk) -> list[Lead]:
        view = LabeledSegments(
            segments=labeled.segments[chunk.halo_start:chunk.halo_stop],
            classes=labeled.classes[chunk.halo_start:chunk.halo_stop],
            sources=labeled.sources[chunk.halo_start:chunk.halo_stop])
        local = extract_leads(view, min_length)
        core_first = int(labeled.segments["index"][chunk.core_start])
        core_last = int(labeled.segments["index"][chunk.core_stop - 1])
        return [lead for lead in local if core_first <= lead.start_index <= core_last]

    def reduce_parts(parts: list[list[Lead]]) -> list[Lead]:
        merged: list[Lead] = []
        for part in parts:
            merged.extend(part)
        return merged

    leads, _ = runtime.parallel_map_reduce(plan, map_chunk, reduce_parts)
    return leads


def compute_freeboard(labeled: LabeledSegments, profile: SeaSurfaceProfile) -> np.ndarray:
    """Per-segment freeboard h_f = h_s - h_ref for every segment, water included."""
    n = len(labeled)
    if len(profile.h_ref) != n:
        raise ValueError("profile does not cover the labeled track")
    out = np.zeros(n, dtype=FREEBOARD_DTYPE)
    segments = labeled.segments
    out["index"] = segments["index"]
    out["center_along_track"] = segments["center_along_track"]
    out["lat"] = segments["lat"]
    out["lon"] = segments["lon"]
    out["surface_class"] = labeled.classes
    out["h_s"] = segments["h_mean"]
    out["h_ref"] = profile.h_ref
    out["sigma_ref"] = np.sqrt(profile.sigma_sq_ref)
    out["h_f"] = out["h_s"] - out["h_ref"]
    out["negative_flag"] = (out["h_f"] < 0.0).astype(np.int64)
    return out


def freeboard_histogram(values: np.ndarray,
                        bin_width: float = 0.02) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-width histogram covering [min, max]; counts conserve the total."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("histogram needs at least one record")
    if bin_width <= 0:
        raise ValueError("bin_width must be > 0")
    lo = float(values.min())
    hi = float(values.max())
    n_bins = max(1, int(np.ceil((hi - lo) / bin_width)))
    edges = lo + bin_width * np.arange(n_bins + 1)
    if edges[-1] < hi:  # guard the rare roundoff shortfall
        edges = np.append(edges, edges[-1] + bin_width)
    counts, _ = np.histogram(values, bins=edges)
    return edges, counts


# ---------------------------------------------------------------------------
# CSV formats
# ---------------------------------------------------------------------------

def write_freeboard_csv(path: str | Path, records: np.ndarray) -> None:
    lines = [FREEBOARD_CSV_HEADER]
    for rec in records:
        lines.append(",".join((
            str(int(rec["index"])), fmt_float(rec["center_along_track"]),
            fmt_float(rec["lat"]), fmt_float(rec["lon"]), str(int(rec["surface_class"])),
            fmt_float(rec["h_s"]), fmt_float(rec["h_ref"]), fmt_float(rec["sigma_ref"]),
            fmt_float(rec["h_f"]), str(int(rec["negative_flag"])))))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_freeboard_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != FREEBOARD_CSV_HEADER.split(","):
            raise ValueError(f"{path}: unexpected freeboard CSV header {header}")
        rows = list(reader)
    out = np.zeros(len(rows), dtype=FREEBOARD_DTYPE)
    for i, row in enumerate(rows):
        out[i] = (int(row[0]), float(row[1]), float(row[2]), float(row[3]), int(row[4]),
                  float(row[5]), float(row[6]), float(row[7]), float(row[8]), int(row[9]))
    return out


def write_window_csv(path: str | Path, profile: SeaSurfaceProfile) -> None:
    lines = [WINDOW_CSV_HEADER]
    for w in profile.windows:
        lines.append(",".join((
            fmt_float(w.center_along_track), w.method.value, str(w.n_leads),
            fmt_float(w.h_ref), fmt_float(w.sigma_sq_ref),
            str(int(w.filled_by_interpolation)))))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_histogram_csv(path: str | Path, edges: np.ndarray, counts: np.ndarray) -> None:
    lines = [HISTOGRAM_CSV_HEADER]
    for left, right, count in zip(edges[:-1], edges[1:], counts):
        lines.append(f"{fmt_float(left)},{fmt_float(right)},{int(count)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_histogram_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != HISTOGRAM_CSV_HEADER.split(","):
            raise ValueError(f"{path}: unexpected histogram CSV header {header}")
        rows = list(reader)
    lefts = np.array([float(r[0]) for r in rows])
    rights = np.array([float(r[1]) for r in rows])
    counts = np.array([int(r[2]) for r in rows], dtype=np.int64)
    edges = np.append(lefts, rights[-1]) if len(rows) else np.zeros(0)
    return edges, counts
