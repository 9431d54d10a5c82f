"""Photon-track loading, 2 m statistical resampling, feature extraction, and
the synthetic-track generator used for end-to-end verification.

Photon collections and segment tables are columnar numpy structured arrays;
`PhotonEvent` / `Segment` are the corresponding row views.  Surface classes
are integer codes throughout: 1 = thick ice, 2 = thin ice, 3 = open water
(0 = nodata / unlabeled), matching the raster coding in `floeberg.geo`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .util import atomic_write_text, fmt_float

PHOTON_DTYPE = np.dtype([
    ("delta_time", "f8"),
    ("lat", "f8"),
    ("lon", "f8"),
    ("along_track", "f8"),
    ("height", "f8"),
    ("confidence", "i8"),
    ("background_rate", "f8"),
])

SEGMENT_DTYPE = np.dtype([
    ("index", "i8"),
    ("center_along_track", "f8"),
    ("lat", "f8"),
    ("lon", "f8"),
    ("n_photons", "i8"),
    ("h_mean", "f8"),
    ("h_median", "f8"),
    ("h_std", "f8"),
    ("photon_rate", "f8"),
    ("bg_rate_mean", "f8"),
    ("d_photon_rate", "f8"),
    ("d_bg_rate", "f8"),
])

SEGMENT_CSV_HEADER = ("index,center_along_track,lat,lon,n_photons,h_mean,h_median,"
                      "h_std,photon_rate,bg_rate_mean,d_photon_rate,d_bg_rate")
PHOTON_CSV_HEADER = "delta_time,lat,lon,along_track,height,confidence,background_rate"

FEATURE_NAMES = ("h_mean", "h_std", "photon_rate", "d_photon_rate",
                 "bg_rate_mean", "d_bg_rate")

DEFAULT_BIN_SIZE = 2.0
DEFAULT_MIN_CONFIDENCE = 4


@dataclass(frozen=True)
class PhotonEvent:
    """One geolocated photon (row view of PHOTON_DTYPE)."""

    delta_time: float
    lat: float
    lon: float
    along_track: float
    height: float
    confidence: int
    background_rate: float


@dataclass(frozen=True)
class Segment:
    """One 2 m along-track statistical bin (row view of SEGMENT_DTYPE)."""

    index: int
    center_along_track: float
    lat: float
    lon: float
    n_photons: int
    h_mean: float
    h_median: float
    h_std: float
    photon_rate: float
    bg_rate_mean: float
    d_photon_rate: float
    d_bg_rate: float


def photon_array(**columns) -> np.ndarray:
    """Build a PHOTON_DTYPE array from keyword columns; omitted columns are zero."""
    n = max(len(np.atleast_1d(v)) for v in columns.values())
    out = np.zeros(n, dtype=PHOTON_DTYPE)
    for name, values in columns.items():
        if name not in PHOTON_DTYPE.names:
            raise ValueError(f"unknown photon column {name!r}")
        out[name] = values
    return out


def segment_row(segments: np.ndarray, i: int) -> Segment:
    rec = segments[i]
    return Segment(*(rec[name].item() for name in SEGMENT_DTYPE.names))


# ---------------------------------------------------------------------------
# CSV round trip (shortest round-trip decimal formatting, bit-exact re-read)
# ---------------------------------------------------------------------------

def write_photon_csv(path: str | Path, photons: np.ndarray) -> None:
    lines = [PHOTON_CSV_HEADER]
    for rec in photons:
        lines.append(",".join((
            fmt_float(rec["delta_time"]), fmt_float(rec["lat"]), fmt_float(rec["lon"]),
            fmt_float(rec["along_track"]), fmt_float(rec["height"]),
            str(int(rec["confidence"])), fmt_float(rec["background_rate"]))))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_photon_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != PHOTON_CSV_HEADER.split(","):
            raise ValueError(f"{path}: unexpected photon CSV header {header}")
        rows = list(reader)
    out = np.zeros(len(rows), dtype=PHOTON_DTYPE)
    for i, row in enumerate(rows):
        out[i] = (float(row[0]), float(row[1]), float(row[2]), float(row[3]),
                  float(row[4]), int(row[5]), float(row[6]))
    return out


def write_segment_csv(path: str | Path, segments: np.ndarray) -> None:
    atomic_write_text(path, "\n".join([SEGMENT_CSV_HEADER] + segment_csv_lines(segments)) + "\n")


def segment_csv_lines(segments: np.ndarray) -> list[str]:
    lines = []
    for rec in segments:
        lines.append(",".join((
            str(int(rec["index"])), fmt_float(rec["center_along_track"]),
            fmt_float(rec["lat"]), fmt_float(rec["lon"]), str(int(rec["n_photons"])),
            fmt_float(rec["h_mean"]), fmt_float(rec["h_median"]), fmt_float(rec["h_std"]),
            fmt_float(rec["photon_rate"]), fmt_float(rec["bg_rate_mean"]),
            fmt_float(rec["d_photon_rate"]), fmt_float(rec["d_bg_rate"]))))
    return lines


def parse_segment_csv_rows(rows: list[list[str]]) -> np.ndarray:
    out = np.zeros(len(rows), dtype=SEGMENT_DTYPE)
    for i, row in enumerate(rows):
        out[i] = (int(row[0]), float(row[1]), float(row[2]), float(row[3]), int(row[4]),
                  float(row[5]), float(row[6]), float(row[7]), float(row[8]),
                  float(row[9]), float(row[10]), float(row[11]))
    return out


def read_segment_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SEGMENT_CSV_HEADER.split(","):
            raise ValueError(f"{path}: unexpected segment CSV header {header}")
        return parse_segment_csv_rows(list(reader))


# ---------------------------------------------------------------------------
# 2 m resampling
# ---------------------------------------------------------------------------

def resample_2m(photons: np.ndarray, bin_size: float = DEFAULT_BIN_SIZE,
                min_confidence: int = DEFAULT_MIN_CONFIDENCE) -> np.ndarray:
    """Aggregate confidence-filtered photons into fixed along-track bins.

    Photons with confidence below *min_confidence* are dropped.  Bin k covers
    [k*bin_size, (k+1)*bin_size); empty bins produce no segment (a gap).
    Heights use the sample (n-1) standard deviation, 0 for singleton bins.
    Rate deltas are taken against the previously emitted segment, 0 for the
    first.
    """
    if bin_size <= 0:
        raise ValueError("bin_size must be > 0")
    along = np.asarray(photons["along_track"], dtype=np.float64)
    if along.size and np.any(np.diff(along) < 0):
        raise ValueError("photons must be sorted by along_track")
    keep = photons["confidence"] >= min_confidence
    photons = photons[keep]
    if photons.size == 0:
        return np.zeros(0, dtype=SEGMENT_DTYPE)

    k = np.floor(photons["along_track"] / bin_size).astype(np.int64)
    # sort by (bin, height) so grouped medians reduce to offset arithmetic
    order = np.lexsort((photons["height"], k))
    photons = photons[order]
    k = k[order]

    bins, starts, counts = np.unique(k, return_index=True, return_counts=True)
    n = bins.size
    heights = photons["height"]

    sums = np.add.reduceat(heights, starts)
    means = sums / counts

    centered = heights - np.repeat(means, counts)
    ss = np.add.reduceat(centered * centered, starts)
    with np.errstate(invalid="ignore", divide="ignore"):
        stds = np.sqrt(ss / (counts - 1))
    stds[counts == 1] = 0.0

    lo = starts + (counts - 1) // 2
    hi = starts + counts // 2
    medians = 0.5 * (heights[lo] + heights[hi])

    out = np.zeros(n, dtype=SEGMENT_DTYPE)
    out["index"] = bins
    out["center_along_track"] = (bins + 0.5) * bin_size
    out["lat"] = np.add.reduceat(photons["lat"], starts) / counts
    out["lon"] = np.add.reduceat(photons["lon"], starts) / counts
    out["n_photons"] = counts
    out["h_mean"] = means
    out["h_median"] = medians
    out["h_std"] = stds
    out["photon_rate"] = counts / bin_size
    out["bg_rate_mean"] = np.add.reduceat(photons["background_rate"], starts) / counts
    out["d_photon_rate"][1:] = np.diff(out["photon_rate"])
    out["d_bg_rate"][1:] = np.diff(out["bg_rate_mean"])
    return out


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------

@dataclass
class FeatureScaler:
    """Per-feature z-score constants fitted on training data.

    Zero-variance columns pass through unscaled (offset 0, scale 1) so that
    degenerate features never divide by zero.
    """

    offset: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "FeatureScaler":
        features = np.asarray(features, dtype=np.float64)
        mean = features.mean(axis=0)
        std = features.std(axis=0)
        degenerate = std == 0.0
        offset = np.where(degenerate, 0.0, mean)
        scale = np.where(degenerate, 1.0, std)
        return cls(offset=offset, scale=scale)

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.offset) / self.scale


def compute_features(segments: np.ndarray, scaler: FeatureScaler | None = None) -> np.ndarray:
    """(n, 6) feature matrix [h_mean, h_std, photon_rate, d_photon_rate,
    bg_rate_mean, d_bg_rate], optionally standardized with a fitted scaler."""
    cols = [np.asarray(segments[name], dtype=np.float64) for name in FEATURE_NAMES]
    features = np.stack(cols, axis=1) if segments.size else np.zeros((0, 6))
    if scaler is not None:
        features = scaler.transform(features)
    if features.size and not np.all(np.isfinite(features)):
        raise ValueError("non-finite feature values")
    return features


# ---------------------------------------------------------------------------
# Synthetic tracks
# ---------------------------------------------------------------------------

# Per-class photon regimes: multiplier on the nominal photon density and the
# nominal background rate (Hz).  Open water returns far fewer surface photons
# and sits in a much brighter background than consolidated ice.
CLASS_DENSITY_FACTOR = {1: 1.0, 2: 0.65, 3: 0.35}
CLASS_BACKGROUND_RATE = {1: 60.0, 2: 300.0, 3: 900.0}
BACKGROUND_JITTER_FRACTION = 0.05
# sprinkle of low-confidence clutter photons, removed by the confidence filter
CLUTTER_DENSITY_FRACTION = 0.03

TRACK_START_LAT = -72.0
TRACK_LON = -170.0
METERS_PER_DEGREE_LAT = 111320.0
GROUND_SPEED_M_PER_S = 6900.0


@dataclass(frozen=True)
class SurfaceSpan:
    """One along-track stretch of a single surface class."""

    start_m: float
    end_m: float
    surface_class: int  # 1 thick ice, 2 thin ice, 3 open water
    freeboard_m: float

    def __post_init__(self):
        if self.end_m <= self.start_m:
            raise ValueError("span end must exceed start")
        if self.surface_class not in (1, 2, 3):
            raise ValueError(f"invalid surface class {self.surface_class}")
        if self.surface_class == 3 and self.freeboard_m != 0.0:
            raise ValueError("open water must have zero freeboard")
        if self.freeboard_m < 0.0:
            raise ValueError("freeboard must be >= 0")


@dataclass(frozen=True)
class SyntheticTrackSpec:
    """Recipe for a reproducible synthetic photon track with known truth."""

    length_m: float
    spans: tuple[SurfaceSpan, ...]
    photon_density: float = 25.0   # photons per meter before class factors
    noise_sigma: float = 0.1       # meters
    sea_level_trend: float = 0.0   # meters per km
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "spans", tuple(self.spans))
        if self.length_m <= 0:
            raise ValueError("track length must be > 0")
        if self.photon_density <= 0:
            raise ValueError("photon_density must be > 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        pos = 0.0
        for span in self.spans:
            if span.start_m != pos:
                raise ValueError("spans must partition the track without gaps")
            pos = span.end_m
        if pos != self.length_m:
            raise ValueError("spans must end exactly at the track length")


def sea_level_height(spec: SyntheticTrackSpec, along_m) -> np.ndarray:
    return np.asarray(along_m, dtype=np.float64) * (spec.sea_level_trend / 1000.0)


def synthesize_track(spec: SyntheticTrackSpec,
                     bin_size: float = DEFAULT_BIN_SIZE,
                     ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Generate (photons, true class per bin, true freeboard per bin).

    Signal photons carry confidence 4; each span also receives a small amount
    of low-confidence clutter so the confidence filter has work to do.  With
    noise_sigma = 0 every signal photon height is exactly sea level plus the
    span freeboard.  Identical specs produce bit-identical output.
    """
    rng = np.random.default_rng(spec.seed)
    along_parts: list[np.ndarray] = []
    height_parts: list[np.ndarray] = []
    conf_parts: list[np.ndarray] = []
    bg_parts: list[np.ndarray] = []

    for span in spec.spans:
        span_len = span.end_m - span.start_m
        density = spec.photon_density * CLASS_DENSITY_FACTOR[span.surface_class]
        n_signal = int(rng.poisson(density * span_len))
        along = rng.uniform(span.start_m, span.end_m, n_signal)
        noise = rng.normal(0.0, spec.noise_sigma, n_signal) if spec.noise_sigma > 0 else 0.0
        heights = sea_level_height(spec, along) + span.freeboard_m + noise
        base_bg = CLASS_BACKGROUND_RATE[span.surface_class]
        bg = base_bg + rng.normal(0.0, BACKGROUND_JITTER_FRACTION * base_bg, n_signal)
        along_parts.append(along)
        height_parts.append(np.asarray(heights, dtype=np.float64))
        conf_parts.append(np.full(n_signal, 4, dtype=np.int64))
        bg_parts.append(np.clip(bg, 0.0, None))

        n_clutter = int(rng.poisson(spec.photon_density * CLUTTER_DENSITY_FRACTION * span_len))
        c_along = rng.uniform(span.start_m, span.end_m, n_clutter)
        c_heights = sea_level_height(spec, c_along) + rng.uniform(-2.0, 5.0, n_clutter)
        along_parts.append(c_along)
        height_parts.append(c_heights)
        conf_parts.append(rng.integers(0, 4, n_clutter))
        bg_parts.append(np.clip(base_bg + rng.normal(0.0, BACKGROUND_JITTER_FRACTION * base_bg,
                                                     n_clutter), 0.0, None))

    along = np.concatenate(along_parts) if along_parts else np.zeros(0)
    order = np.argsort(along, kind="stable")
    along = along[order]
    photons = np.zeros(along.size, dtype=PHOTON_DTYPE)
    photons["along_track"] = along
    photons["height"] = np.concatenate(height_parts)[order]
    photons["confidence"] = np.concatenate(conf_parts)[order]
    photons["background_rate"] = np.concatenate(bg_parts)[order]
    photons["delta_time"] = along / GROUND_SPEED_M_PER_S
    photons["lat"] = TRACK_START_LAT - along / METERS_PER_DEGREE_LAT
    photons["lon"] = TRACK_LON

    n_bins = int(math.ceil(spec.length_m / bin_size))
    centers = (np.arange(n_bins) + 0.5) * bin_size
    true_class = np.zeros(n_bins, dtype=np.int64)
    true_freeboard = np.zeros(n_bins, dtype=np.float64)
    for span in spec.spans:
        mask = (centers >= span.start_m) & (centers < span.end_m)
        true_class[mask] = span.surface_class
        true_freeboard[mask] = span.freeboard_m
    return photons, true_class, true_freeboard


def read_track_spec_csv(path: str | Path, photon_density: float = 25.0,
                        noise_sigma: float = 0.1, sea_level_trend: float = 0.0,
                        seed: int = 0) -> SyntheticTrackSpec:
    """Track spec from a span CSV "start_m,end_m,class,freeboard_m"."""
    spans = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["start_m", "end_m", "class", "freeboard_m"]:
            raise ValueError(f"{path}: unexpected spec CSV header {header}")
        for row in reader:
            spans.append(SurfaceSpan(float(row[0]), float(row[1]), int(row[2]), float(row[3])))
    if not spans:
        raise ValueError(f"{path}: no surface spans")
    return SyntheticTrackSpec(length_m=spans[-1].end_m, spans=tuple(spans),
                              photon_density=photon_density, noise_sigma=noise_sigma,
                              sea_level_trend=sea_level_trend, seed=seed)
