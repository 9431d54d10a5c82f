"""South polar stereographic projection, classified label rasters, and drift shifts.

The projection is the ellipsoidal polar stereographic (south aspect) on WGS84
with standard parallel -70 and central meridian 0, i.e. the grid used by
southern-ocean sea-ice products.  Conventions:

* the South Pole maps to (0, 0),
* the central meridian maps to x = 0 with y > 0 (north-positive),
* x grows eastward, y grows northward on the projected plane.

Drift shifts ("550 m / NW" style) are applied to the raster: the image moves,
the track stays fixed.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .util import atomic_write_text, fmt_float

WGS84_SEMI_MAJOR_AXIS = 6378137.0
WGS84_INVERSE_FLATTENING = 298.257223563

_INVERSE_TOL_RAD = 1e-10
_INVERSE_MAX_ITER = 20


@dataclass(frozen=True)
class GeoPoint:
    """Geographic coordinate, Southern Hemisphere only (lat <= 0)."""

    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if self.lat > 0.0:
            raise ValueError(f"latitude {self.lat} is north of the equator (out of scope)")
        if self.lat < -90.0 or abs(self.lon) > 180.0:
            raise ValueError(f"coordinate ({self.lat}, {self.lon}) outside valid ranges")


@dataclass(frozen=True)
class ProjectedPoint:
    """Position on the projected plane, meters east (x) / north (y)."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite projected point ({self.x}, {self.y})")


@dataclass(frozen=True)
class StereoParams:
    """Ellipsoid and grid constants for the south polar stereographic projection."""

    semi_major_axis: float = WGS84_SEMI_MAJOR_AXIS
    inverse_flattening: float = WGS84_INVERSE_FLATTENING
    standard_parallel: float = -70.0
    central_meridian: float = 0.0

    def __post_init__(self):
        if not self.semi_major_axis > 0:
            raise ValueError("semi_major_axis must be > 0")
        if not self.inverse_flattening > 0:
            raise ValueError("inverse_flattening must be > 0")
        if not -90.0 < self.standard_parallel < 0.0:
            raise ValueError("standard_parallel must lie in (-90, 0)")

    @property
    def eccentricity(self) -> float:
        f = 1.0 / self.inverse_flattening
        return math.sqrt(2.0 * f - f * f)

    def _scale_constants(self) -> tuple[float, float]:
        """(t_c, m_c) evaluated at the standard parallel."""
        e = self.eccentricity
        phi_c = math.radians(self.standard_parallel)
        t_c = _iso_t(np.asarray(phi_c), e)
        m_c = math.cos(phi_c) / math.sqrt(1.0 - (e * math.sin(phi_c)) ** 2)
        return float(t_c), m_c


SOUTH_POLAR_SEA_ICE = StereoParams()


def _iso_t(phi, e):
    """Isometric-latitude factor of the south-aspect projection; 0 at the pole."""
    s = np.sin(phi)
    return np.tan(np.pi / 4.0 + phi / 2.0) / ((1.0 + e * s) / (1.0 - e * s)) ** (e / 2.0)


def project_forward_arrays(lat_deg, lon_deg, params: StereoParams = SOUTH_POLAR_SEA_ICE):
    """Vectorized forward projection; inputs in degrees, outputs in meters."""
    lat = np.asarray(lat_deg, dtype=np.float64)
    lon = np.asarray(lon_deg, dtype=np.float64)
    if not (np.all(np.isfinite(lat)) and np.all(np.isfinite(lon))):
        raise ValueError("non-finite coordinates in projection input")
    if np.any(lat > 0.0):
        raise ValueError("latitudes north of the equator are out of scope")
    e = params.eccentricity
    t_c, m_c = params._scale_constants()
    phi = np.radians(lat)
    t = _iso_t(phi, e)
    rho = params.semi_major_axis * m_c * t / t_c
    dlam = np.radians(lon - params.central_meridian)
    return rho * np.sin(dlam), rho * np.cos(dlam)


def project_forward(p: GeoPoint, params: StereoParams = SOUTH_POLAR_SEA_ICE) -> ProjectedPoint:
    x, y = project_forward_arrays(p.lat, p.lon, params)
    return ProjectedPoint(float(x), float(y))


def project_inverse_arrays(x, y, params: StereoParams = SOUTH_POLAR_SEA_ICE):
    """Vectorized inverse projection; latitude recovered iteratively to < 1e-10 rad."""
    xs = np.asarray(x, dtype=np.float64)
    ys = np.asarray(y, dtype=np.float64)
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise ValueError("non-finite coordinates in projection input")
    e = params.eccentricity
    t_c, m_c = params._scale_constants()
    rho = np.hypot(xs, ys)
    t = rho * t_c / (params.semi_major_axis * m_c)
    phi = 2.0 * np.arctan(t) - np.pi / 2.0
    for _ in range(_INVERSE_MAX_ITER):
        s = np.sin(phi)
        phi_next = 2.0 * np.arctan(t * ((1.0 + e * s) / (1.0 - e * s)) ** (e / 2.0)) - np.pi / 2.0
        delta = np.max(np.abs(phi_next - phi)) if phi.ndim else abs(phi_next - phi)
        phi = phi_next
        if delta < _INVERSE_TOL_RAD:
            break
    else:
        raise ArithmeticError("inverse projection did not converge in "
                              f"{_INVERSE_MAX_ITER} iterations")
    lam = np.radians(params.central_meridian) + np.arctan2(xs, ys)
    lon = np.degrees(lam)
    # keep longitudes in [-180, 180]
    lon = np.where(lon > 180.0, lon - 360.0, lon)
    lon = np.where(lon < -180.0, lon + 360.0, lon)
    return np.degrees(phi), lon


def project_inverse(q: ProjectedPoint, params: StereoParams = SOUTH_POLAR_SEA_ICE) -> GeoPoint:
    lat, lon = project_inverse_arrays(q.x, q.y, params)
    return GeoPoint(float(lat), float(lon))


# ---------------------------------------------------------------------------
# Drift shifts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShiftVector:
    """Raster translation in projected meters (east = +x, north = +y)."""

    dx: float = 0.0
    dy: float = 0.0

    def __add__(self, other: "ShiftVector") -> "ShiftVector":
        return ShiftVector(self.dx + other.dx, self.dy + other.dy)


_DIRECTION_AXES = {
    "N": (0.0, 1.0),
    "S": (0.0, -1.0),
    "E": (1.0, 0.0),
    "W": (-1.0, 0.0),
    "NE": (1.0, 1.0),
    "NW": (-1.0, 1.0),
    "SE": (1.0, -1.0),
    "SW": (-1.0, -1.0),
}

_SHIFT_RE = re.compile(r"^\s*([-+0-9.eE]+)\s*m\s*(?:/\s*([A-Za-z]+)\s*)?$")


def parse_shift(text: str) -> ShiftVector:
    """Parse a "<distance> m [/ <direction>]" descriptor into a ShiftVector.

    Cardinal directions map to unit axes; diagonals get 1/sqrt(2) per axis so
    the vector magnitude equals the stated distance.
    """
    m = _SHIFT_RE.match(text)
    if not m:
        raise ValueError(f"unparseable shift descriptor: {text!r}")
    distance = float(m.group(1))
    direction = m.group(2)
    if direction is None:
        if distance != 0.0:
            raise ValueError(f"shift {text!r} has a distance but no direction")
        return ShiftVector(0.0, 0.0)
    key = direction.upper()
    if key not in _DIRECTION_AXES:
        raise ValueError(f"unknown shift direction {direction!r}")
    ux, uy = _DIRECTION_AXES[key]
    if ux != 0.0 and uy != 0.0:
        scale = distance / math.sqrt(2.0)
    else:
        scale = distance
    return ShiftVector(ux * scale, uy * scale)


# ---------------------------------------------------------------------------
# Label rasters
# ---------------------------------------------------------------------------

VALID_CLASS_CODES = (0, 1, 2, 3)


@dataclass
class LabelRaster:
    """Row-major grid of surface-class codes; row 0 is the northernmost row.

    Codes: 0 = nodata, 1 = thick ice, 2 = thin ice, 3 = open water.
    (x_origin, y_origin) is the upper-left corner in projected meters.
    """

    ncols: int
    nrows: int
    x_origin: float
    y_origin: float
    cell_size: float
    nodata_code: int = 0
    cells: np.ndarray = field(default=None)  # shape (nrows, ncols), int

    def __post_init__(self):
        if self.ncols <= 0 or self.nrows <= 0:
            raise ValueError("raster dimensions must be positive")
        if not self.cell_size > 0:
            raise ValueError("cell_size must be > 0")
        self.cells = np.ascontiguousarray(np.asarray(self.cells, dtype=np.int64))
        if self.cells.shape != (self.nrows, self.ncols):
            raise ValueError(f"cells shape {self.cells.shape} != ({self.nrows}, {self.ncols})")
        bad = ~np.isin(self.cells, VALID_CLASS_CODES)
        if np.any(bad):
            raise ValueError(f"raster holds invalid class codes: {np.unique(self.cells[bad])}")


def raster_lookup_arrays(raster: LabelRaster, xs, ys, shift: ShiftVector = ShiftVector()):
    """Class code of the shifted-raster cell containing each point; nodata outside."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    # moving the raster by +shift is equivalent to querying the unshifted
    # raster at the point minus the shift
    col = np.floor((xs - shift.dx - raster.x_origin) / raster.cell_size).astype(np.int64)
    row = np.floor((raster.y_origin - (ys - shift.dy)) / raster.cell_size).astype(np.int64)
    inside = (col >= 0) & (col < raster.ncols) & (row >= 0) & (row < raster.nrows)
    flat_index = row * raster.ncols + col
    np.clip(flat_index, 0, raster.cells.size - 1, out=flat_index)
    return np.where(inside, raster.cells.reshape(-1).take(flat_index),
                    np.int64(raster.nodata_code))


def raster_lookup(raster: LabelRaster, q: ProjectedPoint,
                  shift: ShiftVector = ShiftVector()) -> int:
    return int(raster_lookup_arrays(raster, np.asarray([q.x]), np.asarray([q.y]), shift)[0])


def write_raster(path: str | Path, raster: LabelRaster) -> None:
    """ESRI-ASCII-grid-compatible text format; row 0 (north) first."""
    yll = raster.y_origin - raster.nrows * raster.cell_size
    lines = [
        f"ncols {raster.ncols}",
        f"nrows {raster.nrows}",
        f"xllcorner {fmt_float(raster.x_origin)}",
        f"yllcorner {fmt_float(yll)}",
        f"cellsize {fmt_float(raster.cell_size)}",
        f"nodata_value {raster.nodata_code}",
    ]
    for r in range(raster.nrows):
        lines.append(" ".join(str(int(v)) for v in raster.cells[r]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_raster(path: str | Path) -> LabelRaster:
    with open(path) as fh:
        text = fh.read()
    lines = text.splitlines()
    if len(lines) < 6:
        raise ValueError(f"{path}: raster header truncated")
    header = {}
    for ln in lines[:6]:
        parts = ln.split()
        if len(parts) != 2:
            raise ValueError(f"{path}: malformed header line {ln!r}")
        header[parts[0].lower()] = parts[1]
    try:
        ncols = int(header["ncols"])
        nrows = int(header["nrows"])
        xll = float(header["xllcorner"])
        yll = float(header["yllcorner"])
        cell = float(header["cellsize"])
        nodata = int(header["nodata_value"])
    except KeyError as exc:
        raise ValueError(f"{path}: missing raster header field {exc}") from exc
    values = " ".join(lines[6:]).split()
    if len(values) != ncols * nrows:
        raise ValueError(f"{path}: expected {ncols * nrows} cells, found {len(values)}")
    cells = np.array(values, dtype=np.int64).reshape(nrows, ncols)
    return LabelRaster(ncols=ncols, nrows=nrows, x_origin=xll,
                       y_origin=yll + nrows * cell, cell_size=cell,
                       nodata_code=nodata, cells=cells)


# ---------------------------------------------------------------------------
# Track / raster pairing table
# ---------------------------------------------------------------------------

SHIFT_TABLE_COLUMNS = ["pair_id", "track_file", "raster_file", "time_diff_minutes", "shift_text"]

DEFAULT_PAIRING_TOLERANCE_MINUTES = 80.0


@dataclass(frozen=True)
class TrackRasterPair:
    pair_id: str
    track_file: str
    raster_file: str
    time_diff_minutes: float
    shift_text: str

    @property
    def shift(self) -> ShiftVector:
        return parse_shift(self.shift_text)


def read_shift_table(path: str | Path,
                     max_time_diff_minutes: float = DEFAULT_PAIRING_TOLERANCE_MINUTES,
                     ) -> list[TrackRasterPair]:
    """Load the pairing table, rejecting pairs beyond the temporal tolerance."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SHIFT_TABLE_COLUMNS:
            raise ValueError(f"{path}: expected columns {SHIFT_TABLE_COLUMNS}, "
                             f"got {reader.fieldnames}")
        pairs = []
        for rec in reader:
            pair = TrackRasterPair(
                pair_id=rec["pair_id"],
                track_file=rec["track_file"],
                raster_file=rec["raster_file"],
                time_diff_minutes=float(rec["time_diff_minutes"]),
                shift_text=rec["shift_text"],
            )
            if pair.time_diff_minutes > max_time_diff_minutes:
                raise ValueError(
                    f"{path}: pair {pair.pair_id} exceeds the "
                    f"{max_time_diff_minutes}-minute pairing tolerance "
                    f"({pair.time_diff_minutes} min)")
            pair.shift  # validates the descriptor
            pairs.append(pair)
    return pairs
