"""Shared test oracles and synthetic-data builders.

Everything here is deliberately written independently of the library code:
straight-line transcriptions of textbook equations and naive double-loop
summations, used as reference implementations in the tests.
"""

from __future__ import annotations

import math

import numpy as np

# ---------------------------------------------------------------------------
# Independent polar stereographic oracle (ellipsoidal, Snyder's equations).
# North-aspect formulas; the south aspect is obtained by negating the inputs
# and the resulting x/y.  The inverse uses the closed-form conformal-latitude
# series instead of iteration, so it shares no code path with the library.
# ---------------------------------------------------------------------------

WGS84_A = 6378137.0
WGS84_INV_F = 298.257223563


def _ell_constants():
    f = 1.0 / WGS84_INV_F
    e2 = 2.0 * f - f * f
    return e2, math.sqrt(e2)


def _t_north(phi: float, e: float) -> float:
    return math.tan(math.pi / 4.0 - phi / 2.0) / (
        (1.0 - e * math.sin(phi)) / (1.0 + e * math.sin(phi))) ** (e / 2.0)


def oracle_forward(lat_deg: float, lon_deg: float,
                   lat_ts_deg: float = -70.0, lon0_deg: float = 0.0):
    """South polar stereographic forward projection (reference implementation)."""
    e2, e = _ell_constants()
    phi = math.radians(-lat_deg)
    lam = math.radians(-lon_deg)
    phi_c = math.radians(-lat_ts_deg)
    lam0 = math.radians(-lon0_deg)
    t = _t_north(phi, e)
    t_c = _t_north(phi_c, e)
    m_c = math.cos(phi_c) / math.sqrt(1.0 - e2 * math.sin(phi_c) ** 2)
    rho = WGS84_A * m_c * t / t_c
    x_n = rho * math.sin(lam - lam0)
    y_n = -rho * math.cos(lam - lam0)
    return -x_n, -y_n


def oracle_inverse(x: float, y: float,
                   lat_ts_deg: float = -70.0, lon0_deg: float = 0.0):
    """Inverse via the conformal-latitude series (no iteration)."""
    e2, e = _ell_constants()
    xn, yn = -x, -y
    phi_c = math.radians(-lat_ts_deg)
    lam0 = math.radians(-lon0_deg)
    t_c = _t_north(phi_c, e)
    m_c = math.cos(phi_c) / math.sqrt(1.0 - e2 * math.sin(phi_c) ** 2)
    rho = math.hypot(xn, yn)
    t = rho * t_c / (WGS84_A * m_c)
    chi = math.pi / 2.0 - 2.0 * math.atan(t)
    phi = (chi
           + (e2 / 2.0 + 5.0 * e2 ** 2 / 24.0 + e2 ** 3 / 12.0
              + 13.0 * e2 ** 4 / 360.0) * math.sin(2.0 * chi)
           + (7.0 * e2 ** 2 / 48.0 + 29.0 * e2 ** 3 / 240.0
              + 811.0 * e2 ** 4 / 11520.0) * math.sin(4.0 * chi)
           + (7.0 * e2 ** 3 / 120.0 + 81.0 * e2 ** 4 / 1120.0) * math.sin(6.0 * chi)
           + (4279.0 * e2 ** 4 / 161280.0) * math.sin(8.0 * chi))
    lam = lam0 + math.atan2(xn, -yn)
    lat = -math.degrees(phi)
    lon = -math.degrees(lam)
    if lon > 180.0:
        lon -= 360.0
    if lon < -180.0:
        lon += 360.0
    return lat, lon


# ---------------------------------------------------------------------------
# Naive double-loop reference for the lead / window estimators.
# ---------------------------------------------------------------------------

def naive_lead_height(heights, sigma_sqs):
    heights = list(map(float, heights))
    sigma_sqs = list(map(float, sigma_sqs))
    h_min = min(heights)
    weights = []
    for h, s2 in zip(heights, sigma_sqs):
        weights.append(math.exp(-(((h - h_min) / math.sqrt(s2)) ** 2)))
    total = 0.0
    for w in weights:
        total += w
    h_hat = 0.0
    var_hat = 0.0
    for h, s2, w in zip(heights, sigma_sqs, weights):
        a = w / total
        h_hat += a * h
        var_hat += a * a * s2
    return h_hat, var_hat


def naive_window_reference(lead_heights, lead_sigma_sqs):
    lead_heights = list(map(float, lead_heights))
    lead_sigma_sqs = list(map(float, lead_sigma_sqs))
    denom = 0.0
    for s2 in lead_sigma_sqs:
        denom += 1.0 / s2
    h_ref = 0.0
    var_ref = 0.0
    for h, s2 in zip(lead_heights, lead_sigma_sqs):
        a = (1.0 / s2) / denom
        h_ref += a * h
        var_ref += a * a * s2
    return h_ref, var_ref


# ---------------------------------------------------------------------------
# Central finite-difference gradients.
# ---------------------------------------------------------------------------

def finite_difference_gradients(loss_fn, params, step=1e-6):
    """Central finite differences of a scalar loss over a list of arrays."""
    grads = []
    for arr in params:
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gf = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            hi = loss_fn()
            flat[j] = orig - step
            lo = loss_fn()
            flat[j] = orig
            gf[j] = (hi - lo) / (2.0 * step)
        grads.append(g)
    return grads


def finite_difference_subsample(loss_fn, params, coords, step=1e-6):
    """Central differences at selected (array_index, flat_index) coordinates."""
    values = []
    for ai, j in coords:
        flat = params[ai].reshape(-1)
        orig = flat[j]
        flat[j] = orig + step
        hi = loss_fn()
        flat[j] = orig - step
        lo = loss_fn()
        flat[j] = orig
        values.append((hi - lo) / (2.0 * step))
    return np.asarray(values)


def finite_difference_gradients_threaded(clone_fn, threads=2, step=1e-6):
    """Full central-difference sweep split across threads.

    *clone_fn* returns a fresh (loss_fn, params) pair per thread so each
    thread perturbs its own model copy; coordinate ranges are disjoint, so the
    merged result is identical to a sequential sweep.
    """
    from concurrent.futures import ThreadPoolExecutor

    _, template = clone_fn()
    sizes = [a.size for a in template]
    total = sum(sizes)
    bounds = np.linspace(0, total, threads + 1).astype(int)

    def sweep(lo_hi):
        range_lo, range_hi = lo_hi
        loss_fn, params = clone_fn()
        grads = [np.zeros_like(a) for a in params]
        pos = 0
        for arr, grad in zip(params, grads):
            flat = arr.reshape(-1)
            gf = grad.reshape(-1)
            lo_j = max(0, range_lo - pos)
            hi_j = min(flat.size, range_hi - pos)
            for j in range(lo_j, hi_j):
                orig = flat[j]
                flat[j] = orig + step
                hi = loss_fn()
                flat[j] = orig - step
                lo = loss_fn()
                flat[j] = orig
                gf[j] = (hi - lo) / (2.0 * step)
            pos += flat.size
        return grads

    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(sweep, zip(bounds[:-1], bounds[1:])))
    return [np.sum([p[i] for p in parts], axis=0) for i in range(len(template))]


# ---------------------------------------------------------------------------
# Synthetic end-to-end fixtures.
# ---------------------------------------------------------------------------

def three_class_spec(seed=101, length=6000.0, noise=0.05):
    from floeberg.ingest import SurfaceSpan, SyntheticTrackSpec
    spans = (SurfaceSpan(0.0, 1200.0, 1, 0.3),
             SurfaceSpan(1200.0, 1800.0, 3, 0.0),
             SurfaceSpan(1800.0, 3000.0, 2, 0.08),
             SurfaceSpan(3000.0, 4200.0, 1, 0.35),
             SurfaceSpan(4200.0, 4800.0, 3, 0.0),
             SurfaceSpan(4800.0, 6000.0, 2, 0.06))
    return SyntheticTrackSpec(length_m=length, spans=spans, photon_density=25.0,
                              noise_sigma=noise, seed=seed)


def make_truth_raster(segments, truth_csv_path, cell_size=10.0):
    """Rasterize a truth table along the projected track for label transfer."""
    import csv as _csv

    from floeberg.geo import LabelRaster, project_forward_arrays

    with open(truth_csv_path, newline="") as fh:
        reader = _csv.reader(fh)
        next(reader)
        truth = {int(row[0]): int(row[2]) for row in reader}
    x, y = project_forward_arrays(segments["lat"], segments["lon"])
    pad = 3 * cell_size
    x0 = float(x.min()) - pad
    y0 = float(y.max()) + pad
    ncols = int(np.ceil((float(x.max()) + pad - x0) / cell_size)) + 1
    nrows = int(np.ceil((y0 - (float(y.min()) - pad)) / cell_size)) + 1
    cells = np.zeros((nrows, ncols), dtype=np.int64)
    col = np.floor((x - x0) / cell_size).astype(int)
    row = np.floor((y0 - y) / cell_size).astype(int)
    for i, seg_index in enumerate(segments["index"]):
        code = truth.get(int(seg_index), 0)
        cells[row[i], col[i]] = code
    return LabelRaster(ncols=ncols, nrows=nrows, x_origin=x0, y_origin=y0,
                       cell_size=cell_size, cells=cells)


def gradient_relative_error(analytic, numeric, floor=1e-3):
    """Max elementwise |a - n| / max(|a|, |n|, floor) over parameter lists.

    The floor turns the comparison into an absolute check for coordinates whose
    gradient magnitude sits below the finite-difference noise scale.
    """
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
