import numpy as np
import pytest

from floeberg.autolabel import LabeledSegments, SurfaceClass
from floeberg.ingest import SEGMENT_DTYPE, SurfaceSpan, SyntheticTrackSpec, resample_2m, synthesize_track
from floeberg.surface import (
    NoReferenceError,
    SeaSurfaceMethod,
    build_profile,
    compute_freeboard,
    extract_leads,
    freeboard_histogram,
    lead_height,
    read_freeboard_csv,
    read_histogram_csv,
    window_reference,
    write_freeboard_csv,
    write_histogram_csv,
    write_window_csv,
)

from helpers import naive_lead_height, naive_window_reference

T, W, I2 = SurfaceClass.THICK_ICE, SurfaceClass.OPEN_WATER, SurfaceClass.THIN_ICE


def _labeled(classes, h_mean=None, h_std=0.1, n_photons=25, indices=None,
             spacing=2.0):
    n = len(classes)
    segs = np.zeros(n, dtype=SEGMENT_DTYPE)
    segs["index"] = np.arange(n) if indices is None else indices
    segs["center_along_track"] = (segs["index"] + 0.5) * spacing
    segs["h_mean"] = 0.0 if h_mean is None else h_mean
    segs["h_std"] = h_std
    segs["n_photons"] = n_photons
    return LabeledSegments(segments=segs, classes=np.asarray(classes, dtype=np.int64),
                           sources=np.zeros(n, dtype=np.uint8))


class TestExtractLeads:
    def test_runs_and_min_length(self):
        labeled = _labeled([T, T, W, W, T, W])
        leads = extract_leads(labeled)
        assert [(lead.start_index, lead.end_index) for lead in leads] == [(2, 3), (5, 5)]
        leads2 = extract_leads(labeled, min_length=2)
        assert [(lead.start_index, lead.end_index) for lead in leads2] == [(2, 3)]

    def test_no_water(self):
        assert extract_leads(_labeled([T, T, I2])) == []

    def test_gap_breaks_a_run(self):
        labeled = _labeled([W, W, W, W], indices=np.array([0, 1, 5, 6]))
        leads = extract_leads(labeled)
        assert [(lead.start_index, lead.end_index) for lead in leads] == [(0, 1), (5, 6)]

    def test_sample_variance_is_standard_error(self):
        labeled = _labeled([W], h_std=0.2, n_photons=16)
        lead = extract_leads(labeled)[0]
        assert lead.sigma_sqs[0] == pytest.approx(0.2 ** 2 / 16, rel=1e-12)

    def test_zero_std_clamped(self):
        labeled = _labeled([W], h_std=0.0)
        lead = extract_leads(labeled)[0]
        assert lead.sigma_sqs[0] == 1e-12
        assert np.isfinite(lead.h_lead)


class TestLeadHeight:
    def test_single_sample_degenerates(self):
        h, v = lead_height([0.0], [0.01])
        assert h == 0.0 and v == 0.01

    def test_worked_example(self):
        # frozen from the naive double-loop oracle
        h, v = lead_height([0.0, 0.1], [0.01, 0.01])
        assert h == pytest.approx(0.026894142136999512, abs=1e-15)
        assert v == pytest.approx(0.006067761335170363, abs=1e-15)

    def test_constant_heights_return_the_constant(self):
        for c in (-0.4, 0.0, 2.5):
            h, _ = lead_height([c, c, c], [0.01, 0.04, 0.09])
            assert h == pytest.approx(c, rel=1e-15)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            n = int(rng.integers(1, 12))
            heights = rng.normal(0.0, 0.5, n)
            sigma_sqs = rng.uniform(1e-6, 0.1, n)
            got = lead_height(heights, sigma_sqs)
            want = naive_lead_height(heights, sigma_sqs)
            assert got[0] == pytest.approx(want[0], rel=1e-12, abs=1e-15)
            assert got[1] == pytest.approx(want[1], rel=1e-12, abs=1e-15)

    def test_convexity_and_shift_equivariance(self):
        rng = np.random.default_rng(2)
        for _ in range(500):
            n = int(rng.integers(1, 10))
            heights = rng.normal(0.0, 1.0, n)
            sigma_sqs = rng.uniform(1e-8, 0.2, n)
            h, v = lead_height(heights, sigma_sqs)
            assert heights.min() - 1e-12 <= h <= heights.max() + 1e-12
            shift = float(rng.normal(0, 5))
            h2, v2 = lead_height(heights + shift, sigma_sqs)
            assert h2 == pytest.approx(h + shift, abs=1e-9)
            assert v2 == pytest.approx(v, rel=1e-12)


def _lead_stub(h_lead, sigma_sq_lead, mid=0.0, heights=None, sigma_sqs=None):
    from floeberg.surface import Lead
    heights = np.asarray(heights if heights is not None else [h_lead], dtype=np.float64)
    sigma_sqs = np.asarray(sigma_sqs if sigma_sqs is not None else [sigma_sq_lead],
                           dtype=np.float64)
    return Lead(start_index=0, end_index=len(heights) - 1, along_track_mid=mid,
                heights=heights, sigma_sqs=sigma_sqs, n_samples=len(heights),
                h_min=float(heights.min()), h_lead=h_lead, sigma_sq_lead=sigma_sq_lead)


class TestWindowReference:
    def test_worked_example_inverse_variance(self):
        leads = [_lead_stub(0.0, 0.01), _lead_stub(0.1, 0.04)]
        h, v = window_reference(leads, SeaSurfaceMethod.NASA_WEIGHTED)
        assert h == pytest.approx(0.02, abs=1e-15)
        assert v == pytest.approx(0.008, abs=1e-15)
        # inverse-variance identity: sigma^2_ref = 1 / sum(1/sigma^2)
        assert v == pytest.approx(1.0 / (1.0 / 0.01 + 1.0 / 0.04), rel=1e-12)

    def test_single_lead_passthrough(self):
        h, v = window_reference([_lead_stub(0.37, 0.002)], SeaSurfaceMethod.NASA_WEIGHTED)
        assert h == 0.37 and v == 0.002

    def test_min_elev(self):
        leads = [_lead_stub(0.0, 0.01, heights=[0.05, -0.02, 0.01],
                            sigma_sqs=[0.01, 0.02, 0.03])]
        h, v = window_reference(leads, SeaSurfaceMethod.MIN_ELEV)
        assert h == -0.02
        assert v == 0.02

    def test_avg_elev(self):
        leads = [_lead_stub(0.0, 0.01, heights=[0.0, 0.1], sigma_sqs=[0.01, 0.01]),
                 _lead_stub(0.0, 0.01, heights=[0.2], sigma_sqs=[0.04])]
        h, _ = window_reference(leads, SeaSurfaceMethod.AVG_ELEV)
        assert h == pytest.approx(0.1, rel=1e-12)

    def test_nearest_min_elev(self):
        near = _lead_stub(0.0, 0.01, mid=100.0, heights=[0.3, 0.1], sigma_sqs=[0.01, 0.01])
        far = _lead_stub(0.0, 0.01, mid=4000.0, heights=[-0.5], sigma_sqs=[0.01])
        h, _ = window_reference([near, far], SeaSurfaceMethod.NEAREST_MIN_ELEV,
                                window_center=0.0)
        assert h == 0.1
        with pytest.raises(ValueError):
            window_reference([near], SeaSurfaceMethod.NEAREST_MIN_ELEV)

    def test_empty_window_rejected(self):
        with pytest.raises(ValueError):
            window_reference([], SeaSurfaceMethod.NASA_WEIGHTED)

    def test_bounds_and_identity_on_random_windows(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            k = int(rng.integers(1, 8))
            estimates = rng.normal(0.0, 0.3, k)
            variances = rng.uniform(1e-6, 0.05, k)
            leads = [_lead_stub(h, v) for h, v in zip(estimates, variances)]
            h, v = window_reference(leads, SeaSurfaceMethod.NASA_WEIGHTED)
            assert estimates.min() - 1e-12 <= h <= estimates.max() + 1e-12
            assert v == pytest.approx(1.0 / np.sum(1.0 / variances), rel=1e-12)
            want = naive_window_reference(estimates, variances)
            assert h == pytest.approx(want[0], rel=1e-12, abs=1e-15)
            assert v == pytest.approx(want[1], rel=1e-12, abs=1e-15)


class TestBuildProfile:
    def test_uniform_water_flat_profile(self):
        labeled = _labeled([W] * 5000, h_mean=0.0, h_std=0.05)
        profile = build_profile(labeled)
        assert np.all(profile.h_ref == 0.0)

    def test_empty_window_filled_by_interpolation(self):
        # leads at both track ends (0 km and 20 km), ice between: the window
        # at 10 km sees no lead and interpolates between its valid neighbors
        classes = np.full(10_000, int(T), dtype=np.int64)
        classes[:50] = int(W)
        classes[-50:] = int(W)
        h = np.full(10_000, 0.5)
        h[:50] = 0.0
        h[-50:] = 0.1
        labeled = _labeled(classes, h_mean=h, h_std=0.05)
        profile = build_profile(labeled)
        centers = [w.center_along_track for w in profile.windows]
        middle = profile.windows[centers.index(10_000.0)]
        assert middle.filled_by_interpolation
        assert middle.n_leads == 0
        assert middle.h_ref == pytest.approx(0.05, abs=1e-12)

    def test_slope_recovery_on_synthetic_trend(self):
        spans = []
        pos = 0.0
        for k in range(40):
            cls, fb = (int(W), 0.0) if k % 2 == 0 else (int(T), 0.3)
            spans.append(SurfaceSpan(pos, pos + 1000.0, cls, fb))
            pos += 1000.0
        spec = SyntheticTrackSpec(length_m=40_000.0, spans=tuple(spans),
                                  photon_density=25.0, noise_sigma=0.01,
                                  sea_level_trend=0.01, seed=31)
        photons, classes, _ = synthesize_track(spec)
        segs = resample_2m(photons)
        labeled = LabeledSegments(segments=segs, classes=classes[segs["index"]],
                                  sources=np.zeros(len(segs), dtype=np.uint8))
        profile = build_profile(labeled)
        along = segs["center_along_track"]
        slope = np.polyfit(along, profile.h_ref, 1)[0]
        assert abs(slope - 1e-5) < 0.1 * 1e-5

    def test_no_open_water_raises(self):
        with pytest.raises(NoReferenceError):
            build_profile(_labeled([T] * 100))

    def test_profile_continuity(self):
        rng = np.random.default_rng(5)
        classes = np.where(rng.random(20_000) < 0.2, int(W), int(T))
        h = np.where(classes == int(W), rng.normal(0, 0.02, 20_000),
                     rng.normal(0.3, 0.05, 20_000))
        labeled = _labeled(classes, h_mean=h)
        profile = build_profile(labeled)
        window_h = np.array([w.h_ref for w in profile.windows])
        max_window_jump = np.max(np.abs(np.diff(window_h)))
        per_segment_jump = np.max(np.abs(np.diff(profile.h_ref)))
        assert per_segment_jump <= (2.0 / 5000.0) * max_window_jump + 1e-15

    def test_parallel_lead_extraction_matches_sequential(self):
        rng = np.random.default_rng(6)
        n = 20_000
        classes = np.full(n, int(T), dtype=np.int64)
        # water runs of varying length, several crossing chunk boundaries
        pos = 0
        while pos < n:
            run = int(rng.integers(5, 400))
            if rng.random() < 0.35:
                classes[pos:pos + run] = int(W)
            pos += run + int(rng.integers(5, 300))
        h = rng.normal(0.3, 0.05, n)
        h[classes == int(W)] = rng.normal(0.0, 0.02, int((classes == int(W)).sum()))
        labeled = _labeled(classes, h_mean=h)
        seq = build_profile(labeled, workers=1)
        for workers in (2, 3, 4):
            par = build_profile(labeled, workers=workers)
            assert np.array_equal(par.h_ref, seq.h_ref)
            assert np.array_equal(par.sigma_sq_ref, seq.sigma_sq_ref)


class TestFreeboard:
    def test_arithmetic(self):
        labeled = _labeled([T, W], h_mean=np.array([0.25, 0.05]), h_std=0.01)
        profile = build_profile(labeled)
        records = compute_freeboard(labeled, profile)
        # the single-lead window references the water sample itself
        assert records["h_ref"][1] == pytest.approx(0.05, abs=1e-12)
        assert records["h_f"][0] == pytest.approx(0.20, abs=1e-12)

    def test_self_reference_exact_at_zero_noise(self):
        labeled = _labeled([W], h_mean=np.array([0.12]), h_std=0.0)
        profile = build_profile(labeled)
        records = compute_freeboard(labeled, profile)
        assert records["h_f"][0] == 0.0
        assert records["negative_flag"][0] == 0

    def test_negative_flag_set_never_clamped(self):
        labeled = _labeled([W, T, W], h_mean=np.array([0.0, -0.3, 0.0]))
        profile = build_profile(labeled)
        records = compute_freeboard(labeled, profile)
        assert records["h_f"][1] < 0
        assert records["negative_flag"][1] == 1

    def test_exact_identity_h_f(self):
        rng = np.random.default_rng(7)
        classes = np.where(rng.random(4000) < 0.3, int(W), int(T))
        h = rng.normal(0.2, 0.1, 4000)
        labeled = _labeled(classes, h_mean=h)
        profile = build_profile(labeled)
        records = compute_freeboard(labeled, profile)
        assert np.array_equal(records["h_f"], records["h_s"] - records["h_ref"])
        assert np.array_equal(records["negative_flag"], (records["h_f"] < 0).astype(np.int64))


class TestHistogram:
    def test_single_value_single_bin(self):
        edges, counts = freeboard_histogram(np.full(10, 0.3))
        assert counts.sum() == 10
        assert (counts > 0).sum() == 1

    def test_counts_conserved(self):
        rng = np.random.default_rng(8)
        values = rng.normal(0.3, 0.1, 5000)
        edges, counts = freeboard_histogram(values)
        assert counts.sum() == 5000
        assert np.all(np.diff(edges) > 0)

    def test_mode_bin_contains_truth(self):
        rng = np.random.default_rng(9)
        values = rng.normal(0.3, 0.03, 20000)
        edges, counts = freeboard_histogram(values, bin_width=0.02)
        mode = int(np.argmax(counts))
        assert edges[mode] <= 0.3 <= edges[mode + 1]


class TestCsv:
    def test_freeboard_round_trip(self, tmp_path):
        rng = np.random.default_rng(10)
        classes = np.where(rng.random(200) < 0.3, int(W), int(T))
        labeled = _labeled(classes, h_mean=rng.normal(0.2, 0.1, 200))
        profile = build_profile(labeled)
        records = compute_freeboard(labeled, profile)
        path = tmp_path / "freeboard.csv"
        write_freeboard_csv(path, records)
        again = read_freeboard_csv(path)
        assert np.array_equal(records, again)

    def test_window_csv(self, tmp_path):
        labeled = _labeled([W] * 5000, h_mean=0.0)
        profile = build_profile(labeled)
        path = tmp_path / "windows.csv"
        write_window_csv(path, profile)
        lines = path.read_text().splitlines()
        assert lines[0] == "center,method,n_leads,h_ref,sigma_sq_ref,interpolated"
        assert len(lines) == len(profile.windows) + 1
        assert "nasa_weighted" in lines[1]

    def test_histogram_round_trip(self, tmp_path):
        edges, counts = freeboard_histogram(np.random.default_rng(0).normal(0.3, 0.1, 500))
        path = tmp_path / "hist.csv"
        write_histogram_csv(path, edges, counts)
        edges2, counts2 = read_histogram_csv(path)
        assert np.allclose(edges, edges2)
        assert np.array_equal(counts, counts2)
