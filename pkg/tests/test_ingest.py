import math

import numpy as np
import pytest

from floeberg.ingest import (
    FeatureScaler,
    PHOTON_DTYPE,
    SEGMENT_DTYPE,
    SurfaceSpan,
    SyntheticTrackSpec,
    compute_features,
    photon_array,
    read_photon_csv,
    read_segment_csv,
    read_track_spec_csv,
    resample_2m,
    sea_level_height,
    segment_row,
    synthesize_track,
    write_photon_csv,
    write_segment_csv,
)


class TestResample:
    def test_hand_case(self):
        photons = photon_array(along_track=[0.5, 1.5, 2.5], height=[1.0, 3.0, 5.0],
                               confidence=[4, 4, 4])
        segs = resample_2m(photons, bin_size=2.0)
        assert len(segs) == 2
        s0, s1 = segment_row(segs, 0), segment_row(segs, 1)
        assert s0.n_photons == 2
        assert s0.h_mean == 2.0
        assert s0.h_std == pytest.approx(math.sqrt(2.0), rel=1e-15)
        assert s0.h_median == 2.0
        assert s0.center_along_track == 1.0
        assert s0.photon_rate == 1.0
        assert s1.n_photons == 1
        assert s1.h_mean == 5.0
        assert s1.h_std == 0.0
        assert s1.center_along_track == 3.0
        assert s1.d_photon_rate == -0.5
        assert s0.d_photon_rate == 0.0

    def test_empty_input(self):
        segs = resample_2m(photon_array(along_track=[], height=[], confidence=[]))
        assert len(segs) == 0

    def test_confidence_filter(self):
        photons = photon_array(along_track=[0.1, 0.2, 0.3], height=[1.0, 2.0, 30.0],
                               confidence=[4, 4, 1])
        segs = resample_2m(photons, min_confidence=4)
        assert segs[0]["n_photons"] == 2
        assert segs[0]["h_mean"] == 1.5

    def test_unsorted_rejected(self):
        photons = photon_array(along_track=[2.0, 1.0], height=[0.0, 0.0],
                               confidence=[4, 4])
        with pytest.raises(ValueError):
            resample_2m(photons)

    def test_statistical_oracle(self):
        # 1e4 uniform photons with heights ~ N(0.3, 0.1): every per-segment
        # mean stays within 5 sigma / sqrt(n) of the true mean
        rng = np.random.default_rng(11)
        n = 10_000
        along = np.sort(rng.uniform(0.0, 400.0, n))
        heights = rng.normal(0.3, 0.1, n)
        photons = photon_array(along_track=along, height=heights,
                               confidence=np.full(n, 4))
        segs = resample_2m(photons)
        bound = 5.0 * 0.1 / np.sqrt(segs["n_photons"])
        assert np.all(np.abs(segs["h_mean"] - 0.3) < bound)

    def test_photon_conservation_and_centers(self):
        rng = np.random.default_rng(5)
        n = 3000
        along = np.sort(rng.uniform(0.0, 500.0, n))
        conf = rng.integers(0, 5, n)
        photons = photon_array(along_track=along, height=rng.normal(0, 1, n),
                               confidence=conf)
        segs = resample_2m(photons, min_confidence=3)
        assert segs["n_photons"].sum() == int((conf >= 3).sum())
        # centers at (k + 0.5) * bin
        assert np.allclose(segs["center_along_track"], (segs["index"] + 0.5) * 2.0)
        assert np.all(np.diff(segs["index"]) >= 1)

    def test_height_shift_invariance(self):
        rng = np.random.default_rng(6)
        n = 2000
        along = np.sort(rng.uniform(0.0, 100.0, n))
        heights = rng.normal(0.2, 0.3, n)
        photons = photon_array(along_track=along, height=heights, confidence=np.full(n, 4))
        shifted = photons.copy()
        shifted["height"] += 17.25
        a = resample_2m(photons)
        b = resample_2m(shifted)
        assert np.allclose(b["h_mean"], a["h_mean"] + 17.25)
        assert np.allclose(b["h_median"], a["h_median"] + 17.25)
        assert np.allclose(b["h_std"], a["h_std"], atol=1e-12)

    def test_concatenation_on_bin_boundary(self):
        rng = np.random.default_rng(8)
        n = 4000
        along = np.sort(rng.uniform(0.0, 200.0, n))
        photons = photon_array(along_track=along, height=rng.normal(0, 1, n),
                               confidence=np.full(n, 4),
                               background_rate=rng.uniform(50, 900, n))
        cut = 100.0  # a bin boundary
        left = photons[photons["along_track"] < cut]
        right = photons[photons["along_track"] >= cut]
        whole = resample_2m(photons)
        lsegs = resample_2m(left)
        rsegs = resample_2m(right)
        merged = np.concatenate([lsegs, rsegs])
        # deltas at the seam are recomputed over the full track
        merged["d_photon_rate"][1:] = np.diff(merged["photon_rate"])
        merged["d_bg_rate"][1:] = np.diff(merged["bg_rate_mean"])
        merged["d_photon_rate"][0] = 0.0
        merged["d_bg_rate"][0] = 0.0
        assert np.array_equal(whole, merged)


class TestFeatures:
    def test_single_segment_deltas_zero(self):
        photons = photon_array(along_track=[0.5], height=[1.0], confidence=[4])
        feats = compute_features(resample_2m(photons))
        assert feats.shape == (1, 6)
        assert feats[0, 3] == 0.0 and feats[0, 5] == 0.0

    def test_delta_photon_rate(self):
        photons = photon_array(
            along_track=np.sort(np.concatenate([np.linspace(0.0, 1.9, 20),
                                                np.linspace(2.0, 3.9, 24)])),
            height=np.zeros(44), confidence=np.full(44, 4))
        feats = compute_features(resample_2m(photons))
        assert feats[0, 2] == 10.0 and feats[1, 2] == 12.0
        assert feats[1, 3] == 2.0

    def test_standardization(self):
        rng = np.random.default_rng(1)
        features = rng.normal(5.0, 3.0, size=(500, 6))
        scaler = FeatureScaler.fit(features)
        z = scaler.transform(features)
        assert np.all(np.abs(z.mean(axis=0)) < 1e-9)
        assert np.all(np.abs(z.std(axis=0) - 1.0) < 1e-9)

    def test_zero_variance_column_passes_through(self):
        features = np.ones((10, 6))
        features[:, 0] = np.arange(10)
        scaler = FeatureScaler.fit(features)
        z = scaler.transform(features)
        assert np.all(z[:, 1] == 1.0)  # unscaled passthrough
        assert abs(z[:, 0].mean()) < 1e-12  # normal column is centered


def _three_span_spec(seed=0, noise=0.1, density=25.0, trend=0.0):
    spans = (SurfaceSpan(0.0, 400.0, 1, 0.3),
             SurfaceSpan(400.0, 600.0, 3, 0.0),
             SurfaceSpan(600.0, 1000.0, 2, 0.08))
    return SyntheticTrackSpec(length_m=1000.0, spans=spans, photon_density=density,
                              noise_sigma=noise, sea_level_trend=trend, seed=seed)


class TestSynthesize:
    def test_all_water_truth(self):
        spec = SyntheticTrackSpec(length_m=100.0,
                                  spans=(SurfaceSpan(0.0, 100.0, 3, 0.0),),
                                  seed=3)
        _, classes, freeboard = synthesize_track(spec)
        assert np.all(classes == 3)
        assert np.all(freeboard == 0.0)

    def test_zero_noise_ice_heights_exact(self):
        spec = SyntheticTrackSpec(length_m=200.0,
                                  spans=(SurfaceSpan(0.0, 200.0, 1, 0.3),),
                                  noise_sigma=0.0, sea_level_trend=0.0, seed=4)
        photons, _, _ = synthesize_track(spec)
        signal = photons[photons["confidence"] == 4]
        assert np.all(signal["height"] == 0.3)

    def test_zero_noise_with_trend(self):
        spec = SyntheticTrackSpec(length_m=200.0,
                                  spans=(SurfaceSpan(0.0, 200.0, 1, 0.3),),
                                  noise_sigma=0.0, sea_level_trend=2.0, seed=4)
        photons, _, _ = synthesize_track(spec)
        signal = photons[photons["confidence"] == 4]
        rel = signal["height"] - sea_level_height(spec, signal["along_track"])
        assert np.allclose(rel, 0.3, atol=1e-12)

    def test_deterministic(self):
        a = synthesize_track(_three_span_spec(seed=9))
        b = synthesize_track(_three_span_spec(seed=9))
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_spans_must_partition(self):
        with pytest.raises(ValueError):
            SyntheticTrackSpec(length_m=10.0, spans=(SurfaceSpan(0.0, 5.0, 1, 0.1),))
        with pytest.raises(ValueError):
            SurfaceSpan(0.0, 5.0, 3, 0.2)  # water with nonzero freeboard

    def test_class_regimes_differ(self):
        photons, classes, _ = synthesize_track(_three_span_spec(seed=12))
        segs = resample_2m(photons)
        cls = classes[segs["index"]]
        water = segs[cls == 3]
        thick = segs[cls == 1]
        assert water["bg_rate_mean"].mean() > 3 * thick["bg_rate_mean"].mean()
        assert thick["photon_rate"].mean() > 2 * water["photon_rate"].mean()


class TestCsvRoundTrip:
    def test_photon_round_trip_bit_exact(self, tmp_path):
        photons, _, _ = synthesize_track(_three_span_spec(seed=2, density=5.0))
        path = tmp_path / "photons.csv"
        write_photon_csv(path, photons)
        again = read_photon_csv(path)
        assert np.array_equal(photons, again)
        write_photon_csv(tmp_path / "photons2.csv", again)
        assert (tmp_path / "photons2.csv").read_bytes() == path.read_bytes()

    def test_segment_round_trip_bit_exact(self, tmp_path):
        photons, _, _ = synthesize_track(_three_span_spec(seed=2, density=5.0))
        segs = resample_2m(photons)
        path = tmp_path / "segments.csv"
        write_segment_csv(path, segs)
        again = read_segment_csv(path)
        assert np.array_equal(segs, again)

    def test_header_mismatch_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            read_photon_csv(path)
        with pytest.raises(ValueError):
            read_segment_csv(path)

    def test_track_spec_csv(self, tmp_path):
        path = tmp_path / "spec.csv"
        path.write_text("start_m,end_m,class,freeboard_m\n"
                        "0,500,1,0.3\n500,700,3,0\n700,1000,2,0.1\n")
        spec = read_track_spec_csv(path, seed=5)
        assert spec.length_m == 1000.0
        assert len(spec.spans) == 3
        assert spec.spans[1].surface_class == 3
