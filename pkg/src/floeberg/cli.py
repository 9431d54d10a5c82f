"""Command-line entry point wiring the pipeline together.

Commands: synth, ingest, label, train, classify, surface, freeboard, bench,
report.  Every product is written atomically (temp file + rename).  Exit
codes: 0 success, 1 internal error, 2 missing input, 3 validation failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import dtrain, runtime, surface, svgplot
from .autolabel import (LabeledSegments, apply_overrides, label_parallel,
                        read_labeled_csv, read_overrides_csv, write_labeled_csv)
from .config import PipelineConfig, apply_flag_overrides, parse_config_file
from .geo import (LabelRaster, ShiftVector, parse_shift, project_forward_arrays,
                  read_raster, read_shift_table)
from .ingest import (SEGMENT_DTYPE, read_photon_csv, read_segment_csv,
                     read_track_spec_csv, resample_2m, synthesize_track,
                     write_photon_csv, write_segment_csv)
from .nnet import (FocalLossParams, TrainConfig, build_sequences, load_model,
                   save_model, write_history_csv)
from .pipeline import classify_segments, train_classifier
from .surface import (SeaSurfaceMethod, build_profile, compute_freeboard,
                      freeboard_histogram, read_freeboard_csv, read_histogram_csv,
                      write_freeboard_csv, write_histogram_csv, write_window_csv)
from .util import atomic_write_text, fmt_float

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_MISSING_INPUT = 2
EXIT_VALIDATION = 3


def _require_input(path: str | None, what: str) -> str:
    if not path:
        raise FileNotFoundError(f"missing input: no {what} given")
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing input: {what} {path!r} does not exist")
    return path


def _require_output(cfg: PipelineConfig) -> str:
    if not cfg.output:
        raise ValueError("no output path given (-o/--output)")
    return cfg.output


def _announce(cfg: PipelineConfig, command: str) -> None:
    print(f"floeberg {command}: seed={cfg.seed} workers={cfg.effective_workers}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth(cfg: PipelineConfig) -> int:
    spec_path = _require_input(cfg.spec, "track spec CSV")
    out = _require_output(cfg)
    spec = read_track_spec_csv(spec_path, photon_density=cfg.photon_density,
                               noise_sigma=cfg.noise_sigma,
                               sea_level_trend=cfg.sea_level_trend, seed=cfg.seed)
    photons, true_class, true_freeboard = synthesize_track(spec, bin_size=cfg.bin_size)
    write_photon_csv(out, photons)
    print(f"wrote {len(photons)} photons to {out}")
    if cfg.truth:
        lines = ["index,center_along_track,true_class,true_freeboard"]
        for k, (cls, fb) in enumerate(zip(true_class, true_freeboard)):
            center = (k + 0.5) * cfg.bin_size
            lines.append(f"{k},{fmt_float(center)},{int(cls)},{fmt_float(fb)}")
        atomic_write_text(cfg.truth, "\n".join(lines) + "\n")
        print(f"wrote truth table to {cfg.truth}")
    return EXIT_OK


def cmd_ingest(cfg: PipelineConfig) -> int:
    photons_path = _require_input(cfg.photons, "photon CSV")
    out = _require_output(cfg)
    photons = read_photon_csv(photons_path)
    segments = resample_2m(photons, bin_size=cfg.bin_size,
                           min_confidence=cfg.min_confidence)
    write_segment_csv(out, segments)
    print(f"resampled {len(photons)} photons into {len(segments)} segments -> {out}")
    return EXIT_OK


def _resolve_shift(cfg: PipelineConfig) -> ShiftVector:
    if cfg.shifts:
        table = read_shift_table(_require_input(cfg.shifts, "shift table"),
                                 max_time_diff_minutes=cfg.max_time_diff)
        if not cfg.pair:
            raise ValueError("a shift table needs --pair to pick a row")
        for pair in table:
            if pair.pair_id == cfg.pair:
                return pair.shift
        raise ValueError(f"pair {cfg.pair!r} not found in {cfg.shifts}")
    if cfg.shift:
        return parse_shift(cfg.shift)
    return ShiftVector(0.0, 0.0)


def cmd_label(cfg: PipelineConfig) -> int:
    segments_path = _require_input(cfg.segments, "segment CSV")
    raster_path = _require_input(cfg.raster, "label raster")
    out = _require_output(cfg)
    segments = read_segment_csv(segments_path)
    raster = read_raster(raster_path)
    shift = _resolve_shift(cfg)
    labeled, timings = label_parallel(segments, raster, shift,
                                      workers=cfg.effective_workers)
    if cfg.overrides:
        spans = read_overrides_csv(_require_input(cfg.overrides, "override CSV"))
        labeled = apply_overrides(labeled, spans)
    write_labeled_csv(out, labeled)
    n_labeled = int((labeled.classes > 0).sum())
    print(f"labeled {n_labeled}/{len(labeled)} segments "
          f"(map {timings.map_s:.3f}s, reduce {timings.reduce_s:.3f}s) -> {out}")
    return EXIT_OK


def cmd_train(cfg: PipelineConfig) -> int:
    labeled_path = _require_input(cfg.labeled, "labeled segment CSV")
    model_out = cfg.model or _require_output(cfg)
    labeled = read_labeled_csv(labeled_path)
    result = train_classifier(
        labeled, classifier=cfg.classifier, gamma=cfg.gamma, alpha_mode=cfg.alpha_mode,
        train_fraction=cfg.train_fraction, epochs=cfg.epochs, batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate, dropout=cfg.dropout, seed=cfg.seed,
        workers=cfg.effective_workers)
    save_model(result.model, model_out)
    print(f"trained {cfg.classifier} on {len(result.train_positions)} segments -> {model_out}")
    if cfg.history:
        write_history_csv(cfg.history, result.history)
    if result.test_metrics is not None:
        m = result.test_metrics
        print(f"held-out accuracy {m.accuracy:.4f}  macro P/R/F1 "
              f"{m.precision_macro:.4f}/{m.recall_macro:.4f}/{m.f1_macro:.4f}")
        print(f"per-class recall {np.round(m.per_class_recall, 4).tolist()}")
    return EXIT_OK


def cmd_classify(cfg: PipelineConfig) -> int:
    model_path = _require_input(cfg.model, "model file")
    out = _require_output(cfg)
    model = load_model(model_path)
    if cfg.segments:
        segments = read_segment_csv(_require_input(cfg.segments, "segment CSV"))
    else:
        photons_path = _require_input(cfg.photons, "photon CSV (or segment CSV)")
        photons = read_photon_csv(photons_path)
        segments = resample_2m(photons, bin_size=cfg.bin_size,
                               min_confidence=cfg.min_confidence)
    codes = classify_segments(model, segments)
    labeled = LabeledSegments(segments=segments, classes=codes,
                              sources=np.zeros(len(segments), dtype=np.uint8))
    write_labeled_csv(out, labeled)
    print(f"classified {len(segments)} segments -> {out}")
    return EXIT_OK


def cmd_surface(cfg: PipelineConfig) -> int:
    labeled_path = _require_input(cfg.labeled, "labeled segment CSV")
    out = _require_output(cfg)
    labeled = read_labeled_csv(labeled_path)
    profile = build_profile(labeled, method=SeaSurfaceMethod(cfg.method),
                            window_length=cfg.window_length, stride=cfg.stride,
                            min_lead_length=cfg.min_lead_length,
                            workers=cfg.effective_workers)
    write_window_csv(out, profile)
    n_valid = sum(1 for w in profile.windows if not w.filled_by_interpolation)
    print(f"{len(profile.windows)} windows ({n_valid} with leads) -> {out}")
    return EXIT_OK


def cmd_freeboard(cfg: PipelineConfig) -> int:
    labeled_path = _require_input(cfg.labeled, "labeled segment CSV")
    out = _require_output(cfg)
    labeled = read_labeled_csv(labeled_path)
    profile = build_profile(labeled, method=SeaSurfaceMethod(cfg.method),
                            window_length=cfg.window_length, stride=cfg.stride,
                            min_lead_length=cfg.min_lead_length,
                            workers=cfg.effective_workers)
    records = compute_freeboard(labeled, profile)
    write_freeboard_csv(out, records)
    print(f"freeboard for {len(records)} segments -> {out}")
    if cfg.histogram:
        ice = records[records["surface_class"] != 0]
        edges, counts = freeboard_histogram(ice["h_f"])
        write_histogram_csv(cfg.histogram, edges, counts)
        print(f"histogram ({len(counts)} bins) -> {cfg.histogram}")
    return EXIT_OK


def _bench_segments(count: int, seed: int) -> tuple[np.ndarray, LabelRaster]:
    """Synthetic labeling workload: a long track plus a classified raster."""
    rng = np.random.default_rng(seed)
    segments = np.zeros(count, dtype=SEGMENT_DTYPE)
    segments["index"] = np.arange(count)
    segments["center_along_track"] = 2.0 * np.arange(count) + 1.0
    segments["lat"] = -72.0 - np.cumsum(rng.uniform(0.0, 2e-8, count))
    segments["lon"] = -170.0
    segments["n_photons"] = 25
    segments["h_mean"] = rng.normal(0.2, 0.1, count)
    segments["h_std"] = 0.1
    x, y = project_forward_arrays(segments["lat"], segments["lon"])
    cells = rng.integers(0, 4, size=(256, 256))
    raster = LabelRaster(ncols=256, nrows=256, x_origin=float(x.min()) - 100.0,
                         y_origin=float(y.max()) + 100.0, cell_size=25.0, cells=cells)
    return segments, raster


def _bench_labeled(count: int, seed: int) -> LabeledSegments:
    rng = np.random.default_rng(seed)
    segments, _ = _bench_segments(count, seed)
    classes = np.where(rng.random(count) < 0.25, 3, 1).astype(np.int64)
    heights = np.where(classes == 3, rng.normal(0.0, 0.02, count),
                       rng.normal(0.3, 0.05, count))
    segments["h_mean"] = heights
    return LabeledSegments(segments=segments, classes=classes,
                           sources=np.zeros(count, dtype=np.uint8))


def _parse_workers_list(text: str) -> list[int]:
    values = [int(tok) for tok in text.split(",") if tok.strip()]
    if not values:
        raise ValueError("empty workers list")
    return values


def cmd_bench(cfg: PipelineConfig, target: str, count: int, workers_list: str,
              repeats: int) -> int:
    out = _require_output(cfg)
    workers = _parse_workers_list(workers_list)
    if target == "label":
        def action(data, n_workers):
            segments, raster = data
            labeled, _ = label_parallel(segments, raster, workers=n_workers)
            return labeled

        rows = runtime.bench_pipeline(
            load_fn=lambda: _bench_segments(count, cfg.seed),
            action_fn=action, total_fn=lambda data: len(data[0]),
            halo=0, workers_list=workers, repeats=repeats)
        runtime.write_bench_csv(out, rows)
    elif target == "freeboard":
        def action(labeled, n_workers):
            profile = build_profile(labeled, workers=n_workers)
            return compute_freeboard(labeled, profile)

        rows = runtime.bench_pipeline(
            load_fn=lambda: _bench_labeled(count, cfg.seed),
            action_fn=action, total_fn=len,
            halo=surface.SURFACE_HALO_SEGMENTS, workers_list=workers, repeats=repeats)
        runtime.write_bench_csv(out, rows)
    elif target == "train":
        rng = np.random.default_rng(cfg.seed)
        n = min(count, 20_000)
        labels = rng.integers(0, 3, n)
        features = rng.normal(0.0, 0.5, (n, 6))
        features[labels == 0, 0] += 2.0
        features[labels == 1, 1] += 2.0
        windows = build_sequences(features)
        rows = dtrain.scaling_report(
            windows, labels, workers,
            TrainConfig(batch_size=cfg.batch_size, epochs=max(1, min(cfg.epochs, 3)),
                        dropout=0.0, seed=cfg.seed),
            FocalLossParams(gamma=cfg.gamma), model_kind=cfg.classifier,
            lr=cfg.learning_rate)
        dtrain.write_scaling_csv(out, rows)
    else:
        raise ValueError(f"unknown bench target {target!r}")
    print(f"bench target={target} -> {out}")
    return EXIT_OK


def cmd_report(cfg: PipelineConfig) -> int:
    out_dir = Path(_require_output(cfg))
    out_dir.mkdir(parents=True, exist_ok=True)
    wrote = []
    if cfg.freeboard_csv:
        records = read_freeboard_csv(_require_input(cfg.freeboard_csv, "freeboard CSV"))
        svg = svgplot.elevation_scatter_svg(records["center_along_track"], records["h_s"],
                                            records["surface_class"],
                                            title="Surface elevation by class")
        atomic_write_text(out_dir / "elevation_scatter.svg", svg)
        wrote.append("elevation_scatter.svg")
    elif cfg.labeled:
        labeled = read_labeled_csv(_require_input(cfg.labeled, "labeled segment CSV"))
        svg = svgplot.elevation_scatter_svg(labeled.segments["center_along_track"],
                                            labeled.segments["h_mean"], labeled.classes,
                                            title="Surface elevation by class")
        atomic_write_text(out_dir / "elevation_scatter.svg", svg)
        wrote.append("elevation_scatter.svg")
    if cfg.histogram:
        edges, counts = read_histogram_csv(_require_input(cfg.histogram, "histogram CSV"))
        svg = svgplot.histogram_svg(edges, counts)
        atomic_write_text(out_dir / "freeboard_histogram.svg", svg)
        wrote.append("freeboard_histogram.svg")
    if not wrote:
        raise ValueError("report needs --freeboard-csv, --labeled, or --histogram")
    print(f"wrote {', '.join(wrote)} to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="key = value config file")
    sub.add_argument("--workers", type=int, help="worker count (default: all cores)")
    sub.add_argument("--seed", type=int, help="random seed")
    sub.add_argument("-o", "--output", help="output path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="floeberg",
        description="Sea-ice classification and freeboard retrieval from 2 m "
                    "resampled photon altimetry tracks")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("synth", help="generate a synthetic photon track")
    p.add_argument("--spec", help="surface span CSV (start_m,end_m,class,freeboard_m)")
    p.add_argument("--truth", help="also write the per-bin truth table here")
    p.add_argument("--photon-density", dest="photon_density", type=float)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p.add_argument("--sea-level-trend", dest="sea_level_trend", type=float)
    _add_common(p)

    p = subs.add_parser("ingest", help="resample a photon CSV into 2 m segments")
    p.add_argument("--photons", help="photon CSV")
    p.add_argument("--bin-size", dest="bin_size", type=float)
    p.add_argument("--min-confidence", dest="min_confidence", type=int)
    _add_common(p)

    p = subs.add_parser("label", help="transfer raster classes onto segments")
    p.add_argument("--segments", help="segment CSV")
    p.add_argument("--raster", help="classified raster (ASCII grid)")
    p.add_argument("--shift", help='inline shift descriptor, e.g. "550 m / NW"')
    p.add_argument("--shifts", help="pairing table CSV")
    p.add_argument("--pair", help="pair_id to pick from the pairing table")
    p.add_argument("--overrides", help="manual override CSV")
    p.add_argument("--max-time-diff", dest="max_time_diff", type=float)
    _add_common(p)

    p = subs.add_parser("train", help="train a classifier on labeled segments")
    p.add_argument("--labeled", help="labeled segment CSV")
    p.add_argument("--model", help="model output path (defaults to -o)")
    p.add_argument("--history", help="write per-epoch history CSV here")
    p.add_argument("--classifier", choices=["mlp", "lstm"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--alpha-mode", dest="alpha_mode",
                   choices=["inverse_frequency", "ones"])
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    _add_common(p)

    p = subs.add_parser("classify", help="classify segments with a trained model")
    p.add_argument("--model", help="model file")
    p.add_argument("--photons", help="photon CSV (resampled first)")
    p.add_argument("--segments", help="segment CSV (skips resampling)")
    p.add_argument("--bin-size", dest="bin_size", type=float)
    p.add_argument("--min-confidence", dest="min_confidence", type=int)
    _add_common(p)

    p = subs.add_parser("surface", help="estimate the local sea-surface windows")
    p.add_argument("--labeled", help="labeled segment CSV")
    p.add_argument("--method", choices=[m.value for m in SeaSurfaceMethod])
    p.add_argument("--window-length", dest="window_length", type=float)
    p.add_argument("--stride", type=float)
    p.add_argument("--min-lead-length", dest="min_lead_length", type=int)
    _add_common(p)

    p = subs.add_parser("freeboard", help="compute per-segment freeboard")
    p.add_argument("--labeled", help="labeled segment CSV")
    p.add_argument("--method", choices=[m.value for m in SeaSurfaceMethod])
    p.add_argument("--window-length", dest="window_length", type=float)
    p.add_argument("--stride", type=float)
    p.add_argument("--min-lead-length", dest="min_lead_length", type=int)
    p.add_argument("--histogram", help="also write a histogram CSV here")
    _add_common(p)

    p = subs.add_parser("bench", help="scaling benchmarks")
    p.add_argument("--target", choices=["label", "freeboard", "train"],
                   default="label")
    p.add_argument("--count", type=int, default=1_000_000,
                   help="synthetic segment count")
    p.add_argument("--workers-list", default="1,2,4")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--classifier", choices=["mlp", "lstm"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    _add_common(p)

    p = subs.add_parser("report", help="render SVG plots from product CSVs")
    p.add_argument("--freeboard-csv", dest="freeboard_csv",
                   help="freeboard CSV for the elevation scatter")
    p.add_argument("--labeled", help="labeled CSV as scatter source instead")
    p.add_argument("--histogram", help="histogram CSV for the bar chart")
    _add_common(p)
    return parser


def _build_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = parse_config_file(args.config) if args.config else PipelineConfig()
    return apply_flag_overrides(cfg, args)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _build_config(args)
        cfg.validate()
        _announce(cfg, args.command)
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "ingest":
            return cmd_ingest(cfg)
        if args.command == "label":
            return cmd_label(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "classify":
            return cmd_classify(cfg)
        if args.command == "surface":
            return cmd_surface(cfg)
        if args.command == "freeboard":
            return cmd_freeboard(cfg)
        if args.command == "bench":
            return cmd_bench(cfg, args.target, args.count, args.workers_list,
                             args.repeats)
        if args.command == "report":
            return cmd_report(cfg)
        raise ValueError(f"unknown command {args.command!r}")
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
