"""Pipeline configuration: line-oriented "key = value" files plus flag overrides."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .runtime import default_workers

CLASSIFIER_KINDS = ("mlp", "lstm")
ALPHA_MODES = ("inverse_frequency", "ones")
SURFACE_METHODS = ("nasa_weighted", "min_elev", "avg_elev", "nearest_min_elev")


@dataclass
class PipelineConfig:
    # file inputs / products
    photons: str | None = None
    segments: str | None = None
    labeled: str | None = None
    raster: str | None = None
    shifts: str | None = None
    overrides: str | None = None
    model: str | None = None
    spec: str | None = None
    truth: str | None = None
    histogram: str | None = None
    history: str | None = None
    freeboard_csv: str | None = None
    output: str | None = None
    pair: str | None = None
    shift: str | None = None          # inline "<d> m / <DIR>" descriptor
    # resampling
    bin_size: float = 2.0
    min_confidence: int = 4
    # classifier
    classifier: str = "lstm"
    gamma: float = 2.0
    alpha_mode: str = "inverse_frequency"
    train_fraction: float = 0.8
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 0.003
    dropout: float = 0.2
    # sea surface
    method: str = "nasa_weighted"
    window_length: float = 10000.0
    stride: float = 5000.0
    min_lead_length: int = 1
    # synthetic tracks
    photon_density: float = 25.0
    noise_sigma: float = 0.1
    sea_level_trend: float = 0.0
    # execution
    workers: int = 0  # 0 = one per physical core
    seed: int = 1234
    max_time_diff: float = 80.0

    def validate(self) -> "PipelineConfig":
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction {self.train_fraction} outside (0, 1)")
        if self.classifier not in CLASSIFIER_KINDS:
            raise ValueError(f"classifier must be one of {CLASSIFIER_KINDS}")
        if self.alpha_mode not in ALPHA_MODES:
            raise ValueError(f"alpha_mode must be one of {ALPHA_MODES}")
        if self.method not in SURFACE_METHODS:
            raise ValueError(f"method must be one of {SURFACE_METHODS}")
        if self.bin_size <= 0:
            raise ValueError("bin_size must be > 0")
        if self.workers < 0:
            raise ValueError("workers must be >= 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        return self

    @property
    def effective_workers(self) -> int:
        return self.workers if self.workers > 0 else default_workers()


_STRING_FIELDS = {f.name for f in fields(PipelineConfig)
                  if f.type in ("str | None", "str")}


def parse_config_file(path: str | Path) -> PipelineConfig:
    """Read "key = value" lines; '#' starts a comment; unknown keys are errors."""
    cfg = PipelineConfig()
    known = {f.name for f in fields(PipelineConfig)}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            setattr(cfg, key, _coerce(key, value))
    return cfg


def _coerce(key: str, value: str):
    if key in _STRING_FIELDS:
        return value
    default = getattr(PipelineConfig(), key)
    kind = type(default)
    try:
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
    except ValueError as exc:
        raise ValueError(f"config key {key!r}: cannot parse {value!r} as {kind.__name__}") from exc
    return value


def apply_flag_overrides(cfg: PipelineConfig, args) -> PipelineConfig:
    """Copy every non-None recognized attribute from parsed CLI args onto cfg."""
    known = {f.name for f in fields(PipelineConfig)}
    for name in known:
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    return cfg
