"""Binary model files: magic "FLOE", little-endian, JSON descriptor + raw f8 blobs.

Layout:  magic (4 bytes) | format version (u32) | header length (u32) |
UTF-8 JSON header | parameter arrays in declaration order as little-endian
float64.  The header carries the architecture descriptor, the feature
standardization constants, and the loss parameters, so a loaded model
classifies raw segment features without any side channel.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..util import atomic_write_bytes
from .loss import FocalLossParams
from .models import LstmModel, MlpModel

MAGIC = b"FLOE"
FORMAT_VERSION = 1
_MODEL_KINDS = {"mlp": MlpModel, "lstm": LstmModel}


class ModelFormatError(ValueError):
    """Raised for unreadable, truncated, or mismatched model files."""


def save_model(model, path: str | Path) -> None:
    params = model.parameters()
    header = {
        "kind": model.kind,
        "layers": model.layer_descriptor(),
        "params": [[name, list(arr.shape)] for name, arr in params],
        "feature_offset": None if model.feature_offset is None
        else list(map(float, model.feature_offset)),
        "feature_scale": None if model.feature_scale is None
        else list(map(float, model.feature_scale)),
        "loss": None if model.loss_params is None else {
            "gamma": float(model.loss_params.gamma),
            "alpha": list(map(float, model.loss_params.alpha)),
        },
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<II", FORMAT_VERSION, len(header_bytes))
    blob += header_bytes
    for _, arr in params:
        blob += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    atomic_write_bytes(path, bytes(blob))


def load_model(path: str | Path, kind: str | None = None):
    """Load a model file; *kind* (``"mlp"``/``"lstm"``) enforces the architecture."""
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != MAGIC:
        raise ModelFormatError(f"{path}: not a model file (bad magic)")
    version, header_len = struct.unpack_from("<II", data, 4)
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported format version {version}")
    if len(data) < 12 + header_len:
        raise ModelFormatError(f"{path}: truncated header")
    try:
        header = json.loads(data[12:12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: corrupt header: {exc}") from exc
    stored_kind = header.get("kind")
    if stored_kind not in _MODEL_KINDS:
        raise ModelFormatError(f"{path}: unknown model kind {stored_kind!r}")
    if kind is not None and stored_kind != kind:
        raise ModelFormatError(
            f"{path}: architecture mismatch: file holds {stored_kind!r}, expected {kind!r}")

    model = _MODEL_KINDS[stored_kind]()
    params = model.parameters()
    stored_params = header.get("params", [])
    if [[name, list(arr.shape)] for name, arr in params] != \
            [[name, list(shape)] for name, shape in stored_params]:
        raise ModelFormatError(f"{path}: parameter layout does not match a "
                               f"{stored_kind} model")
    offset = 12 + header_len
    for name, arr in params:
        nbytes = arr.size * 8
        if offset + nbytes > len(data):
            raise ModelFormatError(f"{path}: truncated while reading {name}")
        arr[...] = np.frombuffer(data, dtype="<f8", count=arr.size,
                                 offset=offset).reshape(arr.shape)
        offset += nbytes
    if offset != len(data):
        raise ModelFormatError(f"{path}: {len(data) - offset} trailing bytes")

    if header.get("feature_offset") is not None:
        model.feature_offset = np.asarray(header["feature_offset"], dtype=np.float64)
        model.feature_scale = np.asarray(header["feature_scale"], dtype=np.float64)
    if header.get("loss") is not None:
        model.loss_params = FocalLossParams(gamma=header["loss"]["gamma"],
                                            alpha=np.asarray(header["loss"]["alpha"]))
    return model
