"""Model files: a magic tag, a JSON header and an ``.npz`` payload of arrays.

Layout::

    b"ZLDC1" | uint32 LE header length | header JSON (utf-8) | npz bytes

The header records the model kind, format version and metadata (zone,
seed, hyperparameters, feature schema hash).  Arrays are stored exactly,
so a round trip reproduces predictions bit for bit.
"""

from __future__ import annotations

import io
import json
import os
import struct
import zipfile
from pathlib import Path

import numpy as np

from .core import FEATURE_SCHEMA_HASH, SchemaError, ValidationError, Zone
from .models import MODEL_KINDS
from .net.network import NetConfig, Network, build_micro_net
from .standardize import StandardizationConfig, StandardizationModel

MAGIC = b"ZLDC1"
VERSION = 1
STANDARDIZER_FORMAT = "standardizer.v1"


def _npz_bytes(arrays: dict) -> bytes:
    """``.npz`` archive with fixed member timestamps, so equal arrays give equal bytes."""
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            with zf.open(info, "w") as fh:
                np.lib.format.write_array(fh, np.asarray(arrays[name]), allow_pickle=False)
    return buf.getvalue()


def _write(path, header: dict, arrays: dict) -> None:
    payload = _npz_bytes(arrays)
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        fh.write(payload)
    os.replace(tmp, path)


def _read(path):
    data = Path(path).read_bytes()
    if data[:len(MAGIC)] != MAGIC:
        raise SchemaError(f"{path}: not a model file (bad magic)")
    off = len(MAGIC)
    if len(data) < off + 4:
        raise SchemaError(f"{path}: truncated header")
    (n,) = struct.unpack("<I", data[off:off + 4])
    try:
        header = json.loads(data[off + 4:off + 4 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise SchemaError(f"{path}: corrupt header") from None
    if header.get("version") != VERSION:
        raise SchemaError(f"{path}: unsupported model file version {header.get('version')!r}")
    with np.load(io.BytesIO(data[off + 4 + n:]), allow_pickle=False) as npz:
        arrays = {k: npz[k] for k in npz.files}
    return header, arrays


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


def save_model(model, path, seed: int | None = None) -> None:
    """Write a fitted classifier or network."""
    if isinstance(model, Network):
        _save_net(model, path, seed)
        return
    if model.kind not in MODEL_KINDS:
        raise ValidationError(f"unknown model kind {model.kind!r}")
    zone = getattr(model, "zone_", None)
    header = {
        "kind": model.kind,
        "version": VERSION,
        "metadata": {
            "zone": Zone.parse(zone).value if zone is not None else None,
            "seed": seed if seed is not None else _jsonable(model.get_params().get("random_state")),
            # worker count is an execution setting; leaving it out keeps files
            # byte-identical across parallel and serial runs
            "hyperparameters": {k: _jsonable(v) for k, v in model.get_params().items()
                                if k != "n_jobs"},
            "feature_schema": FEATURE_SCHEMA_HASH,
            "n_features": int(model.n_features_in_),
        },
    }
    _write(path, header, model._state_arrays())


def load_model(path, expect_schema: str | None = FEATURE_SCHEMA_HASH):
    """Read a classifier or network; rejects bad magic, versions and schema hashes."""
    header, arrays = _read(path)
    kind = header.get("kind")
    meta = header.get("metadata", {})
    if kind == "cnn":
        return _load_net(meta, arrays)
    if kind not in MODEL_KINDS:
        raise SchemaError(f"{path}: unknown model kind {kind!r}")
    if expect_schema is not None and meta.get("feature_schema") != expect_schema:
        raise SchemaError(f"{path}: model was trained on a different feature schema")
    model = MODEL_KINDS[kind](**meta["hyperparameters"])
    model.n_features_in_ = int(meta["n_features"])
    model.classes_ = np.array([0, 1])
    model._load_state(arrays)
    model.zone_ = Zone.parse(meta["zone"]) if meta.get("zone") else None
    model.metadata_ = meta
    return model


def read_header(path) -> dict:
    return _read(path)[0]


def _save_net(net: Network, path, seed) -> None:
    cfg = net.config or NetConfig()
    arrays = {}
    for k, v in net.parameters().items():
        arrays[f"param.{k}"] = v
        arrays[f"adam_m.{k}"] = net.m[k]
        arrays[f"adam_v.{k}"] = net.v[k]
    for k, v in net.buffers().items():
        arrays[f"buffer.{k}"] = v
    arrays["scalars"] = np.array([net.input_mean, net.input_std, float(net.step)])
    zone = getattr(net, "zone_", None)
    header = {"kind": "cnn", "version": VERSION,
              "metadata": {"zone": Zone.parse(zone).value if zone is not None else None,
                           "seed": cfg.seed if seed is None else seed,
                           "hyperparameters": cfg.to_dict()}}
    _write(path, header, arrays)


def _load_net(meta, arrays) -> Network:
    net = build_micro_net(NetConfig(**meta["hyperparameters"]))
    for key, value in arrays.items():
        kind, _, name = key.partition(".")
        if kind in ("param", "buffer"):
            net.set_array(name, value)
        elif kind == "adam_m":
            net.m[name] = value
        elif kind == "adam_v":
            net.v[name] = value
    net.input_mean, net.input_std, step = (float(v) for v in arrays["scalars"])
    net.step = int(step)
    net.zone_ = Zone.parse(meta["zone"]) if meta.get("zone") else None
    net.metadata_ = meta
    return net


# --- standardizer records --------------------------------------------------

def save_standardizer(model: StandardizationModel, path) -> None:
    record = {"format": STANDARDIZER_FORMAT, "config": model.config.to_dict(),
              "mean_landmarks": [float(v) for v in model.mean_landmarks]}
    tmp = f"{path}.tmp"
    Path(tmp).write_text(json.dumps(record, indent=2) + "\n")
    os.replace(tmp, path)


def load_standardizer(path) -> StandardizationModel:
    try:
        record = json.loads(Path(path).read_text())
    except json.JSONDecodeError:
        raise SchemaError(f"{path}: not a standardizer record") from None
    if record.get("format") != STANDARDIZER_FORMAT:
        raise SchemaError(f"{path}: unsupported standardizer format {record.get('format')!r}")
    return StandardizationModel(StandardizationConfig(**record["config"]),
                                np.array(record["mean_landmarks"], dtype=np.float64))
