"""Domain types, canonical feature ordering and the on-disk dataset container."""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CONTAINER_VERSION = 1


class ZonalError(Exception):
    """Base class for all package errors."""


class ValidationError(ZonalError, ValueError):
    """Bad input, configuration or file contents."""


class SchemaError(ValidationError):
    """Feature schema of a model and its input disagree."""


class NumericalError(ZonalError, RuntimeError):
    """A numeric routine diverged or failed to converge."""


class InsufficientDataError(ZonalError, RuntimeError):
    """Not enough admissible data to satisfy a sampling request."""


class Zone(str, enum.Enum):
    PZ = "PZ"
    TZ = "TZ"
    AS = "AS"

    @classmethod
    def parse(cls, token) -> "Zone":
        if isinstance(token, Zone):
            return token
        text = str(token).strip().upper()
        if text == "SV":
            raise ValidationError("zone 'SV' is not supported (seminal vesicle lesions are excluded)")
        try:
            return cls(text)
        except ValueError:
            raise ValidationError(f"unknown zone {token!r}; expected one of PZ, TZ, AS") from None


class Modality(str, enum.Enum):
    T2W = "T2W"
    ADC = "ADC"

    @property
    def patch_size(self) -> int:
        return 16 if self is Modality.T2W else 6

    @property
    def prefix(self) -> str:
        return "t2" if self is Modality.T2W else "adc"


_BASE_FEATURES = (
    "p10", "mean", "skewness", "kurtosis",
    "asm", "contrast", "correlation", "dissimilarity", "energy", "homogeneity",
    "tamura_coarseness", "tamura_contrast", "tamura_roughness",
)

FEATURE_NAMES: tuple[str, ...] = tuple(
    f"{m.prefix}_{name}" for m in (Modality.T2W, Modality.ADC) for name in _BASE_FEATURES
)
N_FEATURES = len(FEATURE_NAMES)
FEATURES_PER_MODALITY = len(_BASE_FEATURES)
FEATURE_SCHEMA_HASH = hashlib.sha256(",".join(FEATURE_NAMES).encode()).hexdigest()[:16]


def feature_name(index: int) -> str:
    """Canonical name of feature column ``index`` (0..25)."""
    if not isinstance(index, (int, np.integer)) or not 0 <= index < N_FEATURES:
        raise ValidationError(f"feature index out of range: {index!r}")
    return FEATURE_NAMES[int(index)]


def feature_index(name: str) -> int:
    try:
        return FEATURE_NAMES.index(name)
    except ValueError:
        raise ValidationError(f"unknown feature name {name!r}") from None


def _check_label(label) -> int:
    if label not in (0, 1) or isinstance(label, float) and not float(label).is_integer():
        raise ValidationError(f"label must be 0 or 1, got {label!r}")
    return int(label)


@dataclass(frozen=True, eq=False)
class Patch:
    pixels: np.ndarray
    modality: Modality
    zone: Zone
    label: int
    case_id: str = ""
    sample_id: str = ""

    def __post_init__(self):
        modality = Modality(self.modality)
        pixels = np.array(self.pixels, dtype=np.float32)
        size = modality.patch_size
        if pixels.shape != (size, size):
            raise ValidationError(
                f"{modality.value} patch must be {size}x{size}, got {pixels.shape}")
        if not np.all(np.isfinite(pixels)):
            raise ValidationError("patch contains non-finite values")
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)
        object.__setattr__(self, "modality", modality)
        object.__setattr__(self, "zone", Zone.parse(self.zone))
        object.__setattr__(self, "label", _check_label(self.label))

    def __eq__(self, other):
        if not isinstance(other, Patch):
            return NotImplemented
        return (self.modality == other.modality and self.zone == other.zone
                and self.label == other.label and self.case_id == other.case_id
                and self.sample_id == other.sample_id
                and np.array_equal(self.pixels, other.pixels))

    __hash__ = None


@dataclass(frozen=True)
class PairedSample:
    t2: Patch
    adc: Patch
    sample_id: str

    def __post_init__(self):
        if self.t2.modality is not Modality.T2W or self.adc.modality is not Modality.ADC:
            raise ValidationError("paired sample needs a T2W and an ADC patch")
        if (self.t2.zone, self.t2.label, self.t2.case_id) != (
                self.adc.zone, self.adc.label, self.adc.case_id):
            raise ValidationError("T2W and ADC patches disagree on zone, label or case")

    @property
    def zone(self) -> Zone:
        return self.t2.zone

    @property
    def label(self) -> int:
        return self.t2.label

    @property
    def case_id(self) -> str:
        return self.t2.case_id


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    label: int
    zone: Zone
    sample_id: str = ""

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.shape != (N_FEATURES,):
            raise ValidationError(f"feature vector must have {N_FEATURES} values, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("feature vector contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "label", _check_label(self.label))
        object.__setattr__(self, "zone", Zone.parse(self.zone))

    def as_dict(self) -> dict:
        return dict(zip(FEATURE_NAMES, self.values.tolist()))


@dataclass
class ZoneDataset:
    samples: list
    zone: Zone
    split: str = "train"

    def __post_init__(self):
        self.zone = Zone.parse(self.zone)
        if self.split not in ("train", "test"):
            raise ValidationError(f"split must be 'train' or 'test', got {self.split!r}")
        for s in self.samples:
            if s.zone != self.zone:
                raise ValidationError(
                    f"sample {s.sample_id!r} has zone {s.zone.value}, dataset is {self.zone.value}")

    def __len__(self):
        return len(self.samples)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    @property
    def n_positive(self) -> int:
        return int(self.labels.sum())

    def __eq__(self, other):
        if not isinstance(other, ZoneDataset):
            return NotImplemented
        return (self.zone == other.zone and self.split == other.split
                and len(self.samples) == len(other.samples)
                and all(a == b for a, b in zip(self.samples, other.samples)))


# --- dataset container -----------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_tensor(path: Path, arrays: Sequence[np.ndarray]) -> None:
    stack = np.stack([np.asarray(a, dtype=np.float32) for a in arrays])
    path.write_bytes(stack.astype("<f4", copy=False).tobytes(order="C"))


def save_dataset(dataset: ZoneDataset, path) -> None:
    """Write ``dataset`` as a flat directory container.

    Layout: ``manifest.json``, ``patches_t2.bin`` ([N,16,16] float32 LE),
    ``patches_adc.bin`` ([N,6,6]) and ``labels.csv``.
    """
    if len(dataset) == 0:
        raise ValidationError("empty dataset")
    for s in dataset.samples:
        if not isinstance(s, PairedSample):
            raise ValidationError("only paired-patch datasets can be stored in a container")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    samples = dataset.samples
    _write_tensor(out / "patches_t2.bin", [s.t2.pixels for s in samples])
    _write_tensor(out / "patches_adc.bin", [s.adc.pixels for s in samples])
    with open(out / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id", "case_id", "zone", "label"])
        for s in samples:
            writer.writerow([s.sample_id, s.case_id, s.zone.value, s.label])
    manifest = {
        "format": "zonalrad.dataset",
        "version": CONTAINER_VERSION,
        "zone": dataset.zone.value,
        "split": dataset.split,
        "count": len(samples),
        "shapes": {"t2": [16, 16], "adc": [6, 6]},
        "dtype": "float32-le",
        "checksums": {name: _sha256(out / name)
                      for name in ("patches_t2.bin", "patches_adc.bin", "labels.csv")},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _read_tensor(path: Path, count: int, shape: Sequence[int]) -> np.ndarray:
    raw = path.read_bytes()
    per = int(np.prod(shape)) * 4
    if len(raw) != count * per:
        raise ValidationError(
            f"{path.name}: manifest declares {count} patches of {list(shape)} "
            f"but file holds {len(raw) / per:g}")
    return np.frombuffer(raw, dtype="<f4").reshape((count, *shape)).astype(np.float32)


def load_dataset(path) -> ZoneDataset:
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise ValidationError(f"missing manifest: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("version") != CONTAINER_VERSION:
        raise ValidationError(f"unsupported container version {manifest.get('version')!r}")
    for name in ("patches_t2.bin", "patches_adc.bin", "labels.csv"):
        if not (root / name).exists():
            raise ValidationError(f"missing container file: {name}")
    count = int(manifest["count"])
    t2 = _read_tensor(root / "patches_t2.bin", count, manifest["shapes"]["t2"])
    adc = _read_tensor(root / "patches_adc.bin", count, manifest["shapes"]["adc"])
    for name, digest in manifest.get("checksums", {}).items():
        if _sha256(root / name) != digest:
            raise ValidationError(f"checksum mismatch for {name}")
    with open(root / "labels.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != count:
        raise ValidationError(f"labels.csv has {len(rows)} rows, manifest declares {count}")
    zone = Zone.parse(manifest["zone"])
    samples = []
    for i, row in enumerate(rows):
        row_zone = Zone.parse(row["zone"])
        label = int(row["label"])
        kw = dict(zone=row_zone, label=label, case_id=row["case_id"], sample_id=row["sample_id"])
        samples.append(PairedSample(
            t2=Patch(t2[i], Modality.T2W, **kw),
            adc=Patch(adc[i], Modality.ADC, **kw),
            sample_id=row["sample_id"]))
    return ZoneDataset(samples, zone, manifest.get("split", "train"))


# --- feature matrices ------------------------------------------------------

FEATURE_CSV_HEADER = (*FEATURE_NAMES, "sample_id", "zone", "label")


def write_feature_csv(path, vectors: Iterable[FeatureVector]) -> None:
    """Write feature rows; floats use the shortest round-trip representation."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FEATURE_CSV_HEADER)
        for v in vectors:
            writer.writerow([repr(float(x)) for x in v.values]
                            + [v.sample_id, v.zone.value, v.label])


@dataclass
class FeatureTable:
    X: np.ndarray
    y: np.ndarray
    zones: list = field(default_factory=list)
    sample_ids: list = field(default_factory=list)

    def vectors(self) -> list:
        return [FeatureVector(x, int(lbl), z, sid)
                for x, lbl, z, sid in zip(self.X, self.y, self.zones, self.sample_ids)]


def read_feature_csv(path) -> FeatureTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty feature file") from None
        if tuple(header) != FEATURE_CSV_HEADER:
            n_feat = len([h for h in header if h not in ("sample_id", "zone", "label")])
            raise SchemaError(
                f"{path}: feature columns do not match the {N_FEATURES}-feature schema "
                f"(found {n_feat} feature columns)")
        X, y, zones, ids = [], [], [], []
        for row in reader:
            if len(row) != len(FEATURE_CSV_HEADER):
                raise SchemaError(f"{path}: row has {len(row)} fields")
            X.append([float(v) for v in row[:N_FEATURES]])
            ids.append(row[N_FEATURES])
            zones.append(Zone.parse(row[N_FEATURES + 1]))
            y.append(_check_label(int(row[N_FEATURES + 2])))
    X = np.array(X, dtype=np.float64).reshape(-1, N_FEATURES)
    return FeatureTable(X, np.array(y, dtype=np.int64), zones, ids)


def atomic_write_text(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)
