"""Patch extraction at lesion centroids and seeded negative sampling at a 1:3 ratio."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import (InsufficientDataError, Modality, PairedSample, Patch, ValidationError, Zone,
                   ZoneDataset)
from .seeding import derive_rng

NEG_PER_POS = 3


@dataclass(frozen=True)
class Finding:
    zone: Zone
    t2_centroid: tuple
    adc_centroid: tuple

    def __post_init__(self):
        object.__setattr__(self, "zone", Zone.parse(self.zone))
        object.__setattr__(self, "t2_centroid", tuple(int(v) for v in self.t2_centroid))
        object.__setattr__(self, "adc_centroid", tuple(int(v) for v in self.adc_centroid))


@dataclass(frozen=True, eq=False)
class CaseImage:
    case_id: str
    t2_image: np.ndarray
    adc_image: np.ndarray
    zone_masks: dict
    findings: tuple = ()

    def __post_init__(self):
        t2 = np.asarray(self.t2_image, dtype=np.float32)
        adc = np.asarray(self.adc_image, dtype=np.float32)
        masks = {Zone.parse(z): np.asarray(m, dtype=bool) for z, m in self.zone_masks.items()}
        for z, m in masks.items():
            if m.shape != t2.shape:
                raise ValidationError(f"{self.case_id}: {z.value} mask shape {m.shape} != {t2.shape}")
        stacked = sum(m.astype(np.int64) for m in masks.values()) if masks else None
        if stacked is not None and np.any(stacked > 1):
            raise ValidationError(f"{self.case_id}: zone masks overlap")
        findings = tuple(self.findings)
        for f in findings:
            mask = masks.get(f.zone)
            r, c = f.t2_centroid
            if mask is None or not (0 <= r < t2.shape[0] and 0 <= c < t2.shape[1]) or not mask[r, c]:
                raise ValidationError(f"{self.case_id}: finding {f} lies outside its zone mask")
        object.__setattr__(self, "t2_image", t2)
        object.__setattr__(self, "adc_image", adc)
        object.__setattr__(self, "zone_masks", masks)
        object.__setattr__(self, "findings", findings)

    def findings_in(self, zone: Zone) -> list:
        return [f for f in self.findings if f.zone is zone]

    def to_adc(self, center) -> tuple:
        """Map a T2W pixel to the nearest ADC pixel of the same location."""
        sr = self.adc_image.shape[0] / self.t2_image.shape[0]
        sc = self.adc_image.shape[1] / self.t2_image.shape[1]
        return (int(np.floor((center[0] + 0.5) * sr)), int(np.floor((center[1] + 0.5) * sc)))

    def with_t2(self, image) -> "CaseImage":
        return replace(self, t2_image=image)


@dataclass(frozen=True)
class SamplerConfig:
    t2_patch: int = 16
    adc_patch: int = 6
    neg_per_pos: int = NEG_PER_POS
    seed: int = 0
    exclusion_radius_t2: int | None = None
    exclusion_radius_adc: int | None = None

    def __post_init__(self):
        for size in (self.t2_patch, self.adc_patch):
            if size <= 0 or size % 2:
                raise ValidationError("patch sizes must be even and positive")
        if self.neg_per_pos != NEG_PER_POS:
            raise ValidationError("neg_per_pos is fixed at 3 (25% positive / 75% negative)")

    @property
    def radius_t2(self) -> int:
        return self.t2_patch // 2 if self.exclusion_radius_t2 is None else self.exclusion_radius_t2

    @property
    def radius_adc(self) -> int:
        return self.adc_patch // 2 if self.exclusion_radius_adc is None else self.exclusion_radius_adc


def window_fits(shape, center, size: int) -> bool:
    r0, c0 = center[0] - size // 2, center[1] - size // 2
    return r0 >= 0 and c0 >= 0 and r0 + size <= shape[0] and c0 + size <= shape[1]


def extract_window(image, center, size: int) -> np.ndarray:
    """Exact ``size x size`` sub-grid whose top-left corner is ``center - size/2``."""
    image = np.asarray(image)
    if not window_fits(image.shape, center, size):
        raise ValidationError(f"{size}x{size} window at {tuple(center)} exceeds image {image.shape}")
    r0, c0 = center[0] - size // 2, center[1] - size // 2
    return image[r0:r0 + size, c0:c0 + size].copy()


def extract_patch(image, center, size: int, modality=None, zone=Zone.PZ, label=0,
                  case_id="", sample_id="") -> Patch:
    pixels = extract_window(image, center, size)
    if modality is None:
        modality = Modality.T2W if size == 16 else Modality.ADC
    return Patch(pixels, modality, zone, label, case_id, sample_id)


def _paired(case: CaseImage, zone: Zone, t2_center, adc_center, label: int,
            sample_id: str, config: SamplerConfig) -> PairedSample:
    kw = dict(zone=zone, label=label, case_id=case.case_id, sample_id=sample_id)
    t2 = Patch(extract_window(case.t2_image, t2_center, config.t2_patch), Modality.T2W, **kw)
    adc = Patch(extract_window(case.adc_image, adc_center, config.adc_patch), Modality.ADC, **kw)
    return PairedSample(t2, adc, sample_id)


def admissible_centers(case: CaseImage, zone: Zone, config: SamplerConfig) -> np.ndarray:
    """Row-major list of mask pixels usable as negative centers."""
    zone = Zone.parse(zone)
    mask = case.zone_masks.get(zone)
    if mask is None or not mask.any():
        raise InsufficientDataError(f"{case.case_id}: empty {zone.value} mask")
    rows, cols = np.nonzero(mask)
    H, W = case.t2_image.shape
    h2 = config.t2_patch // 2
    keep = (rows >= h2) & (cols >= h2) & (rows + h2 <= H) & (cols + h2 <= W)
    adc_r = np.floor((rows + 0.5) * case.adc_image.shape[0] / H).astype(np.int64)
    adc_c = np.floor((cols + 0.5) * case.adc_image.shape[1] / W).astype(np.int64)
    a2 = config.adc_patch // 2
    h, w = case.adc_image.shape
    keep &= (adc_r >= a2) & (adc_c >= a2) & (adc_r + a2 <= h) & (adc_c + a2 <= w)
    for f in case.findings:
        near_t2 = np.maximum(np.abs(rows - f.t2_centroid[0]),
                             np.abs(cols - f.t2_centroid[1])) < config.radius_t2
        near_adc = np.maximum(np.abs(adc_r - f.adc_centroid[0]),
                              np.abs(adc_c - f.adc_centroid[1])) < config.radius_adc
        keep &= ~(near_t2 | near_adc)
    return np.stack([rows[keep], cols[keep], adc_r[keep], adc_c[keep]], axis=1)


def _negative_order(case: CaseImage, zone: Zone, config: SamplerConfig, rng=None) -> np.ndarray:
    centers = admissible_centers(case, zone, config)
    if rng is None:
        rng = derive_rng(config.seed, "sample", case.case_id, zone.value)
    return centers[rng.permutation(len(centers))]


def sample_negatives(case: CaseImage, zone, n: int, config: SamplerConfig,
                     rng=None, start: int = 0) -> list:
    """Draw ``n`` distinct negative centers uniformly from the admissible mask pixels."""
    zone = Zone.parse(zone)
    order = _negative_order(case, zone, config, rng)
    if len(order) == 0:
        raise InsufficientDataError(
            f"{case.case_id}: {zone.value} mask cannot host a window after exclusion")
    if len(order) < n:
        raise InsufficientDataError(
            f"{case.case_id}: only {len(order)} admissible {zone.value} centers, need {n}")
    return [_paired(case, zone, (r, c), (ar, ac), 0, f"{case.case_id}:{zone.value}:neg{start + j}",
                    config)
            for j, (r, c, ar, ac) in enumerate(order[:n])]


def build_zone_dataset(cases, zone, config: SamplerConfig, split: str = "train") -> ZoneDataset:
    """One positive per finding plus exactly three negatives per positive.

    Negatives come round-robin from cases without a finding in ``zone``;
    cases with findings are used only once those are exhausted.
    """
    zone = Zone.parse(zone)
    cases = list(cases)
    positives = []
    for case in cases:
        for j, f in enumerate(case.findings_in(zone)):
            positives.append(_paired(case, zone, f.t2_centroid, f.adc_centroid, 1,
                                     f"{case.case_id}:{zone.value}:pos{j}", config))
    if not positives:
        raise ValidationError(f"no {zone.value} findings in the corpus")
    needed = config.neg_per_pos * len(positives)

    clean = [c for c in cases if not c.findings_in(zone) and zone in c.zone_masks]
    dirty = [c for c in cases if c.findings_in(zone)]
    negatives = []
    for group in (clean, dirty):
        if len(negatives) >= needed:
            break
        pools = []
        for case in group:
            try:
                order = _negative_order(case, zone, config)
            except InsufficientDataError:
                continue
            if len(order):
                pools.append((case, order))
        taken = [0] * len(pools)
        progress = True
        while len(negatives) < needed and progress:
            progress = False
            for i, (case, order) in enumerate(pools):
                if len(negatives) >= needed:
                    break
                if taken[i] < len(order):
                    r, c, ar, ac = order[taken[i]]
                    negatives.append(_paired(case, zone, (r, c), (ar, ac), 0,
                                             f"{case.case_id}:{zone.value}:neg{taken[i]}", config))
                    taken[i] += 1
                    progress = True
    if len(negatives) < needed:
        raise InsufficientDataError(
            f"{zone.value}: only {len(negatives)} negatives available, need {needed}")
    return ZoneDataset(positives + negatives, zone, split)


# --- corpus directory I/O --------------------------------------------------

def _rle_encode(mask: np.ndarray) -> list:
    flat = np.concatenate([[0], mask.ravel().astype(np.int8), [0]])
    edges = np.flatnonzero(np.diff(flat))
    starts, ends = edges[::2], edges[1::2]
    return [[int(s), int(e - s)] for s, e in zip(starts, ends)]


def _rle_decode(runs, shape) -> np.ndarray:
    flat = np.zeros(int(np.prod(shape)), dtype=bool)
    for start, length in runs:
        flat[start:start + length] = True
    return flat.reshape(shape)


def save_corpus(cases, path, split: str = "train") -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    ids = []
    for case in cases:
        d = root / case.case_id
        d.mkdir(exist_ok=True)
        d.joinpath("t2.bin").write_bytes(case.t2_image.astype("<f4").tobytes())
        d.joinpath("adc.bin").write_bytes(case.adc_image.astype("<f4").tobytes())
        d.joinpath("shape.json").write_text(json.dumps(
            {"t2": list(case.t2_image.shape), "adc": list(case.adc_image.shape)}) + "\n")
        d.joinpath("masks.json").write_text(json.dumps(
            {"shape": list(case.t2_image.shape),
             "zones": {z.value: _rle_encode(m) for z, m in case.zone_masks.items()}}) + "\n")
        with open(d / "findings.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["zone", "t2_row", "t2_col", "adc_row", "adc_col"])
            for f in case.findings:
                w.writerow([f.zone.value, *f.t2_centroid, *f.adc_centroid])
        ids.append(case.case_id)
    (root / "corpus.json").write_text(
        json.dumps({"version": 1, "split": split, "cases": ids}, indent=1) + "\n")


def load_corpus(path) -> list:
    root = Path(path)
    index = root / "corpus.json"
    if index.exists():
        ids = json.loads(index.read_text())["cases"]
    else:
        ids = sorted(p.name for p in root.iterdir() if p.is_dir())
    cases = []
    for cid in ids:
        d = root / cid
        shapes = json.loads((d / "shape.json").read_text())
        t2 = np.frombuffer((d / "t2.bin").read_bytes(), "<f4").reshape(shapes["t2"])
        adc = np.frombuffer((d / "adc.bin").read_bytes(), "<f4").reshape(shapes["adc"])
        m = json.loads((d / "masks.json").read_text())
        masks = {Zone.parse(z): _rle_decode(runs, m["shape"]) for z, runs in m["zones"].items()}
        with open(d / "findings.csv", newline="") as fh:
            findings = [Finding(row["zone"], (int(row["t2_row"]), int(row["t2_col"])),
                                (int(row["adc_row"]), int(row["adc_col"])))
                        for row in csv.DictReader(fh)]
        cases.append(CaseImage(cid, t2, adc, masks, tuple(findings)))
    return cases


def corpus_split(path) -> str:
    index = Path(path) / "corpus.json"
    if index.exists():
        return json.loads(index.read_text()).get("split", "train")
    return "train"
