"""End-to-end per-zone pipeline: standardize, sample, extract, train, evaluate.

Each stage writes its artifacts under the work directory together with a
stamp recording a content hash of its inputs and settings.  A rerun skips
any stage whose stamp matches and whose outputs are intact.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .core import (NumericalError, ValidationError, Zone, ZonalError, load_dataset,
                   read_feature_csv, save_dataset, write_feature_csv)
from .evaluation import zone_report
from .features import extract_batch
from .models import (EntropyRandomForest, L1LogisticRegression, NewtonBoostingClassifier,
                     RBFSupportVectorClassifier, k_fold_cv, randomized_search, zone_defaults)
from .net import NetConfig, train_net
from .persist import load_model, load_standardizer, save_model, save_standardizer
from .phantom import DEFAULT_TEST_COUNTS, DEFAULT_TRAIN_COUNTS, PhantomConfig, generate_corpus
from .sampler import SamplerConfig, build_zone_dataset, load_corpus, save_corpus
from .standardize import StandardizationConfig, apply_standardizer, fit_standardizer

MODEL_ORDER = ("logreg_l1", "svm_rbf", "random_forest", "gbt")
LOGREG_GRID = (1e-3, 3e-3, 1e-2, 3e-2, 1e-1)


class StageError(ZonalError):
    """A stage failed; ``cause`` keeps the original error for exit-code mapping."""

    def __init__(self, stage, zone, cause):
        where = f"{stage}" if zone is None else f"{stage} ({zone.value})"
        super().__init__(f"stage {where} failed: {cause}")
        self.stage, self.zone, self.cause = stage, zone, cause


@dataclass(frozen=True)
class ClassifierSettings:
    models: tuple = MODEL_ORDER
    forest_trees: int = 1000
    svm_C: float = 0.05
    logreg_lambda: float | None = None
    logreg_grid: tuple = LOGREG_GRID
    logreg_folds: int = 10
    gbt: str = "defaults"  # "defaults" (per-zone tuned values) or "search"
    search_candidates: int = 50
    search_folds: int = 3

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "logreg_grid", tuple(float(v) for v in self.logreg_grid))
        unknown = set(self.models) - set(MODEL_ORDER)
        if unknown:
            raise ValidationError(f"unknown model kinds: {sorted(unknown)}")
        if self.gbt not in ("defaults", "search"):
            raise ValidationError("classifiers.gbt must be 'defaults' or 'search'")
        if self.forest_trees < 1 or self.svm_C <= 0:
            raise ValidationError("forest_trees must be >= 1 and svm_C > 0")
        if self.logreg_lambda is not None and self.logreg_lambda < 0:
            raise ValidationError("logreg_lambda must be >= 0")


@dataclass(frozen=True)
class NetSettings:
    enabled: bool = True
    epochs: int = 30
    batch_size: int = 32
    dropout: float = 0.5
    lr: float = 1e-3

    def net_config(self, seed) -> NetConfig:
        return NetConfig(epochs=self.epochs, batch_size=self.batch_size, dropout=self.dropout,
                         lr=self.lr, seed=seed)


def _section(cls, raw, name):
    raw = dict(raw or {})
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ValidationError(f"{name}: unknown keys {sorted(unknown)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ValidationError(f"{name}: {exc}") from None


@dataclass(frozen=True)
class PipelineConfig:
    """Validated run configuration; see :meth:`from_dict` for the JSON layout."""

    workdir: str = "run"
    train_corpus: str | None = None
    test_corpus: str | None = None
    zones: tuple = (Zone.PZ, Zone.TZ, Zone.AS)
    seed: int = 0
    n_jobs: int = 1
    phantom: dict = field(default_factory=dict)
    standardizer: StandardizationConfig = field(default_factory=StandardizationConfig)
    sampler: dict = field(default_factory=dict)
    features: dict = field(default_factory=lambda: {"t2_levels": 32, "adc_levels": 16})
    classifiers: ClassifierSettings = field(default_factory=ClassifierSettings)
    net: NetSettings = field(default_factory=NetSettings)
    threshold: float = 0.5

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        raw = dict(raw)
        known = {"paths", "zones", "seed", "n_jobs", "phantom", "standardizer", "sampler",
                 "features", "classifiers", "net", "evaluation"}
        unknown = set(raw) - known
        if unknown:
            raise ValidationError(f"unknown config sections {sorted(unknown)}")
        paths = dict(raw.get("paths") or {})
        bad = set(paths) - {"workdir", "train_corpus", "test_corpus"}
        if bad:
            raise ValidationError(f"paths: unknown keys {sorted(bad)}")
        zones = raw.get("zones", ["PZ", "TZ", "AS"])
        if not zones:
            raise ValidationError("zones: at least one zone required")
        zones = tuple(Zone.parse(z) for z in zones)
        if len(set(zones)) != len(zones):
            raise ValidationError("zones: duplicates")
        seed = raw.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            raise ValidationError("seed must be a non-negative integer")
        n_jobs = raw.get("n_jobs", 1)
        if not isinstance(n_jobs, int) or n_jobs < 1:
            raise ValidationError("n_jobs must be a positive integer")
        phantom = dict(raw.get("phantom") or {})
        _phantom_config(phantom, seed, "train")  # validate early
        sampler = dict(raw.get("sampler") or {})
        _section(SamplerConfig, {**sampler, "seed": seed}, "sampler")
        feats = {"t2_levels": 32, "adc_levels": 16, **(raw.get("features") or {})}
        if set(feats) != {"t2_levels", "adc_levels"} or min(feats.values()) < 2:
            raise ValidationError("features: expects t2_levels and adc_levels >= 2")
        evaluation = dict(raw.get("evaluation") or {})
        if set(evaluation) - {"threshold"}:
            raise ValidationError("evaluation: only 'threshold' is configurable")
        return cls(
            workdir=paths.get("workdir", "run"),
            train_corpus=paths.get("train_corpus"),
            test_corpus=paths.get("test_corpus"),
            zones=zones, seed=seed, n_jobs=n_jobs, phantom=phantom,
            standardizer=_section(StandardizationConfig, raw.get("standardizer"), "standardizer"),
            sampler=sampler, features=feats,
            classifiers=_section(ClassifierSettings, raw.get("classifiers"), "classifiers"),
            net=_section(NetSettings, raw.get("net"), "net"),
            threshold=float(evaluation.get("threshold", 0.5)),
        )

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ValidationError(f"{path}: top level must be an object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        """Fully expanded configuration, defaults included."""
        cls_ = self.classifiers
        return {
            "paths": {"workdir": self.workdir, "train_corpus": self.train_corpus,
                      "test_corpus": self.test_corpus},
            "zones": [z.value for z in self.zones],
            "seed": self.seed,
            "n_jobs": self.n_jobs,
            "phantom": _phantom_dict(self.phantom),
            "standardizer": self.standardizer.to_dict(),
            "sampler": {k: v for k, v in vars(self.sampler_config()).items() if k != "seed"},
            "features": dict(self.features),
            "classifiers": {**vars(cls_), "models": list(cls_.models),
                            "logreg_grid": list(cls_.logreg_grid)},
            "net": vars(self.net).copy(),
            "evaluation": {"threshold": self.threshold},
        }

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(**{**self.sampler, "seed": self.seed})


def _phantom_config(raw: dict, seed: int, split: str) -> PhantomConfig:
    raw = dict(raw)
    counts = raw.pop("counts", None) or {}
    counts = dict(counts.get(split, DEFAULT_TRAIN_COUNTS if split == "train" else DEFAULT_TEST_COUNTS))
    known = {f.name for f in fields(PhantomConfig)} - {"counts", "seed"}
    unknown = set(raw) - known
    if unknown:
        raise ValidationError(f"phantom: unknown keys {sorted(unknown)}")
    for key in ("t2_size", "adc_size", "gland", "transition", "t2_gain_range", "t2_offset_range"):
        if key in raw:
            raw[key] = tuple(raw[key])
    return PhantomConfig(**raw, counts=counts, seed=seed)


def _phantom_dict(raw: dict) -> dict:
    out = {k: v for k, v in raw.items() if k != "counts"}
    counts = raw.get("counts") or {}
    out["counts"] = {split: {Zone.parse(z).value: int(n) for z, n in
                             counts.get(split, default).items()}
                     for split, default in (("train", DEFAULT_TRAIN_COUNTS),
                                            ("test", DEFAULT_TEST_COUNTS))}
    return out


# --- content hashing -------------------------------------------------------

def _hash_bytes(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p if isinstance(p, bytes) else json.dumps(p, sort_keys=True).encode())
        h.update(b"\0")
    return h.hexdigest()


def _hash_path(path: Path) -> str:
    """Hash of a file, or of every file below a directory (relative names included)."""
    h = hashlib.sha256()
    if path.is_dir():
        for p in sorted(q for q in path.rglob("*") if q.is_file() and q.name != "stamp.json"):
            h.update(str(p.relative_to(path)).encode())
            h.update(hashlib.sha256(p.read_bytes()).digest())
    elif path.is_file():
        h.update(path.read_bytes())
    else:
        return "missing"
    return h.hexdigest()


@dataclass
class StageLog:
    entries: list = field(default_factory=list)

    def add(self, stage, zone, status):
        self.entries.append({"stage": stage, "zone": zone.value if zone else None,
                             "status": status})

    def statuses(self) -> set:
        return {e["status"] for e in self.entries}


class Runner:
    def __init__(self, config: PipelineConfig, log=None):
        self.config = config
        self.root = Path(config.workdir)
        self.stamps = self.root / "stamps"
        self.log = StageLog()
        self.echo = log or (lambda msg: None)

    def stage(self, name, zone, inputs: list, settings, outputs: list, action):
        """Run ``action`` unless the stamp for (inputs, settings) matches intact outputs."""
        key = _hash_bytes(name, settings, *[_hash_path(Path(p)) for p in inputs])
        tag = name if zone is None else f"{name}-{zone.value}"
        stamp = self.stamps / f"{tag}.json"
        if stamp.exists():
            rec = json.loads(stamp.read_text())
            if rec.get("key") == key and all(
                    _hash_path(Path(p)) == rec["outputs"].get(str(p)) for p in outputs):
                self.log.add(name, zone, "skipped")
                self.echo(f"[skip] {tag}")
                return
        t0 = time.perf_counter()
        try:
            action()
        except ZonalError as exc:
            raise StageError(name, zone, exc) from exc
        except (OSError, ValueError, RuntimeError) as exc:
            raise StageError(name, zone, exc) from exc
        self.stamps.mkdir(parents=True, exist_ok=True)
        rec = {"key": key, "outputs": {str(p): _hash_path(Path(p)) for p in outputs}}
        stamp.write_text(json.dumps(rec, indent=1, sort_keys=True) + "\n")
        self.log.add(name, zone, "ran")
        self.echo(f"[done] {tag} ({time.perf_counter() - t0:.1f}s)")


# --- stages ----------------------------------------------------------------

def _standardize_corpus(cases, model):
    return [c.with_t2(apply_standardizer(model, c.t2_image).astype(np.float32)) for c in cases]


def _select_logreg_lambda(X, y, settings: ClassifierSettings, seed, n_jobs):
    """Grid value with the best mean k-fold ROC-AUC (ties: the smaller index)."""
    k = min(settings.logreg_folds, int(y.sum()), int(y.size - y.sum()))
    best, best_score = settings.logreg_grid[0], -np.inf
    for lam in settings.logreg_grid:
        res = k_fold_cv(X, y, k, lambda a, b, lam=lam: L1LogisticRegression(lam=lam).fit(a, b),
                        seed, n_jobs=n_jobs)
        if res.mean > best_score:
            best, best_score = lam, res.mean
    return best


def train_models(X, y, zone, settings: ClassifierSettings, seed=0, n_jobs=1) -> list:
    """Fit the configured classifiers for one zone, in canonical order."""
    out = []
    for kind in MODEL_ORDER:
        if kind not in settings.models:
            continue
        if kind == "logreg_l1":
            lam = settings.logreg_lambda
            if lam is None:
                lam = _select_logreg_lambda(X, y, settings, seed, n_jobs)
            model = L1LogisticRegression(lam=lam)
        elif kind == "svm_rbf":
            model = RBFSupportVectorClassifier(C=settings.svm_C)
        elif kind == "random_forest":
            model = EntropyRandomForest(n_estimators=settings.forest_trees, random_state=seed,
                                        n_jobs=n_jobs)
        else:
            if settings.gbt == "search":
                hp = randomized_search(X, y, n_candidates=settings.search_candidates,
                                       k=settings.search_folds, seed=seed, n_jobs=n_jobs).best
            else:
                hp = zone_defaults(zone)
            model = NewtonBoostingClassifier.from_hyperparams(hp, random_state=seed)
        model.fit(X, y)
        model.zone_ = zone
        out.append(model)
    return out


def run_pipeline(config: PipelineConfig, log=None) -> StageLog:
    """Execute every stage for every configured zone; returns the stage log."""
    cfg = config
    run = Runner(cfg, log)
    root = run.root
    root.mkdir(parents=True, exist_ok=True)
    manifest = root / "config.json"
    manifest.write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    n_jobs = cfg.n_jobs

    # corpora: given on disk, or generated phantoms
    corpora = {}
    for split, given in (("train", cfg.train_corpus), ("test", cfg.test_corpus)):
        if given is not None:
            corpora[split] = Path(given)
            continue
        out = root / "corpus" / split
        pcfg = _phantom_config(cfg.phantom, cfg.seed, split)
        run.stage(f"phantom-{split}", None, [], {"split": split, "phantom": _phantom_dict(cfg.phantom),
                                        "seed": cfg.seed}, [out],
                  lambda out=out, pcfg=pcfg, split=split:
                  save_corpus(generate_corpus(pcfg, split), out, split))
        corpora[split] = out

    std_path = root / "standardizer.json"
    std_dirs = {s: root / "standardized" / s for s in corpora}

    def fit_std():
        cases = load_corpus(corpora["train"])
        save_standardizer(fit_standardizer([c.t2_image for c in cases], cfg.standardizer), std_path)

    run.stage("standardize-fit", None, [corpora["train"]], cfg.standardizer.to_dict(),
              [std_path], fit_std)
    for split, src in corpora.items():
        run.stage(f"standardize-{split}", None, [src, std_path], {}, [std_dirs[split]],
                  lambda src=src, split=split: save_corpus(
                      _standardize_corpus(load_corpus(src), load_standardizer(std_path)),
                      std_dirs[split], split))

    scfg = cfg.sampler_config()
    metric_rows = []
    for zone in cfg.zones:
        zdir = root / zone.value
        datasets = {s: zdir / f"{s}_patches" for s in corpora}
        tables = {s: zdir / f"{s}_features.csv" for s in corpora}
        for split in corpora:
            run.stage(f"sample-{split}", zone, [std_dirs[split]],
                      {k: v for k, v in vars(scfg).items()}, [datasets[split]],
                      lambda split=split, zone=zone: save_dataset(
                          build_zone_dataset(load_corpus(std_dirs[split]), zone, scfg, split),
                          datasets[split]))
            run.stage(f"extract-{split}", zone, [datasets[split]], cfg.features, [tables[split]],
                      lambda split=split: write_feature_csv(tables[split], extract_batch(
                          load_dataset(datasets[split]).samples, n_jobs,
                          cfg.features["t2_levels"], cfg.features["adc_levels"])))

        mdir = zdir / "models"
        model_paths = [mdir / f"{k}.zldc" for k in MODEL_ORDER if k in cfg.classifiers.models]
        cls_settings = cfg.to_dict()["classifiers"]

        def do_train(zone=zone, mdir=mdir):
            table = read_feature_csv(tables["train"])
            mdir.mkdir(parents=True, exist_ok=True)
            for model in train_models(table.X, table.y, zone, cfg.classifiers, cfg.seed, n_jobs):
                save_model(model, mdir / f"{model.kind}.zldc", cfg.seed)

        run.stage("train", zone, [tables["train"]], {"classifiers": cls_settings, "seed": cfg.seed},
                  model_paths, do_train)

        net_path = mdir / "cnn.zldc"
        if cfg.net.enabled:
            def do_net(zone=zone):
                ds = load_dataset(datasets["train"])
                patches = np.stack([s.t2.pixels for s in ds.samples])
                res = train_net(patches, ds.labels, cfg.net.net_config(cfg.seed))
                res.net.zone_ = zone
                mdir.mkdir(parents=True, exist_ok=True)
                save_model(res.net, net_path, cfg.seed)
                (mdir / "cnn_loss.csv").write_text(
                    "epoch,loss\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(res.epoch_loss)))

            run.stage("train-cnn", zone, [datasets["train"]],
                      {"net": vars(cfg.net), "seed": cfg.seed}, [net_path], do_net)

        edir = zdir / "report"
        eval_inputs = [tables["test"], *model_paths] + ([net_path, datasets["test"]]
                                                       if cfg.net.enabled else [])

        def do_eval(zone=zone, edir=edir, model_paths=model_paths):
            table = read_feature_csv(tables["test"])
            models = [load_model(p) for p in model_paths]
            extra = {}
            if cfg.net.enabled:
                net = load_model(net_path)
                ds = load_dataset(datasets["test"])
                extra["cnn"] = net.positive_proba(np.stack([s.t2.pixels for s in ds.samples]))
            report = zone_report(models, table, zone, cfg.threshold, extra)
            edir.mkdir(parents=True, exist_ok=True)
            report.write_csv(edir / "metrics.csv")
            report.write_json(edir / "report.json")
            report.write_importances(edir / "importances.csv")
            report.export_curves(edir / "curves")

        run.stage("evaluate", zone, eval_inputs, {"threshold": cfg.threshold}, [edir], do_eval)
        with open(edir / "metrics.csv", newline="") as fh:
            metric_rows.extend(csv.DictReader(fh))

    with open(root / "metrics.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, list(metric_rows[0].keys()), lineterminator="\n")
        w.writeheader()
        w.writerows(metric_rows)
    (root / "stages.json").write_text(json.dumps(run.log.entries, indent=1) + "\n")
    return run.log


def exit_code(exc: BaseException) -> int:
    """2 for invalid input or configuration, 3 for runtime or numerical failures."""
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, (ValidationError, FileNotFoundError, NotADirectoryError, KeyError)):
        return 2
    if isinstance(exc, (NumericalError, ZonalError, RuntimeError, OSError, ValueError)):
        return 3
    return 3
