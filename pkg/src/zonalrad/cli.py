"""Command-line entry point: ``zonalrad <verb> [options]``.

Exit status is 0 on success, 2 for invalid input or configuration and 3
for runtime or numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .core import (ValidationError, Zone, load_dataset, read_feature_csv, save_dataset,
                   write_feature_csv)
from .evaluation import zone_report
from .features import extract_batch
from .models import (L1LogisticRegression, NewtonBoostingClassifier, RBFSupportVectorClassifier,
                     EntropyRandomForest, feature_importances, k_fold_cv, randomized_search,
                     zone_defaults)
from .models.boosting import GbtHyperparams
from .net import NetConfig, train_net
from .persist import load_model, load_standardizer, save_model, save_standardizer
from .pipeline import (ClassifierSettings, PipelineConfig, _phantom_config, exit_code,
                       run_pipeline, train_models)
from .sampler import SamplerConfig, build_zone_dataset, corpus_split, load_corpus, save_corpus
from .phantom import generate_corpus
from .standardize import apply_standardizer, fit_standardizer

FEATURE_MODELS = ("logreg_l1", "svm_rbf", "random_forest", "gbt")


def _config(args) -> PipelineConfig:
    if getattr(args, "config", None):
        return PipelineConfig.load(args.config)
    return PipelineConfig()


def _seed(args, cfg) -> int:
    return cfg.seed if args.seed is None else args.seed


def _zone(args) -> Zone:
    if not args.zone:
        raise ValidationError("--zone is required")
    return Zone.parse(args.zone)


def _echo(msg):
    print(msg, file=sys.stderr)


# --- verbs -----------------------------------------------------------------

def cmd_phantom(args):
    cfg = _config(args)
    raw = dict(cfg.phantom)
    if args.contrast is not None:
        raw["lesion_contrast"] = args.contrast
    pcfg = _phantom_config(raw, _seed(args, cfg), args.split)
    cases = generate_corpus(pcfg, args.split)
    save_corpus(cases, args.out, args.split)
    _echo(f"wrote {len(cases)} cases to {args.out}")


def cmd_standardize(args):
    if args.action == "fit":
        cfg = _config(args)
        cases = load_corpus(args.corpus)
        model = fit_standardizer([c.t2_image for c in cases], cfg.standardizer)
        save_standardizer(model, args.out)
    else:
        if not args.model:
            raise ValidationError("standardize apply needs --model <standardizer.json>")
        model = load_standardizer(args.model)
        cases = [c.with_t2(apply_standardizer(model, c.t2_image).astype(np.float32))
                 for c in load_corpus(args.corpus)]
        save_corpus(cases, args.out, corpus_split(args.corpus))
    _echo(f"wrote {args.out}")


def cmd_sample(args):
    cfg = _config(args)
    zone = _zone(args)
    scfg = SamplerConfig(**{**cfg.sampler, "seed": _seed(args, cfg)})
    split = args.split or corpus_split(args.corpus)
    ds = build_zone_dataset(load_corpus(args.corpus), zone, scfg, split)
    save_dataset(ds, args.out)
    _echo(f"{zone.value}: {ds.n_positive} positive, {len(ds) - ds.n_positive} negative")


def cmd_extract(args):
    cfg = _config(args)
    ds = load_dataset(args.dataset)
    vectors = extract_batch(ds.samples, args.n_jobs or cfg.n_jobs,
                            cfg.features["t2_levels"], cfg.features["adc_levels"])
    write_feature_csv(args.out, vectors)
    _echo(f"wrote {len(vectors)} rows to {args.out}")


def _hyperparams(args, zone) -> GbtHyperparams:
    if args.hp:
        return GbtHyperparams(**json.loads(Path(args.hp).read_text()))
    return zone_defaults(zone)


def _table_for_zone(path, zone):
    table = read_feature_csv(path)
    if any(z != zone for z in table.zones):
        raise ValidationError(f"{path} contains rows outside zone {zone.value}")
    return table


def cmd_train(args):
    cfg = _config(args)
    zone = _zone(args)
    seed = _seed(args, cfg)
    if args.model == "cnn":
        if not args.dataset:
            raise ValidationError("train --model cnn needs --dataset <patch dataset>")
        ds = load_dataset(args.dataset)
        if ds.zone != zone:
            raise ValidationError(f"dataset zone {ds.zone.value} does not match --zone {zone.value}")
        net_cfg = cfg.net.net_config(seed)
        if args.epochs is not None:
            net_cfg = NetConfig(**{**net_cfg.to_dict(), "epochs": args.epochs})
        res = train_net(np.stack([s.t2.pixels for s in ds.samples]), ds.labels, net_cfg)
        res.net.zone_ = zone
        save_model(res.net, args.out, seed)
        _echo(f"final epoch loss {res.epoch_loss[-1]:.6g}")
        return
    if not args.features:
        raise ValidationError("train needs --features <csv>")
    table = _table_for_zone(args.features, zone)
    settings = cfg.classifiers
    overrides = {"models": (args.model,)}
    if args.lam is not None:
        overrides["logreg_lambda"] = args.lam
    if args.C is not None:
        overrides["svm_C"] = args.C
    if args.trees is not None:
        overrides["forest_trees"] = args.trees
    if args.search:
        overrides["gbt"] = "search"
    settings = ClassifierSettings(**{**vars(settings), **overrides})
    if args.model == "gbt" and args.hp:
        model = NewtonBoostingClassifier.from_hyperparams(_hyperparams(args, zone), random_state=seed)
        model.fit(table.X, table.y)
        model.zone_ = zone
    else:
        (model,) = train_models(table.X, table.y, zone, settings, seed, args.n_jobs or cfg.n_jobs)
    save_model(model, args.out, seed)
    _echo(f"trained {model.kind} for {zone.value} -> {args.out}")


def _trainer(args, zone, seed):
    kind = args.model
    if kind == "logreg_l1":
        lam = 0.01 if args.lam is None else args.lam
        return lambda X, y: L1LogisticRegression(lam=lam).fit(X, y)
    if kind == "svm_rbf":
        C = 0.05 if args.C is None else args.C
        return lambda X, y: RBFSupportVectorClassifier(C=C).fit(X, y)
    if kind == "random_forest":
        n = 1000 if args.trees is None else args.trees
        return lambda X, y: EntropyRandomForest(n_estimators=n, random_state=seed).fit(X, y)
    if kind == "gbt":
        hp = _hyperparams(args, zone)
        return lambda X, y: NewtonBoostingClassifier.from_hyperparams(hp, random_state=seed).fit(X, y)
    raise ValidationError(f"cross-validation is not available for model {kind!r}")


def cmd_cv(args):
    cfg = _config(args)
    zone = _zone(args)
    seed = _seed(args, cfg)
    table = _table_for_zone(args.features, zone)
    res = k_fold_cv(table.X, table.y, args.k, _trainer(args, zone, seed), seed,
                    n_jobs=args.n_jobs or cfg.n_jobs)
    rows = [{"fold": i, "roc_auc": s} for i, s in enumerate(res.fold_scores)]
    rows.append({"fold": "mean", "roc_auc": res.mean})
    _write_rows(args.out, ["fold", "roc_auc"], rows)


def cmd_search(args):
    cfg = _config(args)
    zone = _zone(args)
    seed = _seed(args, cfg)
    table = _table_for_zone(args.features, zone)
    space = json.loads(Path(args.space).read_text()) if args.space else None
    if space is not None:
        space = {k: tuple(v) if isinstance(v, list) and len(v) == 2 and not args.choices else v
                 for k, v in space.items()}
    res = randomized_search(table.X, table.y, space, args.n_candidates, args.k, seed,
                            n_jobs=args.n_jobs or cfg.n_jobs)
    out = {"zone": zone.value, "best": res.best.to_dict(), "best_score": res.best_score,
           "table": [{"hyperparameters": hp.to_dict(), "mean_roc_auc": m, "fold_roc_auc": list(f)}
                     for hp, m, f in res.table]}
    text = json.dumps(out, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_evaluate(args):
    zone = _zone(args)
    if not args.model_files:
        raise ValidationError("evaluate needs at least one --model <file>")
    table = _table_for_zone(args.features, zone)
    models, extra = [], {}
    for path in args.model_files:
        m = load_model(path)
        if m.__class__.__name__ == "Network":
            if not args.dataset:
                raise ValidationError("evaluating a network needs --dataset <patch dataset>")
            ds = load_dataset(args.dataset)
            if [s.sample_id for s in ds.samples] != list(table.sample_ids):
                raise ValidationError("--dataset and --features hold different samples")
            extra["cnn"] = m.positive_proba(np.stack([s.t2.pixels for s in ds.samples]))
        else:
            models.append(m)
    report = zone_report(models, table, zone, args.threshold, extra)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "metrics.csv")
    report.write_json(out / "report.json")
    report.write_importances(out / "importances.csv")
    report.export_curves(out / "curves")
    with open(out / "metrics.csv") as fh:
        sys.stdout.write(fh.read())


def cmd_importances(args):
    if not args.model_files:
        raise ValidationError("importances needs --model <file>")
    rows = []
    for path in args.model_files:
        m = load_model(path)
        rep = feature_importances(m)
        zone = m.zone_.value if m.zone_ is not None else ""
        rows += [{"zone": zone, "model": m.kind, "rank": r, "feature": n, "importance": repr(v)}
                 for r, n, v in rep.rows()]
    _write_rows(args.out, ["zone", "model", "rank", "feature", "importance"], rows)


def cmd_saliency(args):
    if not args.model_files or len(args.model_files) != 1:
        raise ValidationError("saliency needs exactly one --model <cnn file>")
    net = load_model(args.model_files[0])
    if net.__class__.__name__ != "Network":
        raise ValidationError("saliency maps need a network model")
    ds = load_dataset(args.dataset)
    samples = ds.samples if args.limit is None else ds.samples[:args.limit]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    maps = np.stack([net.saliency_map(s.t2.pixels) for s in samples]).astype("<f4")
    (out / "saliency.bin").write_bytes(maps.tobytes())
    scores = net.positive_proba(np.stack([s.t2.pixels for s in samples]))
    with open(out / "index.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "sample_id", "label", "score", "rows", "cols"])
        for i, (s, p) in enumerate(zip(samples, scores)):
            w.writerow([i, s.sample_id, s.label, repr(float(p)), maps.shape[1], maps.shape[2]])
    _echo(f"wrote {len(samples)} saliency maps to {out}")


def cmd_run(args):
    cfg = _config(args)
    raw = cfg.to_dict()
    if args.out:
        raw["paths"]["workdir"] = args.out
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.n_jobs is not None:
        raw["n_jobs"] = args.n_jobs
    if args.zone:
        raw["zones"] = [args.zone]
    cfg = PipelineConfig.from_dict(raw)
    log = run_pipeline(cfg, _echo)
    ran = sum(e["status"] == "ran" for e in log.entries)
    _echo(f"{ran} stages ran, {len(log.entries) - ran} skipped; metrics in "
          f"{Path(cfg.workdir) / 'metrics.csv'}")


def _write_rows(path, columns, rows):
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.DictWriter(fh, columns, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if path:
            fh.close()


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline configuration (JSON)")
    common.add_argument("--zone", help="PZ, TZ or AS")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--n-jobs", type=int, dest="n_jobs")

    parser = argparse.ArgumentParser(prog="zonalrad", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("phantom", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--split", choices=("train", "test"), default="train")
    p.add_argument("--contrast", type=float, help="lesion contrast in background std units")
    p.set_defaults(func=cmd_phantom, need_out=True)

    p = sub.add_parser("standardize", parents=[common], help="fit or apply intensity standardization")
    p.add_argument("action", choices=("fit", "apply"))
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", help="standardizer record (apply)")
    p.set_defaults(func=cmd_standardize, need_out=True)

    p = sub.add_parser("sample", parents=[common], help="build a zone patch dataset")
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", choices=("train", "test"))
    p.set_defaults(func=cmd_sample, need_out=True)

    p = sub.add_parser("extract", parents=[common], help="compute the 26 features per sample")
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_extract, need_out=True)

    p = sub.add_parser("train", parents=[common], help="train one model for one zone")
    p.add_argument("--model", required=True, choices=(*FEATURE_MODELS, "cnn"))
    p.add_argument("--features")
    p.add_argument("--dataset", help="patch dataset (cnn)")
    p.add_argument("--lam", type=float, help="L1 strength (default: cross-validated)")
    p.add_argument("--C", type=float)
    p.add_argument("--trees", type=int)
    p.add_argument("--hp", help="JSON file of boosting hyperparameters")
    p.add_argument("--search", action="store_true", help="randomized search for boosting")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train, need_out=True)

    p = sub.add_parser("cv", parents=[common], help="stratified k-fold ROC-AUC")
    p.add_argument("--model", required=True, choices=FEATURE_MODELS)
    p.add_argument("--features", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--lam", type=float)
    p.add_argument("--C", type=float)
    p.add_argument("--trees", type=int)
    p.add_argument("--hp")
    p.set_defaults(func=cmd_cv, need_out=False)

    p = sub.add_parser("search", parents=[common], help="randomized boosting hyperparameter search")
    p.add_argument("--features", required=True)
    p.add_argument("--space", help="JSON: name -> [low, high] (or choice lists with --choices)")
    p.add_argument("--choices", action="store_true", help="treat every list in --space as choices")
    p.add_argument("--n-candidates", type=int, default=50, dest="n_candidates")
    p.add_argument("--k", type=int, default=3)
    p.set_defaults(func=cmd_search, need_out=False)

    p = sub.add_parser("evaluate", parents=[common], help="score models on a feature table")
    p.add_argument("--model", action="append", dest="model_files")
    p.add_argument("--features", required=True)
    p.add_argument("--dataset", help="patch dataset matching --features (cnn)")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_evaluate, need_out=True)

    p = sub.add_parser("importances", parents=[common], help="ranked feature importances")
    p.add_argument("--model", action="append", dest="model_files")
    p.set_defaults(func=cmd_importances, need_out=False)

    p = sub.add_parser("saliency", parents=[common], help="input-gradient maps of a network")
    p.add_argument("--model", action="append", dest="model_files")
    p.add_argument("--dataset", required=True)
    p.add_argument("--limit", type=int)
    p.set_defaults(func=cmd_saliency, need_out=True)

    p = sub.add_parser("run", parents=[common], help="full pipeline from a configuration")
    p.set_defaults(func=cmd_run, need_out=False)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.need_out and not args.out:
        parser.error(f"{args.verb} requires --out")
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes below
        code = exit_code(exc)
        kind = "error" if code == 2 else "runtime error"
        print(f"zonalrad: {kind}: {exc}", file=sys.stderr)
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
