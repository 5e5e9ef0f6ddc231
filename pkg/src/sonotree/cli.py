"""Command-line surface: synth, extract, build-kb, train, eval, ablate, predict.

Exit codes: 0 success, 1 configuration/validation error, 2 runtime error.
Every artifact directory receives a manifest with the config snapshot and
input content hashes.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .clinical import load_patients_csv
from .config import ConfigError, RunConfig, config_snapshot, parse_config
from .estimator import GatedFusionClassifier
from .evaluation import (
    AblationCell,
    full_grid,
    trend_grid,
    write_results_csv,
    roc_curve_points,
)
from .features import extract_dataset, read_features_jsonl, write_features_jsonl
from .fusion import FusionConfig, load_checkpoint, save_checkpoint
from .numerics import MinMaxScaler
from .pipeline import (
    LABEL_NAMES,
    build_sample_table,
    cross_validate,
    evaluate_split,
    make_classifier,
)
from .retrieval import (
    EntrezClient,
    UmlsClient,
    default_fixtures_dir,
    load_kb,
    patient_knowledge,
    save_kb,
)
from .synthetic import SignalStrengths, SynthSpec, dataset_hash, generate_synthetic
from .vision.regions import BuiltinSegmentationProvider, FileSegmentationProvider

log = logging.getLogger("sonotree")


def _hash_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, command: str, config: RunConfig, inputs: dict,
                   extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "config": config_snapshot(config),
        "inputs": inputs,
        "created": datetime.now(timezone.utc).isoformat(),
    }
    if extra:
        manifest.update(extra)
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    (Path(out_dir) / "manifest.json").write_text(
        json.dumps(manifest, indent=1, sort_keys=True), encoding="utf-8")


def fixtures_dir(config: RunConfig) -> Path:
    if config.fixtures:
        return Path(config.fixtures)
    env = os.environ.get("MEDVQA_FIXTURES")
    if env:
        return Path(env)
    return default_fixtures_dir()


def _signals(config: RunConfig) -> SignalStrengths:
    return SignalStrengths(texture=config.signal_texture,
                           regions=config.signal_regions,
                           asymmetry=config.signal_asymmetry,
                           clinical=config.signal_clinical)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(config: RunConfig) -> int:
    spec = SynthSpec(patients=config.patients_n,
                     images_per_patient=config.images_per_patient,
                     positive_fraction=config.positive_fraction,
                     signals=_signals(config), seed=config.seed)
    manifest = generate_synthetic(spec, config.out_dir)
    write_manifest(config.out_dir, "synth", config, inputs={},
                   extra={"dataset": manifest})
    print(f"dataset: {manifest['images']} images, "
          f"{manifest['positive_images']} positive, "
          f"hash {manifest['content_hash'][:16]}")
    return 0


def cmd_extract(config: RunConfig) -> int:
    images_dir = Path(config.images)
    paths = {p.stem: p for p in sorted(images_dir.glob("*.pgm"))}
    if not paths:
        raise RuntimeError(f"no .pgm images under {images_dir}")
    provider = (FileSegmentationProvider(config.masks) if config.masks
                else BuiltinSegmentationProvider())
    features = extract_dataset(paths, provider=provider, top_s=config.top_s,
                               slic_k=config.slic_segments,
                               slic_m=config.slic_compactness, jobs=config.jobs)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "features.jsonl"
    write_features_jsonl(out_path, features)
    write_manifest(out_dir, "extract", config,
                   inputs={"images": dataset_hash(images_dir)},
                   extra={"features_hash": _hash_file(out_path),
                          "samples": len(features)})
    print(f"extracted {len(features)} samples -> {out_path}")
    return 0


def cmd_build_kb(config: RunConfig) -> int:
    patients = load_patients_csv(config.patients)
    fixtures = fixtures_dir(config)
    offline = config.offline
    umls = UmlsClient(fixtures, offline=offline,
                      api_key=os.environ.get("UMLS_API_KEY"))
    entrez = EntrezClient(fixtures, offline=offline,
                          api_key=os.environ.get("ENTREZ_API_KEY"))
    from .retrieval import build_kb as build_kb_fn
    kb = build_kb_fn(patients, umls, entrez, topics=config.topics,
                     alpha=config.alpha, beta=config.beta,
                     dim=config.text_dim, seed=config.seed,
                     max_hops=config.max_hops,
                     include_falls_rule=config.falls_rule)
    out_dir = Path(config.out_dir)
    content_hash = save_kb(kb, out_dir)

    # per-patient pooled knowledge features + query texts for exporters
    with (out_dir / "patient_text.jsonl").open("w", encoding="utf-8") as fh, \
            (out_dir / "queries.jsonl").open("w", encoding="utf-8") as qh:
        for record in patients:
            matrix, pooled, empty, query = patient_knowledge(
                kb, record, c=config.top_c, threshold=config.topic_threshold,
                include_falls_rule=config.falls_rule)
            fh.write(json.dumps({
                "patient": record.id,
                "no_knowledge": empty,
                "t": [round(float(x), 9) for x in pooled],
                "rows": [{"pmid": p, "hash": h, "similarity": round(s, 9)}
                         for p, h, s in matrix.provenance],
            }, sort_keys=True) + "\n")
            qh.write(json.dumps({"patient": record.id, "query": query},
                                sort_keys=True) + "\n")
    write_manifest(out_dir, "build-kb", config,
                   inputs={"patients": _hash_file(config.patients)},
                   extra={"kb_hash": content_hash,
                          "sentences": len(kb.sentences)})
    print(f"kb: {len(kb.sentences)} sentences, hash {content_hash[:16]}")
    return 0


def _load_table(config: RunConfig):
    features = read_features_jsonl(config.features)
    patients = load_patients_csv(config.patients)
    patient_text = None
    if config.kb_dir:
        text_path = Path(config.kb_dir) / "patient_text.jsonl"
        if not text_path.exists():
            raise RuntimeError(f"kb is missing patient_text.jsonl: {text_path}")
        patient_text = {}
        with text_path.open("r", encoding="utf-8") as fh:
            for line in fh:
                obj = json.loads(line)
                patient_text[obj["patient"]] = np.asarray(obj["t"])
    return build_sample_table(features, patients, patient_text,
                              text_dim=config.text_dim), patients


def _cell_from_config(config: RunConfig, name: str = "run") -> AblationCell:
    return AblationCell(name=name, levels=config.level_tuple(),
                        use_numeric=config.numeric, use_rag=config.rag,
                        use_lora=config.lora, gate_mode=config.gate)


def _write_training_log(path, history) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "train_acc", "val_acc",
                         "gate_c_frac", "gate_m_frac", "gate_f_frac"])
        for row in history:
            writer.writerow([row.epoch, f"{row.loss:.6f}",
                             f"{row.train_acc:.4f}",
                             "" if np.isnan(row.val_acc) else f"{row.val_acc:.4f}",
                             *(f"{f:.4f}" for f in row.gate_fracs)])


def _save_model(directory, clf: GatedFusionClassifier, extra: dict) -> None:
    extra = dict(extra)
    if clf.use_numeric:
        extra["scaler_min"] = clf.scaler_.min_.tolist()
        extra["scaler_max"] = clf.scaler_.max_.tolist()
    save_checkpoint(directory, clf.params_, clf._config(), extra=extra)
    _write_training_log(Path(directory) / "training_log.csv", clf.history_)


def cmd_train(config: RunConfig) -> int:
    table, _ = _load_table(config)
    cell = _cell_from_config(config)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    from .evaluation import stratified_kfold
    plabels = table.patient_labels()
    pids = sorted(plabels)
    plan = stratified_kfold(pids, [plabels[p] for p in pids], k=config.folds,
                            seed=config.seed)
    (out_dir / "folds.json").write_text(json.dumps(
        {"k": plan.k, "seed": config.seed, "folds": plan.folds},
        indent=1, sort_keys=True), encoding="utf-8")

    for fold in range(plan.k):
        test_pids = set(plan.test_ids(fold))
        train_idx = [i for i, pid in enumerate(table.patient_ids)
                     if pid not in test_pids]
        test_idx = [i for i, pid in enumerate(table.patient_ids)
                    if pid in test_pids]
        train_table = table.subset(train_idx)
        clf = make_classifier(cell, seed=config.seed * 1000 + fold,
                              lr=config.lr, batch_size=config.batch,
                              epochs=config.epochs, rank=config.rank)
        clf.fit(train_table.x(), train_table.labels)
        _save_model(out_dir / f"fold_{fold}", clf,
                    extra={"fold": fold, "seed": config.seed,
                           "test_patients": sorted(test_pids)})
        test_table = table.subset(test_idx)
        acc = clf.score(test_table.x(), test_table.labels)
        log.info("fold %d: held-out accuracy %.3f", fold, acc)

    final = make_classifier(cell, seed=config.seed, lr=config.lr,
                            batch_size=config.batch, epochs=config.epochs,
                            rank=config.rank)
    final.fit(table.x(), table.labels)
    _save_model(out_dir / "full", final,
                extra={"fold": "full", "seed": config.seed})
    write_manifest(out_dir, "train", config, inputs={
        "features": _hash_file(config.features),
        "patients": _hash_file(config.patients),
    }, extra={"config_label": cell.name, "folds": plan.k})
    print(f"trained {plan.k} fold models + full model -> {out_dir}")
    return 0


def _predict_with_checkpoint(ckpt_dir, table):
    params, fusion_config, extra = load_checkpoint(ckpt_dir)
    numeric = None
    if fusion_config.use_numeric:
        scaler = MinMaxScaler()
        scaler.min_ = np.asarray(extra["scaler_min"])
        scaler.max_ = np.asarray(extra["scaler_max"])
        numeric = np.concatenate(
            [table.numeric[:, :2], scaler.transform(table.numeric[:, 2:])],
            axis=1)
    from .fusion import FusionBatch, predict as fusion_predict
    batch = FusionBatch(
        visual={"c": table.coarse, "m": table.mid, "f": table.fine},
        text=table.text, numeric_raw=numeric, labels=None)
    return fusion_predict(batch, params, fusion_config)


def cmd_eval(config: RunConfig) -> int:
    ckpt_root = Path(config.checkpoint)
    folds_path = ckpt_root / "folds.json"
    if not ckpt_root.exists() or not folds_path.exists():
        print(f"checkpoint not found: {ckpt_root}", file=sys.stderr)
        return 1
    table, _ = _load_table(config)
    plan = json.loads(folds_path.read_text(encoding="utf-8"))
    rows = []
    roc_rows = []
    from .evaluation import confusion, metrics
    reports = []
    for fold, test_pids in enumerate(plan["folds"]):
        fold_dir = ckpt_root / f"fold_{fold}"
        if not fold_dir.exists():
            print(f"checkpoint not found: {fold_dir}", file=sys.stderr)
            return 1
        test_idx = [i for i, pid in enumerate(table.patient_ids)
                    if pid in set(test_pids)]
        test = table.subset(test_idx)
        labels, probs, gate = _predict_with_checkpoint(fold_dir, test)
        counts = confusion(test.labels, labels, classes=[0, 1])
        report = metrics(counts, scores=probs[:, 1], labels=test.labels,
                         positive=1)
        reports.append(report)
        rows.append({"config": "eval", "fold": fold, **report.row()})
        for fpr, tpr in roc_curve_points(probs[:, 1], test.labels):
            roc_rows.append((fold, fpr, tpr))
    mean_row = {"config": "eval", "fold": "mean"}
    for key in ("accuracy", "precision", "recall", "f1_macro", "f1_weighted"):
        mean_row[key] = float(np.mean([getattr(r, key) for r in reports]))
    mean_row["roc_auc"] = float(np.mean([r.roc_auc for r in reports]))
    rows.append(mean_row)

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_results_csv(out_dir / "results.csv", rows)
    with (out_dir / "roc_points.csv").open("w", encoding="utf-8",
                                           newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold", "fpr", "tpr"])
        for fold, fpr, tpr in roc_rows:
            writer.writerow([fold, f"{fpr:.6f}", f"{tpr:.6f}"])
    write_manifest(out_dir, "eval", config, inputs={
        "features": _hash_file(config.features),
        "patients": _hash_file(config.patients),
    }, extra={"mean_accuracy": mean_row["accuracy"],
              "mean_roc_auc": mean_row["roc_auc"]})
    print(f"5-fold mean accuracy {mean_row['accuracy']:.4f}, "
          f"roc_auc {mean_row['roc_auc']:.4f} -> {out_dir / 'results.csv'}")
    return 0


def cmd_ablate(config: RunConfig) -> int:
    table, _ = _load_table(config)
    cells = trend_grid() if config.grid == "trend" else full_grid()
    all_rows = []
    for cell in cells:
        try:
            rows, _ = cross_validate(table, cell, k=config.folds,
                                     seed=config.seed, lr=config.lr,
                                     batch_size=config.batch,
                                     epochs=config.epochs, rank=config.rank)
        except Exception as exc:  # noqa: BLE001 - cell marked, run continues
            log.warning("cell %s unavailable: %s", cell.name, exc)
            all_rows.append({"config": cell.name, "fold": "unavailable"})
            continue
        all_rows.extend(rows)
        mean = [r for r in rows if r["fold"] == "mean"][0]
        log.info("%s: mean accuracy %.3f", cell.name, mean["accuracy"])
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_results_csv(out_dir / "ablation.csv", all_rows)
    write_manifest(out_dir, "ablate", config, inputs={
        "features": _hash_file(config.features),
        "patients": _hash_file(config.patients),
    }, extra={"cells": [c.name for c in cells]})
    print(f"ablation grid ({config.grid}) -> {out_dir / 'ablation.csv'}")
    return 0


def cmd_predict(config: RunConfig, image_path: str, patient_id: str) -> int:
    ckpt = Path(config.checkpoint)
    if not ckpt.exists():
        print(f"checkpoint not found: {ckpt}", file=sys.stderr)
        return 1
    patients = load_patients_csv(config.patients)
    record = next((p for p in patients if p.id == patient_id), None)
    if record is None:
        raise RuntimeError(f"patient {patient_id!r} not in {config.patients}")

    from .features import extract_sample
    provider = (FileSegmentationProvider(config.masks) if config.masks
                else BuiltinSegmentationProvider())
    levels = extract_sample(image_path, patient_id, provider=provider,
                            top_s=config.top_s, slic_k=config.slic_segments,
                            slic_m=config.slic_compactness)

    top_pmids = []
    text_vec = np.zeros(config.text_dim)
    if config.kb_dir:
        kb = load_kb(config.kb_dir)
        matrix, pooled, _, _ = patient_knowledge(
            kb, record, c=config.top_c, threshold=config.topic_threshold,
            include_falls_rule=config.falls_rule)
        text_vec = pooled
        top_pmids = [p for p, _, _ in matrix.provenance]

    from .clinical import raw_features
    from .pipeline import SampleTable
    table = SampleTable(
        sample_ids=[Path(image_path).stem], patient_ids=[patient_id],
        coarse=levels["coarse"][None, :], mid=levels["mid"][None, :],
        fine=levels["fine"][None, :], text=text_vec[None, :],
        numeric=raw_features(record)[None, :], labels=np.array([0]))
    labels, probs, gate = _predict_with_checkpoint(ckpt, table)
    level_names = {"c": "coarse", "m": "mid", "f": "fine"}
    result = {
        "id": Path(image_path).stem,
        "class": LABEL_NAMES[int(labels[0])],
        "probability": round(float(probs[0, int(labels[0])]), 6),
        "gate_level": level_names[gate.selected_level(0)],
        "top_sentences": top_pmids,
    }
    print(json.dumps(result, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------

COMMANDS = ("synth", "extract", "build-kb", "train", "eval", "ablate", "predict")

REQUIRED_PATHS = {
    "synth": (),
    "extract": ("images",),
    "build-kb": ("patients",),
    "train": ("features", "patients"),
    "eval": ("features", "patients"),
    "ablate": ("features", "patients"),
    "predict": ("patients",),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sonotree",
        description="Hierarchical ultrasound features with retrieval-augmented "
                    "gated fusion classification")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("-o", "--out", help="output directory")
        p.add_argument("--verbose", action="store_true")
        for key in ("images", "masks", "patients", "kb-dir", "fixtures",
                    "features", "checkpoint"):
            p.add_argument(f"--{key}")
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int)
        p.add_argument("--offline", action="store_true", default=None)
        p.add_argument("--online", action="store_true", default=None)
        if name == "ablate":
            p.add_argument("--grid", choices=("trend", "full"))
        if name == "predict":
            p.add_argument("--image", required=True)
            p.add_argument("--patient-id", required=True)
    return parser


def _collect_overrides(args) -> dict:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value
    direct = {"out": "out_dir", "images": "images", "masks": "masks",
              "patients": "patients", "kb_dir": "kb_dir",
              "fixtures": "fixtures", "features": "features",
              "checkpoint": "checkpoint"}
    for attr, key in direct.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = str(value)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.jobs is not None:
        overrides["jobs"] = str(args.jobs)
    if getattr(args, "grid", None):
        overrides["grid"] = args.grid
    if args.offline:
        overrides["offline"] = "true"
    if args.online:
        overrides["offline"] = "false"
    return overrides


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        config = parse_config(args.config, _collect_overrides(args))
        errors = config.validate(required_paths=REQUIRED_PATHS[args.command])
        if args.command == "predict" and not config.checkpoint:
            errors.append("checkpoint path is required for predict")
        if errors:
            print("configuration errors:", file=sys.stderr)
            for err in errors:
                print(f"  - {err}", file=sys.stderr)
            return 1
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 1

    try:
        if args.command == "synth":
            return cmd_synth(config)
        if args.command == "extract":
            return cmd_extract(config)
        if args.command == "build-kb":
            return cmd_build_kb(config)
        if args.command == "train":
            return cmd_train(config)
        if args.command == "eval":
            return cmd_eval(config)
        if args.command == "ablate":
            return cmd_ablate(config)
        if args.command == "predict":
            return cmd_predict(config, args.image, args.patient_id)
        raise RuntimeError(f"unknown command {args.command}")
    except Exception as exc:  # noqa: BLE001 - single reporting point
        log.debug("traceback", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
