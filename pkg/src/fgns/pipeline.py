"""End-to-end commands shared by the HTTP service and (through it) the CLI.

Each command loads what it needs from the config's data paths and output
directory, verifies artifact provenance (a catalog refuses to serve a model
or dataset it was not built from), runs the core routines, writes artifacts
through the atomic writer, and returns a JSON-ready summary stamped with the
config hash.
"""

from __future__ import annotations

import time
import warnings
from pathlib import Path

from .artifacts import atomic_write_bytes, read_json, write_json
from .catalog import FeatureCatalog, build_catalog, load_catalog, save_catalog_obj
from .config import RunConfig
from .data import LabeledDataset, load_dataset
from .errors import ChecksumMismatchError, FormatError, InputError
from .evaluation import histogram_csv, render_text_report, run_quant_eval
from .model import ClassifierModel, accuracy, load_model, save_model, train_classifier
from .neighbors import explain
from .prototypes import build_prototypes, load_prototypes, save_prototypes
from .rendering import render_panel, save_panel

MODEL_FILE = "model.json"
CATALOG_FILE = "catalog.json"
PROTOTYPES_FILE = "prototypes.json"
REPORT_JSON_FILE = "report.json"
REPORT_TEXT_FILE = "report.txt"
HISTOGRAM_FILE = "histogram.csv"

EXPLANATION_FORMAT = "fgns-explanation"

# ExplainConfig fields consumed at query time only; drift in these does not
# invalidate a catalog, so the staleness warning ignores them.
_QUERY_TIME_KEYS = ("rho", "n_neighbors")


def _load_train(cfg: RunConfig) -> LabeledDataset:
    ds = load_dataset(cfg.data.train_images, cfg.data.train_labels, split="train")
    if cfg.data.train_classes is not None:
        ds = ds.filter_classes(cfg.data.train_classes)
    return ds


def _load_test(cfg: RunConfig) -> LabeledDataset:
    return load_dataset(cfg.data.test_images, cfg.data.test_labels, split="test")


def cmd_train(cfg: RunConfig) -> dict:
    started = time.monotonic()
    train = _load_train(cfg)
    test = _load_test(cfg)
    m = train_classifier(
        train,
        hidden_units=cfg.classifier.hidden_units,
        batch_size=cfg.classifier.batch_size,
        learning_rate=cfg.classifier.learning_rate,
        epochs=cfg.classifier.epochs,
        seed=cfg.seed,
        dataset_checksum=train.checksum,
    )
    test_subset = test.filter_classes([c for c in m.classes if c in test.classes()])
    model_path = cfg.out_path(MODEL_FILE)
    checksum = save_model(m, model_path)
    return {
        "model_path": str(model_path),
        "model_checksum": checksum,
        "config_hash": cfg.config_hash(),
        "dataset_checksum": train.checksum,
        "classes": list(m.classes),
        "n_train": len(train),
        "n_test": len(test_subset),
        "train_accuracy": accuracy(m, train),
        "test_accuracy": accuracy(m, test_subset),
        "epoch_losses": list(m.epoch_losses),
        "seconds": time.monotonic() - started,
    }


def _load_model_checked(cfg: RunConfig, train: LabeledDataset) -> ClassifierModel:
    m = load_model(cfg.out_path(MODEL_FILE))
    if m.dataset_checksum != train.checksum:
        raise ChecksumMismatchError(
            "model was trained on different data: "
            f"model records {m.dataset_checksum[:12]}…, files hash to {train.checksum[:12]}…"
        )
    return m


def cmd_build_features(cfg: RunConfig) -> dict:
    started = time.monotonic()
    train = _load_train(cfg)
    m = _load_model_checked(cfg, train)
    cat = build_catalog(m, train, cfg.explain, seed=cfg.seed, model_checksum=m.checksum())
    protos = build_prototypes(train, classes=m.classes)
    catalog_path = cfg.out_path(CATALOG_FILE)
    prototypes_path = cfg.out_path(PROTOTYPES_FILE)
    save_catalog_obj(catalog_path, cat)
    save_prototypes(protos, prototypes_path, dataset_checksum=train.checksum)
    per_class = {
        str(c): {
            "n_masks": len(masks),
            "top_score": masks[0].sage_score if masks else None,
        }
        for c, masks in sorted(cat.classes.items())
    }
    return {
        "catalog_path": str(catalog_path),
        "prototypes_path": str(prototypes_path),
        "config_hash": cfg.config_hash(),
        "model_checksum": cat.model_checksum,
        "dataset_checksum": cat.dataset_checksum,
        "per_class": per_class,
        "fallback_classes": [int(c) for c, masks in sorted(cat.classes.items()) if not masks],
        "seconds": time.monotonic() - started,
    }


def _load_artifacts(cfg: RunConfig):
    train = _load_train(cfg)
    m = _load_model_checked(cfg, train)
    cat = load_catalog(cfg.out_path(CATALOG_FILE))
    if cat.model_checksum != m.checksum():
        raise ChecksumMismatchError(
            "catalog was built from a different model: "
            f"catalog records {cat.model_checksum[:12]}…, model hashes to {m.checksum()[:12]}…"
        )
    if cat.dataset_checksum != train.checksum:
        raise ChecksumMismatchError(
            "catalog was built from different data: "
            f"catalog records {cat.dataset_checksum[:12]}…, files hash to {train.checksum[:12]}…"
        )
    mining_then = {k: v for k, v in cat.hyperparameters.items() if k not in _QUERY_TIME_KEYS}
    mining_now = {
        k: v
        for k, v in cfg.explain.model_dump(mode="json").items()
        if k not in _QUERY_TIME_KEYS
    }
    if mining_then != mining_now:
        drifted = sorted(
            k
            for k in set(mining_then) | set(mining_now)
            if mining_then.get(k) != mining_now.get(k)
        )
        warnings.warn(
            f"catalog was built with different hyperparameters ({', '.join(drifted)}); "
            "rebuild with build-features to refresh it",
            stacklevel=2,
        )
    protos, protos_checksum = load_prototypes(cfg.out_path(PROTOTYPES_FILE))
    if protos_checksum != train.checksum:
        raise ChecksumMismatchError(
            "prototypes were built from different data: "
            f"file records {protos_checksum[:12]}…, files hash to {train.checksum[:12]}…"
        )
    return m, train, cat, protos


def _query_dataset(cfg: RunConfig, split: str) -> LabeledDataset:
    if split == "train":
        return _load_train(cfg)
    if split == "test":
        return _load_test(cfg)
    raise InputError(f"unknown split {split!r}, expected 'train' or 'test'")


def explanation_payload(exp, cfg: RunConfig, split: str, m: ClassifierModel, train) -> dict:
    payload = exp.to_payload()
    payload.update(
        {
            "format": EXPLANATION_FORMAT,
            "version": 1,
            "query_split": split,
            "config_hash": cfg.config_hash(),
            "model_checksum": m.checksum(),
            "dataset_checksum": train.checksum,
        }
    )
    return payload


def _panel_from_record(
    record: dict,
    cfg: RunConfig,
    train: LabeledDataset,
    cat: FeatureCatalog | None,
    overlay: bool,
) -> str:
    split = record["query_split"]
    query_ds = _query_dataset(cfg, split)
    query = query_ds.images[query_ds.row_for_id(int(record["query_id"]))]
    neighbor_imgs = [
        train.images[train.row_for_id(int(nb["train_id"]))] for nb in record["neighbors"]
    ]
    masks = None
    if overlay and cat is not None:
        masks = [fm.mask for fm in cat.classes.get(int(record["predicted_class"]), [])] or None
    panel = render_panel(query, neighbor_imgs, scale=4, separator=2, overlay_masks=masks)
    name = "panel_{}_{}_{}.png".format(split, record["query_id"], record["method"])
    path = cfg.out_path(name)
    save_panel(panel, path, config_hash=cfg.config_hash())
    return str(path)


def cmd_explain(cfg: RunConfig, split: str, query_id: int, method: str, overlay: bool) -> dict:
    m, train, cat, protos = _load_artifacts(cfg)
    query_ds = _query_dataset(cfg, split)
    row = query_ds.row_for_id(query_id)
    exp = explain(
        m,
        train,
        cat,
        protos,
        query_image=query_ds.images[row],
        method=method,
        n_neighbors=cfg.explain.n_neighbors,
        rho=cfg.explain.rho,
        query_id=query_id,
        true_class=int(query_ds.labels[row]),
        baseline_all_classes=cfg.evaluation.baseline_all_classes,
    )
    record = explanation_payload(exp, cfg, split, m, train)
    explanation_path = cfg.out_path(f"explanation_{split}_{query_id}_{method}.json")
    write_json(explanation_path, record)
    panel_path = _panel_from_record(record, cfg, train, cat, overlay)
    return {
        "explanation": record,
        "explanation_path": str(explanation_path),
        "panel_path": panel_path,
    }


def cmd_evaluate(cfg: RunConfig) -> dict:
    started = time.monotonic()
    m, train, cat, protos = _load_artifacts(cfg)
    test = _load_test(cfg)
    report = run_quant_eval(m, train, test, cat, protos, cfg)
    report.update(
        {
            "format": "fgns-report",
            "version": 1,
            "seed": cfg.seed,
            "config_hash": cfg.config_hash(),
            "model_checksum": m.checksum(),
            "dataset_checksum": train.checksum,
            "seconds": time.monotonic() - started,
        }
    )
    json_path = cfg.out_path(REPORT_JSON_FILE)
    text_path = cfg.out_path(REPORT_TEXT_FILE)
    hist_path = cfg.out_path(HISTOGRAM_FILE)
    write_json(json_path, report)
    atomic_write_bytes(text_path, render_text_report(report, cfg.config_hash()).encode("utf-8"))
    atomic_write_bytes(
        hist_path, histogram_csv(report, bins=cfg.evaluation.histogram_bins).encode("utf-8")
    )
    return {
        "report": report,
        "report_json_path": str(json_path),
        "report_text_path": str(text_path),
        "histogram_csv_path": str(hist_path),
    }


def cmd_render(cfg: RunConfig, explanation_path: str, overlay: bool) -> dict:
    path = Path(explanation_path)
    if not path.exists():
        raise InputError(f"explanation file not found: {path}")
    record = read_json(path)
    if not isinstance(record, dict) or record.get("format") != EXPLANATION_FORMAT:
        raise FormatError(f"{path} is not an {EXPLANATION_FORMAT} file")
    for key in ("query_id", "query_split", "method", "predicted_class", "neighbors"):
        if key not in record:
            raise FormatError(f"{path}: missing field {key!r}")
    train = _load_train(cfg)
    recorded = record.get("dataset_checksum")
    if recorded is not None and recorded != train.checksum:
        raise ChecksumMismatchError(
            "explanation cites different training data: "
            f"record has {str(recorded)[:12]}…, files hash to {train.checksum[:12]}…"
        )
    cat = None
    if overlay:
        cat = load_catalog(cfg.out_path(CATALOG_FILE))
    panel_path = _panel_from_record(record, cfg, train, cat, overlay)
    return {"panel_path": panel_path}
