"""Declarative run configuration.

A single YAML or JSON file drives every stage; each CLI flag override maps to
a dotted path into the same structure. Every constant of the explanation
pipeline lives here so a run is fully reproducible from (config, data files).
The config hash stamped into artifact metadata covers everything that can
change an output; it deliberately excludes ``workers`` and ``output_dir``,
which only control where and how fast results are produced.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

import pydantic
import yaml
from pydantic import BaseModel, ConfigDict, Field

from .artifacts import canonical_json, sha256_hex
from .errors import InputError


class _StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class DataConfig(_StrictModel):
    train_images: str = "train-images-idx3-ubyte"
    train_labels: str = "train-labels-idx1-ubyte"
    test_images: str = "t10k-images-idx3-ubyte"
    test_labels: str = "t10k-labels-idx1-ubyte"
    train_classes: list[int] | None = None
    eval_classes: list[int] = Field(default_factory=lambda: [1, 2, 4, 5, 6, 7])


class ClassifierConfig(_StrictModel):
    hidden_units: int = Field(256, ge=1)
    batch_size: int = Field(64, ge=1)
    learning_rate: float = Field(0.1, gt=0)
    epochs: int = Field(10, ge=1)


class ExplainConfig(_StrictModel):
    n_samples: int = Field(1000, ge=1)
    n_perturb: int = Field(500, ge=1)
    cell: int = Field(4, ge=1)
    k_local: int = Field(5, ge=1)
    kernel_sigma: float = Field(0.25, gt=0)
    ridge_lambda: float = Field(1e-3, ge=0)
    baseline_value: float = Field(0.0, ge=0.0, le=1.0)
    min_freq: float = Field(0.05, ge=0, le=1)
    tau_global: float = 0.01
    sage_se_threshold: float = Field(0.01, gt=0)
    sage_min_n: int = Field(50, ge=2)
    k_masks: int = Field(7, ge=1)
    iou_group: float = Field(0.5, gt=0, le=1)
    iou_dedup: float = Field(0.8, gt=0, le=1)
    rho: float = Field(1.0, gt=0)
    n_neighbors: int = Field(3, ge=1)


class EvaluationConfig(_StrictModel):
    n_correct: int = Field(50, ge=1)
    n_incorrect: int = Field(50, ge=2)
    baseline_all_classes: bool = False
    histogram_bins: int = Field(20, ge=1)


class RunConfig(_StrictModel):
    seed: int = 0
    output_dir: str = "out"
    workers: int = Field(1, ge=1)
    data: DataConfig = Field(default_factory=DataConfig)
    classifier: ClassifierConfig = Field(default_factory=ClassifierConfig)
    explain: ExplainConfig = Field(default_factory=ExplainConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)

    def config_hash(self) -> str:
        payload = self.model_dump(mode="json")
        payload.pop("workers")
        payload.pop("output_dir")
        return sha256_hex(canonical_json(payload).encode("utf-8"))

    def out_path(self, name: str) -> Path:
        return Path(self.output_dir) / name


def config_from_dict(d: dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(d)
    except pydantic.ValidationError as exc:
        raise InputError(f"invalid config: {exc}") from exc


def load_config(path: str | Path | None) -> RunConfig:
    """Load a YAML or JSON config file; None gives all defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.exists():
        raise InputError(f"config file not found: {path}")
    text = path.read_text()
    try:
        raw = yaml.safe_load(text)  # YAML is a superset of JSON
    except yaml.YAMLError as exc:
        raise InputError(f"cannot parse config file {path}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise InputError(f"config file {path} must contain a mapping")
    return config_from_dict(raw)


def apply_overrides(cfg: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply ``dotted.path=value`` overrides, returning a new config.

    Values are parsed as YAML scalars so ``seed=3`` is an int and
    ``eval_classes=[1,2]`` is a list.
    """
    raw = cfg.model_dump(mode="json")
    for item in overrides:
        if "=" not in item:
            raise InputError(f"override must look like path=value, got {item!r}")
        dotted, _, value_text = item.partition("=")
        try:
            value = yaml.safe_load(value_text)
        except yaml.YAMLError as exc:
            raise InputError(f"cannot parse override value {value_text!r}: {exc}") from exc
        node = raw
        parts = dotted.split(".")
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise InputError(f"unknown config path: {dotted}")
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise InputError(f"unknown config path: {dotted}")
        node[parts[-1]] = value
    return config_from_dict(raw)
