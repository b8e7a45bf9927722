"""Session fixtures: synthetic glyph datasets with a fully built pipeline.

Two environments are shared across test modules. The small one keeps the
orchestration, service, and CLI tests fast; the reference one reruns the
published comparison protocol at a scale where the statistics are meaningful,
so the acceptance tests can assert directions and significance.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import pytest

from fgns.config import RunConfig, config_from_dict
from fgns.pipeline import cmd_build_features, cmd_train

from .datagen import make_dataset_dir


@dataclass
class PipelineEnv:
    cfg: RunConfig
    data_dir: Path
    train_result: dict
    features_result: dict


def _merge(base: dict, patch: dict) -> dict:
    out = dict(base)
    for key, value in patch.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def build_env(
    root: Path, n_train: int, n_test: int, data_seed: int, config_patch: dict
) -> PipelineEnv:
    data_dir = root / "data"
    paths = make_dataset_dir(
        data_dir, n_train_per_class=n_train, n_test_per_class=n_test, seed=data_seed
    )
    raw = _merge(
        {"output_dir": str(root / "out"), "data": dict(paths)},
        config_patch,
    )
    cfg = config_from_dict(raw)
    train_result = cmd_train(cfg)
    features_result = cmd_build_features(cfg)
    return PipelineEnv(
        cfg=cfg, data_dir=data_dir, train_result=train_result, features_result=features_result
    )


SMALL_PATCH = {
    "seed": 7,
    "classifier": {"epochs": 8},
    "explain": {"n_samples": 32, "n_perturb": 120, "sage_min_n": 16, "k_masks": 3},
    "evaluation": {"n_correct": 12, "n_incorrect": 12},
}


@pytest.fixture(scope="session")
def small_env(tmp_path_factory) -> PipelineEnv:
    """Tiny but complete run for orchestration, service, and CLI tests."""
    return build_env(
        tmp_path_factory.mktemp("smallenv"),
        n_train=140,
        n_test=60,
        data_seed=977,
        config_patch=SMALL_PATCH,
    )


@pytest.fixture(scope="session")
def reference_env(tmp_path_factory) -> PipelineEnv:
    """Reference-scale run driving the quantitative acceptance tests."""
    return build_env(
        tmp_path_factory.mktemp("refenv"),
        n_train=700,
        n_test=380,
        data_seed=20240,
        config_patch={"seed": 20240, "explain": {"n_samples": 300}},
    )
