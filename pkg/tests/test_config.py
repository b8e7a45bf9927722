"""Run configuration: defaults, validation, override merging, hashing."""

from __future__ import annotations

import pytest

from fgns.config import RunConfig, apply_overrides, load_config
from fgns.errors import InputError


def test_defaults_match_documented_values() -> None:
    cfg = RunConfig()
    assert cfg.seed == 0
    assert cfg.workers == 1
    assert cfg.data.eval_classes == [1, 2, 4, 5, 6, 7]
    assert cfg.data.train_classes is None
    assert cfg.classifier.hidden_units == 256
    assert cfg.classifier.batch_size == 64
    assert cfg.classifier.learning_rate == pytest.approx(0.1)
    assert cfg.classifier.epochs == 10
    assert cfg.explain.n_samples == 1000
    assert cfg.explain.n_perturb == 500
    assert cfg.explain.cell == 4
    assert cfg.explain.k_local == 5
    assert cfg.explain.kernel_sigma == pytest.approx(0.25)
    assert cfg.explain.ridge_lambda == pytest.approx(1e-3)
    assert cfg.explain.baseline_value == pytest.approx(0.0)
    assert cfg.explain.min_freq == pytest.approx(0.05)
    assert cfg.explain.tau_global == pytest.approx(0.01)
    assert cfg.explain.sage_se_threshold == pytest.approx(0.01)
    assert cfg.explain.sage_min_n == 50
    assert cfg.explain.k_masks == 7
    assert cfg.explain.iou_group == pytest.approx(0.5)
    assert cfg.explain.iou_dedup == pytest.approx(0.8)
    assert cfg.explain.rho == pytest.approx(1.0)
    assert cfg.explain.n_neighbors == 3
    assert cfg.evaluation.n_correct == 50
    assert cfg.evaluation.n_incorrect == 50
    assert cfg.evaluation.baseline_all_classes is False


def test_unknown_keys_rejected() -> None:
    with pytest.raises(InputError):
        load_config_dict({"explain": {"n_sample": 10}})
    with pytest.raises(InputError):
        load_config_dict({"typo_top_level": 1})


def load_config_dict(d: dict):
    # helper: route a raw dict through the same validation as file loading
    from fgns.config import config_from_dict

    return config_from_dict(d)


def test_out_of_range_values_rejected() -> None:
    for patch in (
        {"explain": {"cell": 0}},
        {"explain": {"iou_group": 1.5}},
        {"explain": {"min_freq": -0.1}},
        {"explain": {"rho": 0.0}},
        {"classifier": {"epochs": 0}},
        {"workers": 0},
    ):
        with pytest.raises(InputError):
            load_config_dict(patch)


def test_yaml_and_json_files_load_identically(tmp_path) -> None:
    body = {"seed": 7, "explain": {"n_perturb": 64}}
    ypath = tmp_path / "c.yaml"
    jpath = tmp_path / "c.json"
    ypath.write_text("seed: 7\nexplain:\n  n_perturb: 64\n")
    import json

    jpath.write_text(json.dumps(body))
    assert load_config(ypath) == load_config(jpath)


def test_override_merging_is_typed_and_dotted() -> None:
    cfg = RunConfig()
    out = apply_overrides(cfg, ["explain.n_perturb=128", "seed=3", "data.eval_classes=[1,2]"])
    assert out.explain.n_perturb == 128
    assert out.seed == 3
    assert out.data.eval_classes == [1, 2]
    # original untouched
    assert cfg.explain.n_perturb == 500


def test_override_rejects_unknown_path() -> None:
    with pytest.raises(InputError):
        apply_overrides(RunConfig(), ["explain.bogus=1"])


def test_config_hash_stable_and_sensitive() -> None:
    a = RunConfig()
    b = RunConfig()
    assert a.config_hash() == b.config_hash()
    c = apply_overrides(a, ["seed=1"])
    assert c.config_hash() != a.config_hash()
    # hash is a hex sha256
    h = a.config_hash()
    assert len(h) == 64
    assert set(h) <= set("0123456789abcdef")


def test_workers_key_does_not_enter_hash() -> None:
    # concurrency must never change outputs, so it cannot change the hash
    a = RunConfig()
    b = apply_overrides(a, ["workers=8"])
    assert a.config_hash() == b.config_hash()
