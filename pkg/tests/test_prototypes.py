"""Median prototypes: oracle checks and order/robustness properties."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fgns.data import LabeledDataset
from fgns.errors import FormatError, InsufficientDataError
from fgns.prototypes import build_prototypes, load_prototypes, prototype, save_prototypes

from .oracles import median_sorted


def test_prototype_matches_sort_oracle_odd_and_even() -> None:
    rng = np.random.default_rng(0)
    for n in (3, 4, 7, 10):
        imgs = rng.random((n, 2, 3))
        proto = prototype(imgs)
        assert proto.shape == (2, 3)
        for r in range(2):
            for c in range(3):
                assert proto[r, c] == pytest.approx(
                    median_sorted([float(v) for v in imgs[:, r, c]]), abs=1e-12
                )


def test_prototype_invariant_to_source_order() -> None:
    rng = np.random.default_rng(1)
    imgs = rng.random((9, 4, 4))
    shuffled = imgs[rng.permutation(9)]
    np.testing.assert_array_equal(prototype(imgs), prototype(shuffled))


def test_prototype_idempotent_on_singleton() -> None:
    img = np.random.default_rng(2).random((5, 5))
    np.testing.assert_array_equal(prototype(img[None]), img)


@given(st.integers(min_value=1, max_value=10), st.integers(min_value=0, max_value=100))
def test_minority_saturation_cannot_exceed_untouched_max(n_sources: int, seed: int) -> None:
    # pushing fewer than half the sources to 1.0 at a pixel keeps the median
    # at or below the maximum of the untouched values
    rng = np.random.default_rng(seed)
    values = rng.uniform(0.0, 0.9, n_sources)
    n_tamper = (n_sources - 1) // 2  # strictly fewer than half
    if n_tamper == 0:
        tampered = values
    else:
        tampered = values.copy()
        tampered[rng.choice(n_sources, size=n_tamper, replace=False)] = 1.0
    imgs = tampered.reshape(n_sources, 1, 1)
    med = float(prototype(imgs)[0, 0])
    untouched = sorted(values)[: n_sources - n_tamper] if n_tamper else values
    assert med <= max(float(v) for v in values) + 1e-12


def test_build_prototypes_per_class() -> None:
    images = np.array(
        [
            [[0.0, 0.2]],
            [[1.0, 0.4]],
            [[0.5, 0.6]],
            [[0.1, 0.0]],
            [[0.3, 1.0]],
        ]
    )
    labels = np.array([0, 0, 0, 1, 1], dtype=np.int64)
    ds = LabeledDataset(
        images=images,
        labels=labels,
        ids=np.arange(5, dtype=np.int64),
        split="train",
        checksum="x",
    )
    protos = build_prototypes(ds)
    assert set(protos) == {0, 1}
    np.testing.assert_allclose(protos[0], [[0.5, 0.4]])
    np.testing.assert_allclose(protos[1], [[0.2, 0.5]])


def test_build_prototypes_requires_instances() -> None:
    ds = LabeledDataset(
        images=np.zeros((2, 1, 1)),
        labels=np.array([0, 0], dtype=np.int64),
        ids=np.arange(2, dtype=np.int64),
        split="train",
        checksum="x",
    )
    with pytest.raises(InsufficientDataError):
        build_prototypes(ds, classes=[0, 1])


def test_prototypes_roundtrip(tmp_path) -> None:
    rng = np.random.default_rng(3)
    protos = {1: rng.random((3, 3)), 4: rng.random((3, 3))}
    path = tmp_path / "protos.json"
    save_prototypes(protos, path, dataset_checksum="abc")
    loaded, checksum = load_prototypes(path)
    assert checksum == "abc"
    assert set(loaded) == {1, 4}
    for c in (1, 4):
        assert loaded[c].dtype == np.float64
        assert loaded[c].tobytes() == protos[c].tobytes()
    save_prototypes(loaded, tmp_path / "protos2.json", dataset_checksum="abc")
    assert (tmp_path / "protos.json").read_bytes() == (tmp_path / "protos2.json").read_bytes()


def test_prototypes_load_rejects_malformed(tmp_path) -> None:
    p = tmp_path / "bad.json"
    p.write_text("[]")
    with pytest.raises(FormatError):
        load_prototypes(p)
