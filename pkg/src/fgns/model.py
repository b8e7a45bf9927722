"""Reference classifier: a two-layer feed-forward network in plain numpy.

flatten(h*w) -> dense(hidden) -> ReLU -> dense(n_classes) -> softmax,
trained with seeded mini-batch SGD on cross-entropy. The architecture is
deliberately small and fully deterministic so that every artifact built on
top of it (attributions, catalogs, evaluation reports) is reproducible from
(config, data) alone.

The ReLU layer is the penultimate representation used by the activation
k-NN baseline; its Hadamard product with a class's output-layer weight
column decomposes that class logit into per-unit contributions.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .artifacts import atomic_write_bytes, canonical_json, sha256_hex
from .data import LabeledDataset
from .errors import DivergenceError, FormatError, InputError

MODEL_FORMAT = "fgns-model"
MODEL_VERSION = 1


@dataclass
class ClassifierModel:
    image_shape: tuple[int, int]
    classes: list[int]  # sorted class labels; logit column j scores classes[j]
    w1: np.ndarray  # (pixels, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden, n_classes)
    b2: np.ndarray  # (n_classes,)
    seed: int = 0
    epochs: int = 0
    batch_size: int = 0
    learning_rate: float = 0.0
    epoch_losses: list[float] = field(default_factory=list)
    dataset_checksum: str = ""

    @property
    def n_pixels(self) -> int:
        return self.image_shape[0] * self.image_shape[1]

    @property
    def hidden_units(self) -> int:
        return int(self.w1.shape[1])

    def class_index(self, cls: int) -> int:
        try:
            return self.classes.index(int(cls))
        except ValueError:
            raise InputError(f"model has no class {cls}; classes are {self.classes}") from None

    def _flat(self, images: np.ndarray) -> np.ndarray:
        X = np.asarray(images, dtype=np.float64)
        if X.ndim == 2:
            X = X[None, :, :]
        if X.shape[1:] != self.image_shape:
            raise InputError(
                f"expected images of shape {self.image_shape}, got {X.shape[1:]}"
            )
        return X.reshape(X.shape[0], -1)

    def penultimate(self, images: np.ndarray) -> np.ndarray:
        return np.maximum(self._flat(images) @ self.w1 + self.b1, 0.0)

    def logits(self, images: np.ndarray) -> np.ndarray:
        return self.penultimate(images) @ self.w2 + self.b2

    def predict_proba(self, images: np.ndarray) -> np.ndarray:
        return _softmax(self.logits(images))

    def predict(self, images: np.ndarray) -> np.ndarray:
        idx = np.argmax(self.predict_proba(images), axis=1)
        return np.asarray(self.classes, dtype=np.int64)[idx]

    def to_payload(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "arch": {
                "image_shape": list(self.image_shape),
                "hidden_units": self.hidden_units,
                "classes": list(self.classes),
            },
            "weights": {
                name: _encode_array(getattr(self, name)) for name in ("w1", "b1", "w2", "b2")
            },
            "training": {
                "seed": self.seed,
                "epochs": self.epochs,
                "batch_size": self.batch_size,
                "learning_rate": self.learning_rate,
                "epoch_losses": self.epoch_losses,
                "dataset_checksum": self.dataset_checksum,
            },
        }

    def checksum(self) -> str:
        return sha256_hex(canonical_json(self.to_payload()).encode("utf-8"))


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _encode_array(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    return {
        "shape": list(arr.shape),
        "dtype": "<f8",
        "data": base64.b64encode(arr.astype("<f8").tobytes()).decode("ascii"),
    }


def _decode_array(obj: dict, name: str) -> np.ndarray:
    try:
        shape = tuple(int(s) for s in obj["shape"])
        dtype = obj["dtype"]
        raw = base64.b64decode(obj["data"], validate=True)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"weight block {name!r} is malformed: {exc}") from exc
    if dtype != "<f8":
        raise FormatError(f"weight block {name!r}: unsupported dtype {dtype!r}")
    arr = np.frombuffer(raw, dtype="<f8")
    expected = int(np.prod(shape)) if shape else 1
    if arr.size != expected:
        raise FormatError(
            f"weight block {name!r}: shape {shape} needs {expected} values, got {arr.size}"
        )
    return arr.reshape(shape).astype(np.float64)


def init_model(
    image_shape: tuple[int, int], hidden_units: int, classes: list[int], seed: int
) -> ClassifierModel:
    """Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer."""
    n_pixels = image_shape[0] * image_shape[1]
    n_classes = len(classes)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x1017])))
    bound1 = 1.0 / np.sqrt(n_pixels)
    bound2 = 1.0 / np.sqrt(hidden_units)
    return ClassifierModel(
        image_shape=tuple(image_shape),
        classes=[int(c) for c in classes],
        w1=rng.uniform(-bound1, bound1, size=(n_pixels, hidden_units)),
        b1=rng.uniform(-bound1, bound1, size=hidden_units),
        w2=rng.uniform(-bound2, bound2, size=(hidden_units, n_classes)),
        b2=rng.uniform(-bound2, bound2, size=n_classes),
        seed=seed,
    )


def loss_and_grads(
    m: ClassifierModel, images: np.ndarray, labels: np.ndarray
) -> tuple[float, list[np.ndarray]]:
    """Mean cross-entropy over the batch and its gradients (w1, b1, w2, b2).

    labels are class labels, mapped through the model's class list.
    """
    X = m._flat(images)
    y_idx = np.array([m.class_index(c) for c in np.asarray(labels).ravel()])
    n = X.shape[0]
    hidden = np.maximum(X @ m.w1 + m.b1, 0.0)
    probs = _softmax(hidden @ m.w2 + m.b2)
    with np.errstate(divide="ignore"):
        loss = float(-np.mean(np.log(probs[np.arange(n), y_idx])))
    dlogits = probs.copy()
    dlogits[np.arange(n), y_idx] -= 1.0
    dlogits /= n
    dw2 = hidden.T @ dlogits
    db2 = dlogits.sum(axis=0)
    dhidden = dlogits @ m.w2.T
    dhidden[hidden <= 0.0] = 0.0
    dw1 = X.T @ dhidden
    db1 = dhidden.sum(axis=0)
    return loss, [dw1, db1, dw2, db2]


def train_classifier(
    ds: LabeledDataset,
    hidden_units: int,
    batch_size: int,
    learning_rate: float,
    epochs: int,
    seed: int,
    dataset_checksum: str | None = None,
) -> ClassifierModel:
    """Seeded mini-batch SGD; raises DivergenceError on non-finite loss."""
    m = init_model(ds.image_shape, hidden_units, ds.classes(), seed)
    m.epochs = epochs
    m.batch_size = batch_size
    m.learning_rate = learning_rate
    m.dataset_checksum = dataset_checksum if dataset_checksum is not None else ds.checksum
    shuffle_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x5417])))
    n = len(ds)
    params = [m.w1, m.b1, m.w2, m.b2]
    for epoch in range(epochs):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            batch = order[start : start + batch_size]
            loss, grads = loss_and_grads(m, ds.images[batch], ds.labels[batch])
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"training diverged: non-finite loss in epoch {epoch + 1}", epoch=epoch + 1
                )
            total += loss * batch.size
            for p, g in zip(params, grads):
                p -= learning_rate * g
        m.epoch_losses.append(total / n)
    return m


def accuracy(m: ClassifierModel, ds: LabeledDataset) -> float:
    return float(np.mean(m.predict(ds.images) == ds.labels))


def contribution_vector(m: ClassifierModel, image: np.ndarray, cls: int) -> np.ndarray:
    """Per-unit contributions to the logit of cls: penultimate ⊙ weight column.

    Summing the vector and adding the class bias reproduces the logit.
    """
    j = m.class_index(cls)
    return m.penultimate(image)[0] * m.w2[:, j]


def save_model(m: ClassifierModel, path: str | Path) -> str:
    text = canonical_json(m.to_payload())
    atomic_write_bytes(path, text.encode("utf-8"))
    return sha256_hex(text.encode("utf-8"))


def load_model(path: str | Path) -> ClassifierModel:
    path = Path(path)
    if not path.exists():
        raise InputError(f"model file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except (ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise FormatError(f"{path} is not a {MODEL_FORMAT} file")
    if doc.get("version") != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported version {doc.get('version')!r}")
    try:
        arch = doc["arch"]
        weights = doc["weights"]
        training = doc["training"]
        m = ClassifierModel(
            image_shape=tuple(int(v) for v in arch["image_shape"]),
            classes=[int(c) for c in arch["classes"]],
            w1=_decode_array(weights["w1"], "w1"),
            b1=_decode_array(weights["b1"], "b1"),
            w2=_decode_array(weights["w2"], "w2"),
            b2=_decode_array(weights["b2"], "b2"),
            seed=int(training["seed"]),
            epochs=int(training["epochs"]),
            batch_size=int(training["batch_size"]),
            learning_rate=float(training["learning_rate"]),
            epoch_losses=[float(v) for v in training["epoch_losses"]],
            dataset_checksum=str(training["dataset_checksum"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: missing or malformed field: {exc}") from exc
    n_pixels = m.image_shape[0] * m.image_shape[1]
    hidden = m.w1.shape[1] if m.w1.ndim == 2 else -1
    expect = {
        "w1": (n_pixels, hidden),
        "b1": (hidden,),
        "w2": (hidden, len(m.classes)),
        "b2": (len(m.classes),),
    }
    for name, shape in expect.items():
        got = getattr(m, name).shape
        if got != shape:
            raise FormatError(f"{path}: weight {name} has shape {got}, expected {shape}")
    if arch.get("hidden_units") != hidden:
        raise FormatError(f"{path}: declared hidden_units disagrees with weight shapes")
    return m
