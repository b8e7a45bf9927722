"""Neighbor selection.

The feature-guided ranker scores a candidate by how far it sits from the
class prototype inside the class's validated feature masks:

    loss = rho * sum_i || mask_i * (candidate - prototype) ||^2

which depends only on the candidate and the class artifacts, never on the
query, so all queries predicted as a class receive that class's most
representative instances. The baseline ranker is a k-NN in the space of
penultimate activations weighted by the class's output-layer column (each
coordinate is one unit's contribution to the class logit).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .catalog import FeatureCatalog
from .data import LabeledDataset
from .errors import InputError
from .model import ClassifierModel

METHOD_FGNS = "fgns"
METHOD_BASELINE = "knn_baseline"


def feature_loss(
    candidate: np.ndarray, prototype: np.ndarray, masks: list[np.ndarray], rho: float
) -> float:
    """Mask-restricted squared distance to the prototype, scaled by rho."""
    candidate = np.asarray(candidate, dtype=np.float64)
    prototype = np.asarray(prototype, dtype=np.float64)
    if candidate.shape != prototype.shape:
        raise InputError(
            f"candidate shape {candidate.shape} does not match prototype {prototype.shape}"
        )
    if not masks:
        raise InputError("feature_loss needs at least one mask")
    diff = candidate - prototype
    total = 0.0
    for mask in masks:
        masked = np.asarray(mask, dtype=np.float64) * diff
        total += float(np.sum(masked * masked))
    return rho * total


def _take_lowest(ids: np.ndarray, scores: np.ndarray, n: int) -> list[tuple[int, float]]:
    # Saturates: a pool smaller than n yields the whole pool, never padding.
    if scores.shape[0] == 0:
        raise InputError("candidate pool is empty")
    order = np.lexsort((ids, scores))[: min(n, scores.shape[0])]
    return [(int(ids[i]), float(scores[i])) for i in order]


def rank_fgns(
    candidates: np.ndarray,
    candidate_ids: np.ndarray,
    prototype: np.ndarray,
    masks: list[np.ndarray],
    rho: float,
    n: int,
) -> list[tuple[int, float]]:
    """The n lowest-loss candidates, fewer when the pool is smaller.

    Ties break by ascending candidate id. Scores each candidate through
    feature_loss itself, so the selection is the brute-force selection by
    construction.
    """
    if not masks:
        raise InputError("rank_fgns needs at least one feature mask")
    losses = np.array(
        [feature_loss(candidates[i], prototype, masks, rho) for i in range(candidates.shape[0])]
    )
    return _take_lowest(np.asarray(candidate_ids), losses, n)


def rank_knn(
    candidate_vectors: np.ndarray,
    candidate_ids: np.ndarray,
    query_vector: np.ndarray,
    n: int,
) -> list[tuple[int, float]]:
    """The n candidates whose contribution vectors sit closest to the query's.

    Ties break by ascending candidate id; a pool smaller than n yields the
    whole pool.
    """
    diffs = np.asarray(candidate_vectors, dtype=np.float64) - np.asarray(
        query_vector, dtype=np.float64
    )
    dists = np.sqrt(np.sum(diffs * diffs, axis=1))
    return _take_lowest(np.asarray(candidate_ids), dists, n)


@dataclass
class Explanation:
    query_id: int | None
    predicted_class: int
    true_class: int | None
    method: str
    fallback: bool
    neighbors: list[tuple[int, float]]  # (train id, score), best first

    def to_payload(self) -> dict:
        return {
            "query_id": self.query_id,
            "predicted_class": self.predicted_class,
            "true_class": self.true_class,
            "method": self.method,
            "fallback": self.fallback,
            "neighbors": [
                {"train_id": tid, "score": score} for tid, score in self.neighbors
            ],
        }


def class_pool(train: LabeledDataset, cls: int) -> np.ndarray:
    rows = np.flatnonzero(train.labels == cls)
    if rows.size == 0:
        raise InputError(f"no training instances of class {cls}")
    return rows


def contribution_vectors(m: ClassifierModel, images: np.ndarray, cls: int) -> np.ndarray:
    """Per-unit logit contributions for a batch: penultimate ⊙ class column."""
    return m.penultimate(images) * m.w2[:, m.class_index(cls)]


def explain(
    m: ClassifierModel,
    train: LabeledDataset,
    cat: FeatureCatalog,
    protos: dict[int, np.ndarray],
    query_image: np.ndarray,
    method: str,
    n_neighbors: int,
    rho: float,
    query_id: int | None = None,
    true_class: int | None = None,
    baseline_all_classes: bool = False,
) -> Explanation:
    """Build one explanation record for a query image.

    method "fgns" uses the predicted class's catalog masks and prototype;
    a class with no validated masks falls back to the activation baseline
    and says so in the record. method "knn_baseline" always uses the
    activation ranker over the predicted class's pool (or every class when
    baseline_all_classes is set).
    """
    if method not in (METHOD_FGNS, METHOD_BASELINE):
        raise InputError(f"unknown method {method!r}")
    predicted = int(m.predict(np.asarray(query_image)[None])[0])

    fallback = False
    if method == METHOD_FGNS:
        masks = [fm.mask for fm in cat.classes.get(predicted, [])]
        if masks:
            if predicted not in protos:
                raise InputError(f"no prototype for class {predicted}")
            rows = class_pool(train, predicted)
            neighbors = rank_fgns(
                train.images[rows],
                train.ids[rows],
                protos[predicted],
                masks,
                rho=rho,
                n=n_neighbors,
            )
            return Explanation(
                query_id=query_id,
                predicted_class=predicted,
                true_class=true_class,
                method=method,
                fallback=False,
                neighbors=neighbors,
            )
        fallback = True

    if baseline_all_classes and method == METHOD_BASELINE:
        rows = np.arange(len(train))
    else:
        rows = class_pool(train, predicted)
    vectors = contribution_vectors(m, train.images[rows], predicted)
    query_vec = contribution_vectors(m, np.asarray(query_image)[None], predicted)[0]
    neighbors = rank_knn(vectors, train.ids[rows], query_vec, n=n_neighbors)
    return Explanation(
        query_id=query_id,
        predicted_class=predicted,
        true_class=true_class,
        method=method,
        fallback=fallback,
        neighbors=neighbors,
    )
