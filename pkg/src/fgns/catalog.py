"""Class-level feature catalog.

Per class, the pipeline aggregates per-image surrogate selections into
candidate masks (grouping near-duplicates, dropping rare ones), validates
each candidate by the mean confidence drop when its region is neutralized
across class samples, clusters the survivors spatially, keeps the
highest-scoring mask per cluster, removes high-overlap leftovers, and stores
the result with its provenance. Catalog files are canonical JSON with
run-length encoded masks so a rebuild from identical inputs is
byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .artifacts import atomic_write_bytes, canonical_json
from .attribution import PredictFn, Segmentation, grid_segmentation, lime_attribute, perturbation_seed
from .config import ExplainConfig
from .data import LabeledDataset, sample_class
from .errors import DegenerateInputError, FormatError, InputError

CATALOG_FORMAT = "fgns-catalog"
CATALOG_VERSION = 1


@dataclass
class CandidateFeature:
    mask: np.ndarray  # (h, w) bool
    frequency: int
    sage_score: float | None = None


@dataclass
class FeatureMask:
    mask: np.ndarray  # (h, w) bool
    frequency: int
    sage_score: float


@dataclass
class FeatureCatalog:
    seed: int
    hyperparameters: dict
    model_checksum: str
    dataset_checksum: str
    image_shape: tuple[int, int]
    classes: dict[int, list[FeatureMask]]


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two binary masks; two empty masks give 0."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(a, b).sum() / union)


def group_masks(
    weighted_masks: list[tuple[np.ndarray, int]], iou_group: float
) -> list[tuple[np.ndarray, int]]:
    """Greedily group masks whose IoU with a group's anchor meets the bar.

    Input order is the processing order; the first member of a group is its
    anchor. A group's representative is the count-weighted pixel-wise
    majority of its members (exact halves count as on).
    """
    anchors: list[np.ndarray] = []
    votes: list[np.ndarray] = []
    totals: list[int] = []
    for mask, count in weighted_masks:
        mask = np.asarray(mask, dtype=bool)
        for g, anchor in enumerate(anchors):
            if iou(mask, anchor) >= iou_group:
                votes[g] = votes[g] + count * mask.astype(np.int64)
                totals[g] += count
                break
        else:
            anchors.append(mask)
            votes.append(count * mask.astype(np.int64))
            totals.append(count)
    return [(2 * v >= t, t) for v, t in zip(votes, totals)]


def aggregate_features(
    votes: list[tuple[int, list[int]]],
    seg: Segmentation,
    min_freq: float,
    iou_group: float,
) -> list[CandidateFeature]:
    """Turn per-image cell selections into frequency-ranked candidate masks.

    Every entry in votes counts toward the frequency denominator, selections
    or not. Candidates are ordered by descending frequency, ties by first
    on-pixel.
    """
    if not votes:
        raise DegenerateInputError("no attributions to aggregate")
    counts = np.zeros(seg.n_segments, dtype=np.int64)
    for _, selected in votes:
        for s in selected:
            counts[s] += 1
    # unique vote masks processed by descending count, ties by cell id
    order = [int(s) for s in np.lexsort((np.arange(seg.n_segments), -counts)) if counts[s] > 0]
    weighted = [(seg.mask_for(s), int(counts[s])) for s in order]
    groups = group_masks(weighted, iou_group)
    threshold = min_freq * len(votes)
    kept = [(m, f) for m, f in groups if f >= threshold and m.any()]
    kept.sort(key=lambda mf: (-mf[1], int(np.argmax(mf[0].ravel()))))
    return [CandidateFeature(mask=m, frequency=f) for m, f in kept]


@dataclass
class SageResult:
    score: float
    n_used: int
    stopped_early: bool


def sage_score(
    predict: PredictFn,
    class_column: int,
    mask: np.ndarray,
    samples: np.ndarray,
    baseline_value: float,
    se_threshold: float,
    min_n: int,
    early_stop: bool = True,
) -> SageResult:
    """Mean drop in class confidence when the mask region is neutralized.

    Samples are consumed in order with running Welford moments; once at
    least min_n samples are in and the standard error of the mean falls
    below se_threshold, evaluation stops and the running mean is the score.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 3 or samples.shape[0] == 0:
        raise DegenerateInputError("sage_score needs at least one sample image")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != samples.shape[1:]:
        raise InputError(f"mask shape {mask.shape} does not match images {samples.shape[1:]}")
    n = samples.shape[0]
    base = np.asarray(predict(samples), dtype=np.float64)[:, class_column]

    masked = samples.copy()
    masked[:, mask] = baseline_value

    mean = 0.0
    m2 = 0.0
    used = 0
    chunk = max(int(min_n), 64)
    for start in range(0, n, chunk):
        probs = np.asarray(predict(masked[start : start + chunk]), dtype=np.float64)[
            :, class_column
        ]
        drops = base[start : start + chunk] - probs
        for x in drops:
            used += 1
            delta = float(x) - mean
            mean += delta / used
            m2 += delta * (float(x) - mean)
            if early_stop and used >= min_n and used >= 2:
                se = np.sqrt(max(m2, 0.0) / (used - 1) / used)
                if se < se_threshold:
                    return SageResult(score=mean, n_used=used, stopped_early=True)
    return SageResult(score=mean, n_used=used, stopped_early=False)


def _lloyd(points: np.ndarray, k: int, seed: int, max_iter: int = 100):
    """Seeded k-means with greedy farthest-point init.

    Returns (labels, wcss_trace). Assignment ties go to the lowest center
    index; empty clusters keep their previous center.
    """
    n = points.shape[0]
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    first = int(rng.integers(n))
    chosen = [first]
    d2 = np.sum((points - points[first]) ** 2, axis=1)
    while len(chosen) < k:
        nxt = int(np.argmax(d2))  # argmax takes the lowest index on ties
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((points - points[nxt]) ** 2, axis=1))
    centers = points[chosen].astype(np.float64)

    labels = np.zeros(n, dtype=np.int64)
    wcss_trace: list[float] = []
    for _ in range(max_iter):
        dist = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(dist, axis=1)
        wcss_trace.append(float(dist[np.arange(n), new_labels].sum()))
        if np.array_equal(new_labels, labels) and len(wcss_trace) > 1:
            break
        labels = new_labels
        for j in range(k):
            members = points[labels == j]
            if members.shape[0] > 0:
                centers[j] = members.mean(axis=0)
    return labels, wcss_trace


def diversify(
    candidates: list[CandidateFeature], k_clusters: int, iou_dedup: float, seed: int
) -> list[FeatureMask]:
    """Cluster candidate masks spatially, keep the top scorer per cluster,
    then drop any survivor overlapping a better one at IoU >= iou_dedup.

    Output is ordered by descending score (ties by input position).
    """
    if not candidates:
        return []
    for cand in candidates:
        if cand.sage_score is None:
            raise InputError("diversify needs scored candidates")
    k = min(k_clusters, len(candidates))
    points = np.stack([c.mask.ravel().astype(np.float64) for c in candidates])
    labels, _ = _lloyd(points, k=k, seed=seed)

    best: dict[int, int] = {}
    for idx, lab in enumerate(labels):
        lab = int(lab)
        if lab not in best or candidates[idx].sage_score > candidates[best[lab]].sage_score:
            best[lab] = idx
    picked = sorted(best.values(), key=lambda i: (-candidates[i].sage_score, i))

    survivors: list[int] = []
    for i in picked:
        if all(iou(candidates[i].mask, candidates[j].mask) < iou_dedup for j in survivors):
            survivors.append(i)
    return [
        FeatureMask(
            mask=candidates[i].mask.astype(bool),
            frequency=candidates[i].frequency,
            sage_score=float(candidates[i].sage_score),
        )
        for i in survivors
    ]


def build_catalog(
    model,
    train: LabeledDataset,
    explain_cfg: ExplainConfig,
    seed: int,
    model_checksum: str,
) -> FeatureCatalog:
    """Run the full per-class mining pipeline over the training split.

    Classes smaller than n_samples contribute all of their instances. A
    class where no candidate survives validation gets an empty entry; the
    explanation path falls back to the activation baseline there.
    """
    h, w = train.image_shape
    if (h, w) != tuple(model.image_shape):
        raise InputError(
            f"model expects {model.image_shape} images, dataset has {(h, w)}"
        )
    seg = grid_segmentation(h, w, explain_cfg.cell)
    classes: dict[int, list[FeatureMask]] = {}
    for c in model.classes:
        avail = int(np.sum(train.labels == c))
        if avail == 0:
            raise InputError(f"model class {c} has no training instances")
        sample = sample_class(train, c, min(explain_cfg.n_samples, avail), seed)
        col = model.class_index(c)
        votes: list[tuple[int, list[int]]] = []
        for row in range(len(sample)):
            image_id = int(sample.ids[row])
            att = lime_attribute(
                model.predict_proba,
                sample.images[row],
                seg,
                class_column=col,
                n_perturb=explain_cfg.n_perturb,
                k_local=explain_cfg.k_local,
                kernel_sigma=explain_cfg.kernel_sigma,
                ridge_lambda=explain_cfg.ridge_lambda,
                baseline_value=explain_cfg.baseline_value,
                seed=perturbation_seed(seed, image_id),
                image_id=image_id,
            )
            votes.append((image_id, att.selected))
        candidates = aggregate_features(
            votes, seg, min_freq=explain_cfg.min_freq, iou_group=explain_cfg.iou_group
        )
        scored: list[CandidateFeature] = []
        for cand in candidates:
            res = sage_score(
                model.predict_proba,
                class_column=col,
                mask=cand.mask,
                samples=sample.images,
                baseline_value=explain_cfg.baseline_value,
                se_threshold=explain_cfg.sage_se_threshold,
                min_n=explain_cfg.sage_min_n,
                early_stop=True,
            )
            if res.score >= explain_cfg.tau_global:
                scored.append(
                    CandidateFeature(
                        mask=cand.mask, frequency=cand.frequency, sage_score=res.score
                    )
                )
        cluster_seed = int(
            np.random.SeedSequence([seed, int(c), 0x6B6D]).generate_state(1, np.uint64)[0]
        )
        classes[int(c)] = diversify(
            scored,
            k_clusters=explain_cfg.k_masks,
            iou_dedup=explain_cfg.iou_dedup,
            seed=cluster_seed,
        )
    return FeatureCatalog(
        seed=seed,
        hyperparameters=explain_cfg.model_dump(mode="json"),
        model_checksum=model_checksum,
        dataset_checksum=train.checksum,
        image_shape=(h, w),
        classes=classes,
    )


def rle_encode(mask: np.ndarray) -> list[int]:
    """Alternating run lengths over the row-major flat mask, zeros first."""
    flat = np.asarray(mask, dtype=np.uint8).ravel()
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = [int(r) for r in np.diff(bounds)]
    if flat[0] == 1:
        runs = [0] + runs
    return runs


def rle_decode(runs: list[int], shape: tuple[int, int]) -> np.ndarray:
    size = shape[0] * shape[1]
    if any((not isinstance(r, (int, np.integer))) or r < 0 for r in runs):
        raise FormatError(f"run lengths must be non-negative integers: {runs}")
    if sum(runs) != size:
        raise FormatError(f"run lengths sum to {sum(runs)}, mask needs {size}")
    out = np.zeros(size, dtype=bool)
    pos = 0
    bit = False
    for r in runs:
        if bit:
            out[pos : pos + r] = True
        pos += r
        bit = not bit
    return out.reshape(shape)


def save_catalog(
    path: str | Path,
    classes: dict[int, list[FeatureMask]],
    seed: int,
    hyperparameters: dict,
    model_checksum: str,
    dataset_checksum: str,
    image_shape: tuple[int, int],
) -> None:
    payload = {
        "format": CATALOG_FORMAT,
        "version": CATALOG_VERSION,
        "seed": seed,
        "hyperparameters": hyperparameters,
        "model_checksum": model_checksum,
        "dataset_checksum": dataset_checksum,
        "image_shape": list(image_shape),
        "classes": {
            str(c): [
                {
                    "mask_rle": rle_encode(fm.mask),
                    "frequency": fm.frequency,
                    "sage_score": fm.sage_score,
                }
                for fm in masks
            ]
            for c, masks in classes.items()
        },
    }
    atomic_write_bytes(path, canonical_json(payload).encode("utf-8"))


def save_catalog_obj(path: str | Path, cat: FeatureCatalog) -> None:
    save_catalog(
        path,
        classes=cat.classes,
        seed=cat.seed,
        hyperparameters=cat.hyperparameters,
        model_checksum=cat.model_checksum,
        dataset_checksum=cat.dataset_checksum,
        image_shape=cat.image_shape,
    )


def load_catalog(path: str | Path) -> FeatureCatalog:
    path = Path(path)
    if not path.exists():
        raise InputError(f"catalog file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except (ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CATALOG_FORMAT:
        raise FormatError(f"{path} is not a {CATALOG_FORMAT} file")
    if doc.get("version") != CATALOG_VERSION:
        raise FormatError(f"{path}: unsupported version {doc.get('version')!r}")
    try:
        shape = tuple(int(v) for v in doc["image_shape"])
        classes: dict[int, list[FeatureMask]] = {}
        for key, entries in doc["classes"].items():
            masks = []
            for e in entries:
                masks.append(
                    FeatureMask(
                        mask=rle_decode(e["mask_rle"], shape),
                        frequency=int(e["frequency"]),
                        sage_score=float(e["sage_score"]),
                    )
                )
            classes[int(key)] = masks
        return FeatureCatalog(
            seed=int(doc["seed"]),
            hyperparameters=dict(doc["hyperparameters"]),
            model_checksum=str(doc["model_checksum"]),
            dataset_checksum=str(doc["dataset_checksum"]),
            image_shape=shape,
            classes=classes,
        )
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: missing or malformed field: {exc}") from exc
