"""Fixed-grid segmentation and a local linear surrogate attribution.

An image is cut into square cells; a seeded batch of keep/drop vectors over
those cells produces perturbed copies (dropped cells take the baseline
value); a weighted ridge regression from keep vectors to the model's class
probability yields per-cell coefficients. Cells with the largest positive
coefficients are the image's locally important features.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import DegenerateInputError

PredictFn = Callable[[np.ndarray], np.ndarray]  # (n, h, w) -> (n, n_classes)


@dataclass(frozen=True)
class Segmentation:
    """Row-major grid of square cells; ragged right/bottom cells allowed."""

    labels: np.ndarray  # (h, w) int64 segment id per pixel
    n_segments: int
    cell: int

    @cached_property
    def members(self) -> np.ndarray:
        """(n_segments, h*w) boolean membership matrix."""
        flat = self.labels.ravel()
        return flat[None, :] == np.arange(self.n_segments)[:, None]

    def mask_for(self, segment_id: int) -> np.ndarray:
        return self.labels == segment_id


def grid_segmentation(height: int, width: int, cell: int) -> Segmentation:
    if cell < 1 or height < 1 or width < 1:
        raise DegenerateInputError(f"invalid grid: {height}x{width}, cell {cell}")
    rows = np.arange(height) // cell
    cols = np.arange(width) // cell
    n_cell_cols = int(cols[-1]) + 1
    labels = rows[:, None] * n_cell_cols + cols[None, :]
    n = int(labels[-1, -1]) + 1
    return Segmentation(labels=labels.astype(np.int64), n_segments=n, cell=cell)


@dataclass
class LocalAttribution:
    """One image's surrogate fit: ranked positive cells plus the raw fit."""

    image_id: int
    selected: list[int]  # top positive-coefficient segment ids, strongest first
    coefficients: np.ndarray  # (n_segments,)
    intercept: float
    keep_matrix: np.ndarray = field(repr=False, default=None)  # (n_perturb, n_segments)
    targets: np.ndarray = field(repr=False, default=None)  # (n_perturb,)
    weights: np.ndarray = field(repr=False, default=None)  # (n_perturb,)


def perturbation_seed(seed: int, image_id: int) -> int:
    """Stable per-image perturbation seed derived from the global seed."""
    return int(np.random.SeedSequence([seed, image_id]).generate_state(1, np.uint64)[0])


def lime_attribute(
    predict: PredictFn,
    image: np.ndarray,
    seg: Segmentation,
    class_column: int,
    n_perturb: int,
    k_local: int,
    kernel_sigma: float,
    ridge_lambda: float,
    baseline_value: float,
    seed: int,
    image_id: int = -1,
) -> LocalAttribution:
    """Fit the local surrogate for one image and rank its cells.

    The similarity kernel is exp(-d^2 / sigma^2) with d the fraction of
    cells dropped; the ridge penalty spares the intercept. At most k_local
    cells are selected and only those with strictly positive coefficients.
    """
    if n_perturb < 1:
        raise DegenerateInputError("n_perturb must be at least 1")
    if seg.n_segments < 1:
        raise DegenerateInputError("segmentation has no segments")
    if n_perturb < seg.n_segments:
        warnings.warn(
            f"{n_perturb} perturbations for {seg.n_segments} cells leaves the "
            "surrogate underdetermined; ridge shrinkage dominates",
            stacklevel=2,
        )
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    keep = rng.integers(0, 2, size=(n_perturb, seg.n_segments)).astype(np.float64)

    members = seg.members.astype(np.float64)  # cells partition pixels
    pixel_keep = keep @ members
    flat = image.ravel()
    perturbed = pixel_keep * flat + (1.0 - pixel_keep) * baseline_value
    probs = np.asarray(predict(perturbed.reshape(n_perturb, h, w)), dtype=np.float64)
    y = probs[:, class_column]

    frac_off = 1.0 - keep.mean(axis=1)
    weights = np.exp(-(frac_off**2) / (kernel_sigma**2))

    beta = _weighted_ridge(keep, y, weights, ridge_lambda)
    intercept, coefs = float(beta[0]), beta[1:]

    positive = np.flatnonzero(coefs > 0)
    order = positive[np.lexsort((positive, -coefs[positive]))]
    selected = [int(j) for j in order[:k_local]]
    return LocalAttribution(
        image_id=image_id,
        selected=selected,
        coefficients=coefs,
        intercept=intercept,
        keep_matrix=keep,
        targets=y,
        weights=weights,
    )


def _weighted_ridge(Z: np.ndarray, y: np.ndarray, w: np.ndarray, lam: float) -> np.ndarray:
    """argmin_b sum_i w_i (b0 + Z_i.b - y_i)^2 + lam * ||b||^2 (b0 spared).

    Solved as an augmented least squares so rank deficiency degrades
    gracefully instead of raising.
    """
    n, s = Z.shape
    design = np.hstack([np.ones((n, 1)), Z])
    sw = np.sqrt(w)
    rows = [design * sw[:, None]]
    rhs = [y * sw]
    if lam > 0:
        penalty = np.zeros((s, s + 1))
        penalty[:, 1:] = np.sqrt(lam) * np.eye(s)
        rows.append(penalty)
        rhs.append(np.zeros(s))
    beta, *_ = np.linalg.lstsq(np.vstack(rows), np.concatenate(rhs), rcond=None)
    return beta
