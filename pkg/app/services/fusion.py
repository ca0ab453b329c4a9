"""
Weighted late fusion of part-wise class probabilities.

P_c = sum_i w_i * p_i,c over the five body parts; the prediction is the
argmax, lowest class index on ties. Weights are searched exhaustively over
{1..5}^5.
"""

import itertools
from typing import Mapping, Sequence

import numpy as np

from app.models.skeleton import PART_LABELS
from app.models.training import WEIGHT_CHOICES, FusionResult, FusionWeights, PartPredictions
from app.utils.logger import get_logger

logger = get_logger(__name__)

WEIGHT_GRID: np.ndarray = np.array(
    list(itertools.product(WEIGHT_CHOICES, repeat=len(PART_LABELS))), dtype=np.float64
)
_CHUNK = 256


class FusionError(Exception):
    """Part predictions cannot be fused."""
    pass


def _ordered(
    parts: Sequence[PartPredictions] | Mapping[str, PartPredictions],
) -> list[PartPredictions]:
    if isinstance(parts, Mapping):
        missing = [p for p in PART_LABELS if p not in parts]
        if missing:
            raise FusionError(f"missing part predictions: {', '.join(missing)}")
        return [parts[p] for p in PART_LABELS]
    ordered = list(parts)
    if [p.part for p in ordered] != list(PART_LABELS):
        raise FusionError(
            f"parts must be {', '.join(PART_LABELS)} in order, got {[p.part for p in ordered]}"
        )
    return ordered


def stack_parts(
    parts: Sequence[PartPredictions] | Mapping[str, PartPredictions],
) -> tuple[np.ndarray, np.ndarray]:
    """(5, samples, classes) probabilities and the shared labels; checks alignment."""
    ordered = _ordered(parts)
    ref = ordered[0]
    for p in ordered[1:]:
        if p.sample_ids != ref.sample_ids:
            raise FusionError(f"{p.part} samples are not aligned with {ref.part}")
        if p.class_names != ref.class_names:
            raise FusionError(f"{p.part} classes differ from {ref.part}")
        if not np.array_equal(p.labels, ref.labels):
            raise FusionError(f"{p.part} true labels differ from {ref.part}")
    return np.stack([p.probabilities for p in ordered]), ref.labels


def _combine(weights: np.ndarray, stacked: np.ndarray) -> np.ndarray:
    # (..., 5) x (5, n, c) -> (..., n, c)
    return np.tensordot(weights, stacked, axes=([-1], [0]))


def fuse(
    weights: FusionWeights,
    parts: Sequence[PartPredictions] | Mapping[str, PartPredictions],
) -> FusionResult:
    stacked, labels = stack_parts(parts)
    scores = _combine(weights.as_array(), stacked)
    predicted = scores.argmax(axis=-1)
    acc = float(np.mean(predicted == labels)) if labels.size else 0.0
    return FusionResult(weights=weights, scores=scores, predicted=predicted, accuracy=acc)


def grid_correct_counts(stacked: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Number of correctly fused samples for every weight vector of the grid, in grid order."""
    counts = np.empty(len(WEIGHT_GRID), dtype=np.int64)
    for start in range(0, len(WEIGHT_GRID), _CHUNK):
        chunk = WEIGHT_GRID[start : start + _CHUNK]
        predicted = _combine(chunk, stacked).argmax(axis=-1)
        counts[start : start + len(chunk)] = (predicted == labels).sum(axis=-1)
    return counts


def search_weights(
    parts: Sequence[PartPredictions] | Mapping[str, PartPredictions],
    labels: np.ndarray | None = None,
) -> tuple[FusionWeights, float]:
    """
    Best weight vector over {1..5}^5 and its accuracy.

    The grid is enumerated in lexicographic order and the first maximum
    wins, so ties resolve to the lexicographically smallest vector.
    """
    stacked, part_labels = stack_parts(parts)
    truth = part_labels if labels is None else np.asarray(labels, dtype=np.int64)
    if truth.shape != part_labels.shape:
        raise FusionError(f"{truth.size} labels for {part_labels.size} samples")
    if truth.size == 0:
        raise FusionError("cannot search fusion weights over zero samples")
    counts = grid_correct_counts(stacked, truth)
    best = int(np.argmax(counts))
    best_vector = tuple(int(w) for w in WEIGHT_GRID[best])
    weights = FusionWeights(weights=best_vector)  # type: ignore[arg-type]
    acc = float(counts[best]) / truth.size
    logger.info(f"Fusion weight search: best {weights} accuracy {acc:.4f}")
    return weights, acc
