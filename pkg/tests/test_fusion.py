import itertools

import numpy as np
import pytest

from app.models.skeleton import PART_LABELS
from app.models.training import FusionWeights, PartPredictions
from app.services.fusion import (
    WEIGHT_GRID,
    FusionError,
    fuse,
    grid_correct_counts,
    search_weights,
    stack_parts,
)


def make_parts(
    n_samples: int = 20, n_classes: int = 4, seed: int = 0
) -> list[PartPredictions]:
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, n_classes, size=n_samples)
    ids = [f"s{i:02d}" for i in range(n_samples)]
    names = [f"c{c}" for c in range(n_classes)]
    return [
        PartPredictions(
            part=part,
            class_names=names,
            sample_ids=ids,
            probabilities=rng.dirichlet(np.ones(n_classes), size=n_samples),
            labels=labels,
        )
        for part in PART_LABELS
    ]


def brute_force(parts: list[PartPredictions]) -> tuple[tuple[int, ...], float]:
    labels = parts[0].labels
    best, best_acc = (0, 0, 0, 0, 0), -1.0
    for weights in itertools.product(range(1, 6), repeat=5):
        scores = sum(w * p.probabilities for w, p in zip(weights, parts))
        acc = float(np.mean(np.argmax(scores, axis=1) == labels))
        if acc > best_acc:
            best, best_acc = weights, acc
    return best, best_acc


def test_grid_is_lexicographic_over_one_to_five() -> None:
    assert WEIGHT_GRID.shape == (3125, 5)
    assert WEIGHT_GRID[0].tolist() == [1, 1, 1, 1, 1]
    assert WEIGHT_GRID[1].tolist() == [1, 1, 1, 1, 2]
    assert WEIGHT_GRID[-1].tolist() == [5, 5, 5, 5, 5]


@pytest.mark.parametrize("seed", range(5))
def test_search_matches_brute_force(seed: int) -> None:
    parts = make_parts(seed=seed)

    weights, acc = search_weights(parts)

    expected_weights, expected_acc = brute_force(parts)
    assert weights.weights == expected_weights
    assert acc == pytest.approx(expected_acc)


def test_identical_parts_tie_to_smallest_vector() -> None:
    single = make_parts()[0]
    parts = [single.model_copy(update={"part": p}) for p in PART_LABELS]

    weights, acc = search_weights(parts)

    assert weights.weights == (1, 1, 1, 1, 1)
    assert acc == pytest.approx(single.accuracy())


def test_fixed_weights_sum_probabilities() -> None:
    parts = make_parts(n_samples=6)
    weights = FusionWeights(weights=(2, 3, 4, 4, 5))

    result = fuse(weights, parts)

    expected = sum(w * p.probabilities for w, p in zip(weights.weights, parts))
    np.testing.assert_allclose(result.scores, expected)
    assert result.predicted.tolist() == expected.argmax(axis=1).tolist()


def test_fused_ties_pick_lowest_class() -> None:
    parts = [
        PartPredictions(
            part=p, class_names=["a", "b"], sample_ids=["x"], probabilities=[[0.5, 0.5]], labels=[1]
        )
        for p in PART_LABELS
    ]

    result = fuse(FusionWeights(weights=(5, 4, 3, 2, 1)), parts)

    assert result.predicted.tolist() == [0]
    assert result.accuracy == 0.0


def test_mapping_input_is_reordered() -> None:
    parts = make_parts()
    by_name = {p.part: p for p in reversed(parts)}

    stacked, _ = stack_parts(by_name)

    np.testing.assert_array_equal(stacked[0], parts[0].probabilities)


def test_grid_counts_agree_with_fuse() -> None:
    parts = make_parts(seed=4)
    stacked, labels = stack_parts(parts)

    counts = grid_correct_counts(stacked, labels)

    check = FusionWeights(weights=tuple(int(w) for w in WEIGHT_GRID[777]))  # type: ignore[arg-type]
    assert counts[777] == round(fuse(check, parts).accuracy * len(labels))


def test_misaligned_samples() -> None:
    parts = make_parts()
    parts[2] = parts[2].model_copy(update={"sample_ids": list(reversed(parts[2].sample_ids))})

    with pytest.raises(FusionError, match="not aligned"):
        search_weights(parts)


def test_missing_part() -> None:
    by_name = {p.part: p for p in make_parts()[:4]}

    with pytest.raises(FusionError, match="missing part predictions: RH"):
        stack_parts(by_name)


def test_search_needs_samples() -> None:
    with pytest.raises(FusionError, match="zero samples"):
        search_weights(make_parts(n_samples=0))


class TestFusionWeights:
    def test_parse_accepts_braces(self) -> None:
        assert FusionWeights.parse("{2, 3, 4, 4, 5}").weights == (2, 3, 4, 4, 5)
        assert str(FusionWeights.parse("1,1,1,1,1")) == "{1,1,1,1,1}"

    @pytest.mark.parametrize("text", ["1,2,3", "0,1,1,1,1", "a,b,c,d,e", "6,1,1,1,1"])
    def test_parse_rejects(self, text: str) -> None:
        with pytest.raises(ValueError):
            FusionWeights.parse(text)
