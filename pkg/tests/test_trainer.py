import numpy as np
import pytest

from app.datasets.splits import make_splits
from app.models.network import ArchitectureConfig
from app.models.skeleton import DatasetManifest, Fold
from app.models.training import TrainingConfig
from app.network.riac import RiacNetModel
from app.services.corpus import CassCorpus, CorpusError
from app.services.trainer import TrainingError, predict_part, train_part, validation_split


def quick_training(**overrides: object) -> TrainingConfig:
    values: dict[str, object] = {
        "max_epochs": 3,
        "batch_size": 4,
        "patience": 10,
        "validation_fraction": 0.5,
        "weight_noise": 0.01,
        "seed": 3,
    }
    values.update(overrides)
    return TrainingConfig(**values)  # type: ignore[arg-type]


def cross_subject_fold(manifest: DatasetManifest) -> Fold:
    return make_splits(manifest, "cross-subject").folds[0]


class TestValidationSplit:
    def test_stratified_and_order_preserving(self) -> None:
        ids = ["a", "b", "c", "d", "e"]

        train, val = validation_split(ids, [0, 0, 0, 1, 1], 0.4, seed=1)

        assert len(val) == 2
        assert sorted(train + val) == ids
        assert train == [sid for sid in ids if sid in train]
        assert {sid in val for sid in ("d", "e")} == {True, False}

    def test_seeded(self) -> None:
        ids = [f"s{i}" for i in range(20)]
        labels = [i % 4 for i in range(20)]

        assert validation_split(ids, labels, 0.3, 7) == validation_split(ids, labels, 0.3, 7)

    def test_singleton_class_stays_in_training(self) -> None:
        train, val = validation_split(["a", "b", "c"], [0, 0, 1], 0.5, seed=0)

        assert "c" in train
        assert len(val) == 1

    def test_zero_fraction(self) -> None:
        assert validation_split(["a", "b"], [0, 0], 0.0, seed=0) == (["a", "b"], [])


class TestTrainPart:
    def test_history_and_schedule(
        self, synthetic_corpus: CassCorpus, narrow_arch: ArchitectureConfig
    ) -> None:
        fold = cross_subject_fold(synthetic_corpus.manifest)
        config = quick_training(lr_decay=0.5, lr_decay_every=1)

        model, result = train_part(synthetic_corpus, fold, "HS", narrow_arch, config)

        assert [r.epoch for r in result.history] == [0, 1, 2]
        assert [r.lr for r in result.history] == pytest.approx([1e-3, 5e-4, 2.5e-4])
        assert len(result.validation_ids) == 3
        assert all(r.val_loss is not None for r in result.history)
        assert 0 <= result.best_epoch <= 2
        assert result.early_stopped is False
        assert np.all(np.isfinite(model["dense.w"].data))

    def test_same_seed_gives_identical_parameters(
        self, synthetic_corpus: CassCorpus, narrow_arch: ArchitectureConfig
    ) -> None:
        fold = cross_subject_fold(synthetic_corpus.manifest)

        first, _ = train_part(synthetic_corpus, fold, "LH", narrow_arch, quick_training())
        second, _ = train_part(synthetic_corpus, fold, "LH", narrow_arch, quick_training())

        for name, array in first.snapshot().items():
            assert np.array_equal(array, second.snapshot()[name]), name

    def test_epoch_callback(
        self, synthetic_corpus: CassCorpus, narrow_arch: ArchitectureConfig
    ) -> None:
        seen: list[int] = []
        fold = cross_subject_fold(synthetic_corpus.manifest)

        train_part(
            synthetic_corpus,
            fold,
            "FS",
            narrow_arch,
            quick_training(max_epochs=2, validation_fraction=0.0),
            on_epoch=lambda record: seen.append(record.epoch),
        )

        assert seen == [0, 1]

    def test_empty_training_side(
        self, synthetic_corpus: CassCorpus, narrow_arch: ArchitectureConfig
    ) -> None:
        fold = Fold(name="empty", train_ids=[], test_ids=["syn_s02_c0"])

        with pytest.raises(TrainingError, match="empty training split"):
            train_part(synthetic_corpus, fold, "HS", narrow_arch, quick_training())


class TestPredictPart:
    def test_keeps_sample_order(
        self, synthetic_corpus: CassCorpus, narrow_arch: ArchitectureConfig
    ) -> None:
        fold = cross_subject_fold(synthetic_corpus.manifest)
        model, _ = train_part(
            synthetic_corpus, fold, "RL", narrow_arch, quick_training(max_epochs=1)
        )
        ids = list(reversed(fold.test_ids))

        preds = predict_part(model, synthetic_corpus, ids, "RL")

        assert preds.sample_ids == ids
        assert preds.labels.tolist() == [synthetic_corpus.manifest.entry(s).label for s in ids]
        assert preds.probabilities.shape == (len(ids), 3)
        np.testing.assert_allclose(preds.probabilities.sum(axis=1), 1.0)

    def test_unknown_sequence(
        self, synthetic_corpus: CassCorpus, narrow_arch: ArchitectureConfig
    ) -> None:
        model = RiacNetModel.initialize(narrow_arch, seed=0)

        with pytest.raises(CorpusError, match="no RL image for sequence nope"):
            predict_part(model, synthetic_corpus, ["nope"], "RL")
