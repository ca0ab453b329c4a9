from pathlib import Path

import numpy as np
import pytest

from app.datasets.canonical import ingest, load_sequences, read_manifest
from app.models.cass import RenderConfig
from app.models.network import ArchitectureConfig, StcfConfig
from app.models.skeleton import ALL_PARTS
from app.models.training import FusionWeights, TrainingConfig
from app.services.corpus import CassCorpus, render_corpus
from app.services.evaluation import (
    ALL_ROW,
    OVERALL,
    ReportRow,
    evaluate_protocol,
    overall_row,
)
from app.services.metrics import compute_metrics
from app.services.reporting import (
    REPORT_JSON,
    REPORT_TABLE,
    format_report,
    load_reference,
    read_predictions,
    read_report,
    write_evaluation,
)

FAST = TrainingConfig(max_epochs=2, batch_size=4, patience=5, validation_fraction=0.5, seed=1)


def report_row(name: str, part_accuracy: float, fused: float) -> ReportRow:
    return ReportRow(
        name=name,
        n_folds=1,
        n_test=10,
        test_accuracy={p: part_accuracy for p in ALL_PARTS},
        train_loss={p: 0.5 for p in ALL_PARTS},
        train_accuracy={p: 0.9 for p in ALL_PARTS},
        fused_accuracy=fused,
        weights="{1,1,1,1,1}",
        fused_auc=0.8,
    )


def test_cross_subject_run(
    tmp_path: Path, synthetic_corpus: CassCorpus, narrow_arch: ArchitectureConfig
) -> None:
    report = evaluate_protocol(
        synthetic_corpus.manifest,
        synthetic_corpus,
        "cross-subject",
        narrow_arch,
        FAST,
        checkpoint_dir=tmp_path / "ckpt",
        jobs=2,
    )

    (row,) = report.rows
    (subset,) = report.subsets
    assert row.name == ALL_ROW
    assert (row.n_folds, row.n_test) == (1, 6)
    assert 0.0 <= row.fused_accuracy <= 1.0
    assert set(row.test_accuracy) == set(ALL_PARTS)
    assert subset.fused_scores.shape == (6, 3)
    np.testing.assert_allclose(subset.fused_scores.sum(axis=1), 1.0)
    assert len(subset.histories) == len(ALL_PARTS)
    assert (tmp_path / "ckpt" / "cross-subject" / "FS.ckpt").is_file()


def test_fixed_weights_are_reported(
    synthetic_corpus: CassCorpus, narrow_arch: ArchitectureConfig
) -> None:
    weights = FusionWeights(weights=(2, 3, 4, 4, 5))

    report = evaluate_protocol(
        synthetic_corpus.manifest,
        synthetic_corpus,
        "cross-subject",
        narrow_arch,
        FAST.model_copy(update={"max_epochs": 1}),
        fixed_weights=weights,
    )

    assert report.rows[0].weights == "{2,3,4,4,5}"
    assert report.subsets[0].folds[0].weights == "{2,3,4,4,5}"


def test_validation_fusion_mode(
    synthetic_corpus: CassCorpus, narrow_arch: ArchitectureConfig
) -> None:
    report = evaluate_protocol(
        synthetic_corpus.manifest,
        synthetic_corpus,
        "cross-subject",
        narrow_arch,
        FAST.model_copy(update={"max_epochs": 1}),
        fusion_mode="validation",
    )

    assert report.fusion_mode == "validation"
    assert FusionWeights.parse(report.rows[0].weights or "")


def test_same_seed_gives_identical_report(
    synthetic_corpus: CassCorpus, narrow_arch: ArchitectureConfig
) -> None:
    def run() -> np.ndarray:
        report = evaluate_protocol(
            synthetic_corpus.manifest,
            synthetic_corpus,
            "cross-subject",
            narrow_arch,
            FAST.model_copy(update={"max_epochs": 1}),
            jobs=3,
        )
        return report.subsets[0].fused_scores

    assert np.array_equal(run(), run())


def test_overall_row_averages_subsets() -> None:
    rows = [report_row("AS1", 0.8, 0.9), report_row("AS2", 0.6, 0.7)]

    overall = overall_row(rows)

    assert overall.name == OVERALL
    assert overall.test_accuracy["HS"] == pytest.approx(0.7)
    assert overall.fused_accuracy == pytest.approx(0.8)
    assert overall.n_test == 20
    assert overall.weights is None


def test_written_artifacts_reload(
    tmp_path: Path, synthetic_corpus: CassCorpus, narrow_arch: ArchitectureConfig
) -> None:
    report = evaluate_protocol(
        synthetic_corpus.manifest,
        synthetic_corpus,
        "cross-subject",
        narrow_arch,
        FAST.model_copy(update={"max_epochs": 1}),
    )

    written = write_evaluation(report, tmp_path)
    document = read_report(tmp_path)
    pooled = read_predictions(tmp_path / ALL_ROW / "predictions" / "HS.csv")

    assert tmp_path / REPORT_JSON in written
    assert (tmp_path / REPORT_TABLE).is_file()
    assert (tmp_path / ALL_ROW / "confusion_fused.csv").is_file()
    assert (tmp_path / ALL_ROW / "history" / "FS_cross-subject.csv").is_file()
    assert document.rows[0].fused_accuracy == pytest.approx(report.rows[0].fused_accuracy)
    np.testing.assert_allclose(
        pooled.probabilities, report.subsets[0].pooled["HS"].probabilities, rtol=0, atol=0
    )
    assert "weight order: HS,LL,RL,LH,RH" in format_report(document, load_reference())


@pytest.mark.slow
def test_synthetic_cross_subject_learns_the_classes(tmp_path: Path) -> None:
    ingest("synthetic", "", tmp_path / "ingest", seed=0, synthetic_subjects=10)
    manifest = read_manifest(tmp_path / "ingest")
    sequences = load_sequences(manifest, tmp_path / "ingest")
    render_corpus(manifest, sequences, tmp_path / "corpus", RenderConfig(image_size=56), jobs=2)
    architecture = ArchitectureConfig(
        image_size=56, n_classes=3, stcf=StcfConfig.uniform(4), hidden_size=8, dropout=0.0
    )
    training = TrainingConfig(
        max_epochs=200,
        batch_size=7,
        learning_rate=3e-3,
        lr_decay_every=50,
        patience=200,
        weight_noise=0.0,
        validation_fraction=0.0,
        seed=0,
    )

    report = evaluate_protocol(
        manifest,
        CassCorpus(tmp_path / "corpus"),
        "cross-subject",
        architecture,
        training,
        test_subjects=[2, 5, 8],
        jobs=2,
    )

    (subset,) = report.subsets
    assert len(sequences) == 30
    assert report.rows[0].n_test == 9
    full_body = next(h for h in subset.histories if h.part == "FS")
    assert max(record.train_accuracy for record in full_body.history) == 1.0
    metrics = compute_metrics(
        subset.fused_scores, subset.pooled["HS"].labels, subset.class_names, subset.fused_predicted
    )
    assert metrics.accuracy >= 0.9
    assert np.trace(metrics.confusion) == round(metrics.accuracy * 9)
