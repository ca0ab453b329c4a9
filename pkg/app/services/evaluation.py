"""
Protocol evaluation: per-fold training and prediction of every part branch,
fusion weight search, and aggregation into report rows.
"""

from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.datasets.splits import make_splits
from app.models.network import ArchitectureConfig
from app.models.skeleton import ALL_PARTS, MSR_SUBSETS, PART_LABELS, DatasetManifest, Fold
from app.models.training import (
    FusionMode,
    FusionWeights,
    Metrics,
    PartPredictions,
    TrainingConfig,
    TrainingResult,
)
from app.services.corpus import CassCorpus
from app.services.fusion import FusionError, fuse, search_weights
from app.services.metrics import compute_metrics
from app.services.trainer import predict_part, train_part
from app.utils.logger import RunContextLogger, get_logger

logger = get_logger(__name__)

OVERALL = "Overall"
ALL_ROW = "all"


class ReportRow(BaseModel):
    """One row of the per-part / fused accuracy table."""

    name: str
    n_folds: int
    n_test: int
    test_accuracy: dict[str, float]
    train_loss: dict[str, float]
    train_accuracy: dict[str, float]
    fused_accuracy: float
    weights: str | None = None
    fused_auc: float | None = None


class FoldOutcome(BaseModel):
    subset: str
    fold: str
    n_test: int
    part_accuracy: dict[str, float]
    weights: str
    fused_accuracy: float


class SubsetEvaluation(BaseModel):
    """Everything computed for one subset (or the whole dataset)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str
    class_names: list[str]
    row: ReportRow
    folds: list[FoldOutcome]
    pooled: dict[str, PartPredictions]
    fused_scores: np.ndarray
    fused_predicted: np.ndarray
    fused_metrics: Metrics
    histories: list[TrainingResult] = Field(default_factory=list)


class EvaluationReport(BaseModel):
    dataset: str
    protocol: str
    fusion_mode: FusionMode
    seed: int
    subsets: list[SubsetEvaluation]
    rows: list[ReportRow]


def _concat(preds: list[PartPredictions]) -> PartPredictions:
    first = preds[0]
    return PartPredictions(
        part=first.part,
        class_names=first.class_names,
        sample_ids=[sid for p in preds for sid in p.sample_ids],
        probabilities=np.concatenate([p.probabilities for p in preds]),
        labels=np.concatenate([p.labels for p in preds]),
    )


def _mean(values: list[float]) -> float:
    return float(np.mean(values)) if values else 0.0


def _most_common(weights: list[FusionWeights]) -> FusionWeights:
    counts = Counter(w.weights for w in weights)
    top = max(counts.values())
    return FusionWeights(weights=min(w for w, c in counts.items() if c == top))


class FoldRunner:
    """Trains and predicts every part of one fold."""

    def __init__(
        self,
        corpus: CassCorpus,
        manifest: DatasetManifest,
        architecture: ArchitectureConfig,
        training: TrainingConfig,
        fusion_mode: FusionMode,
        jobs: int = 1,
        checkpoint_dir: Path | None = None,
    ) -> None:
        self.corpus = corpus
        self.manifest = manifest
        self.architecture = architecture
        self.training = training
        self.fusion_mode = fusion_mode
        self.jobs = max(1, jobs)
        self.checkpoint_dir = checkpoint_dir

    def run_part(
        self, fold: Fold, part: str
    ) -> tuple[PartPredictions, PartPredictions | None, TrainingResult]:
        model, result = train_part(
            self.corpus, fold, part, self.architecture, self.training, self.manifest
        )
        if self.checkpoint_dir is not None:
            model.save(
                self.checkpoint_dir / fold.name / f"{part}.ckpt",
                {"part": part, "fold": fold.name, "seed": self.training.seed},
            )
        test = predict_part(model, self.corpus, fold.test_ids, part, self.manifest)
        val = None
        if self.fusion_mode == "validation" and result.validation_ids:
            val = predict_part(model, self.corpus, result.validation_ids, part, self.manifest)
        return test, val, result

    def run(
        self, fold: Fold
    ) -> tuple[dict[str, PartPredictions], dict[str, PartPredictions], list[TrainingResult]]:
        with ThreadPoolExecutor(max_workers=self.jobs) as pool:
            outcomes = list(pool.map(lambda part: self.run_part(fold, part), ALL_PARTS))
        tests = {part: out[0] for part, out in zip(ALL_PARTS, outcomes)}
        vals = {part: out[1] for part, out in zip(ALL_PARTS, outcomes) if out[1] is not None}
        return tests, vals, [out[2] for out in outcomes]


def evaluate_subset(
    name: str,
    manifest: DatasetManifest,
    runner: FoldRunner,
    protocol: str,
    test_subjects: list[int] | None = None,
    fixed_weights: FusionWeights | None = None,
    on_fold: Callable[[FoldOutcome], None] | None = None,
) -> SubsetEvaluation:
    splits = make_splits(manifest, protocol, test_subjects)
    run_log = RunContextLogger(logger, f"{manifest.dataset}/{name}")
    run_log.info("Evaluating", protocol=protocol, folds=len(splits.folds))

    fold_tests: list[dict[str, PartPredictions]] = []
    fold_vals: list[dict[str, PartPredictions]] = []
    histories: list[TrainingResult] = []
    for fold in splits.folds:
        tests, vals, results = runner.run(fold)
        fold_tests.append(tests)
        fold_vals.append(vals)
        histories.extend(results)

    pooled = {part: _concat([t[part] for t in fold_tests]) for part in ALL_PARTS}

    if fixed_weights is not None:
        fold_weights = [fixed_weights] * len(fold_tests)
    elif runner.fusion_mode == "test":
        best, _ = search_weights({p: pooled[p] for p in PART_LABELS})
        fold_weights = [best] * len(fold_tests)
    else:
        fold_weights = []
        for tests, vals in zip(fold_tests, fold_vals):
            source = vals if len(vals) == len(ALL_PARTS) else tests
            if source is tests:
                run_log.warning("No validation predictions; tuning fusion weights on test fold")
            best, _ = search_weights({p: source[p] for p in PART_LABELS})
            fold_weights.append(best)

    outcomes: list[FoldOutcome] = []
    fused_scores: list[np.ndarray] = []
    fused_predicted: list[np.ndarray] = []
    for fold, tests, weights in zip(splits.folds, fold_tests, fold_weights):
        try:
            fused = fuse(weights, {p: tests[p] for p in PART_LABELS})
        except FusionError as e:
            raise FusionError(f"fold {fold.name}: {e}") from e
        fused_scores.append(fused.scores / weights.as_array().sum())
        fused_predicted.append(fused.predicted)
        outcome = FoldOutcome(
            subset=name,
            fold=fold.name,
            n_test=len(fold.test_ids),
            part_accuracy={p: tests[p].accuracy() for p in ALL_PARTS},
            weights=str(weights),
            fused_accuracy=fused.accuracy,
        )
        outcomes.append(outcome)
        if on_fold is not None:
            on_fold(outcome)
        run_log.child(fold.name).info("Fold done", fused=fused.accuracy, weights=str(weights))

    scores = np.concatenate(fused_scores)
    predicted = np.concatenate(fused_predicted)
    labels = pooled[PART_LABELS[0]].labels
    metrics = compute_metrics(scores, labels, manifest.class_names, predicted=predicted)

    def best_record_mean(part: str, field: str) -> float:
        values = [
            getattr(h.best, field) for h in histories if h.part == part and h.best is not None
        ]
        return _mean(values)

    row = ReportRow(
        name=name,
        n_folds=len(outcomes),
        n_test=int(labels.size),
        test_accuracy={p: _mean([o.part_accuracy[p] for o in outcomes]) for p in ALL_PARTS},
        train_loss={p: best_record_mean(p, "train_loss") for p in ALL_PARTS},
        train_accuracy={p: best_record_mean(p, "train_accuracy") for p in ALL_PARTS},
        fused_accuracy=_mean([o.fused_accuracy for o in outcomes]),
        weights=str(_most_common(fold_weights)),
        fused_auc=metrics.roc.macro_auc,
    )
    run_log.info("Subset done", fused=row.fused_accuracy, weights=row.weights)
    return SubsetEvaluation(
        name=name,
        class_names=manifest.class_names,
        row=row,
        folds=outcomes,
        pooled=pooled,
        fused_scores=scores,
        fused_predicted=predicted,
        fused_metrics=metrics,
        histories=histories,
    )


def overall_row(rows: list[ReportRow]) -> ReportRow:
    """Column-wise mean of subset rows."""

    def mean_of(attr: str) -> dict[str, float]:
        return {p: _mean([getattr(r, attr)[p] for r in rows]) for p in ALL_PARTS}

    aucs = [r.fused_auc for r in rows if r.fused_auc is not None]
    return ReportRow(
        name=OVERALL,
        n_folds=sum(r.n_folds for r in rows),
        n_test=sum(r.n_test for r in rows),
        test_accuracy=mean_of("test_accuracy"),
        train_loss=mean_of("train_loss"),
        train_accuracy=mean_of("train_accuracy"),
        fused_accuracy=_mean([r.fused_accuracy for r in rows]),
        weights=None,
        fused_auc=_mean(aucs) if aucs else None,
    )


def evaluate_protocol(
    manifest: DatasetManifest,
    corpus: CassCorpus,
    protocol: str,
    architecture: ArchitectureConfig,
    training: TrainingConfig,
    fusion_mode: FusionMode = "test",
    test_subjects: list[int] | None = None,
    fixed_weights: FusionWeights | None = None,
    jobs: int = 1,
    checkpoint_dir: Path | None = None,
) -> EvaluationReport:
    """
    Full protocol run. MSR is evaluated per action subset with an extra
    Overall row; other datasets produce a single row.
    """
    subsets: list[SubsetEvaluation] = []
    if manifest.dataset == "msr":
        for tag in MSR_SUBSETS:
            sub_manifest = manifest.subset(tag)
            runner = FoldRunner(
                corpus,
                sub_manifest,
                architecture.model_copy(update={"n_classes": len(sub_manifest.class_names)}),
                training,
                fusion_mode,
                jobs,
                checkpoint_dir / tag if checkpoint_dir else None,
            )
            subsets.append(
                evaluate_subset(tag, sub_manifest, runner, protocol, test_subjects, fixed_weights)
            )
        rows = [s.row for s in subsets]
        rows.append(overall_row(rows))
    else:
        runner = FoldRunner(
            corpus,
            manifest,
            architecture.model_copy(update={"n_classes": len(manifest.class_names)}),
            training,
            fusion_mode,
            jobs,
            checkpoint_dir,
        )
        subsets.append(
            evaluate_subset(ALL_ROW, manifest, runner, protocol, test_subjects, fixed_weights)
        )
        rows = [subsets[0].row]

    return EvaluationReport(
        dataset=manifest.dataset,
        protocol=protocol,
        fusion_mode=fusion_mode,
        seed=training.seed,
        subsets=subsets,
        rows=rows,
    )

