"""
Training and prediction of one part branch.
"""

import math
from typing import Callable

import numpy as np

from app.engine.optim import AdamState, adam_step
from app.engine.tensor import Tape, Tensor, backward
from app.models.cass import CassImage
from app.models.network import ArchitectureConfig
from app.models.skeleton import DatasetManifest, Fold
from app.models.training import EpochRecord, PartPredictions, TrainingConfig, TrainingResult
from app.network.riac import RiacNetModel, model_loss
from app.services.corpus import CassCorpus
from app.utils.logger import RunContextLogger, get_logger
from app.utils.seeding import derive_seed, make_rng

logger = get_logger(__name__)

EVAL_BATCH = 64


class TrainingError(Exception):
    """Training cannot start or continue."""
    pass


class TrainingDivergedError(TrainingError):
    """The loss became non-finite."""
    pass


def validation_split(
    ids: list[str], labels: list[int] | np.ndarray, fraction: float, seed: int
) -> tuple[list[str], list[str]]:
    """
    Stratified, seeded hold-out of ``fraction`` of each class.

    Every class with at least two sequences contributes at least one
    validation sequence and keeps at least one for training. Both returned
    lists keep the input order.
    """
    labels = np.asarray(labels)
    if fraction <= 0 or not ids:
        return list(ids), []
    rng = np.random.default_rng(seed)
    held: set[str] = set()
    for label in np.unique(labels):
        members = [sid for sid, y in zip(ids, labels) if y == label]
        if len(members) < 2:
            continue
        count = min(len(members) - 1, max(1, int(round(fraction * len(members)))))
        held.update(rng.choice(members, size=count, replace=False).tolist())
    return [sid for sid in ids if sid not in held], [sid for sid in ids if sid in held]


def _stack(images: list[CassImage]) -> np.ndarray:
    return np.stack([image.as_float() for image in images])


def evaluate_batches(
    model: RiacNetModel, x: np.ndarray, labels: np.ndarray, batch_size: int = EVAL_BATCH
) -> tuple[np.ndarray, float]:
    """Eval-mode probabilities and mean cross-entropy over a dataset."""
    probs = np.empty((len(x), model.config.n_classes))
    total = 0.0
    for start in range(0, len(x), batch_size):
        stop = start + batch_size
        batch_probs, loss = model_loss(Tensor(x[start:stop]), labels[start:stop], model, "eval")
        probs[start:stop] = batch_probs
        total += loss.item() * len(batch_probs)
    return probs, total / max(1, len(x))


def _train_step(
    model: RiacNetModel,
    x: np.ndarray,
    y: np.ndarray,
    state: AdamState,
    noise_sigma: float,
    noise_rng: np.random.Generator,
    dropout_rng: np.random.Generator,
) -> tuple[float, np.ndarray]:
    params = model.parameters()
    clean: dict[str, np.ndarray] = {}
    if noise_sigma > 0:
        for name, p in params.items():
            clean[name] = p.data
            p.data = p.data + noise_rng.normal(0.0, noise_sigma, size=p.shape)

    with Tape() as tape:
        probs, loss = model_loss(Tensor(x), y, model, "train", dropout_rng)
    value = loss.item()
    if math.isfinite(value):
        backward(tape, loss, params.values())

    for name, data in clean.items():
        params[name].data = data
    if math.isfinite(value):
        adam_step(params, state)
    return value, probs


def train_part(
    corpus: CassCorpus,
    fold: Fold,
    part: str,
    architecture: ArchitectureConfig,
    config: TrainingConfig,
    manifest: DatasetManifest | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> tuple[RiacNetModel, TrainingResult]:
    """
    Train one part branch from scratch on a fold's training side.

    Augmented variants join training only for training ids; the validation
    slice uses originals. The returned model holds the parameters of the
    epoch with the lowest validation loss (training loss when there is no
    validation slice).
    """
    run_log = RunContextLogger(logger, f"{part}/{fold.name}")
    labels_from = manifest or corpus.manifest
    if not fold.train_ids:
        raise TrainingError(f"{part}/{fold.name}: empty training split")

    train_ids, val_ids = validation_split(
        fold.train_ids,
        [labels_from.entry(sid).label for sid in fold.train_ids],
        config.validation_fraction,
        derive_seed(config.seed, "validation", fold.name),
    )
    train_images, y_train = corpus.load(
        part, train_ids, include_augmented=True, manifest=manifest
    )
    if not train_images:
        raise TrainingError(f"{part}/{fold.name}: no training images")
    x_train = _stack(train_images)
    x_val, y_val = np.empty((0,)), np.empty((0,), dtype=np.int64)
    if val_ids:
        val_images, y_val = corpus.load(part, val_ids, manifest=manifest)
        x_val = _stack(val_images)

    init_seed = derive_seed(config.seed, "init", part, fold.name)
    model = RiacNetModel.initialize(architecture, init_seed)
    state = AdamState(lr=config.learning_rate)
    shuffle_rng = make_rng(config.seed, "shuffle", part, fold.name)
    noise_rng = make_rng(config.seed, "weight-noise", part, fold.name)
    dropout_rng = make_rng(config.seed, "dropout", part, fold.name)

    result = TrainingResult(part=part, fold=fold.name, validation_ids=val_ids)
    best_loss = math.inf
    best_snapshot = model.snapshot()
    stale = 0
    n = len(x_train)
    run_log.info(
        "Training started",
        train_images=n,
        validation=len(val_ids),
        parameters=model.parameter_count(),
    )

    for epoch in range(config.max_epochs):
        state.lr = config.lr_at(epoch)
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, probs = _train_step(
                model,
                x_train[idx],
                y_train[idx],
                state,
                config.weight_noise,
                noise_rng,
                dropout_rng,
            )
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"{part}/{fold.name}: non-finite loss at epoch {epoch} "
                    f"(batch at {start}, lr {state.lr:.3g})"
                )
            loss_sum += loss * len(idx)
            correct += int(np.sum(probs.argmax(axis=1) == y_train[idx]))

        record = EpochRecord(
            epoch=epoch, lr=state.lr, train_loss=loss_sum / n, train_accuracy=correct / n
        )
        if len(x_val):
            val_probs, val_loss = evaluate_batches(model, x_val, y_val)
            record.val_loss = val_loss
            record.val_accuracy = float(np.mean(val_probs.argmax(axis=1) == y_val))
        result.history.append(record)
        if on_epoch is not None:
            on_epoch(record)

        monitored = record.val_loss if record.val_loss is not None else record.train_loss
        if monitored < best_loss:
            best_loss = monitored
            best_snapshot = model.snapshot()
            result.best_epoch = epoch
            stale = 0
        else:
            stale += 1
        result.stopped_epoch = epoch
        run_log.debug(
            "epoch done",
            epoch=epoch,
            loss=record.train_loss,
            acc=record.train_accuracy,
            val_loss=record.val_loss if record.val_loss is not None else "-",
        )
        if stale >= config.patience:
            result.early_stopped = True
            break

    model.restore(best_snapshot)
    best = result.best
    run_log.info(
        "Training finished",
        epochs=result.stopped_epoch + 1,
        best_epoch=result.best_epoch,
        early_stopped=result.early_stopped,
        train_acc=best.train_accuracy if best else "-",
    )
    return model, result


def predict_part(
    model: RiacNetModel,
    corpus: CassCorpus,
    sample_ids: list[str],
    part: str,
    manifest: DatasetManifest | None = None,
) -> PartPredictions:
    """Eval-mode probabilities for un-augmented images, in ``sample_ids`` order."""
    labels_from = manifest or corpus.manifest
    images, labels = corpus.load(part, sample_ids, manifest=manifest)
    if images:
        probs, _ = evaluate_batches(model, _stack(images), labels)
    else:
        probs = np.empty((0, model.config.n_classes))
    return PartPredictions(
        part=part,
        class_names=labels_from.class_names,
        sample_ids=list(sample_ids),
        probabilities=probs,
        labels=labels,
    )
