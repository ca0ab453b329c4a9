"""
Command-line entry point.

    skeleton-har <command> [--config FILE] [--jobs N] [--<key> <value> ...]

Commands: ingest, render, train, predict, fuse, evaluate, gradcheck, report.
Every command writes resolved_config.conf and run.log into its output
directory (``output_dir``, default ``$RIAC_OUTPUT_ROOT/<command>``).
"""

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import pandas as pd

from app.config import settings
from app.datasets.canonical import MANIFEST_NAME, ingest, load_sequences, read_manifest
from app.datasets.errors import (
    DatasetIOError,
    DatasetParseError,
    DegenerateSequenceError,
    PartitionError,
    SplitError,
)
from app.datasets.splits import make_splits
from app.engine.checkpoint import CheckpointError
from app.engine.tensor import KinkProximityError
from app.models.run_config import RunConfig
from app.models.skeleton import ALL_PARTS, PART_LABELS, DatasetManifest, Fold
from app.network.riac import ModelError, RiacNetModel
from app.services.config_store import ConfigError, ConfigStore, parse_overrides
from app.services.corpus import CassCorpus, CorpusError, render_corpus
from app.services.evaluation import evaluate_protocol
from app.services.fusion import fuse, search_weights
from app.services.gradcheck_suite import results_frame, run_gradchecks
from app.services.metrics import compute_metrics
from app.services.reporting import (
    ReportError,
    confusion_frame,
    format_report,
    key_value_text,
    load_reference,
    read_predictions,
    read_report,
    roc_frame,
    write_evaluation,
    write_history,
    write_predictions,
)
from app.services.trainer import predict_part, train_part
from app.utils.logger import get_logger, log_buffer, setup_logging

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_IO = 4
EXIT_VERIFICATION = 5

RUN_LOG = "run.log"


class VerificationError(Exception):
    """A verification command found results above threshold."""
    pass


@dataclass
class CommandContext:
    config: RunConfig
    out_dir: Path
    jobs: int


# --- helpers ---


def _require(config: RunConfig, key: str) -> Path:
    value = getattr(config, key)
    if not value:
        raise ConfigError(f"{key} is required for this command (set it in the config or --{key})")
    return Path(value)


def _open_corpus(config: RunConfig) -> CassCorpus:
    corpus = CassCorpus(_require(config, "corpus_dir"))
    if corpus.image_size != config.image_size:
        raise ConfigError(
            f"corpus images are {corpus.image_size}px but image_size = {config.image_size}"
        )
    return corpus


def _manifest_for(config: RunConfig, corpus: CassCorpus) -> DatasetManifest:
    if not config.subset:
        return corpus.manifest
    try:
        return corpus.manifest.subset(config.subset)
    except ValueError as e:
        raise ConfigError(f"subset {config.subset}: {e}") from e


def _fold_for(config: RunConfig, manifest: DatasetManifest) -> Fold:
    splits = make_splits(manifest, config.resolved_protocol(), config.test_subject_list())
    if not config.fold:
        return splits.folds[0]
    for fold in splits.folds:
        if fold.name == config.fold:
            return fold
    names = ", ".join(f.name for f in splits.folds[:5])
    raise ConfigError(f"unknown fold {config.fold!r}; folds look like: {names}, ...")


def _percent(value: float) -> str:
    return f"{100.0 * value:.2f}"


# --- commands ---


def cmd_ingest(ctx: CommandContext) -> None:
    config = ctx.config
    if config.dataset != "synthetic":
        _require(config, "raw_path")
    manifest = ingest(
        config.dataset,
        config.raw_path,
        ctx.out_dir,
        msr_rows_per_frame=config.msr_rows_per_frame,
        seed=config.seed,
        synthetic_subjects=config.synthetic_subjects,
    )
    print(
        f"{config.dataset}: {len(manifest.entries)} sequences, "
        f"{len(manifest.class_names)} classes, {len(manifest.subject_ids)} subjects "
        f"-> {ctx.out_dir}"
    )


def cmd_render(ctx: CommandContext) -> None:
    config = ctx.config
    data_dir = _require(config, "data_dir")
    manifest = read_manifest(data_dir / MANIFEST_NAME)
    sequences = load_sequences(manifest, data_dir)
    index = render_corpus(
        manifest,
        sequences,
        ctx.out_dir,
        config.render_config(),
        config.augmentation_spec(),
        config.sequence_length,
        ctx.jobs,
    )
    print(
        f"{len(index)} images ({len(manifest.entries)} sequences x {len(ALL_PARTS)} parts, "
        f"augmentations={config.augmentations}) -> {ctx.out_dir}"
    )


def cmd_train(ctx: CommandContext) -> None:
    config = ctx.config
    corpus = _open_corpus(config)
    manifest = _manifest_for(config, corpus)
    fold = _fold_for(config, manifest)
    architecture = config.architecture(len(manifest.class_names))
    training = config.training_config()

    def run(part: str) -> str:
        model, result = train_part(corpus, fold, part, architecture, training, manifest)
        model.save(
            ctx.out_dir / f"{part}.ckpt",
            {
                "part": part,
                "fold": fold.name,
                "dataset": manifest.dataset,
                "subset": config.subset,
                "seed": config.seed,
            },
        )
        write_history(result, ctx.out_dir / "history" / f"{part}.csv")
        best = result.best
        acc = _percent(best.train_accuracy) if best else "-"
        return (
            f"{part}: epochs={result.stopped_epoch + 1} best_epoch={result.best_epoch} "
            f"train_acc={acc} early_stopped={result.early_stopped}"
        )

    with ThreadPoolExecutor(max_workers=ctx.jobs) as pool:
        lines = list(pool.map(run, config.selected_parts()))
    print(f"fold {fold.name}: {len(fold.train_ids)} train / {len(fold.test_ids)} test sequences")
    for line in lines:
        print(line)


def cmd_predict(ctx: CommandContext) -> None:
    config = ctx.config
    model_dir = _require(config, "model_dir")
    corpus = _open_corpus(config)
    manifest = _manifest_for(config, corpus)
    fold = _fold_for(config, manifest)

    for part in config.selected_parts():
        path = model_dir / f"{part}.ckpt"
        if not path.is_file():
            raise CheckpointError(f"checkpoint for {part} not found: expected {path}")
        model, _ = RiacNetModel.load(path)
        if model.config.n_classes != len(manifest.class_names):
            raise ModelError(
                f"{path}: model has {model.config.n_classes} classes, "
                f"dataset has {len(manifest.class_names)}"
            )
        preds = predict_part(model, corpus, fold.test_ids, part, manifest)
        write_predictions(preds, ctx.out_dir / f"{part}.csv")
        print(f"{part}: {len(preds.sample_ids)} samples, accuracy={_percent(preds.accuracy())}")


def cmd_fuse(ctx: CommandContext) -> None:
    config = ctx.config
    pred_dir = _require(config, "predictions_dir")
    parts = {part: read_predictions(pred_dir / f"{part}.csv") for part in PART_LABELS}

    weights = config.fixed_weights()
    if weights is None:
        weights, _ = search_weights(parts)
    result = fuse(weights, parts)
    labels = parts[PART_LABELS[0]].labels
    class_names = parts[PART_LABELS[0]].class_names
    scores = result.scores / weights.as_array().sum()
    metrics = compute_metrics(scores, labels, class_names, predicted=result.predicted)

    row: dict[str, str] = {}
    full = pred_dir / f"{ALL_PARTS[0]}.csv"
    if full.is_file():
        row[ALL_PARTS[0]] = _percent(read_predictions(full).accuracy())
    row.update({part: _percent(parts[part].accuracy()) for part in PART_LABELS})
    row["fused"] = _percent(result.accuracy)
    row["weights"] = str(weights)

    fused = pd.DataFrame(scores, columns=[f"p{c}" for c in range(len(class_names))])
    fused.insert(0, "predicted", result.predicted)
    fused.insert(0, "true_label", labels)
    fused.insert(0, "sample_id", parts[PART_LABELS[0]].sample_ids)
    fused.to_csv(ctx.out_dir / "fused.csv", index=False, float_format="%.17g")
    confusion_frame(metrics.confusion, class_names).to_csv(ctx.out_dir / "confusion_fused.csv")
    roc_frame(metrics.roc).to_csv(ctx.out_dir / "roc_fused.csv", index=False)
    summary = {
        "weights": str(weights),
        "searched": config.fixed_weights() is None,
        "fused_accuracy": result.accuracy,
        "fused_auc": metrics.roc.macro_auc if metrics.roc.macro_auc is not None else "-",
    }
    (ctx.out_dir / "fusion.txt").write_text(key_value_text({"fusion": summary}), encoding="utf-8")

    print(pd.DataFrame([row]).to_string(index=False))


def _evaluation_corpus(ctx: CommandContext) -> CassCorpus:
    config = ctx.config
    if config.corpus_dir:
        return _open_corpus(config)
    if config.dataset != "synthetic":
        raise ConfigError("corpus_dir is required for evaluate unless dataset = synthetic")
    data_dir = ctx.out_dir / "data"
    corpus_dir = ctx.out_dir / "corpus"
    manifest = ingest(
        "synthetic", "", data_dir, seed=config.seed, synthetic_subjects=config.synthetic_subjects
    )
    render_corpus(
        manifest,
        load_sequences(manifest, data_dir),
        corpus_dir,
        config.render_config(),
        config.augmentation_spec(),
        config.sequence_length,
        ctx.jobs,
    )
    return CassCorpus(corpus_dir)


def cmd_evaluate(ctx: CommandContext) -> None:
    config = ctx.config
    corpus = _evaluation_corpus(ctx)
    manifest = corpus.manifest
    report = evaluate_protocol(
        manifest,
        corpus,
        config.resolved_protocol(),
        config.architecture(len(manifest.class_names)),
        config.training_config(),
        fusion_mode=config.fusion_mode,
        test_subjects=config.test_subject_list(),
        fixed_weights=config.fixed_weights(),
        jobs=ctx.jobs,
        checkpoint_dir=ctx.out_dir / "checkpoints",
    )
    write_evaluation(report, ctx.out_dir)
    print(format_report(read_report(ctx.out_dir), load_reference()), end="")


def cmd_gradcheck(ctx: CommandContext) -> None:
    config = ctx.config
    results = run_gradchecks(config.gradcheck_scope, config.gradcheck_eps, config.seed)
    frame = results_frame(results)
    frame.to_csv(ctx.out_dir / "gradcheck.csv", index=False)
    print(frame.to_string(index=False, float_format=lambda v: f"{v:.3e}"))
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise VerificationError(f"{len(failed)} gradient check(s) above threshold: {failed}")


def cmd_report(ctx: CommandContext) -> None:
    document = read_report(_require(ctx.config, "evaluation_dir"))
    text = format_report(document, load_reference())
    (ctx.out_dir / "comparison.txt").write_text(text, encoding="utf-8")
    print(text, end="")


COMMANDS: dict[str, Callable[[CommandContext], None]] = {
    "ingest": cmd_ingest,
    "render": cmd_render,
    "train": cmd_train,
    "predict": cmd_predict,
    "fuse": cmd_fuse,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
    "report": cmd_report,
}

COMMAND_HELP = {
    "ingest": "parse a raw dataset into canonical sequences and a manifest",
    "render": "render CASS images for every sequence and body part",
    "train": "train part branches on one fold",
    "predict": "write part-wise class probabilities for a fold's test side",
    "fuse": "fuse part predictions with fixed or searched weights",
    "evaluate": "run a full evaluation protocol",
    "gradcheck": "compare analytic and numeric gradients",
    "report": "print an evaluation next to the published operating points",
}


# --- entry point ---


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skeleton-har",
        description="Part-wise skeleton action recognition pipeline.",
        epilog="Any configuration key can be overridden with --<key> <value>.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMAND_HELP.items():
        cmd = sub.add_parser(name, help=help_text, allow_abbrev=False)
        cmd.add_argument("--config", type=Path, default=None, help="key = value config file")
        cmd.add_argument("--jobs", type=int, default=None, help="worker cap (default RIAC_JOBS)")
    return parser


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, (VerificationError, KinkProximityError)):
        return EXIT_VERIFICATION
    if isinstance(error, (DatasetIOError, CorpusError, CheckpointError, ReportError, OSError)):
        return EXIT_IO
    if isinstance(error, (DatasetParseError, DegenerateSequenceError, PartitionError)):
        return EXIT_PARSE
    if isinstance(error, (ConfigError, SplitError, ValueError)):
        return EXIT_USAGE
    return EXIT_FAILURE


def output_dir_for(config: RunConfig, command: str) -> Path:
    return Path(config.output_dir) if config.output_dir else Path(settings.output_root) / command


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    setup_logging()
    out_dir: Path | None = None
    try:
        if args.jobs is not None and args.jobs < 1:
            raise ConfigError(f"--jobs must be at least 1, got {args.jobs}")
        store = ConfigStore(args.config)
        config = store.load(parse_overrides(extra))
        out_dir = output_dir_for(config, args.command)
        store.write_resolved(out_dir)
        ctx = CommandContext(config=config, out_dir=out_dir, jobs=args.jobs or settings.jobs)
        logger.info(f"🚀 {args.command}: dataset={config.dataset} seed={config.seed}")
        COMMANDS[args.command](ctx)
        logger.info(f"✅ {args.command} finished")
        code = EXIT_OK
    except Exception as e:
        code = exit_code_for(e)
        logger.error(f"❌ {args.command}: {e}", exc_info=code == EXIT_FAILURE)
        print(f"error: {e}", file=sys.stderr)
    finally:
        if out_dir is not None:
            log_buffer.flush_to(out_dir / RUN_LOG)
    return code


if __name__ == "__main__":
    sys.exit(main())
