"""
Report writers and readers: prediction CSVs, training histories, confusion
matrices, ROC points, per-part accuracy tables and key-value summaries.
"""

import json
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError

from app.models.skeleton import ALL_PARTS, PART_LABELS
from app.models.training import PartPredictions, RocSummary, TrainingResult
from app.services.evaluation import EvaluationReport, FoldOutcome, ReportRow
from app.services.metrics import per_class_table
from app.utils.logger import get_logger

logger = get_logger(__name__)

REPORT_JSON = "report.json"
REPORT_TEXT = "report.txt"
REPORT_TABLE = "report_table.csv"
FUSED_COLUMN = "weighted_fusion"
REFERENCE_PATH = Path(__file__).resolve().parents[2] / "data" / "reference_results.json"


class ReportError(Exception):
    """A report or prediction file cannot be read."""
    pass


class ReportDocument(BaseModel):
    """Machine-readable summary persisted as report.json."""

    dataset: str
    protocol: str
    fusion_mode: str
    seed: int
    rows: list[ReportRow]
    folds: list[FoldOutcome] = Field(default_factory=list)


# --- predictions ---


def write_predictions(preds: PartPredictions, path: Path) -> None:
    """``# part=<label> classes=<a,b,...>`` line, then sample_id,true_label,p0..p{n-1}."""
    frame = pd.DataFrame(
        preds.probabilities, columns=[f"p{c}" for c in range(preds.n_classes)]
    )
    frame.insert(0, "true_label", preds.labels)
    frame.insert(0, "sample_id", preds.sample_ids)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# part={preds.part} classes={','.join(preds.class_names)}\n")
        frame.to_csv(f, index=False, float_format="%.17g")


def read_predictions(path: Path) -> PartPredictions:
    if not path.is_file():
        raise ReportError(f"predictions file not found: {path}")
    with open(path, encoding="utf-8") as f:
        header = f.readline().strip()
    meta = dict(
        token.split("=", 1) for token in header.lstrip("#").split() if "=" in token
    )
    if "part" not in meta or "classes" not in meta:
        raise ReportError(f"{path}: first line must be '# part=<label> classes=<names>'")
    frame = pd.read_csv(path, skiprows=1, dtype={"sample_id": str})
    class_names = meta["classes"].split(",")
    prob_columns = [f"p{c}" for c in range(len(class_names))]
    missing = [c for c in ["sample_id", "true_label", *prob_columns] if c not in frame.columns]
    if missing:
        raise ReportError(f"{path}: missing columns {missing}")
    try:
        return PartPredictions(
            part=meta["part"],
            class_names=class_names,
            sample_ids=frame["sample_id"].tolist(),
            probabilities=frame[prob_columns].to_numpy(dtype=np.float64),
            labels=frame["true_label"].to_numpy(dtype=np.int64),
        )
    except ValidationError as e:
        raise ReportError(f"{path}: {e}") from e


# --- tables ---


def history_frame(result: TrainingResult) -> pd.DataFrame:
    return pd.DataFrame([record.model_dump() for record in result.history])


def write_history(result: TrainingResult, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    history_frame(result).to_csv(path, index=False)


def confusion_frame(confusion: np.ndarray, class_names: list[str]) -> pd.DataFrame:
    frame = pd.DataFrame(confusion, index=class_names, columns=class_names)
    frame.index.name = "true\\predicted"
    return frame


def roc_frame(summary: RocSummary) -> pd.DataFrame:
    rows = []
    for curve in summary.curves:
        for fpr, tpr, threshold in zip(curve.fpr, curve.tpr, curve.thresholds):
            rows.append(
                {
                    "class_index": curve.class_index,
                    "class_name": curve.class_name,
                    "threshold": threshold,
                    "fpr": fpr,
                    "tpr": tpr,
                    "auc": curve.auc,
                }
            )
    columns = ["class_index", "class_name", "threshold", "fpr", "tpr", "auc"]
    return pd.DataFrame(rows, columns=columns)


def report_table(rows: list[ReportRow]) -> pd.DataFrame:
    """Accuracy table in percent: one row per subset, FS..RH plus the fused column."""
    records = []
    for row in rows:
        record: dict[str, Any] = {"subset": row.name}
        record.update({p: round(100.0 * row.test_accuracy[p], 4) for p in ALL_PARTS})
        record[FUSED_COLUMN] = round(100.0 * row.fused_accuracy, 4)
        record["weights"] = row.weights or ""
        record["fused_auc"] = row.fused_auc
        records.append(record)
    return pd.DataFrame(records)


def key_value_text(sections: Mapping[str, Mapping[str, Any]]) -> str:
    """``[section]`` headers followed by ``key = value`` lines."""
    lines: list[str] = []
    for title, values in sections.items():
        if lines:
            lines.append("")
        lines.append(f"[{title}]")
        for key, value in values.items():
            if isinstance(value, float):
                value = f"{value:.6f}"
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def row_sections(row: ReportRow) -> dict[str, Any]:
    values: dict[str, Any] = {"folds": row.n_folds, "test_samples": row.n_test}
    for part in ALL_PARTS:
        values[f"train_loss.{part}"] = row.train_loss[part]
        values[f"train_accuracy.{part}"] = row.train_accuracy[part]
        values[f"test_accuracy.{part}"] = row.test_accuracy[part]
    values["fused_accuracy"] = row.fused_accuracy
    values["weights"] = row.weights or "-"
    values["fused_auc"] = row.fused_auc if row.fused_auc is not None else "-"
    return values


# --- evaluation output ---


def write_evaluation(report: EvaluationReport, out_dir: Path) -> list[Path]:
    """Write every artifact of an evaluation run; returns the written paths."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    document = ReportDocument(
        dataset=report.dataset,
        protocol=report.protocol,
        fusion_mode=report.fusion_mode,
        seed=report.seed,
        rows=report.rows,
        folds=[fold for subset in report.subsets for fold in subset.folds],
    )
    path = out_dir / REPORT_JSON
    path.write_text(document.model_dump_json(indent=2) + "\n", encoding="utf-8")
    written.append(path)

    sections: dict[str, dict[str, Any]] = {
        "run": {
            "dataset": report.dataset,
            "protocol": report.protocol,
            "fusion_mode": report.fusion_mode,
            "seed": report.seed,
        }
    }
    for row in report.rows:
        sections[f"row {row.name}"] = row_sections(row)
    path = out_dir / REPORT_TEXT
    path.write_text(key_value_text(sections), encoding="utf-8")
    written.append(path)

    path = out_dir / REPORT_TABLE
    report_table(report.rows).to_csv(path, index=False)
    written.append(path)

    for subset in report.subsets:
        sub_dir = out_dir / subset.name
        sub_dir.mkdir(parents=True, exist_ok=True)
        metrics = subset.fused_metrics
        targets = {
            "confusion_fused.csv": confusion_frame(metrics.confusion, subset.class_names),
            "per_class_fused.csv": per_class_table(metrics.confusion, subset.class_names),
            "roc_fused.csv": roc_frame(metrics.roc),
            "folds.csv": pd.DataFrame([f.model_dump() for f in subset.folds]),
        }
        for name, frame in targets.items():
            path = sub_dir / name
            frame.to_csv(path, index=name.startswith("confusion"))
            written.append(path)
        for part, preds in subset.pooled.items():
            path = sub_dir / "predictions" / f"{part}.csv"
            write_predictions(preds, path)
            written.append(path)
        for result in subset.histories:
            path = sub_dir / "history" / f"{result.part}_{result.fold}.csv"
            write_history(result, path)
            written.append(path)

    logger.info(f"Wrote {len(written)} report files -> {out_dir}")
    return written


def read_report(directory: Path) -> ReportDocument:
    path = directory / REPORT_JSON if directory.is_dir() else directory
    if not path.is_file():
        raise ReportError(f"report not found: {path}")
    try:
        return ReportDocument.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise ReportError(f"{path}: {e}") from e


# --- reference comparison ---


def load_reference(path: Path = REFERENCE_PATH) -> dict[str, Any]:
    try:
        data: dict[str, Any] = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise ReportError(f"cannot read reference results {path}: {e}") from e
    return data


def format_report(document: ReportDocument, reference: Mapping[str, Any] | None = None) -> str:
    """Accuracy rows in percent, each followed by the published row of the same name."""
    header = ["row", *ALL_PARTS, "fused", "weights"]
    lines = [
        f"dataset={document.dataset} protocol={document.protocol} "
        f"fusion_mode={document.fusion_mode} seed={document.seed}",
        "  ".join(f"{h:>8}" for h in header),
    ]
    published: dict[str, Mapping[str, Any]] = {}
    if reference is not None:
        entry = reference.get("datasets", {}).get(document.dataset, {})
        published = {row["name"]: row for row in entry.get("rows", [])}

    for row in document.rows:
        cells = [row.name, *(f"{100 * row.test_accuracy[p]:.2f}" for p in ALL_PARTS)]
        cells += [f"{100 * row.fused_accuracy:.2f}", row.weights or "-"]
        lines.append("  ".join(f"{c:>8}" for c in cells))
        ref = published.get(row.name)
        if ref is not None:
            ref_weights = ref.get("weights")
            ref_cells = [
                "ref",
                *(f"{ref['test_accuracy'][p]:.2f}" for p in ALL_PARTS),
                f"{ref['fused_accuracy']:.2f}",
                "{" + ",".join(str(w) for w in ref_weights) + "}" if ref_weights else "-",
            ]
            lines.append("  ".join(f"{c:>8}" for c in ref_cells))
    lines.append(f"weight order: {','.join(PART_LABELS)}")
    return "\n".join(lines) + "\n"
