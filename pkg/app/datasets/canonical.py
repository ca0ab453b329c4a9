"""
Canonical on-disk format shared by every dataset.

One `<id>.seq` file per sequence (header line, then one line of 3*k reals per
frame) plus a `manifest.txt` index. Downstream commands only read this format.
"""

from pathlib import Path

import numpy as np

from app.datasets.errors import DatasetIOError, DatasetParseError
from app.datasets.parsers import (
    class_names_for,
    parse_florence,
    parse_msr,
    parse_utkinect,
)
from app.datasets.synthetic import SYNTHETIC_CLASSES, make_synthetic_corpus
from app.models.skeleton import ActionSequence, DatasetManifest, ManifestEntry
from app.utils.logger import get_logger

logger = get_logger(__name__)

MANIFEST_NAME = "manifest.txt"


def write_sequence(seq: ActionSequence, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        f"{seq.dataset} {seq.label} {seq.subject} {seq.trial} {seq.n_frames} {seq.n_joints}"
    ]
    for frame in seq.frames:
        lines.append(" ".join(repr(float(v)) for v in frame.reshape(-1)))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_sequence(
    path: Path,
    sequence_id: str,
    class_names: list[str],
    subsets: tuple[str, ...] = (),
) -> ActionSequence:
    if not path.is_file():
        raise DatasetIOError("canonical sequence file not found", path)
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    header = lines[0].split() if lines else []
    if len(header) != 6:
        raise DatasetParseError("canonical header must have 6 fields", path, 1)
    dataset = header[0]
    try:
        label, subject, trial, n_frames, n_joints = (int(v) for v in header[1:])
    except ValueError as e:
        raise DatasetParseError(f"malformed header ({e})", path, 1) from e
    if not 0 <= label < len(class_names):
        raise DatasetParseError(
            f"label {label} outside the {len(class_names)} manifest classes", path, 1
        )
    if len(lines) - 1 != n_frames:
        raise DatasetParseError(f"header declares {n_frames} frames, found {len(lines) - 1}", path)
    try:
        data = np.array([[float(v) for v in ln.split()] for ln in lines[1:]], dtype=np.float64)
    except ValueError as e:
        raise DatasetParseError(f"malformed coordinate ({e})", path) from e
    if data.shape != (n_frames, 3 * n_joints):
        raise DatasetParseError(f"expected {3 * n_joints} reals per frame", path)
    return ActionSequence(
        sequence_id=sequence_id,
        dataset=dataset,  # type: ignore[arg-type]
        label=label,
        label_name=class_names[label],
        subject=subject,
        trial=trial,
        frames=data.reshape(n_frames, n_joints, 3),
        subsets=subsets,
    )


def build_manifest(
    dataset: str,
    sequences: list[ActionSequence],
    class_names: list[str],
    paths: dict[str, str],
) -> DatasetManifest:
    n_joints = sequences[0].n_joints if sequences else 0
    return DatasetManifest(
        dataset=dataset,  # type: ignore[arg-type]
        class_names=class_names,
        n_joints=n_joints,
        entries=[
            ManifestEntry(
                sequence_id=s.sequence_id,
                label=s.label,
                subject=s.subject,
                trial=s.trial,
                path=paths[s.sequence_id],
                subsets=s.subsets,
            )
            for s in sequences
        ],
    )


def write_manifest(manifest: DatasetManifest, path: Path) -> None:
    lines = [
        f"# dataset {manifest.dataset}",
        f"# joints {manifest.n_joints}",
        f"# classes {','.join(manifest.class_names)}",
    ]
    for e in manifest.entries:
        subsets = ",".join(e.subsets) if e.subsets else "-"
        lines.append(f"{e.sequence_id} {e.label} {e.subject} {e.trial} {e.path} {subsets}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: Path) -> DatasetManifest:
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.is_file():
        raise DatasetIOError("manifest not found", path)
    meta: dict[str, str] = {}
    entries: list[ManifestEntry] = []
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(" ")
            meta[key] = value.strip()
            continue
        tokens = line.split()
        if len(tokens) != 6:
            raise DatasetParseError("manifest line needs 6 fields", path, line_no)
        sid, label, subject, trial, seq_path, subsets = tokens
        try:
            entries.append(
                ManifestEntry(
                    sequence_id=sid,
                    label=int(label),
                    subject=int(subject),
                    trial=int(trial),
                    path=seq_path,
                    subsets=() if subsets == "-" else tuple(subsets.split(",")),
                )
            )
        except ValueError as e:
            raise DatasetParseError(f"malformed manifest line ({e})", path, line_no) from e
    for key in ("dataset", "joints", "classes"):
        if key not in meta:
            raise DatasetParseError(f"manifest missing `# {key}` line", path)
    return DatasetManifest(
        dataset=meta["dataset"],  # type: ignore[arg-type]
        class_names=meta["classes"].split(","),
        n_joints=int(meta["joints"]),
        entries=entries,
    )


def load_sequences(manifest: DatasetManifest, root: Path) -> dict[str, ActionSequence]:
    """Read every canonical sequence of a manifest; relative paths resolve against root."""
    sequences: dict[str, ActionSequence] = {}
    for e in manifest.entries:
        path = Path(e.path)
        if not path.is_absolute():
            path = root / path
        sequences[e.sequence_id] = read_sequence(
            path, e.sequence_id, manifest.class_names, e.subsets
        )
    return sequences


def parse_dataset(
    dataset: str,
    raw_path: str | Path,
    msr_rows_per_frame: int = 20,
    seed: int = 0,
    synthetic_subjects: int = 10,
) -> list[ActionSequence]:
    """Dispatch to the raw parser of a dataset id."""
    if dataset == "utkinect":
        return parse_utkinect(raw_path)
    if dataset == "florence":
        return parse_florence(raw_path)
    if dataset == "msr":
        return parse_msr(raw_path, rows_per_frame=msr_rows_per_frame)
    if dataset == "synthetic":
        return make_synthetic_corpus(n_subjects=synthetic_subjects, seed=seed)
    raise ValueError(f"unknown dataset {dataset!r}; expected utkinect, florence, msr or synthetic")


def ingest(
    dataset: str,
    raw_path: str | Path,
    out_dir: Path,
    msr_rows_per_frame: int = 20,
    seed: int = 0,
    synthetic_subjects: int = 10,
) -> DatasetManifest:
    """Parse a raw dataset and write the canonical corpus plus manifest."""
    sequences = parse_dataset(dataset, raw_path, msr_rows_per_frame, seed, synthetic_subjects)
    class_names = SYNTHETIC_CLASSES if dataset == "synthetic" else class_names_for(dataset)
    paths: dict[str, str] = {}
    for seq in sequences:
        rel = Path("sequences") / f"{seq.sequence_id}.seq"
        write_sequence(seq, out_dir / rel)
        paths[seq.sequence_id] = rel.as_posix()
    manifest = build_manifest(dataset, sequences, class_names, paths)
    write_manifest(manifest, out_dir / MANIFEST_NAME)
    logger.info(f"Ingested {dataset}: {len(sequences)} sequences -> {out_dir}")
    return manifest
