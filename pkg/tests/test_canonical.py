from pathlib import Path

import numpy as np
import pytest

from app.datasets.canonical import (
    MANIFEST_NAME,
    ingest,
    load_sequences,
    read_manifest,
    read_sequence,
    write_sequence,
)
from app.datasets.errors import DatasetIOError, DatasetParseError
from app.datasets.synthetic import SYNTHETIC_CLASSES, make_synthetic_corpus


@pytest.fixture
def synthetic_dir(tmp_path: Path) -> Path:
    out = tmp_path / "ingest"
    ingest("synthetic", "", out, seed=3, synthetic_subjects=2)
    return out


def test_ingest_synthetic_writes_manifest(synthetic_dir: Path) -> None:
    manifest = read_manifest(synthetic_dir)

    assert (synthetic_dir / MANIFEST_NAME).is_file()
    assert manifest.dataset == "synthetic"
    assert manifest.class_names == SYNTHETIC_CLASSES
    assert manifest.n_joints == 20
    assert len(manifest.entries) == 6
    assert manifest.subject_ids == [1, 2]
    assert manifest.entries[0].sequence_id == "syn_s01_c0"


def test_loaded_sequences_match_generated(synthetic_dir: Path) -> None:
    manifest = read_manifest(synthetic_dir)
    generated = {s.sequence_id: s for s in make_synthetic_corpus(n_subjects=2, seed=3)}

    loaded = load_sequences(manifest, synthetic_dir)

    assert set(loaded) == set(generated)
    for sid, seq in loaded.items():
        assert np.array_equal(seq.frames, generated[sid].frames)
        assert seq.label_name == SYNTHETIC_CLASSES[seq.label]


def test_synthetic_corpus_is_deterministic() -> None:
    a = make_synthetic_corpus(n_subjects=1, seed=5)
    b = make_synthetic_corpus(n_subjects=1, seed=5)

    assert all(np.array_equal(x.frames, y.frames) for x, y in zip(a, b))
    assert all(30 <= s.n_frames <= 90 for s in a)


def test_sequence_file_roundtrip_keeps_subsets(tmp_path: Path) -> None:
    seq = make_synthetic_corpus(n_subjects=1)[0]
    path = tmp_path / "one.seq"

    write_sequence(seq, path)
    back = read_sequence(path, seq.sequence_id, SYNTHETIC_CLASSES, subsets=("AS1",))

    assert back.subsets == ("AS1",)
    assert (back.subject, back.trial, back.n_frames) == (seq.subject, seq.trial, seq.n_frames)


def test_header_frame_count_mismatch(tmp_path: Path) -> None:
    path = tmp_path / "bad.seq"
    path.write_text("synthetic 0 1 1 3 1\n0 0 0\n1 1 1\n", encoding="utf-8")

    with pytest.raises(DatasetParseError, match="declares 3 frames, found 2"):
        read_sequence(path, "bad", SYNTHETIC_CLASSES)


def test_short_header(tmp_path: Path) -> None:
    path = tmp_path / "bad.seq"
    path.write_text("synthetic 0 1\n0 0 0\n", encoding="utf-8")

    with pytest.raises(DatasetParseError, match=r"bad\.seq:1"):
        read_sequence(path, "bad", SYNTHETIC_CLASSES)


@pytest.mark.parametrize("label", [3, 7, -1])
def test_label_outside_class_list(tmp_path: Path, label: int) -> None:
    path = tmp_path / "bad.seq"
    path.write_text(f"synthetic {label} 1 1 2 1\n0 0 0\n1 1 1\n", encoding="utf-8")

    with pytest.raises(DatasetParseError, match=r"outside the 3 manifest classes"):
        read_sequence(path, "bad", SYNTHETIC_CLASSES)


def test_missing_manifest(tmp_path: Path) -> None:
    with pytest.raises(DatasetIOError, match="manifest not found"):
        read_manifest(tmp_path)


def test_manifest_without_classes_line(tmp_path: Path) -> None:
    path = tmp_path / MANIFEST_NAME
    path.write_text("# dataset msr\n# joints 20\n", encoding="utf-8")

    with pytest.raises(DatasetParseError, match="classes"):
        read_manifest(path)


def test_unknown_dataset_id(tmp_path: Path) -> None:
    with pytest.raises(ValueError, match="unknown dataset"):
        ingest("ntu", tmp_path, tmp_path / "out")
