from pathlib import Path

import pytest

from app.datasets.canonical import load_sequences, read_manifest
from app.models.cass import AugmentationSpec, RenderConfig
from app.models.skeleton import ALL_PARTS
from app.services.corpus import (
    INDEX_NAME,
    CassCorpus,
    CorpusError,
    render_corpus,
    render_sequence,
)


def test_index_order_and_image_size(synthetic_corpus: CassCorpus) -> None:
    index = synthetic_corpus.index

    assert len(index) == 12 * len(ALL_PARTS)
    assert index["part"].tolist()[:6] == list(ALL_PARTS)
    assert index["sequence_id"].iloc[0] == synthetic_corpus.manifest.sequence_ids[0]
    assert synthetic_corpus.image_size == 16
    assert synthetic_corpus.has_augmentations is False


def test_load_follows_requested_order(synthetic_corpus: CassCorpus) -> None:
    ids = ["syn_s02_c2", "syn_s01_c0"]

    images, labels = synthetic_corpus.load("LL", ids)

    assert [image.sequence_id for image in images] == ids
    assert labels.tolist() == [2, 0]
    assert all(image.part == "LL" for image in images)


def test_render_sequence_covers_every_part(synthetic_data_dir: Path) -> None:
    manifest = read_manifest(synthetic_data_dir)
    seq = load_sequences(manifest, synthetic_data_dir)["syn_s01_c1"]

    images = render_sequence(seq, RenderConfig(image_size=16), sequence_length=20)

    assert [image.part for image in images] == list(ALL_PARTS)
    assert all(image.pixels.any() for image in images)


def test_augmented_corpus(tmp_path: Path, synthetic_data_dir: Path) -> None:
    manifest = read_manifest(synthetic_data_dir)
    sequences = load_sequences(manifest, synthetic_data_dir)
    spec = AugmentationSpec(transforms=["hflip"])

    index = render_corpus(
        manifest, sequences, tmp_path, RenderConfig(image_size=16), augmentation=spec
    )
    corpus = CassCorpus(tmp_path)
    images, labels = corpus.load("HS", ["syn_s01_c0"], include_augmented=True)

    assert len(index) == 12 * len(ALL_PARTS) * 2
    assert corpus.has_augmentations is True
    assert [image.augment for image in images] == [None, "hflip"]
    assert labels.tolist() == [0, 0]
    assert len(corpus.load("HS", ["syn_s01_c0"])[0]) == 1


def test_render_is_independent_of_worker_count(tmp_path: Path, synthetic_data_dir: Path) -> None:
    manifest = read_manifest(synthetic_data_dir)
    sequences = load_sequences(manifest, synthetic_data_dir)
    config = RenderConfig(image_size=16)

    serial = render_corpus(manifest, sequences, tmp_path / "one", config, jobs=1)
    parallel = render_corpus(manifest, sequences, tmp_path / "four", config, jobs=4)

    assert serial.equals(parallel)
    for rel in serial["path"]:
        assert (tmp_path / "one" / rel).read_bytes() == (tmp_path / "four" / rel).read_bytes()


def test_missing_index(tmp_path: Path) -> None:
    with pytest.raises(CorpusError, match="render index not found"):
        CassCorpus(tmp_path)


def test_missing_image_file(tmp_path: Path, synthetic_corpus_dir: Path) -> None:
    copy = tmp_path / "broken"
    copy.mkdir()
    for name in (INDEX_NAME, "manifest.txt"):
        (copy / name).write_bytes((synthetic_corpus_dir / name).read_bytes())

    with pytest.raises(CorpusError, match="CASS image not found"):
        CassCorpus(copy).load("HS", ["syn_s01_c0"])


def test_unloaded_sequences_are_rejected(tmp_path: Path, synthetic_data_dir: Path) -> None:
    manifest = read_manifest(synthetic_data_dir)

    with pytest.raises(CorpusError, match="not loaded"):
        render_corpus(manifest, {}, tmp_path, RenderConfig(image_size=16))
