from pathlib import Path

import pytest

from app.datasets.canonical import ingest, load_sequences, read_manifest
from app.models.cass import RenderConfig
from app.models.network import ArchitectureConfig, StcfConfig
from app.models.skeleton import DatasetManifest
from app.services.corpus import CassCorpus, render_corpus

IMAGE_SIZE = 16


def narrow_architecture(n_classes: int = 3) -> ArchitectureConfig:
    """Small enough that a full train/predict cycle takes well under a second."""
    return ArchitectureConfig(
        image_size=IMAGE_SIZE,
        n_classes=n_classes,
        stcf=StcfConfig.uniform(2),
        hidden_size=4,
        dropout=0.2,
    )


@pytest.fixture(scope="session")
def synthetic_data_dir(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """Four synthetic subjects, one sequence per class each."""
    out = tmp_path_factory.mktemp("ingest")
    ingest("synthetic", "", out, seed=0, synthetic_subjects=4)
    return out


@pytest.fixture(scope="session")
def synthetic_corpus_dir(
    tmp_path_factory: pytest.TempPathFactory, synthetic_data_dir: Path
) -> Path:
    manifest = read_manifest(synthetic_data_dir)
    sequences = load_sequences(manifest, synthetic_data_dir)
    out = tmp_path_factory.mktemp("render")
    render_corpus(manifest, sequences, out, RenderConfig(image_size=IMAGE_SIZE), jobs=2)
    return out


@pytest.fixture
def synthetic_corpus(synthetic_corpus_dir: Path) -> CassCorpus:
    return CassCorpus(synthetic_corpus_dir)


@pytest.fixture
def synthetic_manifest(synthetic_corpus: CassCorpus) -> DatasetManifest:
    return synthetic_corpus.manifest


@pytest.fixture
def narrow_arch() -> ArchitectureConfig:
    return narrow_architecture()
