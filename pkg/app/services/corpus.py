"""
Rendered CASS corpus: one image per (sequence, part, augmentation) on disk,
indexed by ``cass_index.csv`` next to a copy of the dataset manifest.
"""

import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import pandas as pd

from app.datasets.canonical import MANIFEST_NAME, read_manifest, write_manifest
from app.datasets.preprocessing import DEFAULT_SEQUENCE_LENGTH, partition, resample, scheme_for
from app.imaging.augment import augment
from app.imaging.cass import render_cass
from app.imaging.ppm import read_ppm, write_ppm
from app.models.cass import AugmentationSpec, CassImage, RenderConfig
from app.models.skeleton import ALL_PARTS, ActionSequence, DatasetManifest
from app.utils.logger import get_logger

logger = get_logger(__name__)

INDEX_NAME = "cass_index.csv"
IMAGE_DIR = "images"
ORIGINAL = "none"
INDEX_COLUMNS = ["sequence_id", "part", "augment", "label", "path"]


class CorpusError(Exception):
    """Rendered corpus is missing, incomplete, or inconsistent."""
    pass


def render_sequence(
    seq: ActionSequence,
    render: RenderConfig,
    augmentation: AugmentationSpec | None = None,
    sequence_length: int = DEFAULT_SEQUENCE_LENGTH,
) -> list[CassImage]:
    """All CASS images of one sequence: every part (FS first) and its augmentations."""
    parts = partition(resample(seq, sequence_length), scheme_for(seq.n_joints))
    images: list[CassImage] = []
    for part in ALL_PARTS:
        image = render_cass(parts[part], render)
        images.extend(augment(image, augmentation) if augmentation else [image])
    return images


def render_corpus(
    manifest: DatasetManifest,
    sequences: dict[str, ActionSequence],
    out_dir: Path,
    render: RenderConfig,
    augmentation: AugmentationSpec | None = None,
    sequence_length: int = DEFAULT_SEQUENCE_LENGTH,
    jobs: int = 1,
) -> pd.DataFrame:
    """
    Render and write every image of a manifest; returns the index table.

    The index lists rows in manifest order, then part order, then
    augmentation order, whatever the worker count.
    """
    missing = [sid for sid in manifest.sequence_ids if sid not in sequences]
    if missing:
        raise CorpusError(f"{len(missing)} manifest sequences not loaded, e.g. {missing[0]}")
    out_dir.mkdir(parents=True, exist_ok=True)
    image_dir = out_dir / IMAGE_DIR

    def work(sid: str) -> list[dict[str, object]]:
        entry = manifest.entry(sid)
        rows = []
        for image in render_sequence(sequences[sid], render, augmentation, sequence_length):
            rel = Path(IMAGE_DIR) / f"{image.file_stem(manifest.dataset)}.ppm"
            write_ppm(np.asarray(image.pixels), image_dir / rel.name)
            rows.append(
                {
                    "sequence_id": sid,
                    "part": image.part,
                    "augment": image.augment or ORIGINAL,
                    "label": entry.label,
                    "path": rel.as_posix(),
                }
            )
        return rows

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        per_sequence = list(pool.map(work, manifest.sequence_ids))

    index = pd.DataFrame([row for rows in per_sequence for row in rows], columns=INDEX_COLUMNS)
    index.to_csv(out_dir / INDEX_NAME, index=False)
    write_manifest(manifest, out_dir / MANIFEST_NAME)
    logger.info(
        f"Rendered {len(index)} CASS images for {len(manifest.entries)} sequences -> {out_dir}"
    )
    return index


class CassCorpus:
    """Read access to a rendered corpus with a decoded-image cache."""

    def __init__(self, root: Path) -> None:
        self.root = Path(root)
        index_path = self.root / INDEX_NAME
        if not index_path.is_file():
            raise CorpusError(f"render index not found: {index_path}")
        self.index = pd.read_csv(
            index_path, dtype={"sequence_id": str, "part": str, "augment": str}
        )
        missing_cols = set(INDEX_COLUMNS) - set(self.index.columns)
        if missing_cols:
            raise CorpusError(f"{index_path}: missing columns {sorted(missing_cols)}")
        self.manifest = read_manifest(self.root / MANIFEST_NAME)
        self._cache: dict[str, CassImage] = {}
        self._lock = threading.RLock()

    @property
    def image_size(self) -> int:
        first = self.index.iloc[0] if len(self.index) else None
        if first is None:
            raise CorpusError(f"{self.root}: corpus is empty")
        return self._image(first).width

    @property
    def has_augmentations(self) -> bool:
        return bool((self.index["augment"] != ORIGINAL).any())

    def _image(self, row: pd.Series) -> CassImage:
        key = str(row["path"])
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        try:
            pixels = read_ppm(self.root / key)
        except FileNotFoundError as e:
            raise CorpusError(str(e)) from e
        augment_name = None if row["augment"] == ORIGINAL else str(row["augment"])
        image = CassImage(
            pixels=pixels,
            part=str(row["part"]),
            sequence_id=str(row["sequence_id"]),
            augment=augment_name,
        )
        with self._lock:
            self._cache[key] = image
        return image

    def load(
        self,
        part: str,
        sequence_ids: list[str],
        include_augmented: bool = False,
        manifest: DatasetManifest | None = None,
    ) -> tuple[list[CassImage], np.ndarray]:
        """
        Images of one part for the given sequences, in the given order, with
        labels taken from ``manifest`` (default: the corpus manifest).
        """
        labels_from = manifest or self.manifest
        rows = self.index[self.index["part"] == part]
        if not include_augmented:
            rows = rows[rows["augment"] == ORIGINAL]
        by_sequence = {sid: group for sid, group in rows.groupby("sequence_id", sort=False)}

        images: list[CassImage] = []
        labels: list[int] = []
        for sid in sequence_ids:
            group = by_sequence.get(sid)
            if group is None or not (group["augment"] == ORIGINAL).any():
                raise CorpusError(f"no {part} image for sequence {sid} in {self.root}")
            label = labels_from.entry(sid).label
            for _, row in group.iterrows():
                images.append(self._image(row))
                labels.append(label)
        return images, np.array(labels, dtype=np.int64)
