"""
Pydantic models for skeleton sequences, partition schemes, splits and manifests.
"""

import math
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

DatasetId = Literal["utkinect", "florence", "msr", "synthetic"]

PART_LABELS: tuple[str, ...] = ("HS", "LL", "RL", "LH", "RH")
FULL_SKELETON = "FS"
ALL_PARTS: tuple[str, ...] = (FULL_SKELETON, *PART_LABELS)

MSR_SUBSETS: tuple[str, ...] = ("AS1", "AS2", "AS3")


class Joint3D(BaseModel):
    """One joint position in world coordinates (units passed through from the dataset)."""

    model_config = ConfigDict(frozen=True)

    x: float
    y: float
    z: float

    @model_validator(mode="after")
    def check_finite(self) -> "Joint3D":
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError(f"joint coordinates must be finite: ({self.x}, {self.y}, {self.z})")
        return self


class ActionSequence(BaseModel):
    """
    One labeled skeleton recording.

    `frames` holds every SkeletonFrame as a (n_frames, n_joints, 3) float64 array;
    joint order follows the dataset's documented indexing.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    sequence_id: str
    dataset: DatasetId
    label: int = Field(..., ge=0)
    label_name: str
    subject: int = Field(..., ge=1)
    trial: int = Field(..., ge=1)
    frames: np.ndarray
    subsets: tuple[str, ...] = ()

    @field_validator("frames", mode="before")
    @classmethod
    def coerce_frames(cls, v: object) -> np.ndarray:
        arr = np.array(v, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"frames must be (n_frames, n_joints, 3), got {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError("a sequence needs at least one frame")
        arr.setflags(write=False)
        return arr

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def n_joints(self) -> int:
        return int(self.frames.shape[1])

    def frame_joints(self, t: int) -> list[Joint3D]:
        """SkeletonFrame t as a list of Joint3D."""
        return [Joint3D(x=float(j[0]), y=float(j[1]), z=float(j[2])) for j in self.frames[t]]

    def with_frames(self, frames: np.ndarray) -> "ActionSequence":
        return self.model_copy(update={"frames": self.coerce_frames(frames)})


class PartitionScheme(BaseModel):
    """Mapping of the five body parts to ordered joint index lists (0-based)."""

    model_config = ConfigDict(frozen=True)

    name: str
    n_joints: int = Field(..., ge=1)
    parts: dict[str, list[int]]

    @model_validator(mode="after")
    def check_cover(self) -> "PartitionScheme":
        if tuple(sorted(self.parts)) != tuple(sorted(PART_LABELS)):
            raise ValueError(f"scheme parts must be exactly {PART_LABELS}, got {list(self.parts)}")
        seen: list[int] = []
        for label, joints in self.parts.items():
            if not joints:
                raise ValueError(f"part {label} is empty")
            seen.extend(joints)
        if len(seen) != len(set(seen)):
            raise ValueError("scheme parts overlap")
        if set(seen) != set(range(self.n_joints)):
            raise ValueError(f"scheme parts do not cover joints 0..{self.n_joints - 1}")
        return self

    def joints_for(self, label: str) -> list[int]:
        """Joint indices for a part label; FS returns every joint in dataset order."""
        if label == FULL_SKELETON:
            return list(range(self.n_joints))
        return list(self.parts[label])


class PartTrajectory(BaseModel):
    """
    Trajectory matrix of one part: rows are joints (scheme order), columns are frames.

    `chains` lists row-index chains drawn as connected bones; a single part is
    one chain, FS is the five part chains.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    part: str
    sequence_id: str
    joint_indices: list[int]
    matrix: np.ndarray
    chains: list[list[int]]

    @property
    def n_frames(self) -> int:
        return int(self.matrix.shape[1])


class Fold(BaseModel):
    """One train/test split."""

    name: str
    train_ids: list[str]
    test_ids: list[str]

    @model_validator(mode="after")
    def check_disjoint(self) -> "Fold":
        overlap = set(self.train_ids) & set(self.test_ids)
        if overlap:
            raise ValueError(f"fold {self.name}: train/test overlap {sorted(overlap)[:5]}")
        return self


class SplitSpec(BaseModel):
    """Evaluation protocol and its folds."""

    protocol: str
    folds: list[Fold]


class ManifestEntry(BaseModel):
    """One sequence line of the manifest."""

    sequence_id: str
    label: int = Field(..., ge=0)
    subject: int = Field(..., ge=1)
    trial: int = Field(..., ge=1)
    path: str
    subsets: tuple[str, ...] = ()


class DatasetManifest(BaseModel):
    """Index of an ingested dataset."""

    dataset: DatasetId
    class_names: list[str]
    n_joints: int
    entries: list[ManifestEntry]

    @property
    def subject_ids(self) -> list[int]:
        return sorted({e.subject for e in self.entries})

    @property
    def sequence_ids(self) -> list[str]:
        return [e.sequence_id for e in self.entries]

    def entry(self, sequence_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.sequence_id == sequence_id:
                return e
        raise KeyError(sequence_id)

    def subset(self, tag: str) -> "DatasetManifest":
        """
        Restrict to one MSR subset; labels are remapped to 0..7 in original class order.
        """
        kept = [e for e in self.entries if tag in e.subsets]
        if not kept:
            raise ValueError(f"no sequences tagged {tag}")
        old_labels = sorted({e.label for e in kept})
        remap = {old: new for new, old in enumerate(old_labels)}
        return DatasetManifest(
            dataset=self.dataset,
            class_names=[self.class_names[i] for i in old_labels],
            n_joints=self.n_joints,
            entries=[e.model_copy(update={"label": remap[e.label]}) for e in kept],
        )
