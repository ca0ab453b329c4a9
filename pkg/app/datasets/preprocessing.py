"""
Temporal resampling and body-part partitioning of skeleton sequences.
"""

import numpy as np

from app.datasets.errors import DegenerateSequenceError, PartitionError
from app.models.skeleton import (
    ActionSequence,
    FULL_SKELETON,
    PART_LABELS,
    PartitionScheme,
    PartTrajectory,
)

DEFAULT_SEQUENCE_LENGTH = 60

# Kinect SDK 20-joint layout, 0-based; HS runs head -> hip center.
KINECT20_SCHEME = PartitionScheme(
    name="kinect20",
    n_joints=20,
    parts={
        "HS": [3, 2, 1, 0],
        "LL": [12, 13, 14, 15],
        "RL": [16, 17, 18, 19],
        "LH": [4, 5, 6, 7],
        "RH": [8, 9, 10, 11],
    },
)

# OpenNI 15-joint layout of Florence 3D, grouped by joint names.
FLORENCE15_SCHEME = PartitionScheme(
    name="florence15",
    n_joints=15,
    parts={
        "HS": [0, 1, 2],
        "LH": [3, 4, 5],
        "RH": [6, 7, 8],
        "LL": [9, 10, 11],
        "RL": [12, 13, 14],
    },
)


def scheme_for(n_joints: int) -> PartitionScheme:
    """Shipped partition scheme for a joint count."""
    if n_joints == 20:
        return KINECT20_SCHEME
    if n_joints == 15:
        return FLORENCE15_SCHEME
    raise PartitionError(f"no partition scheme for {n_joints} joints")


def resample(seq: ActionSequence, target_length: int = DEFAULT_SEQUENCE_LENGTH) -> ActionSequence:
    """
    Resample to exactly target_length frames by linear interpolation.

    Output frame i samples the input at t_i = i*(n-1)/(T-1). Endpoints are exact
    copies and an n == T input is returned unchanged.
    """
    n = seq.n_frames
    if n < 2:
        raise DegenerateSequenceError(
            f"sequence {seq.sequence_id} has {n} frame(s); at least 2 are required"
        )
    if target_length < 2:
        raise ValueError(f"target_length must be >= 2, got {target_length}")
    if n == target_length:
        return seq

    positions = np.arange(target_length) * (n - 1) / (target_length - 1)
    lower = np.minimum(np.floor(positions).astype(np.int64), n - 1)
    upper = np.minimum(lower + 1, n - 1)
    weight = (positions - lower)[:, None, None]
    frames = seq.frames[lower] * (1.0 - weight) + seq.frames[upper] * weight
    # exact endpoint copies
    frames[0] = seq.frames[0]
    frames[-1] = seq.frames[-1]
    return seq.with_frames(frames)


def partition(seq: ActionSequence, scheme: PartitionScheme) -> dict[str, PartTrajectory]:
    """
    Split a sequence into per-part trajectory matrices (joints x frames x 3).

    Returns the five scheme parts plus FS (all joints, drawn as the five part chains).
    """
    if seq.n_joints != scheme.n_joints:
        raise PartitionError(
            f"scheme {scheme.name} expects {scheme.n_joints} joints, "
            f"sequence {seq.sequence_id} has {seq.n_joints}"
        )
    by_joint_first = np.transpose(seq.frames, (1, 0, 2))
    result: dict[str, PartTrajectory] = {}
    for label in PART_LABELS:
        joints = scheme.joints_for(label)
        result[label] = PartTrajectory(
            part=label,
            sequence_id=seq.sequence_id,
            joint_indices=joints,
            matrix=by_joint_first[joints].copy(),
            chains=[list(range(len(joints)))],
        )

    all_joints = scheme.joints_for(FULL_SKELETON)
    result[FULL_SKELETON] = PartTrajectory(
        part=FULL_SKELETON,
        sequence_id=seq.sequence_id,
        joint_indices=all_joints,
        matrix=by_joint_first.copy(),
        chains=[scheme.joints_for(label) for label in PART_LABELS],
    )
    return result
