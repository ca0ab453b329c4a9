"""
Synthetic 20-joint skeleton corpus with classes separable by construction.

Class 0 moves only the arms, class 1 only the legs, class 2 the whole body.
Used for desk-scale end-to-end runs where the public datasets are not needed.
"""

import numpy as np

from app.models.skeleton import ActionSequence
from app.utils.seeding import make_rng

SYNTHETIC_CLASSES: list[str] = ["arm_motion", "leg_motion", "whole_body_motion"]

# Rest pose in Kinect SDK joint order (hip center, spine, shoulder center, head,
# left arm x4, right arm x4, left leg x4, right leg x4), meters.
_REST_POSE = np.array(
    [
        [0.00, 0.00, 2.5],
        [0.00, 0.20, 2.5],
        [0.00, 0.45, 2.5],
        [0.00, 0.62, 2.5],
        [-0.18, 0.42, 2.5],
        [-0.30, 0.20, 2.5],
        [-0.36, 0.00, 2.5],
        [-0.38, -0.07, 2.5],
        [0.18, 0.42, 2.5],
        [0.30, 0.20, 2.5],
        [0.36, 0.00, 2.5],
        [0.38, -0.07, 2.5],
        [-0.10, -0.05, 2.5],
        [-0.12, -0.45, 2.5],
        [-0.13, -0.85, 2.5],
        [-0.13, -0.92, 2.4],
        [0.10, -0.05, 2.5],
        [0.12, -0.45, 2.5],
        [0.13, -0.85, 2.5],
        [0.13, -0.92, 2.4],
    ]
)

def _swing(pose: np.ndarray, joints: list[int], pivot: int, angle: float) -> None:
    """Rotate joints about a pivot joint in the x-y plane, in place."""
    c, s = np.cos(angle), np.sin(angle)
    rel = pose[joints, :2] - pose[pivot, :2]
    pose[joints, 0] = pose[pivot, 0] + c * rel[:, 0] - s * rel[:, 1]
    pose[joints, 1] = pose[pivot, 1] + s * rel[:, 0] + c * rel[:, 1]


def _frames_for(label: int, n_frames: int, rng: np.random.Generator) -> np.ndarray:
    amplitude = rng.uniform(0.6, 1.0)
    phase = rng.uniform(0, 2 * np.pi)
    speed = rng.uniform(1.5, 2.5)
    t = np.linspace(0.0, 1.0, n_frames)
    frames = np.repeat(_REST_POSE[None, :, :], n_frames, axis=0).copy()
    for i, ti in enumerate(t):
        angle = amplitude * np.sin(2 * np.pi * speed * ti + phase)
        pose = frames[i]
        if label == 0:
            _swing(pose, [5, 6, 7], 4, angle)
            _swing(pose, [9, 10, 11], 8, -angle)
        elif label == 1:
            _swing(pose, [13, 14, 15], 12, 0.6 * angle)
            _swing(pose, [17, 18, 19], 16, -0.6 * angle)
        else:
            pose[:, 0] += 0.3 * np.sin(2 * np.pi * ti + phase)
            pose[:, 1] += 0.15 * angle
            _swing(pose, list(range(1, 20)), 0, 0.25 * angle)
    frames += rng.normal(0.0, 0.003, size=frames.shape)
    return frames


def make_synthetic_corpus(
    n_subjects: int = 10,
    seed: int = 0,
    min_frames: int = 30,
    max_frames: int = 90,
) -> list[ActionSequence]:
    """One sequence per (subject, class): 3 * n_subjects sequences."""
    sequences: list[ActionSequence] = []
    for subject in range(1, n_subjects + 1):
        for label, name in enumerate(SYNTHETIC_CLASSES):
            rng = make_rng(seed, "synthetic", subject, label)
            n_frames = int(rng.integers(min_frames, max_frames + 1))
            sequences.append(
                ActionSequence(
                    sequence_id=f"syn_s{subject:02d}_c{label}",
                    dataset="synthetic",
                    label=label,
                    label_name=name,
                    subject=subject,
                    trial=1,
                    frames=_frames_for(label, n_frames, rng),
                )
            )
    return sequences
