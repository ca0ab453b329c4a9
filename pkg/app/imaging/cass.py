"""
Compact Action Skeleton Sequence (CASS) rendering.

Every frame of a part trajectory is projected onto the world x-y plane,
normalized by the part's own bounding box, and drawn as 1-pixel bone chains
whose color encodes the frame's position in time (blue -> red by default).
Later frames are drawn over earlier ones.
"""

import colorsys

import cv2
import numpy as np

from app.datasets.errors import DegenerateSequenceError
from app.imaging.errors import RenderError
from app.models.cass import CassImage, RenderConfig
from app.models.skeleton import PartTrajectory

_DEFAULT_RENDER = RenderConfig()


def temporal_hue(t: int, n: int, config: RenderConfig = _DEFAULT_RENDER) -> float:
    """Hue in degrees for frame t of n, linear from hue_start to hue_end."""
    if n < 2:
        raise DegenerateSequenceError(f"temporal color needs n >= 2 frames, got {n}")
    if not 0 <= t < n:
        raise ValueError(f"frame index {t} outside [0, {n})")
    return config.hue_start + (config.hue_end - config.hue_start) * t / (n - 1)


def temporal_color(t: int, n: int, config: RenderConfig = _DEFAULT_RENDER) -> tuple[int, int, int]:
    """Fully saturated RGB color for frame t of n."""
    hue = temporal_hue(t, n, config)
    r, g, b = colorsys.hsv_to_rgb((hue % 360.0) / 360.0, 1.0, 1.0)
    return int(round(r * 255)), int(round(g * 255)), int(round(b * 255))


def project_to_pixels(matrix: np.ndarray, config: RenderConfig) -> np.ndarray:
    """
    Map a (joints, frames, 3) trajectory to integer (col, row) pixel positions.

    The part's bounding box over the whole sequence is scaled uniformly (aspect
    preserved) into the margin-inset square and centered; a zero-extent box maps
    every joint to the image center. World y points up, image rows point down.
    """
    if not np.all(np.isfinite(matrix)):
        raise RenderError("trajectory contains non-finite coordinates")
    xy = matrix[:, :, :2]
    lo = xy.min(axis=(0, 1))
    hi = xy.max(axis=(0, 1))
    extent = float(np.max(hi - lo))
    center = (lo + hi) / 2.0

    size = config.image_size
    span = (size - 1) * (1.0 - 2.0 * config.margin)
    mid = (size - 1) / 2.0
    scale = span / extent if extent > 0 else 0.0

    cols = mid + (xy[:, :, 0] - center[0]) * scale
    rows = mid - (xy[:, :, 1] - center[1]) * scale
    pixels = np.stack([cols, rows], axis=-1)
    return np.clip(np.floor(pixels + 0.5), 0, size - 1).astype(np.int64)


def render_cass(trajectory: PartTrajectory, config: RenderConfig = _DEFAULT_RENDER) -> CassImage:
    """Render one part trajectory to a CASS image; deterministic for identical input."""
    n = trajectory.n_frames
    if n < 2:
        raise DegenerateSequenceError(
            f"{trajectory.sequence_id}/{trajectory.part}: CASS needs at least 2 frames"
        )
    points = project_to_pixels(trajectory.matrix, config)
    canvas = np.zeros((config.image_size, config.image_size, 3), dtype=np.uint8)

    for t in range(n):
        color = temporal_color(t, n, config)
        for chain in trajectory.chains:
            if len(chain) == 1:
                p = tuple(int(v) for v in points[chain[0], t])
                cv2.line(canvas, p, p, color, thickness=config.line_width, lineType=cv2.LINE_8)
                continue
            for a, b in zip(chain[:-1], chain[1:]):
                pa = tuple(int(v) for v in points[a, t])
                pb = tuple(int(v) for v in points[b, t])
                cv2.line(canvas, pa, pb, color, thickness=config.line_width, lineType=cv2.LINE_8)

    return CassImage(pixels=canvas, part=trajectory.part, sequence_id=trajectory.sequence_id)
