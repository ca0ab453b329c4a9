"""
Image-space data augmentation of rendered CASS images.
"""

import cv2
import numpy as np

from app.imaging.errors import RenderError
from app.models.cass import AugmentationSpec, CassImage

ROTATION_ANGLES: dict[str, float] = {"rot45": 45.0, "rot-45": -45.0}


def _center_crop_resize(pixels: np.ndarray, fraction: float) -> np.ndarray:
    size = pixels.shape[0]
    side = max(1, int(round(size * fraction)))
    offset = (size - side) // 2
    crop = pixels[offset : offset + side, offset : offset + side]
    return cv2.resize(crop, (size, size), interpolation=cv2.INTER_LINEAR)


def _rotate(pixels: np.ndarray, degrees: float) -> np.ndarray:
    size = pixels.shape[0]
    center = ((size - 1) / 2.0, (size - 1) / 2.0)
    matrix = cv2.getRotationMatrix2D(center, degrees, 1.0)
    return cv2.warpAffine(
        pixels,
        matrix,
        (size, size),
        flags=cv2.INTER_LINEAR,
        borderMode=cv2.BORDER_CONSTANT,
        borderValue=(0, 0, 0),
    )


def apply_transform(pixels: np.ndarray, name: str, crop_fraction: float = 0.9) -> np.ndarray:
    """Apply one menu transform; output has the input's size."""
    if name == "crop":
        return _center_crop_resize(pixels, crop_fraction)
    if name == "hflip":
        return cv2.flip(pixels, 1)
    if name == "vflip":
        return cv2.flip(pixels, 0)
    if name in ROTATION_ANGLES:
        return _rotate(pixels, ROTATION_ANGLES[name])
    raise RenderError(f"unknown augmentation {name!r}")


def augment(image: CassImage, spec: AugmentationSpec) -> list[CassImage]:
    """One image per enabled transform, preceded by the original when keep_original is set."""
    outputs = [image] if spec.keep_original else []
    for name in spec.transforms:
        pixels = apply_transform(np.array(image.pixels), name, spec.crop_fraction)
        outputs.append(
            CassImage(
                pixels=pixels, part=image.part, sequence_id=image.sequence_id, augment=name
            )
        )
    return outputs
