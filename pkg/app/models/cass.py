"""
Pydantic models for CASS images, rendering and augmentation settings.
"""

from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

AugmentName = Literal["crop", "hflip", "vflip", "rot45", "rot-45"]
AUGMENT_MENU: tuple[str, ...] = ("crop", "hflip", "vflip", "rot45", "rot-45")


class CassImage(BaseModel):
    """A size x size x 3 uint8 RGB raster encoding one part's trajectories."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    pixels: np.ndarray
    part: str
    sequence_id: str
    augment: str | None = None

    @field_validator("pixels")
    @classmethod
    def check_pixels(cls, v: np.ndarray) -> np.ndarray:
        if v.dtype != np.uint8 or v.ndim != 3 or v.shape[2] != 3:
            raise ValueError(f"pixels must be uint8 (H, W, 3), got {v.dtype} {v.shape}")
        if v.shape[0] != v.shape[1]:
            raise ValueError(f"CASS images are square, got {v.shape[:2]}")
        v = np.ascontiguousarray(v)
        v.setflags(write=False)
        return v

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    def as_float(self) -> np.ndarray:
        """Pixel bytes mapped to float64 in [0, 1]."""
        return self.pixels.astype(np.float64) / 255.0

    def file_stem(self, dataset: str) -> str:
        suffix = f"_{self.augment}" if self.augment else ""
        return f"{dataset}_{self.sequence_id}_{self.part}{suffix}"


class RenderConfig(BaseModel):
    """CASS rendering settings."""

    image_size: int = Field(default=224, ge=8, description="Output width and height in pixels")
    hue_start: float = Field(default=240.0, ge=0, lt=360, description="Hue of the first frame")
    hue_end: float = Field(default=0.0, ge=0, lt=360, description="Hue of the last frame")
    line_width: int = Field(default=1, ge=1, le=8, description="Bone line width in pixels")
    margin: float = Field(default=0.10, ge=0, le=0.4, description="Bounding-box margin fraction")
    projection: Literal["xy"] = Field(default="xy", description="Orthographic world x-y plane")


class AugmentationSpec(BaseModel):
    """Subset of the fixed augmentation menu, plus whether the original is kept."""

    transforms: list[AugmentName] = Field(default_factory=lambda: list(AUGMENT_MENU))
    keep_original: bool = True
    crop_fraction: float = Field(default=0.9, gt=0.1, le=1.0)

    @model_validator(mode="after")
    def dedupe(self) -> "AugmentationSpec":
        ordered = [name for name in AUGMENT_MENU if name in self.transforms]
        object.__setattr__(self, "transforms", ordered)
        return self
