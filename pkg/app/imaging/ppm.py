"""
Binary portable pixmap (P6, maxval 255) reader/writer on top of OpenCV's PxM codec.

OpenCV writes the header as `P6\\n<w> <h>\\n255\\n`, so rendered corpora stay
byte-comparable across runs and machines. Pixels are RGB in memory and BGR
inside OpenCV.
"""

from pathlib import Path

import cv2
import numpy as np

from app.imaging.errors import RenderError


def encode_ppm(pixels: np.ndarray) -> bytes:
    if pixels.dtype != np.uint8 or pixels.ndim != 3 or pixels.shape[2] != 3:
        raise RenderError(f"PPM needs uint8 (H, W, 3) pixels, got {pixels.dtype} {pixels.shape}")
    bgr = cv2.cvtColor(np.ascontiguousarray(pixels), cv2.COLOR_RGB2BGR)
    try:
        ok, buffer = cv2.imencode(".ppm", bgr, [cv2.IMWRITE_PXM_BINARY, 1])
    except cv2.error as e:
        raise RenderError(f"PPM encoding failed: {e}") from e
    if not ok:
        raise RenderError("PPM encoding failed")
    return buffer.tobytes()


def write_ppm(pixels: np.ndarray, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_ppm(pixels))


def decode_ppm(data: bytes) -> np.ndarray:
    if data[:2] != b"P6":
        raise RenderError(f"unsupported PPM variant {data[:2]!r}")
    try:
        bgr = cv2.imdecode(np.frombuffer(data, dtype=np.uint8), cv2.IMREAD_UNCHANGED)
    except cv2.error as e:
        raise RenderError(f"truncated or unreadable PPM: {e}") from e
    if bgr is None:
        raise RenderError("truncated or unreadable PPM")
    if bgr.dtype != np.uint8 or bgr.ndim != 3 or bgr.shape[2] != 3:
        raise RenderError(f"unsupported PPM variant: {bgr.dtype} {bgr.shape}")
    return cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)


def read_ppm(path: Path) -> np.ndarray:
    if not path.is_file():
        raise FileNotFoundError(f"CASS image not found: {path}")
    return decode_ppm(path.read_bytes())
