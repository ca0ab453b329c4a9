"""
Central-difference gradient checking.
"""

from typing import Callable, Sequence

import numpy as np

from app.engine.tensor import KinkProximityError, Tape, Tensor, backward
from app.utils.logger import get_logger

logger = get_logger(__name__)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(
        1.0, np.maximum(np.abs(analytic), np.abs(numeric))
    )


def grad_check(
    fn: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-4,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """
    Largest relative error between tape gradients and central differences.

    ``fn`` recomputes a scalar from the current values of ``inputs``. When
    ``max_coords`` is set, that many coordinates per input are sampled
    instead of checking every one.
    """
    for t in inputs:
        t.requires_grad = True
        t.grad = None

    with Tape() as tape:
        loss = fn()
    if tape.kink_margin < 10.0 * eps:
        raise KinkProximityError(
            f"point lies {tape.kink_margin:.3g} from a kink; need at least {10.0 * eps:.3g}"
        )
    backward(tape, loss, inputs)
    analytic = [
        t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs
    ]

    worst = 0.0
    sampler = rng or np.random.default_rng(0)
    for tensor, grad in zip(inputs, analytic):
        flat = tensor.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = sampler.choice(flat.size, size=max_coords, replace=False)
        numeric = np.empty(coords.size)
        for n, idx in enumerate(coords):
            original = flat[idx]
            flat[idx] = original + eps
            upper = fn().item()
            flat[idx] = original - eps
            lower = fn().item()
            flat[idx] = original
            numeric[n] = (upper - lower) / (2.0 * eps)
        if coords.size:
            err = float(relative_error(grad.reshape(-1)[coords], numeric).max())
            worst = max(worst, err)
            logger.debug(f"gradcheck {tensor.name or tensor.shape}: max error {err:.3e}")
    return worst


def smooth_uniform(
    shape: tuple[int, ...], rng: np.random.Generator, low: float = 0.05, high: float = 0.3
) -> Tensor:
    """Strictly positive values; with positive inputs every ReLU stays in its linear region."""
    return Tensor(rng.uniform(low, high, size=shape))


def dominant_cell_image(shape: tuple[int, int, int], rng: np.random.Generator) -> Tensor:
    """
    Positive image whose every 2x2 block (stride 2) has one cell clearly above
    the others, so stride-2 max-pooling is at least 0.1 away from a tie.
    """
    height, width, channels = shape
    data = rng.uniform(0.0, 0.5, size=shape)
    for r in range(0, height - 1, 2):
        for c in range(0, width - 1, 2):
            picks = rng.integers(0, 4, size=channels)
            data[r + picks // 2, c + picks % 2, np.arange(channels)] = 0.6 + 0.4 * rng.random(
                channels
            )
    return Tensor(data + 0.01)
