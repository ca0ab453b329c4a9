"""
Differentiable primitives over channels-last tensors.

Image tensors are (H, W, C) or batched (N, H, W, C). Every primitive computes
its forward value with numpy, then registers a closure returning the
gradients of its inputs on the active tape.
"""

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from app.engine.tensor import ShapeError, Tensor, note_kink_margin, record, unbroadcast, Tape

Mode = Literal["train", "eval"]


def _check_image(x: Tensor, op: str) -> None:
    if x.ndim not in (3, 4):
        raise ShapeError(f"{op} expects (H, W, C) or (N, H, W, C), got {x.shape}")


def _out_size(size: int, k: int, stride: int, padding: int, op: str, axis: str) -> int:
    padded = size + 2 * padding
    if k > padded:
        raise ShapeError(f"{op}: window {k} exceeds padded input {axis} {padded}")
    return (padded - k) // stride + 1


def _window(h0: int, w0: int, out_h: int, out_w: int, stride: int) -> tuple[slice, slice]:
    return (
        slice(h0, h0 + stride * (out_h - 1) + 1, stride),
        slice(w0, w0 + stride * (out_w - 1) + 1, stride),
    )


# --- convolution and pooling ---


def conv2d(
    x: Tensor, kernels: Tensor, bias: Tensor, stride: int = 1, padding: int = 0
) -> Tensor:
    """2-D cross-correlation with zero padding; kernels are (k, k, C_in, C_out)."""
    _check_image(x, "conv2d")
    if kernels.ndim != 4 or kernels.shape[0] != kernels.shape[1]:
        raise ShapeError(f"conv2d kernels must be (k, k, C_in, C_out), got {kernels.shape}")
    k, _, c_in, c_out = kernels.shape
    if x.shape[-1] != c_in:
        raise ShapeError(f"conv2d input has {x.shape[-1]} channels, kernels expect {c_in}")
    if bias.shape != (c_out,):
        raise ShapeError(f"conv2d bias must be ({c_out},), got {bias.shape}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv2d stride {stride} / padding {padding} invalid")

    height, width = x.shape[-3], x.shape[-2]
    out_h = _out_size(height, k, stride, padding, "conv2d", "height")
    out_w = _out_size(width, k, stride, padding, "conv2d", "width")
    lead = x.shape[:-3]
    pad = [(0, 0)] * len(lead) + [(padding, padding), (padding, padding), (0, 0)]
    xp = np.pad(x.data, pad) if padding else x.data
    w = kernels.data

    out = np.zeros(lead + (out_h, out_w, c_out))
    for i in range(k):
        for j in range(k):
            rows, cols = _window(i, j, out_h, out_w, stride)
            out += xp[..., rows, cols, :] @ w[i, j]
    out += bias.data

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(w)
        reduce_axes = list(range(g.ndim - 1))
        for i in range(k):
            for j in range(k):
                rows, cols = _window(i, j, out_h, out_w, stride)
                gw[i, j] = np.tensordot(xp[..., rows, cols, :], g, axes=(reduce_axes, reduce_axes))
                gxp[..., rows, cols, :] += g @ w[i, j].T
        gx = gxp[..., padding : padding + height, padding : padding + width, :]
        return gx, gw, g.sum(axis=tuple(reduce_axes))

    return record("conv2d", (x, kernels, bias), Tensor(out), backward)


def _stack_windows(
    data: np.ndarray, k: int, stride: int, out_h: int, out_w: int
) -> np.ndarray:
    """(..., out_h, out_w, C, k*k) with window cells in row-major order."""
    cells = []
    for i in range(k):
        for j in range(k):
            rows, cols = _window(i, j, out_h, out_w, stride)
            cells.append(data[..., rows, cols, :])
    return np.stack(cells, axis=-1)


def maxpool2d(x: Tensor, k: int = 2, stride: int = 2) -> Tensor:
    """Max over k x k windows; ties route the gradient to the first cell in row-major order."""
    _check_image(x, "maxpool2d")
    out_h = _out_size(x.shape[-3], k, stride, 0, "maxpool2d", "height")
    out_w = _out_size(x.shape[-2], k, stride, 0, "maxpool2d", "width")
    windows = _stack_windows(x.data, k, stride, out_h, out_w)
    winner = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, winner[..., None], axis=-1)[..., 0]

    if Tape.current() is not None and k * k > 1:
        top_two = np.sort(windows, axis=-1)[..., -2:]
        note_kink_margin(float(np.min(top_two[..., 1] - top_two[..., 0])))

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        gx = np.zeros_like(x.data)
        for idx in range(k * k):
            i, j = divmod(idx, k)
            rows, cols = _window(i, j, out_h, out_w, stride)
            gx[..., rows, cols, :] += np.where(winner == idx, g, 0.0)
        return (gx,)

    return record("maxpool2d", (x,), Tensor(out), backward)


def avgpool2d(x: Tensor, k: int = 2, stride: int = 2) -> Tensor:
    _check_image(x, "avgpool2d")
    out_h = _out_size(x.shape[-3], k, stride, 0, "avgpool2d", "height")
    out_w = _out_size(x.shape[-2], k, stride, 0, "avgpool2d", "width")
    out = _stack_windows(x.data, k, stride, out_h, out_w).mean(axis=-1)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        gx = np.zeros_like(x.data)
        share = g / (k * k)
        for i in range(k):
            for j in range(k):
                rows, cols = _window(i, j, out_h, out_w, stride)
                gx[..., rows, cols, :] += share
        return (gx,)

    return record("avgpool2d", (x,), Tensor(out), backward)


# --- elementwise ---


def relu(x: Tensor) -> Tensor:
    if Tape.current() is not None and x.size:
        note_kink_margin(float(np.min(np.abs(x.data))))
    active = x.data > 0
    return record("relu", (x,), Tensor(np.where(active, x.data, 0.0)), lambda g: (g * active,))


def sigmoid(x: Tensor) -> Tensor:
    z = np.exp(-np.abs(x.data))
    out = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return record("sigmoid", (x,), Tensor(out), lambda g: (g * out * (1.0 - out),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return record("tanh", (x,), Tensor(out), lambda g: (g * (1.0 - out**2),))


def add(a: Tensor, b: Tensor) -> Tensor:
    """Broadcasting sum."""
    try:
        out = a.data + b.data
    except ValueError as e:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}") from e
    return record(
        "add", (a, b), Tensor(out), lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape))
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Broadcasting elementwise product."""
    try:
        out = a.data * b.data
    except ValueError as e:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}") from e
    return record(
        "mul",
        (a, b),
        Tensor(out),
        lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)),
    )


def scale(x: Tensor, factor: float) -> Tensor:
    return record("scale", (x,), Tensor(x.data * factor), lambda g: (g * factor,))


# --- structural ---


def concat_channels(tensors: Sequence[Tensor]) -> Tensor:
    if not tensors:
        raise ShapeError("concat_channels needs at least one tensor")
    spatial = tensors[0].shape[:-1]
    for t in tensors[1:]:
        if t.shape[:-1] != spatial:
            raise ShapeError(f"concat_channels: spatial shape {t.shape[:-1]} != {spatial}")
    splits = np.cumsum([t.shape[-1] for t in tensors])[:-1]
    out = np.concatenate([t.data for t in tensors], axis=-1)
    return record(
        "concat_channels",
        tuple(tensors),
        Tensor(out),
        lambda g: tuple(np.split(g, splits, axis=-1)),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(..., n) @ (n, m) -> (..., m)."""
    if b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lead = list(range(g.ndim - 1))
        return g @ b.data.T, np.tensordot(a.data, g, axes=(lead, lead))

    return record("matmul", (a, b), Tensor(out), backward)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    original = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: {original} -> {shape}") from e
    return record("reshape", (x,), Tensor(out), lambda g: (g.reshape(original),))


def take_step(x: Tensor, index: int) -> Tensor:
    """Select one step along the sequence axis of (..., T, D)."""
    steps = x.shape[-2]
    if not -steps <= index < steps:
        raise ShapeError(f"take_step: index {index} outside {steps} steps")

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        gx = np.zeros_like(x.data)
        gx[..., index, :] = g
        return (gx,)

    return record("take_step", (x,), Tensor(x.data[..., index, :]), backward)


def global_avg_pool(x: Tensor, over: Literal["spatial", "width"] = "spatial") -> Tensor:
    """Mean over height and width, or over width only keeping rows as steps."""
    _check_image(x, "global_avg_pool")
    axes: tuple[int, ...] = (-3, -2) if over == "spatial" else (-2,)
    count = int(np.prod([x.shape[a] for a in axes]))
    out = x.data.mean(axis=axes)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        expanded = np.expand_dims(g, axis=axes)
        return (np.broadcast_to(expanded, x.shape) / count,)

    return record("global_avg_pool", (x,), Tensor(out), backward)


def mean(x: Tensor) -> Tensor:
    """Scalar mean of all elements."""
    n = x.size
    return record(
        "mean", (x,), Tensor(x.data.mean()), lambda g: (np.full(x.shape, float(g) / n),)
    )


# --- normalization and regularization ---


@dataclass
class BatchNormStats:
    """Running per-feature statistics used in eval mode."""

    mean: np.ndarray
    var: np.ndarray
    momentum: float = 0.9
    eps: float = 1e-5
    batches_seen: int = field(default=0)

    @classmethod
    def fresh(cls, features: int, momentum: float = 0.9, eps: float = 1e-5) -> "BatchNormStats":
        return cls(mean=np.zeros(features), var=np.ones(features), momentum=momentum, eps=eps)


def batchnorm(
    x: Tensor, gamma: Tensor, beta: Tensor, stats: BatchNormStats, mode: Mode = "train"
) -> Tensor:
    """
    Per-feature normalization over every axis except the last.

    Train mode uses batch statistics and folds them into ``stats`` as
    ``running = momentum * running + (1 - momentum) * batch``; eval mode uses
    the running statistics.
    """
    features = x.shape[-1]
    if gamma.shape != (features,) or beta.shape != (features,):
        raise ShapeError(f"batchnorm: gamma/beta must be ({features},)")
    axes = tuple(range(x.ndim - 1))
    m = x.size // features if features else 0
    if m == 0:
        raise ShapeError("batchnorm: empty batch")

    if mode == "train":
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        stats.mean = stats.momentum * stats.mean + (1.0 - stats.momentum) * mu
        stats.var = stats.momentum * stats.var + (1.0 - stats.momentum) * var
        stats.batches_seen += 1
    else:
        mu, var = stats.mean, stats.var

    inv_std = 1.0 / np.sqrt(var + stats.eps)
    xhat = (x.data - mu) * inv_std
    out = gamma.data * xhat + beta.data

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        g_gamma = (g * xhat).sum(axis=axes)
        g_beta = g.sum(axis=axes)
        g_xhat = g * gamma.data
        if mode == "train":
            gx = (
                inv_std
                / m
                * (m * g_xhat - g_xhat.sum(axis=axes) - xhat * (g_xhat * xhat).sum(axis=axes))
            )
        else:
            gx = g_xhat * inv_std
        return gx, g_gamma, g_beta

    return record("batchnorm", (x, gamma, beta), Tensor(out), backward)


def dropout(
    x: Tensor, p: float, mode: Mode, rng: np.random.Generator | int | None = None
) -> Tensor:
    """Inverted dropout; identity in eval mode or when p is 0."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if mode == "eval" or p == 0.0:
        return x
    generator = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    mask = (generator.random(x.shape) >= p) / (1.0 - p)
    return record("dropout", (x,), Tensor(x.data * mask), lambda g: (g * mask,))


# --- classifier head ---


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def dense(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    return add(matmul(x, weights), bias)


def dense_softmax_xent(
    features: Tensor, weights: Tensor, bias: Tensor, labels: int | Sequence[int] | np.ndarray
) -> tuple[np.ndarray, Tensor]:
    """
    Fused dense layer, softmax and mean cross-entropy.

    Returns the class probabilities and the scalar loss. Computed from
    max-shifted logits, so large logits stay finite.
    """
    if features.ndim not in (1, 2) or features.shape[-1] != weights.shape[0]:
        raise ShapeError(f"dense_softmax_xent: {features.shape} @ {weights.shape}")
    classes = weights.shape[1]
    if bias.shape != (classes,):
        raise ShapeError(f"dense_softmax_xent: bias must be ({classes},)")
    f = features.data.reshape(-1, features.shape[-1])
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if y.shape != (f.shape[0],):
        raise ShapeError(f"dense_softmax_xent: {y.shape[0]} labels for {f.shape[0]} samples")
    if np.any((y < 0) | (y >= classes)):
        raise ShapeError(f"dense_softmax_xent: label outside [0, {classes})")

    logits = f @ weights.data + bias.data
    shifted = logits - logits.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=-1))
    rows = np.arange(f.shape[0])
    loss = float(np.mean(log_norm - shifted[rows, y]))
    probs = np.exp(shifted - log_norm[:, None])

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        d_logits = probs.copy()
        d_logits[rows, y] -= 1.0
        d_logits *= float(g) / f.shape[0]
        return (
            (d_logits @ weights.data.T).reshape(features.shape),
            f.T @ d_logits,
            d_logits.sum(axis=0),
        )

    out = record("dense_softmax_xent", (features, weights, bias), Tensor(loss), backward)
    return probs.reshape(features.shape[:-1] + (classes,)), out
