"""
Fused LSTM layer with backpropagation through time.

Gate layout along the 4*hidden axis is [input, forget, output, candidate];
the weight rows are ordered [h_{t-1}, x_t].
"""

from dataclasses import dataclass

import numpy as np

from app.engine.tensor import ShapeError, Tensor, record


def _sigmoid(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@dataclass
class LstmCache:
    inputs: np.ndarray  # (T, N, hidden + features) concatenated [h_prev, x_t]
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c: np.ndarray
    c_prev: np.ndarray
    tanh_c: np.ndarray


def lstm_forward(
    x: Tensor,
    weights: Tensor,
    bias: Tensor,
    h0: np.ndarray | None = None,
    c0: np.ndarray | None = None,
) -> tuple[Tensor, np.ndarray, np.ndarray]:
    """
    Run an LSTM over a (N, T, D) or (T, D) sequence.

    Returns the per-step hidden states with the input's leading shape and
    hidden width, plus the final (h, c) pair as plain arrays.
    """
    if x.ndim not in (2, 3):
        raise ShapeError(f"lstm expects (T, D) or (N, T, D), got {x.shape}")
    seq = x.data if x.ndim == 3 else x.data[None]
    n, steps, features = seq.shape
    if weights.ndim != 2 or weights.shape[1] % 4:
        raise ShapeError(f"lstm weights must be (hidden + D, 4 * hidden), got {weights.shape}")
    hidden = weights.shape[1] // 4
    if weights.shape[0] != hidden + features:
        raise ShapeError(
            f"lstm weights have {weights.shape[0]} rows, expected {hidden} + {features}"
        )
    if bias.shape != (4 * hidden,):
        raise ShapeError(f"lstm bias must be ({4 * hidden},), got {bias.shape}")
    if steps == 0:
        raise ShapeError("lstm needs at least one step")

    h = np.zeros((n, hidden)) if h0 is None else np.broadcast_to(h0, (n, hidden)).copy()
    c = np.zeros((n, hidden)) if c0 is None else np.broadcast_to(c0, (n, hidden)).copy()
    w, b = weights.data, bias.data

    gate_fields = ("i", "f", "o", "g", "c", "c_prev", "tanh_c")
    cache = LstmCache(
        inputs=np.empty((steps, n, hidden + features)),
        **{key: np.empty((steps, n, hidden)) for key in gate_fields},
    )
    outputs = np.empty((n, steps, hidden))
    for t in range(steps):
        z = np.concatenate([h, seq[:, t]], axis=1)
        a = z @ w + b
        i = _sigmoid(a[:, :hidden])
        f = _sigmoid(a[:, hidden : 2 * hidden])
        o = _sigmoid(a[:, 2 * hidden : 3 * hidden])
        g = np.tanh(a[:, 3 * hidden :])
        cache.c_prev[t] = c
        c = f * c + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        cache.inputs[t], cache.i[t], cache.f[t], cache.o[t], cache.g[t] = z, i, f, o, g
        cache.c[t], cache.tanh_c[t] = c, tanh_c
        outputs[:, t] = h

    def backward(grad: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        g_out = grad if x.ndim == 3 else grad[None]
        gx = np.zeros_like(seq)
        gw = np.zeros_like(w)
        gb = np.zeros_like(b)
        dh_next = np.zeros((n, hidden))
        dc_next = np.zeros((n, hidden))
        for t in reversed(range(steps)):
            i, f, o, g = cache.i[t], cache.f[t], cache.o[t], cache.g[t]
            tanh_c = cache.tanh_c[t]
            dh = g_out[:, t] + dh_next
            dc = dh * o * (1.0 - tanh_c**2) + dc_next
            da = np.concatenate(
                [
                    dc * g * i * (1.0 - i),
                    dc * cache.c_prev[t] * f * (1.0 - f),
                    dh * tanh_c * o * (1.0 - o),
                    dc * i * (1.0 - g**2),
                ],
                axis=1,
            )
            gw += cache.inputs[t].T @ da
            gb += da.sum(axis=0)
            dz = da @ w.T
            dh_next = dz[:, :hidden]
            gx[:, t] = dz[:, hidden:]
            dc_next = dc * f
        return (gx if x.ndim == 3 else gx[0]), gw, gb

    out_data = outputs if x.ndim == 3 else outputs[0]
    out = record("lstm", (x, weights, bias), Tensor(out_data), backward)
    return out, h, c
