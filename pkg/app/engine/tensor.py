"""
Dense float64 tensors and the reverse-mode tape.

Operations executed while a Tape is active (``with Tape() as tape:``) are
recorded in execution order, which is already a topological order.
``backward(tape, loss)`` sweeps the record in reverse and accumulates
gradients additively at fan-out.
"""

import math
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class EngineError(Exception):
    """Base exception for tensor engine errors."""
    pass


class ShapeError(EngineError):
    """Operand shapes are incompatible."""
    pass


class KinkProximityError(EngineError):
    """A gradient-check point lies too close to a ReLU or max-pool kink."""
    pass


class Tensor:
    """Row-major float64 array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(
        self,
        data: np.ndarray | float | Sequence[float],
        requires_grad: bool = False,
        name: str | None = None,
    ) -> None:
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, shape is {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Copy of the values, cut from any graph."""
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; ops imports tensor, so resolve lazily.
    def __add__(self, other: "Tensor") -> "Tensor":
        from app.engine import ops

        return ops.add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        from app.engine import ops

        return ops.mul(self, other)


@dataclass
class TapeNode:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class Tape:
    """Ordered record of executed operations for one worker."""

    _local = threading.local()

    def __init__(self) -> None:
        self.nodes: list[TapeNode] = []
        # Smallest distance of any ReLU input / max-pool window to a kink.
        self.kink_margin: float = math.inf

    def __enter__(self) -> "Tape":
        stack = self._stack()
        stack.append(self)
        return self

    def __exit__(self, *exc: object) -> None:
        self._stack().pop()

    @classmethod
    def _stack(cls) -> list["Tape"]:
        if not hasattr(cls._local, "stack"):
            cls._local.stack = []
        return cls._local.stack

    @classmethod
    def current(cls) -> "Tape | None":
        stack = cls._stack()
        return stack[-1] if stack else None

    def record(
        self, op: str, inputs: tuple[Tensor, ...], output: Tensor, backward: BackwardFn
    ) -> None:
        self.nodes.append(TapeNode(op=op, inputs=inputs, output=output, backward=backward))

    def note_kink_margin(self, margin: float) -> None:
        self.kink_margin = min(self.kink_margin, margin)

    def __len__(self) -> int:
        return len(self.nodes)


def record(op: str, inputs: Iterable[Tensor], output: Tensor, backward: BackwardFn) -> Tensor:
    """Register an executed op on the active tape when any input needs a gradient."""
    tape = Tape.current()
    inputs = tuple(inputs)
    if tape is not None and any(t.requires_grad for t in inputs):
        output.requires_grad = True
        tape.record(op, inputs, output, backward)
    return output


def note_kink_margin(margin: float) -> None:
    tape = Tape.current()
    if tape is not None:
        tape.note_kink_margin(margin)


def backward(tape: Tape, loss: Tensor, params: Iterable[Tensor] = ()) -> None:
    """
    Populate ``.grad`` of every gradient-requiring tensor on the tape.

    Tensors on the tape that the loss does not depend on receive zeros, and so
    does every tensor in ``params`` that never reached the tape.
    """
    if loss.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
    if not any(node.output is loss for node in tape.nodes):
        raise EngineError("loss was not produced on this tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        upstream = grads.get(id(node.output))
        if upstream is None:
            continue
        for tensor, grad in zip(node.inputs, node.backward(upstream)):
            if grad is None or not tensor.requires_grad:
                continue
            if grad.shape != tensor.data.shape:
                raise ShapeError(
                    f"{node.op} backward produced {grad.shape} for input {tensor.shape}"
                )
            key = id(tensor)
            grads[key] = grads[key] + grad if key in grads else grad

    for node in tape.nodes:
        for tensor in (*node.inputs, node.output):
            if tensor.requires_grad:
                tensor.grad = grads.get(id(tensor), np.zeros_like(tensor.data))
    for tensor in params:
        if tensor.requires_grad and id(tensor) not in grads:
            tensor.grad = np.zeros_like(tensor.data)


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to an operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad
