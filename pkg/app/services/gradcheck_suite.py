"""
Named gradient checks over every differentiable primitive and the composed
network blocks, evaluated at points away from ReLU and max-pool kinks.
"""

from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
import pandas as pd
from pydantic import BaseModel

from app.engine import ops
from app.engine.gradcheck import dominant_cell_image, grad_check, smooth_uniform
from app.engine.ops import BatchNormStats
from app.engine.recurrent import lstm_forward
from app.engine.tensor import Tensor
from app.models.network import ArchitectureConfig, StcfConfig
from app.network.riac import RiacNetModel, adrb_forward, head_features, model_loss
from app.services.config_store import ConfigError
from app.utils.logger import get_logger
from app.utils.seeding import make_rng

logger = get_logger(__name__)

Group = Literal["primitives", "composed"]
Builder = Callable[[np.random.Generator], tuple[Callable[[], Tensor], list[Tensor]]]

PRIMITIVE_THRESHOLD = 1e-6
COMPOSED_THRESHOLD = 1e-4
COMPOSED_IMAGE = 28
COMPOSED_WIDTH = 2


@dataclass(frozen=True)
class GradCheck:
    name: str
    group: Group
    build: Builder
    threshold: float
    max_coords: int | None = None


class GradCheckResult(BaseModel):
    name: str
    group: str
    max_error: float
    threshold: float
    passed: bool


def _away_from_zero(shape: tuple[int, ...], rng: np.random.Generator) -> Tensor:
    signs = rng.choice([-1.0, 1.0], size=shape)
    return Tensor(signs * rng.uniform(0.1, 1.0, size=shape))


def _spaced(shape: tuple[int, ...], rng: np.random.Generator) -> Tensor:
    """Distinct values at least 0.01 apart, in random order."""
    size = int(np.prod(shape))
    return Tensor(rng.permutation(size).reshape(shape) * 0.01)


# --- primitive builders ---


def _unary(op: Callable[[Tensor], Tensor], make: Callable[..., Tensor]) -> Builder:
    def build(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
        x = make((3, 4, 2), rng)
        r = Tensor(rng.normal(size=op(x).shape))
        return lambda: ops.mean(ops.mul(op(x), r)), [x]

    return build


def _normal(shape: tuple[int, ...], rng: np.random.Generator) -> Tensor:
    return Tensor(rng.normal(size=shape))


def _conv(stride: int, padding: int, k: int) -> Builder:
    def build(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
        x = _normal((2, 6, 6, 2), rng)
        w = _normal((k, k, 2, 3), rng)
        b = _normal((3,), rng)
        r = Tensor(rng.normal(size=ops.conv2d(x, w, b, stride, padding).shape))
        return lambda: ops.mean(ops.mul(ops.conv2d(x, w, b, stride, padding), r)), [x, w, b]

    return build


def _maxpool(stride: int) -> Builder:
    def build(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
        x = dominant_cell_image((6, 6, 2), rng) if stride == 2 else _spaced((5, 5, 2), rng)
        r = Tensor(rng.normal(size=ops.maxpool2d(x, 2, stride).shape))
        return lambda: ops.mean(ops.mul(ops.maxpool2d(x, 2, stride), r)), [x]

    return build


def _binary(op: Callable[[Tensor, Tensor], Tensor]) -> Builder:
    def build(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
        a, b = _normal((3, 4), rng), _normal((4,), rng)
        r = Tensor(rng.normal(size=(3, 4)))
        return lambda: ops.mean(ops.mul(op(a, b), r)), [a, b]

    return build


def _concat(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
    a, b = _normal((3, 3, 2), rng), _normal((3, 3, 4), rng)
    r = Tensor(rng.normal(size=(3, 3, 6)))
    return lambda: ops.mean(ops.mul(ops.concat_channels([a, b]), r)), [a, b]


def _matmul(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
    a, b = _normal((2, 3, 4), rng), _normal((4, 5), rng)
    r = Tensor(rng.normal(size=(2, 3, 5)))
    return lambda: ops.mean(ops.mul(ops.matmul(a, b), r)), [a, b]


def _reshape_take(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
    x = _normal((2, 12), rng)
    r = Tensor(rng.normal(size=(2, 4)))
    return lambda: ops.mean(ops.mul(ops.take_step(ops.reshape(x, (2, 3, 4)), -1), r)), [x]


def _pool(over: Literal["spatial", "width"]) -> Builder:
    def build(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
        x = _normal((2, 4, 5, 3), rng)
        r = Tensor(rng.normal(size=ops.global_avg_pool(x, over).shape))
        return lambda: ops.mean(ops.mul(ops.global_avg_pool(x, over), r)), [x]

    return build


def _avgpool(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
    x = _normal((6, 6, 2), rng)
    r = Tensor(rng.normal(size=(3, 3, 2)))
    return lambda: ops.mean(ops.mul(ops.avgpool2d(x, 2, 2), r)), [x]


def _batchnorm(mode: Literal["train", "eval"]) -> Builder:
    def build(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
        x = _normal((4, 3, 5), rng)
        gamma = Tensor(rng.uniform(0.5, 1.5, size=5))
        beta = _normal((5,), rng)
        stats = BatchNormStats.fresh(5)
        stats.mean = rng.normal(size=5) * 0.1
        stats.var = rng.uniform(0.5, 1.5, size=5)
        r = Tensor(rng.normal(size=(4, 3, 5)))
        return lambda: ops.mean(ops.mul(ops.batchnorm(x, gamma, beta, stats, mode), r)), [
            x,
            gamma,
            beta,
        ]

    return build


def _dropout(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
    x = _normal((4, 6), rng)
    r = Tensor(rng.normal(size=(4, 6)))
    return lambda: ops.mean(ops.mul(ops.dropout(x, 0.3, "train", 7), r)), [x]


def _xent(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
    f, w, b = _normal((4, 6), rng), _normal((6, 3), rng), _normal((3,), rng)
    labels = np.array([0, 2, 1, 2])
    return lambda: ops.dense_softmax_xent(f, w, b, labels)[1], [f, w, b]


def _lstm(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
    hidden, features = 3, 2
    x = _normal((2, 5, features), rng)
    w = Tensor(rng.normal(size=(hidden + features, 4 * hidden)) * 0.5)
    b = _normal((4 * hidden,), rng)
    r = Tensor(rng.normal(size=(2, 5, hidden)))
    return lambda: ops.mean(ops.mul(lstm_forward(x, w, b)[0], r)), [x, w, b]


def _fan_out(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
    x = _normal((3, 4), rng)
    r = Tensor(rng.normal(size=(3, 4)))
    return lambda: ops.mean(ops.mul(ops.add(ops.mul(x, x), ops.tanh(x)), r)), [x]


# --- composed builders ---


def _narrow_model(rng: np.random.Generator, n_classes: int = 3) -> RiacNetModel:
    """Narrow model whose convolutions all have positive weights and biases."""
    config = ArchitectureConfig(
        image_size=COMPOSED_IMAGE,
        n_classes=n_classes,
        stcf=StcfConfig.uniform(COMPOSED_WIDTH),
        hidden_size=4,
    )
    model = RiacNetModel.initialize(config, seed=int(rng.integers(2**31)))
    for name, tensor in model.parameters().items():
        if name.startswith(("stcf.", "att.")):
            if name.endswith(".w"):
                tensor.data = smooth_uniform(tensor.shape, rng).data
            else:
                tensor.data = np.full(tensor.shape, 0.1)
    return model


def _trunk_params(model: RiacNetModel) -> list[Tensor]:
    return [t for name, t in model.parameters().items() if name.startswith(("stcf.", "att."))]


def _adrb(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
    model = _narrow_model(rng)
    x = dominant_cell_image((COMPOSED_IMAGE, COMPOSED_IMAGE, 3), rng)
    r = Tensor(rng.normal(size=adrb_forward(x, model).shape))
    return lambda: ops.mean(ops.mul(adrb_forward(x, model), r)), [x, *_trunk_params(model)]


def _head(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
    model = _narrow_model(rng)
    featmap = _normal((3, 4, 4, model.config.stcf.out_channels), rng)
    labels = np.array([0, 1, 2])
    head = [t for name, t in model.parameters().items() if not name.startswith(("stcf.", "att."))]

    def fn() -> Tensor:
        features = head_features(featmap, model, "train", rng=11)
        return ops.dense_softmax_xent(features, model["dense.w"], model["dense.b"], labels)[1]

    return fn, [featmap, *head]


def _model(rng: np.random.Generator) -> tuple[Callable[[], Tensor], list[Tensor]]:
    model = _narrow_model(rng)
    x = Tensor(
        np.stack(
            [dominant_cell_image((COMPOSED_IMAGE, COMPOSED_IMAGE, 3), rng).data for _ in range(2)]
        )
    )
    labels = np.array([0, 2])
    return lambda: model_loss(x, labels, model, "eval")[1], [x, *model.parameters().values()]


CHECKS: tuple[GradCheck, ...] = (
    GradCheck("conv2d", "primitives", _conv(1, 0, 3), PRIMITIVE_THRESHOLD),
    GradCheck("conv2d-stride2-pad1", "primitives", _conv(2, 1, 3), PRIMITIVE_THRESHOLD),
    GradCheck("conv2d-7x7", "primitives", _conv(2, 3, 7), PRIMITIVE_THRESHOLD),
    GradCheck("maxpool2d", "primitives", _maxpool(2), PRIMITIVE_THRESHOLD),
    GradCheck("maxpool2d-stride1", "primitives", _maxpool(1), PRIMITIVE_THRESHOLD),
    GradCheck("avgpool2d", "primitives", _avgpool, PRIMITIVE_THRESHOLD),
    GradCheck("relu", "primitives", _unary(ops.relu, _away_from_zero), PRIMITIVE_THRESHOLD),
    GradCheck("sigmoid", "primitives", _unary(ops.sigmoid, _normal), PRIMITIVE_THRESHOLD),
    GradCheck("tanh", "primitives", _unary(ops.tanh, _normal), PRIMITIVE_THRESHOLD),
    GradCheck("add", "primitives", _binary(ops.add), PRIMITIVE_THRESHOLD),
    GradCheck("mul", "primitives", _binary(ops.mul), PRIMITIVE_THRESHOLD),
    GradCheck("concat", "primitives", _concat, PRIMITIVE_THRESHOLD),
    GradCheck("matmul", "primitives", _matmul, PRIMITIVE_THRESHOLD),
    GradCheck("reshape-take-step", "primitives", _reshape_take, PRIMITIVE_THRESHOLD),
    GradCheck("avg-pool-spatial", "primitives", _pool("spatial"), PRIMITIVE_THRESHOLD),
    GradCheck("avg-pool-width", "primitives", _pool("width"), PRIMITIVE_THRESHOLD),
    GradCheck("batchnorm-train", "primitives", _batchnorm("train"), PRIMITIVE_THRESHOLD),
    GradCheck("batchnorm-eval", "primitives", _batchnorm("eval"), PRIMITIVE_THRESHOLD),
    GradCheck("dropout", "primitives", _dropout, PRIMITIVE_THRESHOLD),
    GradCheck("softmax-xent", "primitives", _xent, PRIMITIVE_THRESHOLD),
    GradCheck("lstm", "primitives", _lstm, PRIMITIVE_THRESHOLD),
    GradCheck("fan-out", "primitives", _fan_out, PRIMITIVE_THRESHOLD),
    GradCheck("adrb", "composed", _adrb, COMPOSED_THRESHOLD, max_coords=12),
    GradCheck("head", "composed", _head, COMPOSED_THRESHOLD, max_coords=12),
    GradCheck("model", "composed", _model, COMPOSED_THRESHOLD, max_coords=8),
)


def select_checks(scope: str) -> list[GradCheck]:
    """``all``, a group name, or a comma list of check names."""
    if scope == "all":
        return list(CHECKS)
    if scope in ("primitives", "composed"):
        return [c for c in CHECKS if c.group == scope]
    by_name = {c.name: c for c in CHECKS}
    names = [token.strip() for token in scope.split(",") if token.strip()]
    unknown = [n for n in names if n not in by_name]
    if unknown or not names:
        raise ConfigError(
            f"unknown gradcheck scope {scope!r}; use all, primitives, composed "
            f"or names from: {', '.join(by_name)}"
        )
    return [by_name[n] for n in names]


def run_gradchecks(
    scope: str = "all", eps: float = 1e-4, seed: int = 0
) -> list[GradCheckResult]:
    results = []
    for check in select_checks(scope):
        rng = make_rng(seed, "gradcheck", check.name)
        fn, inputs = check.build(rng)
        error = grad_check(fn, inputs, eps=eps, max_coords=check.max_coords, rng=rng)
        passed = error <= check.threshold
        results.append(
            GradCheckResult(
                name=check.name,
                group=check.group,
                max_error=error,
                threshold=check.threshold,
                passed=passed,
            )
        )
        status = "ok" if passed else "FAIL"
        level = logger.info if passed else logger.warning
        level(f"gradcheck {check.name}: max relative error {error:.3e} ({status})")
    return results


def results_frame(results: list[GradCheckResult]) -> pd.DataFrame:
    return pd.DataFrame([r.model_dump() for r in results])
