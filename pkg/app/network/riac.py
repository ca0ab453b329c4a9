"""
Residual inception attention network for one body-part branch.

x (S x S x 3)
  -> four-branch inception block (STCF), channel-concatenated at S/2
  -> attention-driven residual block: relu(proj(avgpool(x) * A(x)) + STCF(x))
  -> sequence former -> batchnorm -> LSTM -> LSTM (last step)
  -> dropout -> dense -> softmax
"""

from pathlib import Path
from typing import Any

import numpy as np

from app.engine import ops
from app.engine.checkpoint import load_checkpoint, save_checkpoint
from app.engine.ops import BatchNormStats, Mode
from app.engine.recurrent import lstm_forward
from app.engine.tensor import EngineError, Tensor
from app.models.cass import CassImage
from app.models.network import ArchitectureConfig, LstmState, SequenceMode
from app.utils.logger import get_logger

logger = get_logger(__name__)

_BN_MEAN = "bn.running_mean"
_BN_VAR = "bn.running_var"


class ModelError(Exception):
    """Model construction, input, or checkpoint mismatch."""
    pass


def _he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class RiacNetModel:
    """All learnable parameters and running statistics of one part branch."""

    def __init__(
        self,
        config: ArchitectureConfig,
        params: dict[str, Tensor],
        bn_stats: BatchNormStats,
    ) -> None:
        self.config = config
        self.params = params
        self.bn_stats = bn_stats

    # --- construction ---

    @staticmethod
    def parameter_shapes(config: ArchitectureConfig) -> dict[str, tuple[int, ...]]:
        cin = config.in_channels
        st = config.stcf
        c = st.out_channels
        hidden = config.hidden_size
        conv = {
            "stcf.b1.conv": (1, cin, st.branch1),
            "stcf.b2.reduce": (1, cin, st.branch2_reduce),
            "stcf.b2.conv": (3, st.branch2_reduce, st.branch2),
            "stcf.b3.reduce": (1, cin, st.branch3_reduce),
            "stcf.b3.mid": (3, st.branch3_reduce, st.branch3_mid),
            "stcf.b3.conv": (3, st.branch3_mid, st.branch3),
            "stcf.b4.conv": (1, cin, st.branch4),
            "att.conv7": (7, cin, 1),
            "att.pool_conv": (1, cin, 1),
            "att.mix": (1, 1, 1),
            "att.proj": (1, cin, c),
        }
        shapes: dict[str, tuple[int, ...]] = {}
        for name, (k, c_in, c_out) in conv.items():
            shapes[f"{name}.w"] = (k, k, c_in, c_out)
            shapes[f"{name}.b"] = (c_out,)
        shapes["bn.gamma"] = (c,)
        shapes["bn.beta"] = (c,)
        shapes["lstm1.w"] = (hidden + c, 4 * hidden)
        shapes["lstm1.b"] = (4 * hidden,)
        shapes["lstm2.w"] = (2 * hidden, 4 * hidden)
        shapes["lstm2.b"] = (4 * hidden,)
        shapes["dense.w"] = (hidden, config.n_classes)
        shapes["dense.b"] = (config.n_classes,)
        return shapes

    @classmethod
    def initialize(cls, config: ArchitectureConfig, seed: int) -> "RiacNetModel":
        """
        He-uniform convolution and dense weights, LSTM weights uniform in
        +-1/sqrt(hidden), forget-gate biases 1, every other bias 0, BN
        gamma 1 and beta 0.
        """
        rng = np.random.default_rng(seed)
        hidden = config.hidden_size
        params: dict[str, Tensor] = {}
        for name, shape in cls.parameter_shapes(config).items():
            if name.startswith("lstm") and name.endswith(".w"):
                bound = 1.0 / np.sqrt(hidden)
                data = rng.uniform(-bound, bound, size=shape)
            elif name.startswith("lstm"):
                data = np.zeros(shape)
                data[hidden : 2 * hidden] = 1.0
            elif name == "bn.gamma":
                data = np.ones(shape)
            elif name.endswith(".w"):
                fan_in = int(np.prod(shape[:-1]))
                data = _he_uniform(rng, shape, fan_in)
            else:
                data = np.zeros(shape)
            params[name] = Tensor(data, name=name)
        stats = BatchNormStats.fresh(
            config.stcf.out_channels, momentum=config.bn_momentum, eps=config.bn_eps
        )
        return cls(config, params, stats)

    @classmethod
    def zeros(cls, config: ArchitectureConfig) -> "RiacNetModel":
        """Every parameter zero, running statistics fresh."""
        params = {
            name: Tensor(np.zeros(shape), name=name)
            for name, shape in cls.parameter_shapes(config).items()
        }
        stats = BatchNormStats.fresh(
            config.stcf.out_channels, momentum=config.bn_momentum, eps=config.bn_eps
        )
        return cls(config, params, stats)

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def describe(self) -> str:
        return self.config.describe()

    # --- persistence ---

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {name: p.data for name, p in self.params.items()}
        arrays[_BN_MEAN] = self.bn_stats.mean
        arrays[_BN_VAR] = self.bn_stats.var
        return arrays

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: array.copy() for name, array in self.state_arrays().items()}

    def restore(self, arrays: dict[str, np.ndarray]) -> None:
        expected = self.parameter_shapes(self.config)
        for name, shape in expected.items():
            if name not in arrays:
                raise ModelError(f"missing parameter {name}")
            if tuple(arrays[name].shape) != shape:
                raise ModelError(f"{name}: shape {arrays[name].shape}, expected {shape}")
            self.params[name].data = np.array(arrays[name], dtype=np.float64)
        if _BN_MEAN in arrays and _BN_VAR in arrays:
            self.bn_stats.mean = np.array(arrays[_BN_MEAN], dtype=np.float64)
            self.bn_stats.var = np.array(arrays[_BN_VAR], dtype=np.float64)

    def save(self, path: Path, metadata: dict[str, Any] | None = None) -> None:
        """Write the checkpoint and its ``.arch.txt`` layer description."""
        meta = dict(metadata or {})
        meta["architecture"] = self.config.model_dump(mode="json")
        save_checkpoint(path, self.state_arrays(), meta)
        path.with_name(path.name + ".arch.txt").write_text(self.describe(), encoding="utf-8")
        logger.debug(f"Saved checkpoint {path} ({self.parameter_count()} parameters)")

    @classmethod
    def load(cls, path: Path) -> tuple["RiacNetModel", dict[str, Any]]:
        arrays, meta = load_checkpoint(path)
        if "architecture" not in meta:
            raise ModelError(f"{path}: checkpoint carries no architecture config")
        config = ArchitectureConfig.model_validate(meta["architecture"])
        model = cls.zeros(config)
        model.restore(arrays)
        return model, meta


# --- forward pieces ---


def _conv(
    x: Tensor, model: RiacNetModel, name: str, stride: int = 1, padding: int = 0
) -> Tensor:
    return ops.conv2d(x, model[f"{name}.w"], model[f"{name}.b"], stride=stride, padding=padding)


def stcf_branches(x: Tensor, model: RiacNetModel) -> list[Tensor]:
    """The four inception branch outputs, each at half resolution."""
    b1 = ops.relu(_conv(x, model, "stcf.b1.conv", stride=2))

    b2 = ops.relu(_conv(x, model, "stcf.b2.reduce"))
    b2 = ops.relu(_conv(b2, model, "stcf.b2.conv", stride=2, padding=1))

    b3 = ops.relu(_conv(x, model, "stcf.b3.reduce"))
    b3 = ops.relu(_conv(b3, model, "stcf.b3.mid", padding=1))
    b3 = ops.relu(_conv(b3, model, "stcf.b3.conv", stride=2, padding=1))

    b4 = ops.relu(_conv(ops.maxpool2d(x, k=2, stride=2), model, "stcf.b4.conv"))
    return [b1, b2, b3, b4]


def check_input(x: Tensor, model: RiacNetModel) -> None:
    """Trailing (S, S, 3) must match the configured image size."""
    size = model.config.image_size
    if x.ndim not in (3, 4) or x.shape[-3:] != (size, size, 3):
        raise ModelError(f"input is {x.shape}, model expects (..., {size}, {size}, 3)")


def stcf_forward(x: Tensor, model: RiacNetModel) -> Tensor:
    check_input(x, model)
    return ops.concat_channels(stcf_branches(x, model))


def attention_map(x: Tensor, model: RiacNetModel) -> Tensor:
    """sigmoid(conv1x1(relu(conv7x7/2(x) + conv1x1(maxpool(x))))), one channel in (0, 1)."""
    check_input(x, model)
    wide = _conv(x, model, "att.conv7", stride=2, padding=3)
    pooled = _conv(ops.maxpool2d(x, k=2, stride=2), model, "att.pool_conv")
    return ops.sigmoid(_conv(ops.relu(ops.add(wide, pooled)), model, "att.mix"))


def attention_gate(x: Tensor, model: RiacNetModel) -> Tensor:
    """Attention-gated skip path: the pooled input scaled by the map, lifted to STCF width."""
    gated = ops.mul(ops.avgpool2d(x, k=2, stride=2), attention_map(x, model))
    return _conv(gated, model, "att.proj")


def adrb_forward(x: Tensor, model: RiacNetModel) -> Tensor:
    return ops.relu(ops.add(attention_gate(x, model), stcf_forward(x, model)))


def sequence_former(featmap: Tensor, mode: SequenceMode) -> Tensor:
    """
    spatial-rows: width-averaged rows, top row first, as (..., H, C).
    single-step: full spatial average as a one-step sequence (..., 1, C).
    """
    if mode == "spatial-rows":
        return ops.global_avg_pool(featmap, over="width")
    if mode == "single-step":
        pooled = ops.global_avg_pool(featmap, over="spatial")
        return ops.reshape(pooled, pooled.shape[:-1] + (1, pooled.shape[-1]))
    raise ModelError(f"unknown sequence mode {mode!r}")


def lstm_layer(
    seq: Tensor, weights: Tensor, bias: Tensor, state: LstmState | None = None
) -> tuple[Tensor, LstmState]:
    try:
        out, h, c = lstm_forward(
            seq,
            weights,
            bias,
            h0=state.h if state is not None else None,
            c0=state.c if state is not None else None,
        )
    except EngineError as e:
        raise ModelError(f"lstm: {e}") from e
    return out, LstmState(h=h, c=c)


def head_features(
    featmap: Tensor,
    model: RiacNetModel,
    mode: Mode,
    rng: np.random.Generator | int | None = None,
) -> Tensor:
    """Everything between the feature map and the dense layer."""
    seq = sequence_former(featmap, model.config.sequence_mode)
    seq = ops.batchnorm(seq, model["bn.gamma"], model["bn.beta"], model.bn_stats, mode)
    seq, _ = lstm_layer(seq, model["lstm1.w"], model["lstm1.b"])
    seq, _ = lstm_layer(seq, model["lstm2.w"], model["lstm2.b"])
    last = ops.take_step(seq, -1)
    return ops.dropout(last, model.config.dropout, mode, rng)


def head_forward(
    featmap: Tensor,
    model: RiacNetModel,
    mode: Mode,
    rng: np.random.Generator | int | None = None,
) -> np.ndarray:
    features = head_features(featmap, model, mode, rng)
    logits = ops.dense(features, model["dense.w"], model["dense.b"])
    return ops.softmax(logits.data)


def image_tensor(images: CassImage | list[CassImage], model: RiacNetModel) -> Tensor:
    """Pixel bytes mapped to [0, 1]; a list becomes a batch."""
    batch = images if isinstance(images, list) else [images]
    size = model.config.image_size
    for image in batch:
        if image.height != size or image.width != size:
            raise ModelError(
                f"{image.sequence_id}/{image.part}: image is {image.width}x{image.height}, "
                f"model expects {size}x{size}"
            )
    data = np.stack([image.as_float() for image in batch])
    return Tensor(data if isinstance(images, list) else data[0])


def model_forward(
    cass: CassImage | list[CassImage],
    model: RiacNetModel,
    mode: Mode = "eval",
    rng: np.random.Generator | int | None = None,
) -> np.ndarray:
    """Class probabilities for one image (n_classes,) or a batch (N, n_classes)."""
    return head_forward(adrb_forward(image_tensor(cass, model), model), model, mode, rng)


def model_loss(
    x: Tensor,
    labels: np.ndarray,
    model: RiacNetModel,
    mode: Mode = "train",
    rng: np.random.Generator | int | None = None,
) -> tuple[np.ndarray, Tensor]:
    """Probabilities and mean cross-entropy of a batch (N, S, S, C) against integer labels."""
    features = head_features(adrb_forward(x, model), model, mode, rng)
    return ops.dense_softmax_xent(features, model["dense.w"], model["dense.b"], labels)
