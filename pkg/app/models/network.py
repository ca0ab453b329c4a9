"""
Architecture configuration for one part branch of the network.
"""

from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

SequenceMode = Literal["spatial-rows", "single-step"]


class StcfConfig(BaseModel):
    """Channel widths of the four inception branches; defaults give 64 channels each."""

    branch1: int = Field(default=64, ge=1, description="Branch 1: 1x1 conv, stride 2")
    branch2_reduce: int = Field(default=32, ge=1, description="Branch 2: 1x1 reduction")
    branch2: int = Field(default=64, ge=1, description="Branch 2: 3x3 conv, stride 2")
    branch3_reduce: int = Field(default=128, ge=1, description="Branch 3: 1x1 reduction")
    branch3_mid: int = Field(default=64, ge=1, description="Branch 3: 3x3 conv, stride 1")
    branch3: int = Field(default=64, ge=1, description="Branch 3: 3x3 conv, stride 2")
    branch4: int = Field(default=64, ge=1, description="Branch 4: 1x1 conv after 2x2 max-pool")

    @property
    def out_channels(self) -> int:
        return self.branch1 + self.branch2 + self.branch3 + self.branch4

    @classmethod
    def uniform(cls, width: int) -> "StcfConfig":
        """Every convolution at the same width; used for narrow test instantiations."""
        return cls(
            branch1=width,
            branch2_reduce=width,
            branch2=width,
            branch3_reduce=width,
            branch3_mid=width,
            branch3=width,
            branch4=width,
        )


class ArchitectureConfig(BaseModel):
    image_size: int = Field(default=224, ge=8, description="Square CASS side in pixels")
    in_channels: int = Field(default=3, ge=1)
    n_classes: int = Field(..., ge=2)
    stcf: StcfConfig = Field(default_factory=StcfConfig)
    hidden_size: int = Field(default=128, ge=1, description="LSTM hidden width, both layers")
    dropout: float = Field(default=0.2, ge=0.0, lt=1.0)
    sequence_mode: SequenceMode = "spatial-rows"
    bn_momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    bn_eps: float = Field(default=1e-5, gt=0.0)

    @field_validator("image_size")
    @classmethod
    def even_size(cls, v: int) -> int:
        if v % 2:
            raise ValueError(f"image_size must be even, got {v}")
        return v

    @property
    def feature_size(self) -> int:
        return self.image_size // 2

    @property
    def sequence_length(self) -> int:
        return self.feature_size if self.sequence_mode == "spatial-rows" else 1

    def describe(self) -> str:
        """Layer list with output shapes, one line per layer."""
        s, h = self.image_size, self.feature_size
        st = self.stcf
        c = st.out_channels
        rows = [
            ("input", f"{s}x{s}x{self.in_channels}"),
            ("stcf.branch1 conv1x1/2", f"{h}x{h}x{st.branch1}"),
            ("stcf.branch2 conv1x1/1", f"{s}x{s}x{st.branch2_reduce}"),
            ("stcf.branch2 conv3x3/2", f"{h}x{h}x{st.branch2}"),
            ("stcf.branch3 conv1x1/1", f"{s}x{s}x{st.branch3_reduce}"),
            ("stcf.branch3 conv3x3/1", f"{s}x{s}x{st.branch3_mid}"),
            ("stcf.branch3 conv3x3/2", f"{h}x{h}x{st.branch3}"),
            ("stcf.branch4 maxpool2x2/2", f"{h}x{h}x{self.in_channels}"),
            ("stcf.branch4 conv1x1/1", f"{h}x{h}x{st.branch4}"),
            ("stcf.concat", f"{h}x{h}x{c}"),
            ("attention.conv7x7/2", f"{h}x{h}x1"),
            ("attention.pool_conv1x1", f"{h}x{h}x1"),
            ("attention.map sigmoid(conv1x1)", f"{h}x{h}x1"),
            ("attention.avgpool2x2/2", f"{h}x{h}x{self.in_channels}"),
            ("attention.proj conv1x1", f"{h}x{h}x{c}"),
            ("adrb relu(proj + stcf)", f"{h}x{h}x{c}"),
            (f"former {self.sequence_mode}", f"{self.sequence_length}x{c}"),
            ("batchnorm", f"{self.sequence_length}x{c}"),
            ("lstm1", f"{self.sequence_length}x{self.hidden_size}"),
            ("lstm2 last step", f"{self.hidden_size}"),
            (f"dropout p={self.dropout}", f"{self.hidden_size}"),
            ("dense softmax", f"{self.n_classes}"),
        ]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name.ljust(width)}  {shape}" for name, shape in rows) + "\n"


class LstmState(BaseModel):
    """Hidden and cell vectors of one LSTM layer."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden: int, batch: int = 1) -> "LstmState":
        return cls(h=np.zeros((batch, hidden)), c=np.zeros((batch, hidden)))
