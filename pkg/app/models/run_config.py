"""
Flat run configuration shared by every CLI command.

Every key has a documented default; unknown keys are rejected. Nested
domain settings are derived from it by the accessor methods.
"""

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.models.cass import AUGMENT_MENU, AugmentationSpec, RenderConfig
from app.models.network import ArchitectureConfig, SequenceMode, StcfConfig
from app.models.skeleton import ALL_PARTS, MSR_SUBSETS, DatasetId
from app.models.training import FusionMode, FusionWeights, LrDecayMode, TrainingConfig

ProtocolName = Literal["auto", "loocv-sequence", "loocv-subject", "cross-subject"]

DEFAULT_PROTOCOLS: dict[str, str] = {
    "utkinect": "loocv-sequence",
    "florence": "loocv-sequence",
    "msr": "cross-subject",
    "synthetic": "cross-subject",
}


def _split_list(value: str) -> list[str]:
    return [token.strip() for token in value.split(",") if token.strip()]


class RunConfig(BaseModel):
    """All keys of a run; the resolved set is echoed into every output directory."""

    model_config = ConfigDict(extra="forbid")

    # data
    dataset: DatasetId = Field(default="utkinect", description="Dataset id")
    raw_path: str = Field(default="", description="Raw dataset directory or file (ingest)")
    data_dir: str = Field(default="", description="Ingested corpus directory (manifest.txt)")
    corpus_dir: str = Field(default="", description="Rendered CASS corpus directory")
    model_dir: str = Field(default="", description="Directory holding <part>.ckpt files")
    predictions_dir: str = Field(default="", description="Directory holding <part>.csv files")
    evaluation_dir: str = Field(default="", description="Finished evaluation directory (report)")
    output_dir: str = Field(default="", description="Output directory; default <root>/<command>")
    msr_rows_per_frame: int = Field(
        default=20, description="MSR rows per frame: 20 screen rows or 40 screen+world rows"
    )
    synthetic_subjects: int = Field(default=10, ge=2, description="Synthetic corpus subjects")

    # preprocessing and rendering
    sequence_length: int = Field(default=60, ge=2, description="Frames after resampling")
    image_size: int = Field(default=224, ge=8, description="CASS side in pixels (even)")
    hue_start: float = Field(default=240.0, ge=0, lt=360, description="First-frame hue")
    hue_end: float = Field(default=0.0, ge=0, lt=360, description="Last-frame hue")
    line_width: int = Field(default=1, ge=1, le=8, description="Bone line width")
    margin: float = Field(default=0.10, ge=0, le=0.4, description="Bounding-box margin")
    augmentations: str = Field(
        default="none", description="none, all, or a comma list of crop,hflip,vflip,rot45,rot-45"
    )
    crop_fraction: float = Field(default=0.9, gt=0.1, le=1.0, description="Center-crop side")

    # architecture
    stcf_branch1: int = Field(default=64, ge=1)
    stcf_branch2_reduce: int = Field(default=32, ge=1)
    stcf_branch2: int = Field(default=64, ge=1)
    stcf_branch3_reduce: int = Field(default=128, ge=1)
    stcf_branch3_mid: int = Field(default=64, ge=1)
    stcf_branch3: int = Field(default=64, ge=1)
    stcf_branch4: int = Field(default=64, ge=1)
    hidden_size: int = Field(default=128, ge=1, description="LSTM hidden width")
    dropout: float = Field(default=0.2, ge=0, lt=1)
    sequence_mode: SequenceMode = Field(default="spatial-rows")

    # training
    batch_size: int = Field(default=256, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0)
    lr_decay: float = Field(default=0.98, gt=0, le=1)
    lr_decay_every: int = Field(default=20, ge=1)
    lr_decay_mode: LrDecayMode = Field(default="multiply")
    max_epochs: int = Field(default=1000, ge=1)
    patience: int = Field(default=50, ge=1)
    weight_noise: float = Field(default=0.01, ge=0)
    validation_fraction: float = Field(default=0.1, ge=0, lt=1)

    # protocol and fusion
    protocol: ProtocolName = Field(default="auto", description="auto picks the dataset default")
    test_subjects: str = Field(default="", description="Cross-subject test side override")
    subset: str = Field(default="", description="MSR subset AS1|AS2|AS3 for train/predict")
    fold: str = Field(default="", description="Fold name for train/predict; empty = first")
    parts: str = Field(default="all", description="all or comma list of FS,HS,LL,RL,LH,RH")
    fusion_mode: FusionMode = Field(default="test", description="Tune weights on test|validation")
    fusion_weights: str = Field(default="", description="Fixed weights w_HS..w_RH; empty = search")

    # verification
    gradcheck_scope: str = Field(default="all", description="all, primitives, composed, or names")
    gradcheck_eps: float = Field(default=1e-4, gt=0)

    seed: int = Field(default=0, description="Base seed for every random stream")

    @field_validator("image_size")
    @classmethod
    def even_size(cls, v: int) -> int:
        if v % 2:
            raise ValueError(f"image_size must be even, got {v}")
        return v

    @field_validator("msr_rows_per_frame")
    @classmethod
    def msr_layout(cls, v: int) -> int:
        if v not in (20, 40):
            raise ValueError(f"msr_rows_per_frame must be 20 or 40, got {v}")
        return v

    @field_validator("augmentations")
    @classmethod
    def known_augmentations(cls, v: str) -> str:
        if v in ("none", "all"):
            return v
        unknown = [name for name in _split_list(v) if name not in AUGMENT_MENU]
        if unknown:
            raise ValueError(f"unknown augmentations {unknown}; menu is {', '.join(AUGMENT_MENU)}")
        return v

    @field_validator("parts")
    @classmethod
    def known_parts(cls, v: str) -> str:
        if v == "all":
            return v
        unknown = [p for p in _split_list(v) if p not in ALL_PARTS]
        if unknown:
            raise ValueError(f"unknown parts {unknown}; expected {', '.join(ALL_PARTS)}")
        return v

    @field_validator("test_subjects")
    @classmethod
    def integer_subjects(cls, v: str) -> str:
        for token in _split_list(v):
            if not token.isdigit() or int(token) < 1:
                raise ValueError(f"test_subjects must be positive integers, got {token!r}")
        return v

    @field_validator("subset")
    @classmethod
    def known_subset(cls, v: str) -> str:
        if v and v not in MSR_SUBSETS:
            raise ValueError(f"subset must be one of {', '.join(MSR_SUBSETS)}, got {v!r}")
        return v

    @field_validator("fusion_weights")
    @classmethod
    def valid_weights(cls, v: str) -> str:
        if v:
            FusionWeights.parse(v)
        return v

    # --- derived domain configs ---

    def render_config(self) -> RenderConfig:
        return RenderConfig(
            image_size=self.image_size,
            hue_start=self.hue_start,
            hue_end=self.hue_end,
            line_width=self.line_width,
            margin=self.margin,
        )

    def augmentation_spec(self) -> AugmentationSpec | None:
        if self.augmentations == "none":
            return None
        if self.augmentations == "all":
            names = list(AUGMENT_MENU)
        else:
            names = _split_list(self.augmentations)
        return AugmentationSpec(
            transforms=names, crop_fraction=self.crop_fraction  # type: ignore[arg-type]
        )

    def architecture(self, n_classes: int) -> ArchitectureConfig:
        return ArchitectureConfig(
            image_size=self.image_size,
            n_classes=n_classes,
            stcf=StcfConfig(
                branch1=self.stcf_branch1,
                branch2_reduce=self.stcf_branch2_reduce,
                branch2=self.stcf_branch2,
                branch3_reduce=self.stcf_branch3_reduce,
                branch3_mid=self.stcf_branch3_mid,
                branch3=self.stcf_branch3,
                branch4=self.stcf_branch4,
            ),
            hidden_size=self.hidden_size,
            dropout=self.dropout,
            sequence_mode=self.sequence_mode,
        )

    def training_config(self) -> TrainingConfig:
        return TrainingConfig(
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            lr_decay=self.lr_decay,
            lr_decay_every=self.lr_decay_every,
            lr_decay_mode=self.lr_decay_mode,
            max_epochs=self.max_epochs,
            patience=self.patience,
            weight_noise=self.weight_noise,
            validation_fraction=self.validation_fraction,
            seed=self.seed,
        )

    def resolved_protocol(self) -> str:
        return DEFAULT_PROTOCOLS[self.dataset] if self.protocol == "auto" else self.protocol

    def selected_parts(self) -> list[str]:
        return list(ALL_PARTS) if self.parts == "all" else _split_list(self.parts)

    def test_subject_list(self) -> list[int] | None:
        subjects = [int(token) for token in _split_list(self.test_subjects)]
        return subjects or None

    def fixed_weights(self) -> FusionWeights | None:
        return FusionWeights.parse(self.fusion_weights) if self.fusion_weights else None
