"""
Pydantic models for training, prediction, fusion and evaluation results.
"""

from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.models.skeleton import PART_LABELS

LrDecayMode = Literal["multiply", "literal"]
FusionMode = Literal["test", "validation"]

WEIGHT_CHOICES: tuple[int, ...] = (1, 2, 3, 4, 5)


class TrainingConfig(BaseModel):
    """Optimization settings for one part branch."""

    batch_size: int = Field(default=256, ge=1, description="Mini-batch size")
    learning_rate: float = Field(default=1e-3, gt=0, description="Initial Adam learning rate")
    lr_decay: float = Field(default=0.98, gt=0, le=1, description="Multiplier for multiply mode")
    lr_decay_every: int = Field(default=20, ge=1, description="Epochs between decays")
    lr_decay_mode: LrDecayMode = Field(
        default="multiply",
        description="multiply: lr * lr_decay per period; literal: lr * 0.02 per period",
    )
    max_epochs: int = Field(default=1000, ge=1)
    patience: int = Field(default=50, ge=1, description="Early-stopping patience in epochs")
    weight_noise: float = Field(default=0.01, ge=0, description="Gaussian sigma added per step")
    validation_fraction: float = Field(default=0.1, ge=0, lt=1)
    seed: int = 0

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a 0-based epoch index."""
        factor = 0.02 if self.lr_decay_mode == "literal" else self.lr_decay
        return self.learning_rate * factor ** (epoch // self.lr_decay_every)


class EpochRecord(BaseModel):
    epoch: int
    lr: float
    train_loss: float
    train_accuracy: float
    val_loss: float | None = None
    val_accuracy: float | None = None


class TrainingResult(BaseModel):
    """History of one training run and where it stopped."""

    part: str
    fold: str
    validation_ids: list[str] = Field(default_factory=list)
    history: list[EpochRecord] = Field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    early_stopped: bool = False

    @property
    def final(self) -> EpochRecord | None:
        return self.history[-1] if self.history else None

    @property
    def best(self) -> EpochRecord | None:
        for record in self.history:
            if record.epoch == self.best_epoch:
                return record
        return None


class PartPredictions(BaseModel):
    """Per-sample class probabilities of one part branch over a split."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    part: str
    class_names: list[str]
    sample_ids: list[str]
    probabilities: np.ndarray
    labels: np.ndarray

    @field_validator("probabilities", mode="before")
    @classmethod
    def coerce_probabilities(cls, v: object) -> np.ndarray:
        arr = np.array(v, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"probabilities must be (samples, classes), got {arr.shape}")
        return arr

    @field_validator("labels", mode="before")
    @classmethod
    def coerce_labels(cls, v: object) -> np.ndarray:
        return np.array(v, dtype=np.int64).reshape(-1)

    @model_validator(mode="after")
    def check_consistent(self) -> "PartPredictions":
        n = len(self.sample_ids)
        if self.probabilities.shape != (n, len(self.class_names)):
            raise ValueError(
                f"{self.part}: probabilities {self.probabilities.shape} for "
                f"{n} samples x {len(self.class_names)} classes"
            )
        if self.labels.shape != (n,):
            raise ValueError(f"{self.part}: {self.labels.size} labels for {n} samples")
        if n and not np.allclose(self.probabilities.sum(axis=1), 1.0, atol=1e-6):
            raise ValueError(f"{self.part}: probability rows must sum to 1")
        return self

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def predicted(self) -> np.ndarray:
        """Argmax per sample; ties resolve to the lowest class index."""
        return self.probabilities.argmax(axis=1)

    def accuracy(self) -> float:
        if not self.sample_ids:
            return 0.0
        return float(np.mean(self.predicted() == self.labels))


class FusionWeights(BaseModel):
    """Integer weights (HS, LL, RL, LH, RH), each in 1..5."""

    model_config = ConfigDict(frozen=True)

    weights: tuple[int, int, int, int, int]

    @field_validator("weights")
    @classmethod
    def check_range(cls, v: tuple[int, ...]) -> tuple[int, ...]:
        if any(w not in WEIGHT_CHOICES for w in v):
            raise ValueError(f"fusion weights must each be in 1..5, got {v}")
        return v

    @classmethod
    def parse(cls, text: str) -> "FusionWeights":
        """From "2,3,4,4,5" (also accepts braces and spaces)."""
        cleaned = text.strip().strip("{}()[]")
        try:
            values = tuple(int(tok) for tok in cleaned.replace(" ", "").split(","))
        except ValueError as e:
            raise ValueError(f"malformed fusion weights {text!r}") from e
        if len(values) != len(PART_LABELS):
            raise ValueError(f"need {len(PART_LABELS)} fusion weights, got {len(values)}")
        return cls(weights=values)  # type: ignore[arg-type]

    def as_array(self) -> np.ndarray:
        return np.array(self.weights, dtype=np.float64)

    def __str__(self) -> str:
        return "{" + ",".join(str(w) for w in self.weights) + "}"


class FusionResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    weights: FusionWeights
    scores: np.ndarray
    predicted: np.ndarray
    accuracy: float


class RocCurve(BaseModel):
    """One-vs-rest ROC points of one class."""

    class_index: int
    class_name: str
    fpr: list[float]
    tpr: list[float]
    thresholds: list[float]
    auc: float = Field(..., ge=0.0, le=1.0)


class RocSummary(BaseModel):
    curves: list[RocCurve] = Field(default_factory=list)
    macro_auc: float | None = None
    skipped_classes: list[int] = Field(default_factory=list)


class Metrics(BaseModel):
    """Accuracy, confusion matrix and ROC of one set of predictions."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    accuracy: float
    confusion: np.ndarray
    roc: RocSummary
    history: list[EpochRecord] = Field(default_factory=list)

    @property
    def class_counts(self) -> np.ndarray:
        return self.confusion.sum(axis=1)
