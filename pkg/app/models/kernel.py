"""
Kernel Models
Training configuration for the feed-forward classifier
"""

from enum import Enum
from typing import List

from pydantic import BaseModel, ConfigDict, Field, field_validator


class Activation(str, Enum):
    """Hidden-layer activation"""
    TANH = "tanh"
    RELU = "relu"


class OptimizerKind(str, Enum):
    """Parameter update rule"""
    SGD = "sgd"
    ADAM = "adam"


class LabelKind(str, Enum):
    """Training target format"""
    HARD_CLASS = "hard_class"
    SOFT_VECTOR = "soft_vector"


class TrainConfig(BaseModel):
    """
    Training configuration for one Mlp

    Defaults follow the tabular setup: tanh hidden layers and Adam with
    learning rate 0.001. Hidden sizes are reduced from [1024, 512, 256]
    to desk scale.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    epochs: int = Field(default=30, gt=0, description="Passes over the training set")
    batch_size: int = Field(default=64, gt=0, description="Mini-batch size; must not exceed the training-set size")
    learning_rate: float = Field(default=0.001, gt=0.0)
    optimizer: OptimizerKind = Field(default=OptimizerKind.ADAM)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0, description="Adam first-moment decay")
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0, description="Adam second-moment decay")
    epsilon: float = Field(default=1e-8, gt=0.0, description="Adam denominator offset")
    momentum: float = Field(default=0.0, ge=0.0, lt=1.0, description="SGD momentum")
    weight_decay: float = Field(default=0.0, ge=0.0, description="L2 penalty added to weight gradients")
    seed: int = Field(default=0, ge=0, lt=2**64)
    hidden_sizes: List[int] = Field(default_factory=lambda: [128])
    activation: Activation = Field(default=Activation.TANH)

    @field_validator("hidden_sizes")
    @classmethod
    def _positive_hidden_sizes(cls, sizes: List[int]) -> List[int]:
        if any(size <= 0 for size in sizes):
            raise ValueError(f"hidden sizes must be positive, got {sizes}")
        return sizes

    def with_seed(self, seed: int) -> "TrainConfig":
        """Copy with a different seed"""
        return self.model_copy(update={"seed": seed})
