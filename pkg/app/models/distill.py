"""
Distillation Models
Soft-label sets and the protected model F_theta_II
"""

from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.models.kernel import TrainConfig
from app.utils.validation import is_valid_confidence_vector


class SoftLabelSet(BaseModel):
    """One soft label per training sample, ordered by sample index"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    labels: np.ndarray
    splitai_seed: int
    lam: float = Field(..., ge=0.0, le=1.0, description="Weight of the one-hot ground truth")

    @model_validator(mode="after")
    def _check_simplex(self) -> "SoftLabelSet":
        is_valid, error = is_valid_confidence_vector(self.labels)
        if not is_valid:
            raise ValueError(error)
        return self

    @property
    def n(self) -> int:
        return int(self.labels.shape[0])


class ProtectedModel(BaseModel):
    """Self-distilled classifier with its lambda provenance"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    model: object = Field(..., description="nn_kernel.Mlp")
    lam: float = Field(..., ge=0.0, le=1.0)
    train_config: TrainConfig
    splitai_seed: Optional[int] = None
    dataset_fingerprint: Optional[str] = None
