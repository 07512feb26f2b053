"""
Split-AI Models
Non-model index table and inference trace records
"""

from enum import Enum
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class InferenceBranch(str, Enum):
    """Which path of the adaptive inference rule answered a query"""
    MEMBER = "member"          # exact match: average over Id_non(x)
    NON_MEMBER = "non_member"  # no match: average over Id_non(x') for a random training x'


class NonModelIndexTable(BaseModel):
    """
    Id_non(x) for every training sample

    indices is an (n, L) int64 matrix; row s holds the L distinct
    sub-model indices (0-based, ascending) that never see sample s.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    indices: np.ndarray
    K: int = Field(..., ge=2)
    L: int = Field(..., ge=1)

    @field_validator("indices")
    @classmethod
    def _read_only(cls, value: np.ndarray) -> np.ndarray:
        if value.flags.writeable:
            value = value.copy()
            value.setflags(write=False)
        return value

    @model_validator(mode="after")
    def _check_invariants(self) -> "NonModelIndexTable":
        if not 1 <= self.L < self.K:
            raise ValueError(f"need 1 <= L < K, got K={self.K}, L={self.L}")
        idx = self.indices
        if idx.ndim != 2 or idx.shape[1] != self.L or idx.shape[0] < 1:
            raise ValueError(f"indices must be (n, {self.L}), got {idx.shape}")
        if idx.min() < 0 or idx.max() >= self.K:
            raise ValueError(f"indices must lie in [0, {self.K})")
        ordered = np.sort(idx, axis=1)
        if np.any(np.diff(ordered, axis=1) == 0):
            raise ValueError("each sample needs L distinct non-model indices")
        return self

    @property
    def n_samples(self) -> int:
        return int(self.indices.shape[0])

    def for_sample(self, sample: int) -> Tuple[int, ...]:
        return tuple(int(i) for i in self.indices[sample])

    def to_lists(self) -> List[List[int]]:
        return self.indices.tolist()


class TraceRecord(BaseModel):
    """One answered query"""
    model_config = ConfigDict(frozen=True)

    branch: InferenceBranch
    matched_sample: int = Field(..., description="Training sample whose Id_non was used")
    evaluated_models: Tuple[int, ...] = Field(..., description="Sub-models actually evaluated")
