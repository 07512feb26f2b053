"""
Security Game Models
Single-query membership game transcripts, estimates and probe results
"""

from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.models.kernel import TrainConfig


class Learner(str, Enum):
    """Learning algorithm challenged in the game"""
    UNDEFENDED = "undefended"
    SPLITAI = "splitai"
    DISTILLED = "distilled"


class LearnerSpec(BaseModel):
    """How a fresh learner is trained in every trial"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    learner: Learner
    train_config: TrainConfig
    distill_config: Optional[TrainConfig] = None
    K: int = Field(default=5, ge=2)
    L: int = Field(default=2, ge=1)
    lam: float = Field(default=0.0, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_k_l(self) -> "LearnerSpec":
        if self.L >= self.K:
            raise ValueError(f"L ({self.L}) must be below K ({self.K})")
        return self


class TrialRecord(BaseModel):
    """One game round"""
    trial: int = Field(..., ge=0)
    b: List[int] = Field(..., description="Membership bits of all 2n points")
    challenge_index: int = Field(..., ge=0)
    label: int = Field(..., ge=0)
    response: List[float]
    guess: int = Field(..., ge=0, le=1)
    param_fingerprint: str
    reference: Optional[List[float]] = Field(default=None, description="Fresh Split-AI answer (bound check only)")

    @property
    def true_bit(self) -> int:
        return self.b[self.challenge_index]

    @property
    def correct(self) -> bool:
        return self.guess == self.true_bit


class GameTranscript(BaseModel):
    """All rounds of one game, in trial order"""
    learner: Learner
    n: int = Field(..., ge=1)
    records: List[TrialRecord] = Field(default_factory=list)
    partial: bool = False

    @model_validator(mode="after")
    def _check_b(self) -> "GameTranscript":
        for r in self.records:
            if len(r.b) != 2 * self.n or sum(r.b) != self.n:
                raise ValueError(f"trial {r.trial}: b must have length {2 * self.n} and weight {self.n}")
            if r.challenge_index >= 2 * self.n:
                raise ValueError(f"trial {r.trial}: challenge index out of range")
        return self


class SqmiEstimate(BaseModel):
    """Adversary success rate with a normal-approximation 95% interval"""
    advantage: float = Field(..., ge=0.0, le=1.0)
    trials: int = Field(..., ge=0)
    requested_trials: int = Field(..., ge=0)
    ci_half_width: float = Field(..., ge=0.0)
    partial: bool = False

    def contains(self, value: float) -> bool:
        return abs(self.advantage - value) <= self.ci_half_width


class DistillationBoundCheck(BaseModel):
    """Measured success rate against 0.5 + alpha + beta_hat"""
    alpha: float
    beta_hat: float = Field(..., description="Per-trial average of the confidence-deviation proxy")
    sqmi_distilled: SqmiEstimate
    bound: float
    bound_satisfied: bool


class PairProbeBucket(BaseModel):
    """Correlated-pair probe result for one distance threshold"""
    threshold: float
    n_pairs: int
    pair_fraction: float = Field(..., ge=0.0, le=1.0)
    accuracy: Optional[float] = Field(default=None, description="Absent when the bucket is too small")
