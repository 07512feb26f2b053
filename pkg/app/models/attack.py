"""
Attack Models
Membership scores, calibrated decision rules and attack reports
"""

from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

from app.models.data import Lineage


class MiaScoreKind(str, Enum):
    """Per-target membership signal"""
    CORRECTNESS = "correctness"
    CONFIDENCE = "confidence"
    NEG_ENTROPY = "neg_entropy"
    NEG_MENTR = "neg_mentr"
    NOISE_ROBUSTNESS = "noise_robustness"
    L2_DIST = "l2_dist"
    CE_DIST = "ce_dist"
    NN_POSTERIOR = "nn_posterior"


class Direction(str, Enum):
    """Which side of the threshold is called member"""
    HIGHER_MEANS_MEMBER = "higher_means_member"
    LOWER_MEANS_MEMBER = "lower_means_member"


class ThresholdMode(str, Enum):
    """Class-independent tau or class-dependent tau_y"""
    GLOBAL = "global_threshold"
    PER_CLASS = "per_class_threshold"


class AttackFamily(str, Enum):
    """Report column an attack contributes to"""
    DIRECT = "direct"
    LABEL_ONLY = "label_only"
    ADAPTIVE = "adaptive"
    INDIRECT = "indirect"
    REPLAY = "replay"


HEADLINE_FAMILIES = (AttackFamily.DIRECT, AttackFamily.LABEL_ONLY, AttackFamily.ADAPTIVE)


class MiaScore(BaseModel):
    """A single finite membership score"""
    model_config = ConfigDict(frozen=True)

    value: float
    direction: Direction
    kind: MiaScoreKind

    @field_validator("value")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not np.isfinite(value):
            raise ValueError("score must be finite")
        return value


class DecisionRule(BaseModel):
    """Calibrated threshold rule"""
    model_config = ConfigDict(frozen=True)

    mode: ThresholdMode
    direction: Direction
    threshold: float = Field(..., description="Global tau; also the fallback for classes without tau_y")
    class_thresholds: Dict[int, float] = Field(default_factory=dict)
    calibration_accuracy: float = Field(..., ge=0.0, le=1.0)

    def threshold_for(self, labels: np.ndarray) -> np.ndarray:
        labels = np.asarray(labels, dtype=np.int64)
        if self.mode == ThresholdMode.GLOBAL:
            return np.full(labels.shape, self.threshold, dtype=np.float64)
        return np.array([self.class_thresholds.get(int(y), self.threshold) for y in labels], dtype=np.float64)

    def decide(self, scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """Boolean member calls"""
        scores = np.asarray(scores, dtype=np.float64)
        taus = self.threshold_for(labels)
        if self.direction == Direction.HIGHER_MEANS_MEMBER:
            return scores >= taus
        return scores <= taus


class ScoredSlice(BaseModel):
    """Target-model outputs for one slice of an EvalSplit"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    preds: np.ndarray
    labels: np.ndarray
    features: np.ndarray
    lineage: Lineage
    is_member: bool

    @model_validator(mode="after")
    def _aligned(self) -> "ScoredSlice":
        if self.preds.shape[0] != self.labels.shape[0] or self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("preds, labels and features must have the same number of rows")
        return self

    @property
    def n(self) -> int:
        return int(self.labels.shape[0])


class SplitPredictions(BaseModel):
    """Outputs on the four EvalSplit slices"""
    model_config = ConfigDict(frozen=True)

    known_members: ScoredSlice
    known_nonmembers: ScoredSlice
    eval_members: ScoredSlice
    eval_nonmembers: ScoredSlice


class AttackResult(BaseModel):
    """Accuracy of one attack on the evaluation sets"""
    name: str
    family: AttackFamily
    accuracy: float = Field(..., ge=0.0, le=1.0)
    rule: Optional[DecisionRule] = None
    queries_per_target: int = Field(default=1, ge=1)
    detail: Dict[str, Any] = Field(default_factory=dict)


class AttackReport(BaseModel):
    """All attacks run against one target"""
    target: str
    results: List[AttackResult] = Field(default_factory=list)

    def best_of(self, family: AttackFamily) -> Optional[float]:
        values = [r.accuracy for r in self.results if r.family == family]
        return max(values) if values else None

    @computed_field
    @property
    def best_attack(self) -> Optional[Dict[str, Any]]:
        if not self.results:
            return None
        best = max(self.results, key=lambda r: r.accuracy)
        return {"name": best.name, "accuracy": best.accuracy}
