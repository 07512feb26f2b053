"""
API Request and Response Models
Bodies accepted and returned by the HTTP routes
"""

from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.models.attack import Direction, MiaScoreKind
from app.models.experiment import PRESETS, Defense, ExperimentConfig, ReportFormat
from app.models.game import Learner


class GenerateDatasetRequest(BaseModel):
    """Synthetic dataset parameters"""
    n_classes: int = Field(default=10, ge=2)
    n_features: int = Field(default=100, ge=2)
    n_per_class: int = Field(default=400, ge=1)
    flip_noise: float = Field(default=0.4, ge=0.0, le=0.5)
    seed: int = Field(..., ge=0, lt=2**64)
    out: Optional[str] = Field(default=None, description="Write the dataset as CSV to this path")


class GenerateDatasetResponse(BaseModel):
    n: int
    d: int
    k: int
    feature_kind: str
    seed: int
    fingerprint: str
    path: Optional[str] = None


class ConfigSource(BaseModel):
    """A full configuration or a preset name, plus an optional seed override"""
    model_config = ConfigDict(extra="forbid")

    config: Optional[ExperimentConfig] = None
    preset: Optional[str] = None
    seed: Optional[int] = Field(default=None, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _one_source(self) -> "ConfigSource":
        if self.config is not None and self.preset is not None:
            raise ValueError("Give either config or preset, not both")
        if self.preset is not None and self.preset not in PRESETS:
            raise ValueError(f"Unknown preset '{self.preset}', expected one of {sorted(PRESETS)}")
        return self

    def resolve(self) -> ExperimentConfig:
        if self.config is not None:
            cfg = self.config
        elif self.preset is not None:
            cfg = PRESETS[self.preset]()
        else:
            cfg = ExperimentConfig()
        if self.seed is not None:
            cfg = ExperimentConfig.model_validate({**cfg.model_dump(), "seed": self.seed})
        return cfg


class RunExperimentRequest(ConfigSource):
    emit: bool = Field(default=False, description="Also write report files to the config's output_dir")
    formats: Optional[List[ReportFormat]] = None


class TrainModelRequest(ConfigSource):
    defense: Defense
    out: str = Field(..., description="Model directory")


class TrainModelResponse(BaseModel):
    defense: Defense
    directory: str
    train_accuracy: float
    test_accuracy: float
    gap: float


class AttackModelRequest(ConfigSource):
    model_dir: str
    all_average: bool = False


class GameRequest(ConfigSource):
    learner: Learner = Learner.SPLITAI
    adversary: str = Field(default="metric", pattern="^(metric|random)$")
    trials: Optional[int] = Field(default=None, ge=100)
    n: Optional[int] = Field(default=None, ge=1)
    challenge_index: Optional[int] = Field(default=None, ge=0)
    alpha: Optional[float] = Field(default=None, gt=0.0, le=1.0)


class ScoreRequest(BaseModel):
    """One prediction vector to score"""
    kind: MiaScoreKind = MiaScoreKind.CONFIDENCE
    prediction: List[float] = Field(..., min_length=2)
    label: int = Field(..., ge=0)
    reference: Optional[List[float]] = None


class ScoreResponse(BaseModel):
    kind: MiaScoreKind
    value: float
    direction: Direction
