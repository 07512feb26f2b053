"""
Experiment Models
Run configuration, presets and the versioned run report
"""

from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

from app.models.attack import AttackFamily, AttackReport, AttackResult, HEADLINE_FAMILIES
from app.models.game import DistillationBoundCheck, SqmiEstimate
from app.models.kernel import Activation, TrainConfig

SCHEMA_VERSION = "1.0"


class DatasetSource(str, Enum):
    SYNTHETIC = "synthetic"
    CSV = "csv"


class Defense(str, Enum):
    """Rows of the results table"""
    UNDEFENDED = "undefended"
    AOAO = "aoao"
    SPLITAI = "splitai"
    DISTILLED = "distilled"


class ReportFormat(str, Enum):
    JSON = "json"
    TEXT_TABLE = "text_table"
    CSV = "csv"


class DatasetSpec(BaseModel):
    """Synthetic parameters or a CSV path"""
    model_config = ConfigDict(extra="forbid")

    source: DatasetSource = DatasetSource.SYNTHETIC
    n_classes: int = Field(default=10, ge=2)
    n_features: int = Field(default=100, ge=2)
    n_per_class: int = Field(default=400, ge=1)
    flip_noise: float = Field(default=0.4, ge=0.0, le=0.5)
    csv_path: Optional[str] = None

    @model_validator(mode="after")
    def _csv_needs_path(self) -> "DatasetSpec":
        if self.source == DatasetSource.CSV and not self.csv_path:
            raise ValueError("csv source needs csv_path")
        return self


class AttackToggles(BaseModel):
    model_config = ConfigDict(extra="forbid")

    direct: bool = True
    nn: bool = True
    label_only: bool = True
    indirect: bool = True
    replay: bool = True
    adaptive: bool = True


class LabelOnlyParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    flips_range: List[int] = Field(default_factory=lambda: list(range(1, 31)))
    n_noise: int = Field(default=100, ge=1)
    replay_repeats: int = Field(default=3, ge=1)


class GameParams(BaseModel):
    """Security-game stage"""
    model_config = ConfigDict(extra="forbid")

    enabled: bool = False
    n: int = Field(default=25, ge=1)
    trials: int = Field(default=300, ge=100)
    K: int = Field(default=5, ge=2)
    L: int = Field(default=2, ge=1)
    pilot_trials: int = Field(default=20, ge=1)
    alpha: float = Field(default=0.1, gt=0.0, le=1.0)
    learner_config: TrainConfig = Field(
        default_factory=lambda: TrainConfig(epochs=20, batch_size=8, learning_rate=0.01, hidden_sizes=[16])
    )
    data: DatasetSpec = Field(
        default_factory=lambda: DatasetSpec(n_classes=2, n_features=20, n_per_class=25, flip_noise=0.2)
    )


def _undefended_config() -> TrainConfig:
    return TrainConfig(epochs=60, batch_size=64, learning_rate=0.001, hidden_sizes=[128])


def _submodel_config() -> TrainConfig:
    return TrainConfig(epochs=60, batch_size=64, learning_rate=0.001, hidden_sizes=[128])


def _distill_config() -> TrainConfig:
    return TrainConfig(epochs=120, batch_size=64, learning_rate=0.001, hidden_sizes=[128])


def _attack_config() -> TrainConfig:
    return TrainConfig(epochs=30, batch_size=64, learning_rate=0.001, hidden_sizes=[64, 64], activation=Activation.RELU)


class ExperimentConfig(BaseModel):
    """
    Everything a run depends on

    Keys of the JSON config file are exactly these field names. Stage
    seeds are derived from `seed`.
    """
    model_config = ConfigDict(extra="forbid")

    name: str = "desk"
    dataset: DatasetSpec = Field(default_factory=DatasetSpec)
    n_members: int = Field(default=2000, ge=1)
    K: int = Field(default=25, ge=2)
    L: int = Field(default=10, ge=1)
    submodel_config: TrainConfig = Field(default_factory=_submodel_config)
    undefended_config: TrainConfig = Field(default_factory=_undefended_config)
    distill_config: TrainConfig = Field(default_factory=_distill_config)
    attack_config: TrainConfig = Field(default_factory=_attack_config)
    lambdas: List[float] = Field(default_factory=lambda: [0.0])
    knowledge_fraction: float = Field(default=0.5, gt=0.0, lt=1.0)
    knowledge_sweep: List[float] = Field(default_factory=list)
    attacks: AttackToggles = Field(default_factory=AttackToggles)
    label_only: LabelOnlyParams = Field(default_factory=LabelOnlyParams)
    early_stopping: bool = False
    kl_pairs: List[Tuple[int, int]] = Field(default_factory=list)
    game: GameParams = Field(default_factory=GameParams)
    seed: int = Field(default=0, ge=0, lt=2**64)
    output_dir: str = "runs/desk"
    formats: List[ReportFormat] = Field(default_factory=lambda: list(ReportFormat))
    persist_models: bool = False
    persist_soft_labels: bool = False
    n_jobs: Optional[int] = None

    @field_validator("lambdas")
    @classmethod
    def _lambdas_in_range(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("lambdas must not be empty")
        for lam in value:
            if not 0.0 <= lam <= 1.0:
                raise ValueError(f"lambda {lam} outside [0, 1]")
        return value

    @field_validator("knowledge_sweep")
    @classmethod
    def _fractions_open(cls, value: List[float]) -> List[float]:
        for f in value:
            if not 0.0 < f < 1.0:
                raise ValueError(f"knowledge fraction {f} outside (0, 1)")
        return value

    @model_validator(mode="after")
    def _check_shapes(self) -> "ExperimentConfig":
        if self.L >= self.K:
            raise ValueError(f"L ({self.L}) must be below K ({self.K})")
        for K, L in self.kl_pairs:
            if not 1 <= L < K:
                raise ValueError(f"kl pair ({K}, {L}) needs 1 <= L < K")
        if self.dataset.source == DatasetSource.SYNTHETIC:
            total = self.dataset.n_classes * self.dataset.n_per_class
            if self.n_members >= total:
                raise ValueError(f"n_members ({self.n_members}) must be below the pool size ({total})")
        return self

    @classmethod
    def desk(cls, seed: int = 0) -> "ExperimentConfig":
        """Acceptance benchmark: 10 classes, 100 binary features, 2000/2000 split, K=25, L=10"""
        return cls(
            seed=seed,
            lambdas=[0.0, 1.0],
            knowledge_sweep=[0.1, 0.5, 0.9],
            early_stopping=True,
            game=GameParams(enabled=True),
        )

    @classmethod
    def game_tiny(cls, seed: int = 0) -> "ExperimentConfig":
        """Security game only, with tiny learners"""
        tiny = TrainConfig(epochs=20, batch_size=8, learning_rate=0.01, hidden_sizes=[16])
        return cls(
            name="game-tiny",
            dataset=DatasetSpec(n_classes=2, n_features=20, n_per_class=50, flip_noise=0.2),
            n_members=50,
            K=5,
            L=2,
            submodel_config=tiny,
            undefended_config=tiny,
            distill_config=tiny.model_copy(update={"epochs": 40}),
            attack_config=_attack_config().model_copy(update={"batch_size": 8}),
            attacks=AttackToggles(direct=False, nn=False, label_only=False, indirect=False, replay=False, adaptive=False),
            game=GameParams(enabled=True),
            seed=seed,
            output_dir="runs/game-tiny",
        )


PRESETS = {"desk": ExperimentConfig.desk, "game-tiny": ExperimentConfig.game_tiny}


class DefenseRow(BaseModel):
    """One row of the results table"""
    defense: Defense
    lam: Optional[float] = None
    train_accuracy: float
    test_accuracy: float
    attacks: List[AttackResult] = Field(default_factory=list)
    mean_submodel_accuracy: Optional[float] = None

    @computed_field
    @property
    def gap(self) -> float:
        return self.train_accuracy - self.test_accuracy

    def _best(self, family: AttackFamily) -> Optional[float]:
        values = [a.accuracy for a in self.attacks if a.family == family]
        return max(values) if values else None

    @computed_field
    @property
    def best_direct(self) -> Optional[float]:
        return self._best(AttackFamily.DIRECT)

    @computed_field
    @property
    def best_label_only(self) -> Optional[float]:
        return self._best(AttackFamily.LABEL_ONLY)

    @computed_field
    @property
    def best_adaptive(self) -> Optional[float]:
        return self._best(AttackFamily.ADAPTIVE)

    @computed_field
    @property
    def best_overall(self) -> Optional[float]:
        values = [v for v in (self._best(f) for f in HEADLINE_FAMILIES) if v is not None]
        return max(values) if values else None

    @computed_field
    @property
    def best_attack(self) -> Optional[str]:
        headline = [a for a in self.attacks if a.family in HEADLINE_FAMILIES]
        return max(headline, key=lambda a: a.accuracy).name if headline else None

    def attack(self, name: str) -> Optional[AttackResult]:
        return next((a for a in self.attacks if a.name == name), None)

    def attack_report(self) -> AttackReport:
        """Per-attack listing; its best_attack ranges over every family"""
        target = self.defense.value if self.lam is None else f"{self.defense.value}[{self.lam}]"
        return AttackReport(target=target, results=self.attacks)


class EarlyStoppingPoint(BaseModel):
    epoch: int
    train_accuracy: float
    test_accuracy: float
    best_direct: float


class KnowledgePoint(BaseModel):
    knowledge_fraction: float
    lam: float
    attacks: List[AttackResult]

    @computed_field
    @property
    def best_adaptive(self) -> Optional[float]:
        values = [a.accuracy for a in self.attacks if a.family == AttackFamily.ADAPTIVE]
        return max(values) if values else None


class KlPoint(BaseModel):
    K: int
    L: int
    splitai_test_accuracy: float
    mean_submodel_accuracy: float
    splitai_best_direct: float
    distilled_test_accuracy: float
    distilled_best_direct: float


class GameSummary(BaseModel):
    n: int
    splitai: Optional[SqmiEstimate] = None
    undefended: Optional[SqmiEstimate] = None
    distillation_bound: Optional[DistillationBoundCheck] = None


class RunReport(BaseModel):
    """Machine-readable result of one run"""
    schema_version: str = SCHEMA_VERSION
    config: ExperimentConfig
    dataset: Dict = Field(default_factory=dict)
    rows: List[DefenseRow] = Field(default_factory=list)
    early_stopping: List[EarlyStoppingPoint] = Field(default_factory=list)
    knowledge_sweep: List[KnowledgePoint] = Field(default_factory=list)
    kl_sweep: List[KlPoint] = Field(default_factory=list)
    game: Optional[GameSummary] = None
    failed_stages: List[str] = Field(default_factory=list)
    unevaluated: List[str] = Field(default_factory=list)
    timings: Dict[str, float] = Field(default_factory=dict, exclude=True)

    @property
    def complete(self) -> bool:
        return not self.failed_stages

    def row(self, defense: Defense, lam: Optional[float] = None) -> Optional[DefenseRow]:
        return next((r for r in self.rows if r.defense == defense and r.lam == lam), None)
