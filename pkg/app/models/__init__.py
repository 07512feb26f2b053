"""
Models package
Datasets, learners, attacks, the security game and run reports
"""

from app.models.data import (
    FeatureKind,
    Lineage,
    Dataset,
    EvalSplit,
)

from app.models.kernel import (
    Activation,
    OptimizerKind,
    LabelKind,
    TrainConfig,
)

from app.models.splitai import (
    InferenceBranch,
    NonModelIndexTable,
    TraceRecord,
)

from app.models.distill import (
    SoftLabelSet,
    ProtectedModel,
)

from app.models.attack import (
    MiaScoreKind,
    Direction,
    ThresholdMode,
    AttackFamily,
    HEADLINE_FAMILIES,
    MiaScore,
    DecisionRule,
    ScoredSlice,
    SplitPredictions,
    AttackResult,
    AttackReport,
)

from app.models.game import (
    Learner,
    LearnerSpec,
    TrialRecord,
    GameTranscript,
    SqmiEstimate,
    DistillationBoundCheck,
    PairProbeBucket,
)

from app.models.experiment import (
    SCHEMA_VERSION,
    PRESETS,
    DatasetSource,
    Defense,
    ReportFormat,
    DatasetSpec,
    AttackToggles,
    LabelOnlyParams,
    GameParams,
    ExperimentConfig,
    DefenseRow,
    EarlyStoppingPoint,
    KnowledgePoint,
    KlPoint,
    GameSummary,
    RunReport,
)

__all__ = [
    'FeatureKind',
    'Lineage',
    'Dataset',
    'EvalSplit',
    'Activation',
    'OptimizerKind',
    'LabelKind',
    'TrainConfig',
    'InferenceBranch',
    'NonModelIndexTable',
    'TraceRecord',
    'SoftLabelSet',
    'ProtectedModel',
    'MiaScoreKind',
    'Direction',
    'ThresholdMode',
    'AttackFamily',
    'HEADLINE_FAMILIES',
    'MiaScore',
    'DecisionRule',
    'ScoredSlice',
    'SplitPredictions',
    'AttackResult',
    'AttackReport',
    'Learner',
    'LearnerSpec',
    'TrialRecord',
    'GameTranscript',
    'SqmiEstimate',
    'DistillationBoundCheck',
    'PairProbeBucket',
    'SCHEMA_VERSION',
    'PRESETS',
    'DatasetSource',
    'Defense',
    'ReportFormat',
    'DatasetSpec',
    'AttackToggles',
    'LabelOnlyParams',
    'GameParams',
    'ExperimentConfig',
    'DefenseRow',
    'EarlyStoppingPoint',
    'KnowledgePoint',
    'KlPoint',
    'GameSummary',
    'RunReport',
]
