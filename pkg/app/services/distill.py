"""
Self-Distillation
Query Split-AI once per training sample, mix with ground truth and train F_theta_II
"""

import logging
from typing import Optional

import numpy as np

from app.errors import InvalidParameterError, LabError
from app.models.data import Dataset
from app.models.distill import ProtectedModel, SoftLabelSet
from app.models.kernel import LabelKind, TrainConfig
from app.models.splitai import InferenceBranch
from app.services import nn_kernel
from app.services.splitai import InferenceTrace, QueryFn, SplitAiModel, splitai_infer_batch
from app.utils.validation import is_valid_lambda

logger = logging.getLogger(__name__)


def mix_soft_labels(outputs: np.ndarray, labels: np.ndarray, n_classes: int, lam: float) -> np.ndarray:
    """(1 - lam) * outputs + lam * onehot(labels)"""
    is_valid, error = is_valid_lambda(lam)
    if not is_valid:
        raise InvalidParameterError(error)
    onehot = np.eye(n_classes, dtype=np.float64)[np.asarray(labels, dtype=np.int64)]
    return (1.0 - lam) * outputs + lam * onehot


def compute_soft_labels(
    splitai: SplitAiModel,
    data: Dataset,
    lam: float,
    rng: np.random.Generator,
    trace: Optional[InferenceTrace] = None,
) -> SoftLabelSet:
    """
    Soft labels for the training set from a single Split-AI query per sample

    Args:
        splitai: Trained Split-AI over exactly this training set
        data: Training set D_tr
        lam: Weight of the one-hot ground truth in [0, 1]
        rng: Randomness source handed to Split-AI
        trace: Optional trace; a fresh one is used when omitted

    Returns:
        SoftLabelSet ordered by sample index
    """
    is_valid, error = is_valid_lambda(lam)
    if not is_valid:
        raise InvalidParameterError(error)

    trace = trace if trace is not None else InferenceTrace()
    before = len(trace)
    outputs = splitai_infer_batch(splitai, data.features, rng, trace)
    records = trace.records[before:]
    misses = [i for i, r in enumerate(records) if r.branch != InferenceBranch.MEMBER]
    if len(records) != data.n or misses:
        raise LabError(
            "Soft-label queries must all hit the member branch exactly once",
            queries=len(records),
            expected=data.n,
            non_member_hits=len(misses),
        )

    soft = mix_soft_labels(outputs, data.labels, data.n_classes, lam)
    logger.info(f"Computed {data.n} soft labels (lambda={lam})")
    return SoftLabelSet(labels=soft, splitai_seed=splitai.rng_seed, lam=lam)


def self_distill(
    splitai: SplitAiModel,
    data: Dataset,
    lam: float,
    cfg: TrainConfig,
    rng: np.random.Generator,
    soft_labels: Optional[SoftLabelSet] = None,
) -> ProtectedModel:
    """
    Train the protected model on Split-AI soft labels

    Args:
        splitai: Trained Split-AI
        data: Training set D_tr
        lam: Weight of the one-hot ground truth
        cfg: Distillation training configuration
        rng: Randomness source for the soft-label queries
        soft_labels: Precomputed soft labels (skips the Split-AI queries)

    Returns:
        ProtectedModel; its inference never consults Split-AI
    """
    soft = soft_labels if soft_labels is not None else compute_soft_labels(splitai, data, lam, rng)
    model = nn_kernel.train(
        data.features,
        soft.labels,
        LabelKind.SOFT_VECTOR,
        cfg,
        n_classes=data.n_classes,
    )
    logger.info(f"✅ Distilled model trained (lambda={lam}, epochs={cfg.epochs})")
    return ProtectedModel(
        model=model,
        lam=lam,
        train_config=cfg,
        splitai_seed=splitai.rng_seed,
        dataset_fingerprint=data.fingerprint(),
    )


def protected_query_fn(protected: ProtectedModel) -> QueryFn:
    """Deterministic black-box query function; safe for concurrent use"""
    def query(features: np.ndarray) -> np.ndarray:
        return nn_kernel.predict_batch(protected.model, features)
    return query


def stability_proxy(
    protected: ProtectedModel,
    soft_labels: SoftLabelSet,
    data: Dataset,
    alpha: float,
) -> float:
    """
    Fraction of training samples whose distilled confidence at the true label
    differs from the soft label's by more than alpha
    """
    if not 0.0 <= alpha <= 1.0:
        raise InvalidParameterError(f"alpha must be in [0, 1], got {alpha}")
    rows = np.arange(data.n)
    distilled = nn_kernel.predict_batch(protected.model, data.features)[rows, data.labels]
    reference = soft_labels.labels[rows, data.labels]
    return float(np.mean(np.abs(distilled - reference) > alpha))
