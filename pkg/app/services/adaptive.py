"""
Adaptive Attacks
Shadow Split-AI on attacker-known members and the four soft-label attacks
"""

import logging
from typing import List, Optional

import numpy as np

from app.errors import InvalidParameterError
from app.models.attack import AttackFamily, AttackResult, MiaScoreKind, ScoredSlice, SplitPredictions
from app.models.data import EvalSplit, Lineage
from app.models.kernel import TrainConfig
from app.services.attacks import (
    default_attack_config,
    nn_attack_from_features,
    query_split,
    require_lineage,
    score_batch,
    threshold_attack,
)
from app.services.distill import mix_soft_labels
from app.services.splitai import QueryFn, SplitAiModel, splitai_infer_batch, train_splitai
from app.utils.encoding import derive_seed

logger = logging.getLogger(__name__)


class ShadowSplitAi:
    """The attacker's Split-AI replica, trained on known members only"""

    def __init__(self, splitai: SplitAiModel, knowledge_fraction: float, known_fingerprint: str):
        self.splitai = splitai
        self.knowledge_fraction = knowledge_fraction
        self.known_fingerprint = known_fingerprint

    @property
    def n_train(self) -> int:
        return self.splitai.n_train


def train_shadow_splitai(
    split: EvalSplit,
    K: int,
    L: int,
    cfg: TrainConfig,
    seed: int,
    n_jobs: Optional[int] = None,
) -> ShadowSplitAi:
    """
    Train a shadow Split-AI with fresh non-model indices

    Args:
        split: Evaluation split; only attacker_known_members are used
        K: Number of shadow sub-models
        L: Non-model indices per sample
        cfg: Sub-model training configuration
        seed: Shadow seed (independent of the defender's)
        n_jobs: Parallel training jobs

    Returns:
        ShadowSplitAi
    """
    known = split.known_members()
    if known.n == 0:
        raise InvalidParameterError("Shadow Split-AI needs at least one known member")
    if known.lineage != Lineage.KNOWN:
        raise InvalidParameterError("Shadow Split-AI may only see attacker-known members")

    logger.info(f"Training shadow Split-AI on {known.n} known members (fraction={split.knowledge_fraction})")
    shadow = train_splitai(known, K, L, cfg, seed, n_jobs=n_jobs)
    return ShadowSplitAi(shadow, split.knowledge_fraction, known.fingerprint())


def estimate_soft_labels(
    shadow: ShadowSplitAi,
    features: np.ndarray,
    labels: np.ndarray,
    lam: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Estimated soft labels F'(x), mixed with the defender's lambda

    Known members take the shadow's member branch; every other query
    takes its non-member branch.
    """
    outputs = splitai_infer_batch(shadow.splitai, features, rng)
    return mix_soft_labels(outputs, labels, shadow.splitai.n_classes, lam)


def _onehot(labels: np.ndarray, k: int) -> np.ndarray:
    return np.eye(k, dtype=np.float64)[labels]


def adaptive_attacks(
    shadow: ShadowSplitAi,
    query_fn: QueryFn,
    split: EvalSplit,
    cfg: Optional[TrainConfig] = None,
    lam: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    preds: Optional[SplitPredictions] = None,
) -> List[AttackResult]:
    """
    The four adaptive attacks against a distilled target

    NN1 trains on concat(S, P, onehot(y)) and NN2 on concat(S - P, onehot(y)),
    where S is the shadow estimate and P the target output. The distance
    attacks threshold L2(P, S) and the cross-entropy of P against S.

    Args:
        shadow: Shadow Split-AI built from known members
        query_fn: Target model
        split: Evaluation split
        cfg: Attack network configuration
        lam: Lambda used to mix the shadow's estimates
        rng: Randomness for the shadow's non-member branch
        preds: Reuse already-collected target predictions

    Returns:
        [nn1, nn2, l2_dist, ce_dist] results
    """
    if shadow.known_fingerprint != split.known_members().fingerprint():
        raise InvalidParameterError("Shadow was not trained on this split's known members")
    cfg = cfg or default_attack_config()
    rng = rng if rng is not None else np.random.default_rng(split.seed)
    preds = preds or query_split(query_fn, split)
    require_lineage(preds.known_members, preds.known_nonmembers, lineage=Lineage.KNOWN)
    k = split.train.n_classes

    slices: List[ScoredSlice] = [preds.known_members, preds.known_nonmembers, preds.eval_members, preds.eval_nonmembers]
    estimates = [estimate_soft_labels(shadow, s.features, s.labels, lam, rng) for s in slices]

    nn1 = [np.hstack([est, s.preds, _onehot(s.labels, k)]) for est, s in zip(estimates, slices)]
    nn2 = [np.hstack([est - s.preds, _onehot(s.labels, k)]) for est, s in zip(estimates, slices)]
    results = [
        nn_attack_from_features("adaptive_nn1", AttackFamily.ADAPTIVE, *nn1, cfg=cfg),
        nn_attack_from_features("adaptive_nn2", AttackFamily.ADAPTIVE, *nn2, cfg=cfg.with_seed(derive_seed(cfg.seed, 1))),
    ]
    for kind, name in ((MiaScoreKind.L2_DIST, "adaptive_l2_dist"), (MiaScoreKind.CE_DIST, "adaptive_ce_dist")):
        scores = [score_batch(kind, s.preds, s.labels, reference=est) for est, s in zip(estimates, slices)]
        results.append(threshold_attack(name, AttackFamily.ADAPTIVE, *scores, preds=preds))

    logger.info("Adaptive attacks: " + ", ".join(f"{r.name}={r.accuracy:.3f}" for r in results))
    return results
