"""
Direct Single-Query Attacks
Metric scores, threshold calibration and the NN attack I_NN
"""

import logging
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.errors import InvalidParameterError, LabError
from app.models.attack import (
    AttackFamily,
    AttackResult,
    DecisionRule,
    Direction,
    MiaScore,
    MiaScoreKind,
    ScoredSlice,
    SplitPredictions,
    ThresholdMode,
)
from app.models.data import Dataset, EvalSplit, Lineage
from app.models.kernel import Activation, LabelKind, TrainConfig
from app.services import nn_kernel
from app.services.nn_kernel import PROB_CLAMP, Mlp
from app.services.splitai import QueryFn

logger = logging.getLogger(__name__)

DIRECT_METRICS = (
    MiaScoreKind.CORRECTNESS,
    MiaScoreKind.CONFIDENCE,
    MiaScoreKind.NEG_ENTROPY,
    MiaScoreKind.NEG_MENTR,
)

NATURAL_DIRECTION = {
    MiaScoreKind.CORRECTNESS: Direction.HIGHER_MEANS_MEMBER,
    MiaScoreKind.CONFIDENCE: Direction.HIGHER_MEANS_MEMBER,
    MiaScoreKind.NEG_ENTROPY: Direction.HIGHER_MEANS_MEMBER,
    MiaScoreKind.NEG_MENTR: Direction.HIGHER_MEANS_MEMBER,
    MiaScoreKind.NOISE_ROBUSTNESS: Direction.HIGHER_MEANS_MEMBER,
    MiaScoreKind.L2_DIST: Direction.LOWER_MEANS_MEMBER,
    MiaScoreKind.CE_DIST: Direction.LOWER_MEANS_MEMBER,
    MiaScoreKind.NN_POSTERIOR: Direction.HIGHER_MEANS_MEMBER,
}


def default_attack_config(seed: int = 0) -> TrainConfig:
    """Attack network: two relu layers of 64"""
    return TrainConfig(
        epochs=30,
        batch_size=64,
        learning_rate=0.001,
        hidden_sizes=[64, 64],
        activation=Activation.RELU,
        seed=seed,
    )


class CountingQuery:
    """Wraps a query function and counts answered rows"""

    def __init__(self, query_fn: QueryFn):
        self.query_fn = query_fn
        self.rows = 0

    def __call__(self, features: np.ndarray) -> np.ndarray:
        features = np.atleast_2d(features)
        self.rows += features.shape[0]
        return self.query_fn(features)


# Scores


def _log_clamped(values: np.ndarray) -> np.ndarray:
    return np.log(np.clip(values, PROB_CLAMP, 1.0))


def entropy(probs: np.ndarray) -> np.ndarray:
    """Row-wise -sum p log p"""
    probs = np.atleast_2d(probs)
    return -(probs * _log_clamped(probs)).sum(axis=1)


def modified_entropy(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """
    Mentr = -(1 - p_y) log p_y - sum_{i != y} p_i log(1 - p_i)
    """
    probs = np.atleast_2d(probs)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    rows = np.arange(probs.shape[0])
    p_y = probs[rows, labels]
    others = probs * _log_clamped(1.0 - probs)
    others[rows, labels] = 0.0
    return -(1.0 - p_y) * _log_clamped(p_y) - others.sum(axis=1)


def l2_distance(preds: np.ndarray, reference: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.atleast_2d(preds) - np.atleast_2d(reference), axis=1)


def ce_distance(preds: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Cross-entropy of the target prediction against the reference soft label"""
    return -(np.atleast_2d(reference) * _log_clamped(np.atleast_2d(preds))).sum(axis=1)


def score_batch(
    kind: MiaScoreKind,
    preds: np.ndarray,
    labels: np.ndarray,
    reference: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Vectorized membership scores

    Args:
        kind: Score kind
        preds: (n, k) target outputs
        labels: (n,) true classes
        reference: (n, k) estimated soft labels for the distance kinds

    Returns:
        (n,) finite scores
    """
    preds = np.atleast_2d(np.asarray(preds, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    rows = np.arange(preds.shape[0])
    if kind == MiaScoreKind.CORRECTNESS:
        return (preds.argmax(axis=1) == labels).astype(np.float64)
    if kind == MiaScoreKind.CONFIDENCE:
        return preds[rows, labels]
    if kind == MiaScoreKind.NEG_ENTROPY:
        return -entropy(preds)
    if kind == MiaScoreKind.NEG_MENTR:
        return -modified_entropy(preds, labels)
    if kind in (MiaScoreKind.L2_DIST, MiaScoreKind.CE_DIST):
        if reference is None:
            raise InvalidParameterError(f"{kind.value} needs reference soft labels")
        dist = l2_distance if kind == MiaScoreKind.L2_DIST else ce_distance
        return dist(preds, reference)
    raise InvalidParameterError(f"Score kind {kind} is not computed from a single prediction")


def mia_score(
    kind: MiaScoreKind,
    pred: np.ndarray,
    y: int,
    reference: Optional[np.ndarray] = None,
) -> MiaScore:
    """Membership score of one prediction"""
    try:
        kind = MiaScoreKind(kind)
    except ValueError as exc:
        raise InvalidParameterError(f"Unknown score kind: {kind}") from exc
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    if not 0 <= y < pred.size:
        raise InvalidParameterError(f"label {y} outside [0, {pred.size})")
    value = score_batch(kind, pred, np.array([y]), None if reference is None else np.atleast_2d(reference))[0]
    return MiaScore(value=float(value), direction=NATURAL_DIRECTION[kind], kind=kind)


# Calibration


def _candidate_thresholds(scores: np.ndarray) -> np.ndarray:
    unique = np.unique(scores)
    mids = (unique[:-1] + unique[1:]) / 2.0
    return np.concatenate([[unique[0] - 1.0], mids, [unique[-1] + 1.0]])


def _sweep(
    member_scores: np.ndarray,
    nonmember_scores: np.ndarray,
    direction: Direction,
) -> Tuple[float, float]:
    """Best (threshold, balanced accuracy); ties go to the smaller threshold"""
    candidates = _candidate_thresholds(np.concatenate([member_scores, nonmember_scores]))
    sorted_m = np.sort(member_scores)
    sorted_nm = np.sort(nonmember_scores)
    if direction == Direction.HIGHER_MEANS_MEMBER:
        tpr = (sorted_m.size - np.searchsorted(sorted_m, candidates, side="left")) / sorted_m.size
        tnr = np.searchsorted(sorted_nm, candidates, side="left") / sorted_nm.size
    else:
        tpr = np.searchsorted(sorted_m, candidates, side="right") / sorted_m.size
        tnr = (sorted_nm.size - np.searchsorted(sorted_nm, candidates, side="right")) / sorted_nm.size
    balanced = 0.5 * (tpr + tnr)
    best = int(np.argmax(balanced))
    return float(candidates[best]), float(balanced[best])


def calibrate_rule(
    known_member_scores: np.ndarray,
    known_nonmember_scores: np.ndarray,
    member_labels: np.ndarray,
    nonmember_labels: np.ndarray,
    mode: ThresholdMode,
    direction: Direction = Direction.HIGHER_MEANS_MEMBER,
) -> DecisionRule:
    """
    Fit a threshold rule on attacker-known data

    Thresholds sweep the midpoints of adjacent sorted calibration scores
    and maximize balanced accuracy. Equally good thresholds resolve to the
    smallest one, so {0.9, 0.7} against {0.8, 0.6} gives 0.65 rather than
    0.85 (both score 0.75). In per-class mode a class missing from either
    side falls back to the global threshold.

    Args:
        known_member_scores: Scores of known members
        known_nonmember_scores: Scores of known non-members
        member_labels: Classes of known members
        nonmember_labels: Classes of known non-members
        mode: Global or per-class thresholds
        direction: Which side is called member

    Returns:
        DecisionRule
    """
    member_scores = np.asarray(known_member_scores, dtype=np.float64).reshape(-1)
    nonmember_scores = np.asarray(known_nonmember_scores, dtype=np.float64).reshape(-1)
    if member_scores.size == 0 or nonmember_scores.size == 0:
        raise InvalidParameterError("Calibration needs non-empty member and non-member scores")
    member_labels = np.asarray(member_labels, dtype=np.int64).reshape(-1)
    nonmember_labels = np.asarray(nonmember_labels, dtype=np.int64).reshape(-1)

    global_tau, global_acc = _sweep(member_scores, nonmember_scores, direction)
    if mode == ThresholdMode.GLOBAL:
        return DecisionRule(
            mode=mode, direction=direction, threshold=global_tau, calibration_accuracy=global_acc
        )

    class_thresholds = {}
    for y in np.union1d(member_labels, nonmember_labels):
        in_m = member_scores[member_labels == y]
        in_nm = nonmember_scores[nonmember_labels == y]
        if in_m.size and in_nm.size:
            class_thresholds[int(y)], _ = _sweep(in_m, in_nm, direction)
    rule = DecisionRule(
        mode=mode,
        direction=direction,
        threshold=global_tau,
        class_thresholds=class_thresholds,
        calibration_accuracy=0.0,
    )
    tpr = rule.decide(member_scores, member_labels).mean()
    tnr = 1.0 - rule.decide(nonmember_scores, nonmember_labels).mean()
    return rule.model_copy(update={"calibration_accuracy": float(0.5 * (tpr + tnr))})


# Accuracy


def accuracy_from_calls(member_calls: np.ndarray, nonmember_calls: np.ndarray) -> float:
    """(correct member calls + correct non-member calls) / total"""
    member_calls = np.asarray(member_calls, dtype=bool)
    nonmember_calls = np.asarray(nonmember_calls, dtype=bool)
    total = member_calls.size + nonmember_calls.size
    if total == 0:
        raise InvalidParameterError("No evaluation targets")
    return float((member_calls.sum() + (~nonmember_calls).sum()) / total)


Decider = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def attack_accuracy(decide: Union[Decider, DecisionRule], query_fn: QueryFn, split: EvalSplit, kind: MiaScoreKind = MiaScoreKind.CONFIDENCE) -> float:
    """
    Attack accuracy on the evaluation sets only

    Args:
        decide: Either a DecisionRule (applied to `kind` scores) or a callable
            (features, preds, labels) -> bool member calls
        query_fn: Target model
        split: Evaluation split
        kind: Score kind for a DecisionRule

    Returns:
        Accuracy in [0, 1]
    """
    members = split.eval_member_set()
    nonmembers = split.eval_nonmember_set()
    calls = []
    for data in (members, nonmembers):
        preds = query_fn(data.features)
        if isinstance(decide, DecisionRule):
            calls.append(decide.decide(score_batch(kind, preds, data.labels), data.labels))
        else:
            calls.append(np.asarray(decide(data.features, preds, data.labels), dtype=bool))
    return accuracy_from_calls(calls[0], calls[1])


# Split helpers


def _scored(query_fn: QueryFn, data: Dataset, lineage: Lineage, is_member: bool) -> ScoredSlice:
    if data.lineage != lineage:
        raise LabError("Slice lineage mismatch", expected=lineage.value, got=str(data.lineage))
    return ScoredSlice(
        preds=query_fn(data.features),
        labels=data.labels,
        features=data.features,
        lineage=lineage,
        is_member=is_member,
    )


def query_split(query_fn: QueryFn, split: EvalSplit) -> SplitPredictions:
    """Query the target once on every known and evaluation target"""
    return SplitPredictions(
        known_members=_scored(query_fn, split.known_members(), Lineage.KNOWN, True),
        known_nonmembers=_scored(query_fn, split.known_nonmembers(), Lineage.KNOWN, False),
        eval_members=_scored(query_fn, split.eval_member_set(), Lineage.EVAL, True),
        eval_nonmembers=_scored(query_fn, split.eval_nonmember_set(), Lineage.EVAL, False),
    )


def require_lineage(*slices: ScoredSlice, lineage: Lineage) -> None:
    """Raise if any slice comes from the wrong side of the split"""
    for s in slices:
        if s.lineage != lineage:
            raise LabError(
                "Evaluation data must never reach calibration (and vice versa)",
                expected=lineage.value,
                got=s.lineage.value,
            )


def threshold_attack(
    name: str,
    family: AttackFamily,
    known_member_scores: np.ndarray,
    known_nonmember_scores: np.ndarray,
    eval_member_scores: np.ndarray,
    eval_nonmember_scores: np.ndarray,
    preds: SplitPredictions,
    queries_per_target: int = 1,
    directions: Sequence[Direction] = (Direction.HIGHER_MEANS_MEMBER, Direction.LOWER_MEANS_MEMBER),
) -> AttackResult:
    """
    Calibrate every (direction, mode) rule on known data, report the best on eval data

    Scores are row-aligned with the slices in `preds`, whose labels choose tau_y.
    """
    require_lineage(preds.known_members, preds.known_nonmembers, lineage=Lineage.KNOWN)
    require_lineage(preds.eval_members, preds.eval_nonmembers, lineage=Lineage.EVAL)
    best: Optional[AttackResult] = None
    for direction in directions:
        for mode in (ThresholdMode.GLOBAL, ThresholdMode.PER_CLASS):
            rule = calibrate_rule(
                known_member_scores,
                known_nonmember_scores,
                preds.known_members.labels,
                preds.known_nonmembers.labels,
                mode,
                direction,
            )
            acc = accuracy_from_calls(
                rule.decide(eval_member_scores, preds.eval_members.labels),
                rule.decide(eval_nonmember_scores, preds.eval_nonmembers.labels),
            )
            if best is None or acc > best.accuracy:
                best = AttackResult(
                    name=name,
                    family=family,
                    accuracy=acc,
                    rule=rule,
                    queries_per_target=queries_per_target,
                )
    return best


def metric_attacks(
    preds: SplitPredictions,
    family: AttackFamily = AttackFamily.DIRECT,
    prefix: str = "",
    queries_per_target: int = 1,
) -> List[AttackResult]:
    """Correctness, confidence, entropy and modified-entropy threshold attacks"""
    results = []
    for kind in DIRECT_METRICS:
        scores = [
            score_batch(kind, s.preds, s.labels)
            for s in (preds.known_members, preds.known_nonmembers, preds.eval_members, preds.eval_nonmembers)
        ]
        results.append(
            threshold_attack(f"{prefix}{kind.value}", family, *scores, preds=preds, queries_per_target=queries_per_target)
        )
    return results


def run_direct_attacks(query_fn: QueryFn, split: EvalSplit) -> List[AttackResult]:
    """All metric-based direct single-query attacks"""
    preds = query_split(query_fn, split)
    results = metric_attacks(preds)
    logger.info("Direct attacks: " + ", ".join(f"{r.name}={r.accuracy:.3f}" for r in results))
    return results


# NN attack


def _onehot(labels: np.ndarray, k: int) -> np.ndarray:
    return np.eye(k, dtype=np.float64)[np.asarray(labels, dtype=np.int64)]


def train_attack_model(member_features: np.ndarray, nonmember_features: np.ndarray, cfg: TrainConfig) -> Mlp:
    """Binary attack classifier: class 1 = member"""
    features = np.vstack([member_features, nonmember_features])
    targets = np.concatenate([np.ones(member_features.shape[0]), np.zeros(nonmember_features.shape[0])]).astype(np.int64)
    batch = min(cfg.batch_size, features.shape[0])
    return nn_kernel.train(features, targets, LabelKind.HARD_CLASS, cfg.model_copy(update={"batch_size": batch}), n_classes=2)


def nn_attack_from_features(
    name: str,
    family: AttackFamily,
    known_member_features: np.ndarray,
    known_nonmember_features: np.ndarray,
    eval_member_features: np.ndarray,
    eval_nonmember_features: np.ndarray,
    cfg: TrainConfig,
) -> AttackResult:
    """Train on known features, call member iff the attack model's argmax is 1 on eval features"""
    model = train_attack_model(known_member_features, known_nonmember_features, cfg)
    member_calls = nn_kernel.predict_batch(model, eval_member_features).argmax(axis=1) == 1
    nonmember_calls = nn_kernel.predict_batch(model, eval_nonmember_features).argmax(axis=1) == 1
    return AttackResult(name=name, family=family, accuracy=accuracy_from_calls(member_calls, nonmember_calls))


def attack_nn(
    split: EvalSplit,
    query_fn: QueryFn,
    attack_cfg: Optional[TrainConfig] = None,
    preds: Optional[SplitPredictions] = None,
) -> AttackResult:
    """
    NN attack on concat(prediction, onehot(label))

    Args:
        split: Evaluation split; known sets train the attack model
        query_fn: Target model
        attack_cfg: Attack network configuration
        preds: Reuse already-collected predictions

    Returns:
        AttackResult for I_NN
    """
    cfg = attack_cfg or default_attack_config()
    preds = preds or query_split(query_fn, split)
    k = split.train.n_classes

    def features(s: ScoredSlice) -> np.ndarray:
        return np.hstack([s.preds, _onehot(s.labels, k)])

    result = nn_attack_from_features(
        "nn",
        AttackFamily.DIRECT,
        features(preds.known_members),
        features(preds.known_nonmembers),
        features(preds.eval_members),
        features(preds.eval_nonmembers),
        cfg,
    )
    logger.info(f"NN attack accuracy: {result.accuracy:.3f}")
    return result
