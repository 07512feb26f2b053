"""
Label-Only and Multi-Query Probes
Random-noise robustness attack, one-flip indirect probe and replay probe
"""

import logging
from typing import Iterable, List, Optional, Sequence

import numpy as np

from app.errors import InvalidParameterError, LabError
from app.models.attack import AttackFamily, AttackResult, ScoredSlice, SplitPredictions
from app.models.data import Dataset, EvalSplit, Lineage
from app.services.attacks import CountingQuery, accuracy_from_calls, metric_attacks, threshold_attack
from app.services.splitai import QueryFn

logger = logging.getLogger(__name__)

DEFAULT_FLIPS_RANGE = tuple(range(1, 31))
DEFAULT_N_NOISE = 100
_MAX_ROWS_PER_CALL = 50_000


def _require_binary(split: EvalSplit) -> None:
    if not split.train.is_binary or not split.test.is_binary:
        raise InvalidParameterError("Bit-flip attacks need binary features")


def flip_bits(features: np.ndarray, n_flips: int, rng: np.random.Generator) -> np.ndarray:
    """Copy of each row with exactly n_flips distinct positions inverted"""
    features = np.atleast_2d(features)
    n, d = features.shape
    if not 0 <= n_flips <= d:
        raise InvalidParameterError(f"n_flips must be in [0, {d}], got {n_flips}")
    noisy = features.copy()
    if n_flips == 0:
        return noisy
    positions = np.argsort(rng.random((n, d)), axis=1)[:, :n_flips]
    rows = np.arange(n)[:, None]
    noisy[rows, positions] = 1.0 - noisy[rows, positions]
    return noisy


def noise_robustness(
    query_fn: QueryFn,
    data: Dataset,
    n_flips: int,
    n_noise: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Per target, the fraction of n_noise noisy copies still classified as its label"""
    chunk = max(1, _MAX_ROWS_PER_CALL // n_noise)
    scores = np.empty(data.n, dtype=np.float64)
    for start in range(0, data.n, chunk):
        stop = min(start + chunk, data.n)
        copies = np.repeat(data.features[start:stop], n_noise, axis=0)
        preds = query_fn(flip_bits(copies, n_flips, rng)).argmax(axis=1)
        correct = preds == np.repeat(data.labels[start:stop], n_noise)
        scores[start:stop] = correct.reshape(stop - start, n_noise).mean(axis=1)
    return scores


def attack_label_only_noise(
    query_fn: QueryFn,
    split: EvalSplit,
    flips_range: Sequence[int] = DEFAULT_FLIPS_RANGE,
    n_noise: int = DEFAULT_N_NOISE,
    rng: Optional[np.random.Generator] = None,
) -> AttackResult:
    """
    Random-noise label-only attack

    For every flip count the score of a target is the share of its noisy
    copies the model still labels correctly; thresholds are calibrated on
    the known sets and the best flip count is reported.

    Args:
        query_fn: Target model (only its argmax is used)
        split: Evaluation split with binary features
        flips_range: Flip counts to try; counts above the feature count are skipped
        n_noise: Noisy copies per target and flip count
        rng: Noise source

    Returns:
        AttackResult with per-flip accuracies in detail
    """
    _require_binary(split)
    if n_noise < 1:
        raise InvalidParameterError(f"n_noise must be positive, got {n_noise}")
    requested = list(flips_range)
    if not requested:
        raise InvalidParameterError("flips_range is empty")
    d = split.train.d
    flips = [f for f in requested if f <= d]
    if not flips:
        raise InvalidParameterError(f"every flip count in flips_range exceeds the {d} features")
    if len(flips) < len(requested):
        logger.warning(f"⚠️ Dropping flip counts above d={d}: {[f for f in requested if f > d]}")
    rng = rng if rng is not None else np.random.default_rng(split.seed)

    counter = CountingQuery(query_fn)
    sets = (
        (split.known_members(), Lineage.KNOWN, True),
        (split.known_nonmembers(), Lineage.KNOWN, False),
        (split.eval_member_set(), Lineage.EVAL, True),
        (split.eval_nonmember_set(), Lineage.EVAL, False),
    )
    n_targets = sum(data.n for data, _, _ in sets)

    per_flip = {}
    best: Optional[AttackResult] = None
    for f in flips:
        slices = []
        for data, lineage, is_member in sets:
            scores = noise_robustness(counter, data, f, n_noise, rng)
            slices.append(
                ScoredSlice(
                    preds=scores[:, None],
                    labels=data.labels,
                    features=data.features,
                    lineage=lineage,
                    is_member=is_member,
                )
            )
        preds = SplitPredictions(
            known_members=slices[0],
            known_nonmembers=slices[1],
            eval_members=slices[2],
            eval_nonmembers=slices[3],
        )
        result = threshold_attack(
            f"label_only_noise_{f}",
            AttackFamily.LABEL_ONLY,
            *(s.preds[:, 0] for s in slices),
            preds=preds,
            queries_per_target=len(flips) * n_noise,
        )
        per_flip[str(f)] = result.accuracy
        if best is None or result.accuracy > best.accuracy:
            best = result

    expected = n_targets * len(flips) * n_noise
    if counter.rows != expected:
        raise LabError("Label-only query budget violated", expected=expected, issued=counter.rows)

    logger.info(f"Label-only noise attack: best {best.accuracy:.3f} ({best.name})")
    return best.model_copy(
        update={
            "name": "label_only_noise",
            "detail": {"best_flips": int(best.name.rsplit("_", 1)[1]), "per_flip": per_flip, "n_noise": n_noise},
        }
    )


def attack_indirect_noisy_single(
    query_fn: QueryFn,
    split: EvalSplit,
    rng: Optional[np.random.Generator] = None,
) -> AttackResult:
    """
    One-flip indirect probe

    Every target is queried once at Hamming distance 1 from itself and the
    metric attacks run on those predictions with the target's true label.
    """
    _require_binary(split)
    rng = rng if rng is not None else np.random.default_rng(split.seed)

    def noisy_slice(data: Dataset, lineage: Lineage, is_member: bool) -> ScoredSlice:
        noisy = flip_bits(data.features, 1, rng)
        return ScoredSlice(
            preds=query_fn(noisy), labels=data.labels, features=noisy, lineage=lineage, is_member=is_member
        )

    preds = SplitPredictions(
        known_members=noisy_slice(split.known_members(), Lineage.KNOWN, True),
        known_nonmembers=noisy_slice(split.known_nonmembers(), Lineage.KNOWN, False),
        eval_members=noisy_slice(split.eval_member_set(), Lineage.EVAL, True),
        eval_nonmembers=noisy_slice(split.eval_nonmember_set(), Lineage.EVAL, False),
    )
    results = metric_attacks(preds, family=AttackFamily.INDIRECT, prefix="indirect_")
    best = max(results, key=lambda r: r.accuracy)
    logger.info(f"Indirect one-flip attack: best {best.accuracy:.3f} ({best.name})")
    return best.model_copy(
        update={"name": "indirect_noisy_single", "detail": {r.name: r.accuracy for r in results}}
    )


def _identical_rows(responses: Iterable[np.ndarray]) -> np.ndarray:
    responses = [np.ascontiguousarray(r, dtype=np.float64).view(np.uint64) for r in responses]
    first = responses[0]
    same = np.ones(first.shape[0], dtype=bool)
    for other in responses[1:]:
        same &= (other == first).all(axis=1)
    return same


def attack_replay(query_fn: QueryFn, split: EvalSplit, n_repeats: int = 3) -> AttackResult:
    """
    Replay probe: member iff n_repeats answers to the same query are bit-identical

    Needs no calibration, so only the evaluation sets are queried.
    """
    if n_repeats < 1:
        raise InvalidParameterError(f"n_repeats must be positive, got {n_repeats}")
    calls: List[np.ndarray] = []
    for data in (split.eval_member_set(), split.eval_nonmember_set()):
        calls.append(_identical_rows(query_fn(data.features) for _ in range(n_repeats)))
    acc = accuracy_from_calls(calls[0], calls[1])
    logger.info(f"Replay attack ({n_repeats} repeats): {acc:.3f}")
    return AttackResult(
        name="replay",
        family=AttackFamily.REPLAY,
        accuracy=acc,
        queries_per_target=n_repeats,
        detail={
            "n_repeats": n_repeats,
            "identical_members": float(calls[0].mean()),
            "identical_nonmembers": float(calls[1].mean()),
        },
    )
