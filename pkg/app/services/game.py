"""
Security Game Harness
Single-query membership game, distillation-stability check and correlated-pair probe
"""

import json
import logging
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional, Protocol, Sequence, Tuple, Union, runtime_checkable

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import norm

from app.config import get_settings
from app.errors import InvalidParameterError
from app.models.attack import DecisionRule, Direction, MiaScoreKind, ScoredSlice, SplitPredictions, ThresholdMode
from app.models.data import Dataset, Lineage
from app.models.game import (
    DistillationBoundCheck,
    GameTranscript,
    Learner,
    LearnerSpec,
    PairProbeBucket,
    SqmiEstimate,
    TrialRecord,
)
from app.models.kernel import LabelKind, TrainConfig
from app.services import nn_kernel
from app.services.attacks import DIRECT_METRICS, calibrate_rule, metric_attacks, score_batch
from app.services.distill import protected_query_fn, self_distill
from app.services.splitai import QueryFn, SplitAiModel, splitai_infer, splitai_query_fn, train_splitai
from app.utils.encoding import array_fingerprint, atomic_write_text, bits_hash, derive_seed

logger = logging.getLogger(__name__)

MIN_TRIALS = 100

# per-trial seed streams
_CHALLENGE_STREAM = 0
_LEARNER_STREAM = 1
_DISTILL_STREAM = 2
_PROBE_STREAM = 3
_PILOT_OFFSET = 1 << 32

Distiller = Callable[[SplitAiModel, Dataset, np.random.Generator], QueryFn]


@runtime_checkable
class Adversary(Protocol):
    """Sees only the challenge point, the single response and the class label"""

    def guess(self, x: np.ndarray, response: np.ndarray, y: int) -> int:
        ...


class RandomGuessAdversary:
    """Coin flips from its own generator"""

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def guess(self, x: np.ndarray, response: np.ndarray, y: int) -> int:
        return int(self.rng.integers(0, 2))


class MetricAdversary:
    """Thresholds one metric score with a pre-calibrated rule"""

    def __init__(self, kind: MiaScoreKind, rule: DecisionRule, challenge_index: Optional[int] = None):
        self.kind = kind
        self.rule = rule
        self.challenge_index = challenge_index

    def guess(self, x: np.ndarray, response: np.ndarray, y: int) -> int:
        score = score_batch(self.kind, np.atleast_2d(response), np.array([y]))
        return int(self.rule.decide(score, np.array([y]))[0])

    def choose_index(self, X: Dataset) -> int:
        """Stronger variant: the adversary names the challenged point"""
        if self.challenge_index is None:
            raise InvalidParameterError("This adversary was built without a challenge index")
        if not 0 <= self.challenge_index < X.n:
            raise InvalidParameterError(f"challenge index {self.challenge_index} outside [0, {X.n})")
        return self.challenge_index


class _Fitted:
    def __init__(self, query: QueryFn, fingerprint: str, splitai: Optional[SplitAiModel] = None):
        self.query = query
        self.fingerprint = fingerprint
        self.splitai = splitai


def _mlp_fingerprint(model: nn_kernel.Mlp) -> str:
    return array_fingerprint(*model.parameters())


def _splitai_fingerprint(model: SplitAiModel) -> str:
    params = [p for m in model.submodels for p in m.parameters()]
    return array_fingerprint(*params, model.idnon.indices)


def fit_learner(
    spec: LearnerSpec,
    data: Dataset,
    trial_seed: int,
    distiller: Optional[Distiller] = None,
) -> _Fitted:
    """Train a fresh learner of the requested kind on one realized training set"""
    learner_seed = derive_seed(trial_seed, _LEARNER_STREAM)
    probe_rng = np.random.default_rng(derive_seed(trial_seed, _PROBE_STREAM))
    if spec.learner == Learner.UNDEFENDED:
        model = nn_kernel.train(
            data.features,
            data.labels,
            LabelKind.HARD_CLASS,
            spec.train_config.with_seed(learner_seed),
            n_classes=data.n_classes,
        )
        return _Fitted(lambda f: nn_kernel.predict_batch(model, f), _mlp_fingerprint(model))

    splitai = train_splitai(data, spec.K, spec.L, spec.train_config, learner_seed, n_jobs=1)
    if spec.learner == Learner.SPLITAI:
        return _Fitted(splitai_query_fn(splitai, probe_rng), _splitai_fingerprint(splitai), splitai)

    if distiller is not None:
        return _Fitted(distiller(splitai, data, probe_rng), _splitai_fingerprint(splitai), splitai)
    distill_cfg = (spec.distill_config or spec.train_config).with_seed(derive_seed(trial_seed, _DISTILL_STREAM))
    protected = self_distill(splitai, data, spec.lam, distill_cfg, probe_rng)
    return _Fitted(protected_query_fn(protected), _mlp_fingerprint(protected.model), splitai)


def _draw_b(n: int, rng: np.random.Generator) -> np.ndarray:
    b = np.zeros(2 * n, dtype=np.int64)
    b[rng.permutation(2 * n)[:n]] = 1
    return b


def _play_trial(
    trial: int,
    seed: int,
    X: Dataset,
    spec: LearnerSpec,
    challenge: Optional[int],
    distiller: Optional[Distiller],
    with_reference: bool,
) -> Dict:
    trial_seed = derive_seed(seed, trial)
    rng = np.random.default_rng(derive_seed(trial_seed, _CHALLENGE_STREAM))
    n = X.n // 2
    b = _draw_b(n, rng)
    i = challenge if challenge is not None else int(rng.integers(0, 2 * n))
    training = X.subset(np.flatnonzero(b == 1))
    fitted = fit_learner(spec, training, trial_seed, distiller)
    x_i = X.features[i]
    response = fitted.query(x_i[None, :])[0]
    reference = None
    if with_reference:
        # fresh Split-AI answer drawn with the same probe stream the distiller was handed
        probe_rng = np.random.default_rng(derive_seed(trial_seed, _PROBE_STREAM))
        reference = splitai_infer(fitted.splitai, x_i, probe_rng).tolist()
    return {
        "trial": trial,
        "b": b.tolist(),
        "challenge_index": i,
        "label": int(X.labels[i]),
        "response": response.tolist(),
        "param_fingerprint": fitted.fingerprint,
        "reference": reference,
    }


def _check_game_inputs(X: Dataset, trials: int) -> None:
    if X.n % 2 != 0 or X.n < 2:
        raise InvalidParameterError(f"The game needs an even number of points, got {X.n}")
    if trials < MIN_TRIALS:
        raise InvalidParameterError(f"trials must be at least {MIN_TRIALS}, got {trials}")


def play_sqmi_game(
    spec: LearnerSpec,
    adversary: Adversary,
    X: Dataset,
    trials: int,
    seed: int,
    adversary_chooses: bool = False,
    time_budget_s: Optional[float] = None,
    n_jobs: Optional[int] = None,
    distiller: Optional[Distiller] = None,
    with_reference: bool = False,
) -> GameTranscript:
    """
    Play the game and keep every round

    Learners train in parallel chunks; the adversary then guesses in trial
    order so its own randomness never depends on completion order.
    """
    _check_game_inputs(X, trials)
    challenge = None
    if adversary_chooses:
        choose = getattr(adversary, "choose_index", None)
        if choose is None:
            raise InvalidParameterError("adversary_chooses needs an adversary with choose_index")
        challenge = int(choose(X))

    settings = get_settings()
    jobs = n_jobs if n_jobs is not None else settings.n_jobs
    budget = time_budget_s if time_budget_s is not None else settings.game_time_budget_s
    chunk = max(10, 4 * max(jobs, 1))
    started = time.monotonic()
    outcomes: List[Dict] = []
    partial = False
    for start in range(0, trials, chunk):
        if time.monotonic() - started > budget:
            partial = True
            logger.warning(f"⚠️ Game time budget of {budget}s exhausted after {len(outcomes)}/{trials} trials")
            break
        outcomes.extend(
            Parallel(n_jobs=jobs, prefer="threads")(
                delayed(_play_trial)(t, seed, X, spec, challenge, distiller, with_reference)
                for t in range(start, min(start + chunk, trials))
            )
        )

    outcomes.sort(key=lambda o: o["trial"])
    records = []
    for o in outcomes:
        i = o["challenge_index"]
        guess = int(adversary.guess(X.features[i], np.asarray(o["response"]), o["label"]))
        records.append(TrialRecord(guess=guess, **o))
    return GameTranscript(learner=spec.learner, n=X.n // 2, records=records, partial=partial)


def estimate_sqmi(transcript: GameTranscript, requested_trials: Optional[int] = None) -> SqmiEstimate:
    """Mean of 1 - |b_i - b'_i| with a 95% binomial normal-approximation interval"""
    correct = np.array([r.correct for r in transcript.records], dtype=np.float64)
    t = correct.size
    p = float(correct.mean()) if t else 0.5
    half = float(norm.ppf(0.975) * np.sqrt(p * (1.0 - p) / t)) if t else 0.5
    return SqmiEstimate(
        advantage=p,
        trials=t,
        requested_trials=requested_trials if requested_trials is not None else t,
        ci_half_width=half,
        partial=transcript.partial,
    )


def run_sqmi_game(
    spec: LearnerSpec,
    adversary: Adversary,
    X: Dataset,
    trials: int,
    seed: int,
    adversary_chooses: bool = False,
    time_budget_s: Optional[float] = None,
    n_jobs: Optional[int] = None,
    transcript_path: Optional[Union[str, Path]] = None,
) -> SqmiEstimate:
    """
    Estimate SQMI(adversary, learner, n)

    Each trial draws b with exactly n ones, trains a fresh learner on
    {x_i : b_i = 1}, challenges index i (uniform, or the adversary's choice)
    and scores the adversary's single guess.

    Args:
        spec: Learner kind and training configuration
        adversary: Guessing strategy
        X: Universe of 2n points
        trials: Number of rounds (>= 100)
        seed: Game seed; trial t uses derive_seed(seed, t)
        adversary_chooses: Let the adversary pick the challenged index
        time_budget_s: Wall-clock budget; the estimate is flagged partial when exceeded
        n_jobs: Parallel trials
        transcript_path: Write one JSON line per trial when set

    Returns:
        SqmiEstimate
    """
    transcript = play_sqmi_game(
        spec, adversary, X, trials, seed, adversary_chooses, time_budget_s, n_jobs
    )
    if transcript_path is not None:
        write_transcript(transcript, transcript_path)
    estimate = estimate_sqmi(transcript, trials)
    logger.info(
        f"SQMI[{spec.learner.value}] = {estimate.advantage:.3f} ± {estimate.ci_half_width:.3f} "
        f"over {estimate.trials} trials{' (partial)' if estimate.partial else ''}"
    )
    return estimate


def write_transcript(transcript: GameTranscript, path: Union[str, Path]) -> Path:
    """One line per trial: b hash, challenged index, guess, correct flag"""
    lines = [
        json.dumps(
            {"trial": r.trial, "b_hash": bits_hash(r.b), "i": r.challenge_index, "guess": r.guess, "correct": r.correct},
            sort_keys=True,
        )
        for r in transcript.records
    ]
    return atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def calibrate_metric_adversary(
    spec: LearnerSpec,
    X: Dataset,
    pilot_trials: int,
    seed: int,
    kinds: Sequence[MiaScoreKind] = DIRECT_METRICS,
    n_jobs: Optional[int] = None,
) -> MetricAdversary:
    """
    Best single-metric adversary, calibrated offline

    The adversary knows X and the learning algorithm, so it trains its own
    learners on pilot draws of b (seeds disjoint from the game's), queries
    every point once and keeps the metric and global rule with the highest
    calibration accuracy.
    """
    if X.n % 2 != 0:
        raise InvalidParameterError(f"The game needs an even number of points, got {X.n}")
    n = X.n // 2
    pilot_seed = derive_seed(seed, _PILOT_OFFSET)

    def pilot(t: int) -> Tuple[np.ndarray, np.ndarray]:
        trial_seed = derive_seed(pilot_seed, t)
        b = _draw_b(n, np.random.default_rng(derive_seed(trial_seed, _CHALLENGE_STREAM)))
        fitted = fit_learner(spec, X.subset(np.flatnonzero(b == 1)), trial_seed)
        return b, fitted.query(X.features)

    jobs = n_jobs if n_jobs is not None else get_settings().n_jobs
    pilots = Parallel(n_jobs=jobs, prefer="threads")(delayed(pilot)(t) for t in range(pilot_trials))
    bits = np.concatenate([b for b, _ in pilots]).astype(bool)
    preds = np.vstack([p for _, p in pilots])
    labels = np.tile(X.labels, pilot_trials)

    best: Optional[MetricAdversary] = None
    best_acc = -1.0
    for kind in kinds:
        scores = score_batch(kind, preds, labels)
        for direction in (Direction.HIGHER_MEANS_MEMBER, Direction.LOWER_MEANS_MEMBER):
            rule = calibrate_rule(scores[bits], scores[~bits], labels[bits], labels[~bits], ThresholdMode.GLOBAL, direction)
            if rule.calibration_accuracy > best_acc:
                best, best_acc = MetricAdversary(kind, rule), rule.calibration_accuracy
    logger.info(f"Calibrated metric adversary: {best.kind.value} ({best.rule.direction.value}), pilot accuracy {best_acc:.3f}")
    return best


def check_distillation_bound(
    X: Dataset,
    K: int,
    L: int,
    cfg: TrainConfig,
    alpha: float,
    trials: int,
    seed: int,
    adversary: Optional[Adversary] = None,
    distiller: Optional[Distiller] = None,
    distill_cfg: Optional[TrainConfig] = None,
    lam: float = 0.0,
    pilot_trials: int = 20,
    n_jobs: Optional[int] = None,
) -> DistillationBoundCheck:
    """
    Empirical check of SQMI(distilled) <= 0.5 + alpha + beta

    beta_hat is the share of challenge points whose distilled confidence at
    the true label differs from a fresh Split-AI answer by more than alpha.
    It is averaged over the realized training set of each trial.

    Args:
        X: Universe of 2n points
        K, L: Split-AI shape
        cfg: Sub-model training configuration
        alpha: Stability tolerance in (0, 1]
        trials: Number of rounds
        seed: Game seed
        adversary: Guessing strategy (a calibrated metric adversary when omitted)
        distiller: Replaces self-distillation; maps (Split-AI, S, rng) to a query function
        distill_cfg: Distillation configuration
        lam: Ground-truth weight in the soft labels
        pilot_trials: Calibration rounds for the default adversary

    Returns:
        DistillationBoundCheck
    """
    if not 0.0 < alpha <= 1.0:
        raise InvalidParameterError(f"alpha must be in (0, 1], got {alpha}")
    spec = LearnerSpec(learner=Learner.DISTILLED, train_config=cfg, distill_config=distill_cfg, K=K, L=L, lam=lam)
    if adversary is None:
        adversary = calibrate_metric_adversary(spec, X, pilot_trials, seed, n_jobs=n_jobs)

    transcript = play_sqmi_game(
        spec, adversary, X, trials, seed, n_jobs=n_jobs, distiller=distiller, with_reference=True
    )
    deviations = np.array(
        [abs(r.response[r.label] - r.reference[r.label]) > alpha for r in transcript.records], dtype=np.float64
    )
    beta_hat = float(deviations.mean()) if deviations.size else 0.0
    estimate = estimate_sqmi(transcript, trials)
    bound = 0.5 + alpha + beta_hat + estimate.ci_half_width
    result = DistillationBoundCheck(
        alpha=alpha,
        beta_hat=beta_hat,
        sqmi_distilled=estimate,
        bound=bound,
        bound_satisfied=estimate.advantage <= bound,
    )
    logger.info(
        f"Distillation bound: SQMI={estimate.advantage:.3f}, beta_hat={beta_hat:.3f}, "
        f"bound={bound:.3f} {'✅' if result.bound_satisfied else '❌'}"
    )
    return result


# Correlated pairs


def _forced_subset_predict(splitai: SplitAiModel, x: np.ndarray, index_set: np.ndarray) -> np.ndarray:
    """Average of the given sub-models; never reachable from regular inference"""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return np.mean([nn_kernel.predict_batch(splitai.submodels[i], x)[0] for i in index_set], axis=0)


def _nearest_other_label(members: Dataset, nonmembers: Dataset) -> Tuple[np.ndarray, np.ndarray]:
    """Index and L2 distance of the closest differently-labeled non-member for every member"""
    sq = (
        (members.features ** 2).sum(axis=1)[:, None]
        + (nonmembers.features ** 2).sum(axis=1)[None, :]
        - 2.0 * members.features @ nonmembers.features.T
    )
    dist = np.sqrt(np.maximum(sq, 0.0))
    dist[members.labels[:, None] == nonmembers.labels[None, :]] = np.inf
    nearest = dist.argmin(axis=1)
    return nearest, dist[np.arange(members.n), nearest]


def correlated_pair_probe(
    splitai: SplitAiModel,
    members: Dataset,
    nonmembers: Dataset,
    distance_thresholds: Sequence[float],
    rng: np.random.Generator,
) -> List[PairProbeBucket]:
    """
    Leakage through near-duplicate pairs with conflicting labels

    For each member x the closest differently-labeled non-member x' is
    queried twice by forcing sub-model sets: once with Id_non(x) (called
    member) and once with a random member's set (called non-member). Half
    of the pairs calibrate the metric attacks, the other half evaluate them,
    bucketed by L2(x, x') <= threshold.

    Args:
        splitai: Split-AI trained on exactly `members`
        members: Its training set
        nonmembers: Candidate partners
        distance_thresholds: Bucket edges
        rng: Randomness for the random index sets and the calibration split

    Returns:
        One PairProbeBucket per threshold, in the given order
    """
    if members.fingerprint() != splitai.dataset_fingerprint:
        raise InvalidParameterError("members must be the Split-AI training set")
    nearest, dist = _nearest_other_label(members, nonmembers)
    valid = np.flatnonzero(np.isfinite(dist))

    partners = nonmembers.features[nearest[valid]]
    partner_labels = nonmembers.labels[nearest[valid]]
    randoms = rng.integers(0, splitai.n_train, size=valid.size)
    in_preds = np.array([_forced_subset_predict(splitai, partners[j], splitai.idnon.for_sample(int(s))) for j, s in enumerate(valid)])
    out_preds = np.array([_forced_subset_predict(splitai, partners[j], splitai.idnon.for_sample(int(r))) for j, r in enumerate(randoms)])

    order = rng.permutation(valid.size)
    calibrate = np.zeros(valid.size, dtype=bool)
    calibrate[order[: valid.size // 2]] = True

    buckets = []
    for tau in distance_thresholds:
        inside = dist[valid] <= tau
        n_pairs = int(inside.sum())
        cal = inside & calibrate
        ev = inside & ~calibrate
        accuracy = None
        if cal.sum() >= 1 and ev.sum() >= 1:
            def scored(mask: np.ndarray, preds: np.ndarray, lineage: Lineage, is_member: bool) -> ScoredSlice:
                return ScoredSlice(
                    preds=preds[mask], labels=partner_labels[mask], features=partners[mask], lineage=lineage, is_member=is_member
                )

            split_preds = SplitPredictions(
                known_members=scored(cal, in_preds, Lineage.KNOWN, True),
                known_nonmembers=scored(cal, out_preds, Lineage.KNOWN, False),
                eval_members=scored(ev, in_preds, Lineage.EVAL, True),
                eval_nonmembers=scored(ev, out_preds, Lineage.EVAL, False),
            )
            accuracy = max(r.accuracy for r in metric_attacks(split_preds, prefix="pair_"))
        buckets.append(
            PairProbeBucket(
                threshold=float(tau),
                n_pairs=n_pairs,
                pair_fraction=n_pairs / members.n,
                accuracy=accuracy,
            )
        )
        logger.info(f"Pair probe tau={tau}: {n_pairs} pairs, accuracy={accuracy}")
    return buckets
