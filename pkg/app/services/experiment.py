"""
Experiment Orchestration
Baselines, Split-AI, distilled models per lambda, sweeps and the security game
"""

import itertools
import logging
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.config import get_settings
from app.errors import InvalidParameterError, StageFailedError
from app.models.attack import AttackResult
from app.models.data import Dataset, EvalSplit
from app.models.experiment import (
    DatasetSource,
    DatasetSpec,
    Defense,
    DefenseRow,
    EarlyStoppingPoint,
    ExperimentConfig,
    GameParams,
    GameSummary,
    KlPoint,
    KnowledgePoint,
    RunReport,
)
from app.models.game import DistillationBoundCheck, Learner, LearnerSpec, PairProbeBucket, SqmiEstimate
from app.models.kernel import LabelKind
from app.services import nn_kernel
from app.services.adaptive import ShadowSplitAi, adaptive_attacks, train_shadow_splitai
from app.services.attacks import attack_nn, metric_attacks, query_split
from app.services.data import generate_synthetic, load_csv, make_eval_split, partition_members
from app.services.distill import compute_soft_labels, protected_query_fn, self_distill
from app.services.game import (
    RandomGuessAdversary,
    calibrate_metric_adversary,
    check_distillation_bound,
    correlated_pair_probe,
    run_sqmi_game,
)
from app.services.label_only import attack_indirect_noisy_single, attack_label_only_noise, attack_replay
from app.services.persistence import (
    load_mlp,
    load_protected,
    load_splitai,
    model_kind,
    save_mlp,
    save_protected,
    save_splitai,
)
from app.services.report import emit_report
from app.services.splitai import (
    QueryFn,
    all_average_query_fn,
    splitai_query_fn,
    submodel_accuracies,
    train_splitai,
)
from app.utils.encoding import derive_seed

logger = logging.getLogger(__name__)

UNEVALUATED = ["multi_query_label_only_adaptive"]

# seed streams derived from ExperimentConfig.seed
_DATA, _PARTITION, _SPLIT, _SPLITAI, _UNDEFENDED, _DISTILL = 0, 1, 2, 3, 4, 5
_SHADOW, _ATTACK, _INFERENCE, _NOISE, _KNOWLEDGE, _KL, _GAME, _PAIRS = 6, 7, 8, 9, 10, 11, 12, 13

QueryFactory = Callable[[], QueryFn]


def stage_seed(seed: int, stream: int, index: int = 0) -> int:
    return derive_seed(derive_seed(seed, stream), index)


def build_pool(spec: DatasetSpec, seed: int) -> Dataset:
    """Synthetic pool or CSV file"""
    if spec.source == DatasetSource.CSV:
        return load_csv(spec.csv_path)
    return generate_synthetic(spec.n_classes, spec.n_features, spec.n_per_class, spec.flip_noise, seed)


def query_accuracy(query_fn: QueryFn, data: Dataset) -> float:
    """Share of rows whose answer argmax equals the label"""
    return float(np.mean(query_fn(data.features).argmax(axis=1) == data.labels))


def compute_gap(query_fn: QueryFn, train: Dataset, test: Dataset) -> float:
    """
    Generalization gap g = train accuracy - test accuracy

    Args:
        query_fn: Model under test
        train: Its training set
        test: Held-out set

    Returns:
        g in [-1, 1]
    """
    if train.n == 0 or test.n == 0:
        raise InvalidParameterError("compute_gap needs non-empty train and test sets")
    return query_accuracy(query_fn, train) - query_accuracy(query_fn, test)


def snapshot_epochs(epochs: int) -> List[int]:
    """Every epoch up to 100 epochs, otherwise every 5th (always including the last)"""
    if epochs <= 100:
        return list(range(1, epochs + 1))
    picked = list(range(5, epochs + 1, 5))
    if picked[-1] != epochs:
        picked.append(epochs)
    return picked


class ExperimentRunner:
    """
    Runs one ExperimentConfig stage by stage

    A failing stage is logged, recorded in the report's failed_stages and
    skipped; later stages that depend on it are skipped too.
    """

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.report = RunReport(config=cfg, unevaluated=list(UNEVALUATED))
        self.n_jobs = cfg.n_jobs if cfg.n_jobs is not None else get_settings().n_jobs
        self.out_dir = Path(cfg.output_dir)

    def seed(self, stream: int, index: int = 0) -> int:
        return stage_seed(self.cfg.seed, stream, index)

    def stage(self, name: str, fn: Callable, *args, **kwargs):
        started = time.perf_counter()
        try:
            result = fn(*args, **kwargs)
        except Exception as exc:
            logger.error(f"❌ Stage {name} failed: {exc}", exc_info=True)
            self.report.failed_stages.append(name)
            result = None
        self.report.timings[name] = time.perf_counter() - started
        return result

    # Attack suite

    def attack_suite(
        self,
        target: str,
        queries: QueryFactory,
        split: EvalSplit,
        label_only: bool,
        shadow: Optional[ShadowSplitAi] = None,
        lam: float = 0.0,
    ) -> List[AttackResult]:
        toggles = self.cfg.attacks
        params = self.cfg.label_only
        results: List[AttackResult] = []

        def add(name: str, fn: Callable, *args, **kwargs) -> None:
            out = self.stage(f"{target}:{name}", fn, *args, **kwargs)
            if out is not None:
                results.extend(out if isinstance(out, list) else [out])

        preds = query_split(queries(), split) if (toggles.direct or toggles.nn) else None
        if toggles.direct:
            add("direct", metric_attacks, preds)
        if toggles.nn:
            add("nn", attack_nn, split, queries(), self.cfg.attack_config.with_seed(self.seed(_ATTACK)), preds)
        if label_only and toggles.label_only and split.train.is_binary:
            add(
                "label_only",
                attack_label_only_noise,
                queries(),
                split,
                params.flips_range,
                params.n_noise,
                np.random.default_rng(self.seed(_NOISE, 0)),
            )
        if toggles.indirect and split.train.is_binary:
            add("indirect", attack_indirect_noisy_single, queries(), split, np.random.default_rng(self.seed(_NOISE, 1)))
        if toggles.replay:
            add("replay", attack_replay, queries(), split, params.replay_repeats)
        if shadow is not None and toggles.adaptive:
            add(
                "adaptive",
                adaptive_attacks,
                shadow,
                queries(),
                split,
                self.cfg.attack_config.with_seed(self.seed(_ATTACK, 1)),
                lam,
                np.random.default_rng(self.seed(_INFERENCE, 99)),
                preds,
            )
        return results

    # Stages

    def load_data(self) -> Tuple[Dataset, Dataset]:
        pool = build_pool(self.cfg.dataset, self.seed(_DATA))
        members, nonmembers = partition_members(pool, self.cfg.n_members, self.seed(_PARTITION))
        self.report.dataset = {
            **pool.manifest(self.seed(_DATA)),
            "n_members": members.n,
            "n_nonmembers": nonmembers.n,
            "fingerprint": pool.fingerprint(),
        }
        return members, nonmembers

    def undefended(self, members: Dataset, nonmembers: Dataset, split: EvalSplit) -> nn_kernel.Mlp:
        cfg = self.cfg.undefended_config.with_seed(self.seed(_UNDEFENDED))
        wanted = set(snapshot_epochs(cfg.epochs)) if self.cfg.early_stopping else set()
        snapshots: List[Tuple[int, nn_kernel.Mlp]] = []

        def keep(epoch: int, snapshot: nn_kernel.Mlp) -> None:
            if epoch in wanted:
                snapshots.append((epoch, snapshot))

        model = nn_kernel.train(
            members.features, members.labels, LabelKind.HARD_CLASS, cfg, n_classes=members.n_classes, epoch_callback=keep
        )
        query = lambda f: nn_kernel.predict_batch(model, f)  # noqa: E731
        row = DefenseRow(
            defense=Defense.UNDEFENDED,
            train_accuracy=query_accuracy(query, members),
            test_accuracy=query_accuracy(query, nonmembers),
            attacks=self.attack_suite("undefended", lambda: query, split, label_only=True),
        )
        self.report.rows.append(row)
        if snapshots:
            self.stage("early_stopping", self.early_stopping, snapshots, members, nonmembers, split)
        if self.cfg.persist_models:
            save_mlp(model, cfg, self.out_dir / "models" / "undefended")
        return model

    def early_stopping(
        self,
        snapshots: Sequence[Tuple[int, nn_kernel.Mlp]],
        members: Dataset,
        nonmembers: Dataset,
        split: EvalSplit,
    ) -> None:
        for epoch, snapshot in snapshots:
            query = lambda f, m=snapshot: nn_kernel.predict_batch(m, f)  # noqa: E731
            best = max(r.accuracy for r in metric_attacks(query_split(query, split)))
            self.report.early_stopping.append(
                EarlyStoppingPoint(
                    epoch=epoch,
                    train_accuracy=query_accuracy(query, members),
                    test_accuracy=query_accuracy(query, nonmembers),
                    best_direct=best,
                )
            )

    def splitai_rows(self, members: Dataset, nonmembers: Dataset, split: EvalSplit):
        splitai = train_splitai(
            members, self.cfg.K, self.cfg.L, self.cfg.submodel_config, self.seed(_SPLITAI), n_jobs=self.n_jobs
        )
        mean_sub = float(np.mean(submodel_accuracies(splitai, nonmembers)))

        aoao = all_average_query_fn(splitai)
        self.report.rows.append(
            DefenseRow(
                defense=Defense.AOAO,
                train_accuracy=query_accuracy(aoao, members),
                test_accuracy=query_accuracy(aoao, nonmembers),
                attacks=self.attack_suite("aoao", lambda: aoao, split, label_only=False),
                mean_submodel_accuracy=mean_sub,
            )
        )

        counter = itertools.count(1)

        def fresh() -> QueryFn:
            return splitai_query_fn(splitai, np.random.default_rng(self.seed(_INFERENCE, next(counter))))

        self.report.rows.append(
            DefenseRow(
                defense=Defense.SPLITAI,
                train_accuracy=query_accuracy(fresh(), members),
                test_accuracy=query_accuracy(fresh(), nonmembers),
                attacks=self.attack_suite("splitai", fresh, split, label_only=False),
                mean_submodel_accuracy=mean_sub,
            )
        )
        if self.cfg.persist_models:
            save_splitai(splitai, self.out_dir / "models" / "splitai")
        return splitai

    def distilled_row(
        self,
        splitai,
        lam: float,
        members: Dataset,
        nonmembers: Dataset,
        split: EvalSplit,
        shadow: Optional[ShadowSplitAi],
    ):
        soft = compute_soft_labels(splitai, members, lam, np.random.default_rng(self.seed(_INFERENCE, 0)))
        protected = self_distill(
            splitai,
            members,
            lam,
            self.cfg.distill_config.with_seed(self.seed(_DISTILL)),
            np.random.default_rng(self.seed(_INFERENCE, 0)),
            soft_labels=soft,
        )
        query = protected_query_fn(protected)
        self.report.rows.append(
            DefenseRow(
                defense=Defense.DISTILLED,
                lam=lam,
                train_accuracy=query_accuracy(query, members),
                test_accuracy=query_accuracy(query, nonmembers),
                attacks=self.attack_suite(f"distilled[{lam}]", lambda: query, split, label_only=True, shadow=shadow, lam=lam),
            )
        )
        if self.cfg.persist_models:
            save_protected(
                protected,
                self.out_dir / "models" / f"distilled_lam{lam}",
                soft if self.cfg.persist_soft_labels else None,
            )
        return protected

    def knowledge_sweep(self, members: Dataset, nonmembers: Dataset, protected) -> None:
        query = protected_query_fn(protected)
        for idx, fraction in enumerate(self.cfg.knowledge_sweep):
            split = make_eval_split(members, nonmembers, fraction, self.seed(_KNOWLEDGE, idx))
            shadow = train_shadow_splitai(
                split, self.cfg.K, self.cfg.L, self.cfg.submodel_config, self.seed(_SHADOW, idx + 1), n_jobs=self.n_jobs
            )
            results = adaptive_attacks(
                shadow,
                query,
                split,
                self.cfg.attack_config.with_seed(self.seed(_ATTACK, 1)),
                protected.lam,
                np.random.default_rng(self.seed(_INFERENCE, 99)),
            )
            self.report.knowledge_sweep.append(
                KnowledgePoint(knowledge_fraction=fraction, lam=protected.lam, attacks=results)
            )

    def run(self) -> RunReport:
        cfg = self.cfg
        logger.info(f"Starting run '{cfg.name}' (seed={cfg.seed})")
        data = self.stage("data", self.load_data)
        if data is None:
            return self.report
        members, nonmembers = data
        split = self.stage(
            "split", make_eval_split, members, nonmembers, cfg.knowledge_fraction, self.seed(_SPLIT)
        )
        if split is None:
            return self.report

        self.stage("undefended", self.undefended, members, nonmembers, split)
        splitai = self.stage("splitai", self.splitai_rows, members, nonmembers, split)

        shadow = None
        if cfg.attacks.adaptive:
            shadow = self.stage(
                "shadow", train_shadow_splitai, split, cfg.K, cfg.L, cfg.submodel_config, self.seed(_SHADOW), self.n_jobs
            )

        first_protected = None
        if splitai is not None:
            for lam in cfg.lambdas:
                protected = self.stage(f"distilled[{lam}]", self.distilled_row, splitai, lam, members, nonmembers, split, shadow)
                if first_protected is None:
                    first_protected = protected

        if cfg.knowledge_sweep and first_protected is not None:
            self.stage("knowledge_sweep", self.knowledge_sweep, members, nonmembers, first_protected)
        if cfg.kl_pairs:
            points = self.stage("kl_sweep", run_kl_sweep, cfg, members, nonmembers, split, self.n_jobs)
            if points is not None:
                self.report.kl_sweep = points
        if cfg.game.enabled:
            self.report.game = self.stage("game", run_game, cfg.game, self.seed(_GAME), self.n_jobs)

        status = "✅ complete" if self.report.complete else f"⚠️ partial ({', '.join(self.report.failed_stages)})"
        logger.info(f"Run '{cfg.name}' {status}")
        return self.report


def run_kl_sweep(
    cfg: ExperimentConfig,
    members: Dataset,
    nonmembers: Dataset,
    split: EvalSplit,
    n_jobs: Optional[int] = None,
) -> List[KlPoint]:
    """Split-AI and distilled utility/privacy for every (K, L) in cfg.kl_pairs"""
    points = []
    for idx, (K, L) in enumerate(cfg.kl_pairs):
        seed = stage_seed(cfg.seed, _KL, idx)
        splitai = train_splitai(members, K, L, cfg.submodel_config, seed, n_jobs=n_jobs)
        query = splitai_query_fn(splitai, np.random.default_rng(derive_seed(seed, 1)))
        splitai_best = max(r.accuracy for r in metric_attacks(query_split(query, split)))
        splitai_test = query_accuracy(splitai_query_fn(splitai, np.random.default_rng(derive_seed(seed, 2))), nonmembers)

        protected = self_distill(
            splitai,
            members,
            cfg.lambdas[0],
            cfg.distill_config.with_seed(derive_seed(seed, 3)),
            np.random.default_rng(derive_seed(seed, 4)),
        )
        distilled = protected_query_fn(protected)
        points.append(
            KlPoint(
                K=K,
                L=L,
                splitai_test_accuracy=splitai_test,
                mean_submodel_accuracy=float(np.mean(submodel_accuracies(splitai, nonmembers))),
                splitai_best_direct=splitai_best,
                distilled_test_accuracy=query_accuracy(distilled, nonmembers),
                distilled_best_direct=max(r.accuracy for r in metric_attacks(query_split(distilled, split))),
            )
        )
        logger.info(f"K={K}, L={L}: Split-AI test {splitai_test:.3f}, attack {splitai_best:.3f}")
    return points


def game_universe(params: GameParams, seed: int) -> Dataset:
    """The 2n points X of the game"""
    pool = build_pool(params.data, derive_seed(seed, 0))
    if pool.n < 2 * params.n:
        raise InvalidParameterError(f"Game data has {pool.n} points, need {2 * params.n}")
    return pool.subset(np.arange(2 * params.n))


def run_game(params: GameParams, seed: int, n_jobs: Optional[int] = None) -> GameSummary:
    """SQMI of Split-AI and of the undefended learner, plus the distillation bound check"""
    X = game_universe(params, seed)
    summary = GameSummary(n=params.n)
    for learner in (Learner.SPLITAI, Learner.UNDEFENDED):
        spec = LearnerSpec(learner=learner, train_config=params.learner_config, K=params.K, L=params.L)
        adversary = calibrate_metric_adversary(spec, X, params.pilot_trials, derive_seed(seed, 1), n_jobs=n_jobs)
        estimate = run_sqmi_game(spec, adversary, X, params.trials, derive_seed(seed, 2), n_jobs=n_jobs)
        if learner == Learner.SPLITAI:
            summary.splitai = estimate
        else:
            summary.undefended = estimate
    summary.distillation_bound = check_distillation_bound(
        X,
        params.K,
        params.L,
        params.learner_config,
        params.alpha,
        params.trials,
        derive_seed(seed, 3),
        pilot_trials=params.pilot_trials,
        n_jobs=n_jobs,
    )
    return summary


def play_game(
    cfg: ExperimentConfig,
    learner: Learner,
    adversary: str = "metric",
    trials: Optional[int] = None,
    n: Optional[int] = None,
    challenge_index: Optional[int] = None,
    alpha: Optional[float] = None,
    seed: Optional[int] = None,
    n_jobs: Optional[int] = None,
    transcript_path: Optional[Union[str, Path]] = None,
) -> Union[SqmiEstimate, DistillationBoundCheck]:
    """
    One security game outside a full run

    With learner=distilled and alpha set, returns the distillation bound
    check instead of a plain estimate.

    Args:
        cfg: Configuration supplying the game parameters
        learner: Learner under test
        adversary: "metric" (calibrated on pilot trials) or "random"
        trials: Override cfg.game.trials
        n: Override cfg.game.n
        challenge_index: Let the adversary fix the challenged index
        alpha: Stability level for the bound check
        seed: Override cfg.seed
        n_jobs: Parallel trials
        transcript_path: Write one JSON line per trial

    Returns:
        SqmiEstimate or DistillationBoundCheck
    """
    updates = {k: v for k, v in {"trials": trials, "n": n}.items() if v is not None}
    params = GameParams.model_validate({**cfg.game.model_dump(), **updates})
    seed = cfg.seed if seed is None else seed
    X = game_universe(params, seed)
    learner = Learner(learner)

    if learner == Learner.DISTILLED and alpha is not None:
        return check_distillation_bound(
            X, params.K, params.L, params.learner_config, alpha, params.trials, seed,
            pilot_trials=params.pilot_trials, n_jobs=n_jobs,
        )

    spec = LearnerSpec(learner=learner, train_config=params.learner_config, K=params.K, L=params.L)
    if adversary == "random":
        if challenge_index is not None:
            raise InvalidParameterError("The random adversary cannot choose the challenge index")
        guesser = RandomGuessAdversary(derive_seed(seed, 7))
    elif adversary == "metric":
        guesser = calibrate_metric_adversary(spec, X, params.pilot_trials, seed, n_jobs=n_jobs)
        guesser.challenge_index = challenge_index
    else:
        raise InvalidParameterError(f"Unknown adversary: {adversary}")
    return run_sqmi_game(
        spec,
        guesser,
        X,
        params.trials,
        seed,
        adversary_chooses=challenge_index is not None,
        n_jobs=n_jobs,
        transcript_path=transcript_path,
    )


def run_pair_leakage(
    cfg: ExperimentConfig,
    thresholds: Sequence[float],
    n_jobs: Optional[int] = None,
) -> List[PairProbeBucket]:
    """
    Correlated-pair leakage of the run's Split-AI

    Trains Split-AI on the run's members (same seeds as a full run) and
    pairs every member with its closest differently-labeled non-member.
    """
    if not thresholds:
        raise InvalidParameterError("At least one distance threshold is needed")
    runner = ExperimentRunner(cfg)
    members, nonmembers = runner.load_data()
    jobs = n_jobs if n_jobs is not None else runner.n_jobs
    splitai = train_splitai(members, cfg.K, cfg.L, cfg.submodel_config, runner.seed(_SPLITAI), n_jobs=jobs)
    return correlated_pair_probe(
        splitai, members, nonmembers, sorted(thresholds), np.random.default_rng(runner.seed(_PAIRS))
    )


def run_experiment(cfg: ExperimentConfig, emit: bool = True) -> RunReport:
    """
    Full pipeline for one configuration

    Args:
        cfg: Experiment configuration; fully determines the run
        emit: Write the report files to cfg.output_dir

    Returns:
        RunReport (partial when failed_stages is non-empty)
    """
    report = ExperimentRunner(cfg).run()
    if emit:
        emit_report(report, cfg.formats, cfg.output_dir)
    return report


def require_complete(report: RunReport) -> RunReport:
    """Raise StageFailedError for a partial report"""
    if not report.complete:
        raise StageFailedError("Run finished with failed stages", stages=report.failed_stages)
    return report


def train_defense(cfg: ExperimentConfig, defense: Defense, directory: Union[str, Path]) -> Dict:
    """
    Train one defense on the run's data split and save it

    Uses the same stage seeds as run_experiment, so a saved model matches
    the corresponding report row.
    """
    defense = Defense(defense)
    runner = ExperimentRunner(cfg)
    members, nonmembers = runner.load_data()
    directory = Path(directory)

    if defense == Defense.UNDEFENDED:
        train_cfg = cfg.undefended_config.with_seed(runner.seed(_UNDEFENDED))
        model = nn_kernel.train(members.features, members.labels, LabelKind.HARD_CLASS, train_cfg, n_classes=members.n_classes)
        save_mlp(model, train_cfg, directory)
        query = lambda f: nn_kernel.predict_batch(model, f)  # noqa: E731
    elif defense in (Defense.SPLITAI, Defense.AOAO):
        splitai = train_splitai(members, cfg.K, cfg.L, cfg.submodel_config, runner.seed(_SPLITAI), n_jobs=runner.n_jobs)
        save_splitai(splitai, directory)
        query = (
            all_average_query_fn(splitai)
            if defense == Defense.AOAO
            else splitai_query_fn(splitai, np.random.default_rng(runner.seed(_INFERENCE, 1)))
        )
    else:
        splitai = train_splitai(members, cfg.K, cfg.L, cfg.submodel_config, runner.seed(_SPLITAI), n_jobs=runner.n_jobs)
        lam = cfg.lambdas[0]
        soft = compute_soft_labels(splitai, members, lam, np.random.default_rng(runner.seed(_INFERENCE, 0)))
        protected = self_distill(
            splitai,
            members,
            lam,
            cfg.distill_config.with_seed(runner.seed(_DISTILL)),
            np.random.default_rng(runner.seed(_INFERENCE, 0)),
            soft_labels=soft,
        )
        save_protected(protected, directory, soft if cfg.persist_soft_labels else None)
        query = protected_query_fn(protected)

    summary = {
        "defense": defense.value,
        "directory": str(directory),
        "train_accuracy": query_accuracy(query, members),
        "test_accuracy": query_accuracy(query, nonmembers),
    }
    summary["gap"] = summary["train_accuracy"] - summary["test_accuracy"]
    logger.info(f"✅ Trained {defense.value}: train {summary['train_accuracy']:.3f}, test {summary['test_accuracy']:.3f}")
    return summary


def attack_saved_model(cfg: ExperimentConfig, directory: Union[str, Path], all_average: bool = False) -> DefenseRow:
    """
    Run the enabled attack suite against a model directory written by train_defense

    Args:
        cfg: The configuration the model was trained with
        directory: Model directory
        all_average: Query a Split-AI directory through the all-outputs average

    Returns:
        DefenseRow for the loaded model
    """
    runner = ExperimentRunner(cfg)
    members, nonmembers = runner.load_data()
    split = make_eval_split(members, nonmembers, cfg.knowledge_fraction, runner.seed(_SPLIT))
    kind = model_kind(directory)
    shadow = None
    lam = None

    if kind == "mlp":
        model, _ = load_mlp(directory)
        defense = Defense.UNDEFENDED
        queries: QueryFactory = lambda: (lambda f: nn_kernel.predict_batch(model, f))  # noqa: E731
    elif kind == "splitai":
        splitai = load_splitai(directory)
        if splitai.dataset_fingerprint != members.fingerprint():
            raise InvalidParameterError("Model was trained on a different member set")
        counter = itertools.count(1)
        if all_average:
            defense = Defense.AOAO
            queries = lambda: all_average_query_fn(splitai)  # noqa: E731
        else:
            defense = Defense.SPLITAI
            queries = lambda: splitai_query_fn(splitai, np.random.default_rng(runner.seed(_INFERENCE, next(counter))))  # noqa: E731
    elif kind == "distilled":
        protected, _ = load_protected(directory)
        if protected.dataset_fingerprint != members.fingerprint():
            raise InvalidParameterError("Model was trained on a different member set")
        defense = Defense.DISTILLED
        lam = protected.lam
        queries = lambda: protected_query_fn(protected)  # noqa: E731
        if cfg.attacks.adaptive:
            shadow = train_shadow_splitai(split, cfg.K, cfg.L, cfg.submodel_config, runner.seed(_SHADOW), runner.n_jobs)
    else:
        raise InvalidParameterError(f"Unknown model kind: {kind}")

    label_only = defense in (Defense.UNDEFENDED, Defense.DISTILLED)
    attacks = runner.attack_suite(defense.value, queries, split, label_only, shadow=shadow, lam=lam or 0.0)
    if runner.report.failed_stages:
        raise StageFailedError("Attack stages failed", stages=runner.report.failed_stages)
    return DefenseRow(
        defense=defense,
        lam=lam,
        train_accuracy=query_accuracy(queries(), members),
        test_accuracy=query_accuracy(queries(), nonmembers),
        attacks=attacks,
    )
