"""
Experiment orchestration: stage seeding, rows, sweeps and saved models
"""

from pathlib import Path

import pytest

from app.errors import InvalidParameterError, StageFailedError
from app.models.experiment import (
    AttackToggles,
    DatasetSource,
    DatasetSpec,
    Defense,
    ExperimentConfig,
    GameParams,
    LabelOnlyParams,
)
from app.models.game import Learner
from app.models.kernel import Activation, LabelKind, TrainConfig
from app.services import nn_kernel
from app.services.experiment import (
    UNEVALUATED,
    ExperimentRunner,
    attack_saved_model,
    compute_gap,
    play_game,
    require_complete,
    run_experiment,
    run_game,
    run_pair_leakage,
    snapshot_epochs,
    train_defense,
)
from app.services.report import render_csv, render_json

TINY = TrainConfig(epochs=4, batch_size=16, learning_rate=0.01, hidden_sizes=[8])


@pytest.fixture
def small_cfg(tmp_path) -> ExperimentConfig:
    return ExperimentConfig(
        name="small",
        dataset=DatasetSpec(n_classes=3, n_features=16, n_per_class=40, flip_noise=0.2),
        n_members=60,
        K=3,
        L=1,
        submodel_config=TINY,
        undefended_config=TINY,
        distill_config=TINY,
        attack_config=TrainConfig(epochs=3, batch_size=16, learning_rate=0.01, hidden_sizes=[8], activation=Activation.RELU),
        lambdas=[0.0, 1.0],
        label_only=LabelOnlyParams(flips_range=[1, 2], n_noise=2, replay_repeats=2),
        seed=7,
        output_dir=str(tmp_path / "run"),
        n_jobs=1,
    )


def _direct_only(cfg: ExperimentConfig) -> ExperimentConfig:
    toggles = AttackToggles(nn=False, label_only=False, indirect=False, replay=False, adaptive=False)
    return cfg.model_copy(update={"attacks": toggles})


class TestHelpers:
    def test_gap_is_zero_on_identical_sets(self, pool):
        model = nn_kernel.train(pool.features, pool.labels, LabelKind.HARD_CLASS, TINY, n_classes=pool.n_classes)
        query = lambda f: nn_kernel.predict_batch(model, f)  # noqa: E731
        assert compute_gap(query, pool, pool) == 0.0

    def test_snapshot_epochs(self):
        assert snapshot_epochs(4) == [1, 2, 3, 4]
        assert snapshot_epochs(100) == list(range(1, 101))
        picked = snapshot_epochs(112)
        assert picked[:2] == [5, 10]
        assert picked[-2:] == [110, 112]

    def test_require_complete(self, small_cfg):
        runner = ExperimentRunner(small_cfg)
        runner.report.failed_stages.append("data")
        with pytest.raises(StageFailedError):
            require_complete(runner.report)


class TestRun:
    def test_rows_and_determinism(self, small_cfg):
        first = run_experiment(small_cfg, emit=False)
        second = run_experiment(small_cfg, emit=False)
        assert first.complete, first.failed_stages
        assert render_json(first) == render_json(second)

        assert [(r.defense, r.lam) for r in first.rows] == [
            (Defense.UNDEFENDED, None),
            (Defense.AOAO, None),
            (Defense.SPLITAI, None),
            (Defense.DISTILLED, 0.0),
            (Defense.DISTILLED, 1.0),
        ]
        assert first.unevaluated == UNEVALUATED
        assert render_csv(first).count("\n") == len(first.rows) + 1

    def test_lambda_zero_row_independent_of_other_lambdas(self, small_cfg):
        both = run_experiment(small_cfg, emit=False)
        alone = run_experiment(small_cfg.model_copy(update={"lambdas": [0.0]}), emit=False)
        assert both.row(Defense.DISTILLED, 0.0).model_dump() == alone.row(Defense.DISTILLED, 0.0).model_dump()

    def test_attack_families_per_row(self, small_cfg):
        report = run_experiment(small_cfg, emit=False)
        names = {(r.defense, r.lam): {a.name for a in r.attacks} for r in report.rows}
        assert "label_only_noise" in names[(Defense.UNDEFENDED, None)]
        assert "label_only_noise" not in names[(Defense.SPLITAI, None)]
        assert "adaptive_nn1" in names[(Defense.DISTILLED, 0.0)]
        assert "replay" in names[(Defense.SPLITAI, None)]
        assert report.row(Defense.SPLITAI).mean_submodel_accuracy is not None

    def test_sweeps(self, small_cfg):
        cfg = _direct_only(small_cfg).model_copy(
            update={"early_stopping": True, "knowledge_sweep": [0.5], "kl_pairs": [(3, 1)], "lambdas": [0.0]}
        )
        cfg = cfg.model_copy(update={"attacks": cfg.attacks.model_copy(update={"adaptive": True})})
        report = run_experiment(cfg, emit=False)
        assert report.complete, report.failed_stages
        assert [p.epoch for p in report.early_stopping] == [1, 2, 3, 4]
        assert len(report.knowledge_sweep) == 1
        assert report.knowledge_sweep[0].best_adaptive is not None
        assert [(p.K, p.L) for p in report.kl_sweep] == [(3, 1)]

    def test_missing_csv_is_a_failed_stage(self, tmp_path):
        cfg = ExperimentConfig(
            dataset=DatasetSpec(source=DatasetSource.CSV, csv_path=str(tmp_path / "missing.csv")),
            output_dir=str(tmp_path / "run"),
        )
        report = run_experiment(cfg, emit=False)
        assert report.failed_stages == ["data"]
        assert not report.complete
        assert report.rows == []

    def test_emit_writes_files(self, small_cfg):
        run_experiment(_direct_only(small_cfg), emit=True)
        out = Path(small_cfg.output_dir)
        for name in ("report.json", "report.txt", "report.csv", "timings.json"):
            assert (out / name).exists(), name


class TestConfig:
    def test_l_must_be_below_k(self):
        with pytest.raises(ValueError):
            ExperimentConfig(K=3, L=3)

    def test_members_below_pool(self):
        with pytest.raises(ValueError):
            ExperimentConfig(dataset=DatasetSpec(n_classes=2, n_per_class=10), n_members=20)

    def test_lambda_range(self):
        with pytest.raises(ValueError):
            ExperimentConfig(lambdas=[1.5])

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            ExperimentConfig.model_validate({"seeed": 1})

    def test_desk_preset(self):
        cfg = ExperimentConfig.desk(seed=4)
        assert (cfg.K, cfg.L, cfg.n_members) == (25, 10, 2000)
        assert cfg.dataset.n_classes * cfg.dataset.n_per_class == 4000
        assert cfg.lambdas == [0.0, 1.0]


class TestSavedModels:
    @pytest.mark.parametrize("defense", [Defense.UNDEFENDED, Defense.SPLITAI, Defense.DISTILLED])
    def test_train_then_attack(self, tmp_path, small_cfg, defense):
        cfg = _direct_only(small_cfg)
        summary = train_defense(cfg, defense, tmp_path / defense.value)
        assert summary["gap"] == pytest.approx(summary["train_accuracy"] - summary["test_accuracy"])

        row = attack_saved_model(cfg, tmp_path / defense.value)
        assert row.defense == defense
        assert {a.name for a in row.attacks} >= {"confidence", "neg_mentr"}
        if defense != Defense.SPLITAI:
            assert row.train_accuracy == summary["train_accuracy"]

    def test_all_average_view(self, tmp_path, small_cfg):
        cfg = _direct_only(small_cfg)
        train_defense(cfg, Defense.SPLITAI, tmp_path / "m")
        assert attack_saved_model(cfg, tmp_path / "m", all_average=True).defense == Defense.AOAO

    def test_wrong_member_set(self, tmp_path, small_cfg):
        cfg = _direct_only(small_cfg)
        train_defense(cfg, Defense.SPLITAI, tmp_path / "m")
        with pytest.raises(InvalidParameterError):
            attack_saved_model(cfg.model_copy(update={"seed": 8}), tmp_path / "m")


class TestPlayGame:
    def test_random_adversary_cannot_choose(self):
        with pytest.raises(InvalidParameterError):
            play_game(ExperimentConfig.game_tiny(), Learner.SPLITAI, adversary="random", challenge_index=0)

    def test_unknown_adversary(self):
        with pytest.raises(InvalidParameterError):
            play_game(ExperimentConfig.game_tiny(), Learner.SPLITAI, adversary="oracle")

    def test_random_adversary(self):
        cfg = ExperimentConfig.game_tiny()
        quick = TINY.model_copy(update={"batch_size": 4, "epochs": 2})
        cfg = cfg.model_copy(update={"game": cfg.game.model_copy(update={"n": 12, "learner_config": quick})})
        est = play_game(cfg, Learner.UNDEFENDED, adversary="random", trials=100, n_jobs=1)
        assert est.trials == 100
        assert 0.0 <= est.advantage <= 1.0


class TestPairLeakage:
    def test_thresholds_are_sorted_and_deterministic(self, small_cfg):
        first = run_pair_leakage(small_cfg, [100.0, 0.0], n_jobs=1)
        second = run_pair_leakage(small_cfg, [0.0, 100.0], n_jobs=1)
        assert [b.threshold for b in first] == [0.0, 100.0]
        assert [b.model_dump() for b in first] == [b.model_dump() for b in second]
        assert first[1].n_pairs == small_cfg.n_members

    def test_no_thresholds(self, small_cfg):
        with pytest.raises(InvalidParameterError):
            run_pair_leakage(small_cfg, [])


@pytest.mark.slow
def test_run_game_summary():
    params = GameParams(
        enabled=True,
        n=12,
        trials=100,
        K=3,
        L=1,
        pilot_trials=2,
        learner_config=TrainConfig(epochs=2, batch_size=4, learning_rate=0.01, hidden_sizes=[4]),
        data=DatasetSpec(n_classes=2, n_features=8, n_per_class=12, flip_noise=0.2),
    )
    summary = run_game(params, seed=3, n_jobs=1)
    assert summary.n == 12
    assert summary.splitai.trials == 100
    assert summary.undefended.trials == 100
    assert summary.distillation_bound.alpha == params.alpha
