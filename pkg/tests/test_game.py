"""
Security game: trials, estimates, transcripts, the distillation bound and correlated-pair leakage
"""

import json

import numpy as np
import pytest

from app.errors import InvalidParameterError
from app.models.attack import Direction, MiaScoreKind, ThresholdMode
from app.models.data import Dataset, FeatureKind
from app.models.experiment import GameParams
from app.models.game import Learner, LearnerSpec
from app.models.kernel import TrainConfig
from app.services.attacks import calibrate_rule
from app.services.data import generate_synthetic
from app.services.experiment import game_universe
from app.services.game import (
    MetricAdversary,
    RandomGuessAdversary,
    calibrate_metric_adversary,
    check_distillation_bound,
    correlated_pair_probe,
    play_sqmi_game,
    run_sqmi_game,
)
from app.services.splitai import splitai_query_fn, train_splitai


@pytest.fixture
def quick_cfg() -> TrainConfig:
    return TrainConfig(epochs=2, batch_size=4, learning_rate=0.01, hidden_sizes=[4], seed=0)


@pytest.fixture
def universe() -> Dataset:
    return generate_synthetic(n_classes=2, n_features=8, n_per_class=10, flip_noise=0.2, seed=2)


def _toy_rule():
    return calibrate_rule(
        np.array([0.9, 0.8]),
        np.array([0.4, 0.3]),
        np.array([0, 1]),
        np.array([0, 1]),
        ThresholdMode.GLOBAL,
        Direction.HIGHER_MEANS_MEMBER,
    )


def _identity_distiller(splitai, data, rng):
    return splitai_query_fn(splitai, rng)


class TestGameHarness:
    def test_random_adversary_is_chance(self, universe, quick_cfg):
        spec = LearnerSpec(learner=Learner.UNDEFENDED, train_config=quick_cfg)
        est = run_sqmi_game(spec, RandomGuessAdversary(1), universe, trials=200, seed=3, n_jobs=1)
        assert est.trials == 200
        assert not est.partial
        assert abs(est.advantage - 0.5) <= 2 * est.ci_half_width

    def test_b_has_weight_n(self, universe, quick_cfg):
        spec = LearnerSpec(learner=Learner.UNDEFENDED, train_config=quick_cfg)
        transcript = play_sqmi_game(spec, RandomGuessAdversary(0), universe, trials=100, seed=4, n_jobs=1)
        n = universe.n // 2
        assert transcript.n == n
        assert all(len(r.b) == 2 * n and sum(r.b) == n for r in transcript.records)
        assert [r.trial for r in transcript.records] == list(range(100))

    def test_fresh_learner_every_trial(self, universe, quick_cfg):
        spec = LearnerSpec(learner=Learner.UNDEFENDED, train_config=quick_cfg)
        transcript = play_sqmi_game(spec, RandomGuessAdversary(0), universe, trials=100, seed=5, n_jobs=1)
        fingerprints = [r.param_fingerprint for r in transcript.records]
        assert len(set(fingerprints)) == len(fingerprints)

    def test_deterministic(self, universe, quick_cfg):
        spec = LearnerSpec(learner=Learner.UNDEFENDED, train_config=quick_cfg)
        a = play_sqmi_game(spec, RandomGuessAdversary(0), universe, trials=100, seed=6, n_jobs=2)
        b = play_sqmi_game(spec, RandomGuessAdversary(0), universe, trials=100, seed=6, n_jobs=1)
        assert a.model_dump() == b.model_dump()

    def test_too_few_trials(self, universe, quick_cfg):
        spec = LearnerSpec(learner=Learner.UNDEFENDED, train_config=quick_cfg)
        with pytest.raises(InvalidParameterError):
            play_sqmi_game(spec, RandomGuessAdversary(0), universe, trials=99, seed=0)

    def test_odd_universe(self, universe, quick_cfg):
        spec = LearnerSpec(learner=Learner.UNDEFENDED, train_config=quick_cfg)
        with pytest.raises(InvalidParameterError):
            play_sqmi_game(spec, RandomGuessAdversary(0), universe.subset(np.arange(19)), trials=100, seed=0)

    def test_adversary_chosen_index(self, universe, quick_cfg):
        spec = LearnerSpec(learner=Learner.UNDEFENDED, train_config=quick_cfg)
        adversary = MetricAdversary(MiaScoreKind.CONFIDENCE, _toy_rule(), challenge_index=3)
        transcript = play_sqmi_game(spec, adversary, universe, trials=100, seed=7, adversary_chooses=True, n_jobs=1)
        assert {r.challenge_index for r in transcript.records} == {3}

    def test_chosen_index_out_of_range(self, universe, quick_cfg):
        spec = LearnerSpec(learner=Learner.UNDEFENDED, train_config=quick_cfg)
        adversary = MetricAdversary(MiaScoreKind.CONFIDENCE, _toy_rule(), challenge_index=universe.n)
        with pytest.raises(InvalidParameterError):
            play_sqmi_game(spec, adversary, universe, trials=100, seed=7, adversary_chooses=True)

    def test_random_adversary_cannot_choose(self, universe, quick_cfg):
        spec = LearnerSpec(learner=Learner.UNDEFENDED, train_config=quick_cfg)
        with pytest.raises(InvalidParameterError):
            play_sqmi_game(spec, RandomGuessAdversary(0), universe, trials=100, seed=7, adversary_chooses=True)

    def test_transcript_file(self, tmp_path, universe, quick_cfg):
        spec = LearnerSpec(learner=Learner.UNDEFENDED, train_config=quick_cfg)
        path = tmp_path / "transcript.jsonl"
        run_sqmi_game(spec, RandomGuessAdversary(0), universe, trials=100, seed=8, n_jobs=1, transcript_path=path)
        lines = path.read_text().splitlines()
        assert len(lines) == 100
        first = json.loads(lines[0])
        assert set(first) == {"trial", "b_hash", "i", "guess", "correct"}
        assert first["trial"] == 0

    def test_zero_time_budget_is_partial(self, universe, quick_cfg):
        spec = LearnerSpec(learner=Learner.UNDEFENDED, train_config=quick_cfg)
        est = run_sqmi_game(spec, RandomGuessAdversary(0), universe, trials=100, seed=9, time_budget_s=-1.0)
        assert est.partial
        assert est.trials == 0
        assert est.requested_trials == 100

    def test_metric_adversary_calibration(self, universe, quick_cfg):
        spec = LearnerSpec(learner=Learner.UNDEFENDED, train_config=quick_cfg)
        adversary = calibrate_metric_adversary(spec, universe, pilot_trials=3, seed=1, n_jobs=1)
        assert 0.5 <= adversary.rule.calibration_accuracy <= 1.0
        assert adversary.challenge_index is None


class TestDistillationBound:
    def test_identity_distiller_has_zero_beta(self, universe, quick_cfg):
        check = check_distillation_bound(
            universe, K=3, L=1, cfg=quick_cfg, alpha=0.01, trials=100, seed=10,
            adversary=RandomGuessAdversary(0), distiller=_identity_distiller, n_jobs=1,
        )
        assert check.beta_hat == 0.0
        assert check.bound == pytest.approx(0.51 + check.sqmi_distilled.ci_half_width)

    def test_alpha_one_has_zero_beta(self, universe, quick_cfg):
        check = check_distillation_bound(
            universe, K=3, L=1, cfg=quick_cfg, alpha=1.0, trials=100, seed=11,
            adversary=RandomGuessAdversary(0), n_jobs=1,
        )
        assert check.beta_hat == 0.0
        assert check.bound_satisfied

    @pytest.mark.parametrize("alpha", [0.0, 1.5])
    def test_invalid_alpha(self, universe, quick_cfg, alpha):
        with pytest.raises(InvalidParameterError):
            check_distillation_bound(universe, 3, 1, quick_cfg, alpha, 100, 0, adversary=RandomGuessAdversary(0))


class TestCorrelatedPairs:
    @pytest.fixture
    def planted(self, pool, tiny_cfg):
        members = pool.subset(np.arange(0, 180, 2))
        others = pool.subset(np.arange(1, 180, 2))
        copies = members.features[:5]
        flipped = (members.labels[:5] + 1) % pool.n_classes
        nonmembers = Dataset.from_arrays(
            np.vstack([others.features, copies]),
            np.concatenate([others.labels, flipped]),
            pool.n_classes,
            pool.feature_kind,
        )
        splitai = train_splitai(members, K=3, L=1, cfg=tiny_cfg, seed=1)
        return splitai, members, nonmembers

    def test_fraction_monotone(self, planted):
        splitai, members, nonmembers = planted
        buckets = correlated_pair_probe(splitai, members, nonmembers, [0.0, 2.0, 3.0, 100.0], np.random.default_rng(0))
        fractions = [b.pair_fraction for b in buckets]
        assert fractions == sorted(fractions)
        assert buckets[-1].n_pairs == members.n
        assert buckets[-1].accuracy is not None

    def test_planted_duplicates(self, planted):
        splitai, members, nonmembers = planted
        (bucket,) = correlated_pair_probe(splitai, members, nonmembers, [0.0], np.random.default_rng(0))
        assert bucket.n_pairs >= 5

    def test_mislabeled_members_and_their_copies(self):
        data = generate_synthetic(n_classes=2, n_features=24, n_per_class=48, flip_noise=0.3, seed=12)
        mislabeled = np.random.default_rng(0).choice(data.n, size=24, replace=False)
        labels = data.labels.copy()
        labels[mislabeled] = 1 - labels[mislabeled]
        members = Dataset.from_arrays(data.features, labels, 2, FeatureKind.BINARY)
        copies = data.subset(mislabeled)
        memorize = TrainConfig(epochs=200, batch_size=8, learning_rate=0.01, hidden_sizes=[64], seed=0)
        splitai = train_splitai(members, K=4, L=1, cfg=memorize, seed=2, n_jobs=1)
        (bucket,) = correlated_pair_probe(splitai, members, copies, [0.0], np.random.default_rng(3))
        assert bucket.n_pairs == 24
        assert bucket.accuracy > 0.65

    def test_members_must_match(self, planted):
        splitai, members, nonmembers = planted
        with pytest.raises(InvalidParameterError):
            correlated_pair_probe(splitai, nonmembers, members, [1.0], np.random.default_rng(0))


@pytest.mark.slow
def test_overfit_learner_loses_the_game():
    X = generate_synthetic(n_classes=2, n_features=20, n_per_class=25, flip_noise=0.4, seed=5)
    spec = LearnerSpec(
        learner=Learner.UNDEFENDED,
        train_config=TrainConfig(epochs=200, batch_size=8, learning_rate=0.01, hidden_sizes=[64]),
    )
    adversary = calibrate_metric_adversary(spec, X, pilot_trials=10, seed=1)
    est = run_sqmi_game(spec, adversary, X, trials=100, seed=2)
    assert est.advantage >= 0.6


@pytest.mark.slow
def test_splitai_game_is_chance_for_the_best_metric_adversary():
    params = GameParams()
    X = game_universe(params, seed=0)
    spec = LearnerSpec(learner=Learner.SPLITAI, train_config=params.learner_config, K=5, L=2)
    adversary = calibrate_metric_adversary(spec, X, params.pilot_trials, seed=1)
    est = run_sqmi_game(spec, adversary, X, trials=300, seed=2)
    assert X.n == 50
    assert est.trials == 300 and not est.partial
    assert est.contains(0.5)
