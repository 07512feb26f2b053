"""
Label-only noise attack, one-flip indirect queries and replay
"""

import numpy as np
import pytest

from app.errors import InvalidParameterError
from app.models.attack import AttackFamily
from app.models.data import Dataset, FeatureKind
from app.services.data import generate_synthetic, make_eval_split, partition_members
from app.services.label_only import (
    attack_indirect_noisy_single,
    attack_label_only_noise,
    attack_replay,
    flip_bits,
    noise_robustness,
)
from app.services.splitai import splitai_query_fn, train_splitai


class RowCounter:
    def __init__(self, fn):
        self.fn = fn
        self.rows = 0

    def __call__(self, features):
        self.rows += np.atleast_2d(features).shape[0]
        return self.fn(features)


def _first_class(features):
    out = np.zeros((np.atleast_2d(features).shape[0], 2))
    out[:, 0] = 1.0
    return out


def _sum_parity(k):
    def query(features):
        features = np.atleast_2d(features)
        return np.eye(k)[features.sum(axis=1).astype(int) % k]
    return query


def _single_label_split(seed=0):
    """Every row labeled 0: a constant classifier sees no membership signal"""
    rng = np.random.default_rng(seed)
    data = Dataset.from_arrays(rng.integers(0, 2, size=(160, 16)), np.zeros(160), 2, FeatureKind.BINARY)
    members, nonmembers = partition_members(data, 80, seed=1)
    return make_eval_split(members, nonmembers, 0.5, seed=2)


class TestFlipBits:
    @pytest.mark.parametrize("n_flips", [0, 1, 5, 24])
    def test_exact_hamming_distance(self, pool, n_flips):
        rng = np.random.default_rng(0)
        noisy = flip_bits(pool.features[:20], n_flips, rng)
        assert np.all((noisy != pool.features[:20]).sum(axis=1) == n_flips)

    def test_out_of_range(self, pool):
        with pytest.raises(InvalidParameterError):
            flip_bits(pool.features[:2], pool.d + 1, np.random.default_rng(0))


class TestNoiseRobustness:
    def test_zero_flips_is_correctness(self, pool):
        query = _sum_parity(pool.n_classes)
        scores = noise_robustness(query, pool, 0, 4, np.random.default_rng(0))
        expected = (query(pool.features).argmax(axis=1) == pool.labels).astype(float)
        np.testing.assert_array_equal(scores, expected)

    def test_scores_are_fractions_of_n_noise(self, pool):
        scores = noise_robustness(_sum_parity(pool.n_classes), pool, 3, 8, np.random.default_rng(1))
        assert np.allclose(scores * 8, np.round(scores * 8))


class TestLabelOnlyNoise:
    def test_query_budget(self, split):
        counter = RowCounter(_sum_parity(split.train.n_classes))
        result = attack_label_only_noise(counter, split, flips_range=[1, 2], n_noise=3, rng=np.random.default_rng(0))
        n_targets = (
            split.attacker_known_members.size
            + split.attacker_known_nonmembers.size
            + split.eval_members.size
            + split.eval_nonmembers.size
        )
        assert counter.rows == n_targets * 2 * 3
        assert result.queries_per_target == 6
        assert result.name == "label_only_noise"
        assert result.family == AttackFamily.LABEL_ONLY
        assert set(result.detail["per_flip"]) == {"1", "2"}
        assert result.detail["best_flips"] in (1, 2)

    def test_constant_classifier(self):
        split = _single_label_split()
        result = attack_label_only_noise(_first_class, split, flips_range=[1, 3], n_noise=2)
        assert result.accuracy == 0.5

    def test_real_features_rejected(self):
        rng = np.random.default_rng(0)
        data = Dataset.from_arrays(rng.normal(size=(40, 4)), rng.integers(0, 2, 40), 2, FeatureKind.REAL)
        members, nonmembers = partition_members(data, 20, seed=1)
        split = make_eval_split(members, nonmembers, 0.5, seed=2)
        with pytest.raises(InvalidParameterError):
            attack_label_only_noise(_first_class, split, flips_range=[1], n_noise=1)
        with pytest.raises(InvalidParameterError):
            attack_indirect_noisy_single(_first_class, split)

    def test_default_flips_on_narrow_features(self):
        data = generate_synthetic(3, 20, 40, 0.2, seed=4)
        members, nonmembers = partition_members(data, 60, seed=1)
        split = make_eval_split(members, nonmembers, 0.5, seed=2)
        counter = RowCounter(_sum_parity(3))
        result = attack_label_only_noise(counter, split, n_noise=2, rng=np.random.default_rng(0))
        assert set(result.detail["per_flip"]) == {str(f) for f in range(1, 21)}
        assert result.queries_per_target == 40
        assert result.detail["best_flips"] <= 20

    def test_invalid_parameters(self, split):
        with pytest.raises(InvalidParameterError):
            attack_label_only_noise(_first_class, split, flips_range=[], n_noise=1)
        with pytest.raises(InvalidParameterError):
            attack_label_only_noise(_first_class, split, flips_range=[1], n_noise=0)
        with pytest.raises(InvalidParameterError):
            attack_label_only_noise(_first_class, split, flips_range=[split.train.d + 1], n_noise=1)


class TestIndirect:
    def test_one_query_per_target(self, split):
        counter = RowCounter(_sum_parity(split.train.n_classes))
        result = attack_indirect_noisy_single(counter, split, np.random.default_rng(0))
        assert result.name == "indirect_noisy_single"
        assert result.family == AttackFamily.INDIRECT
        assert counter.rows == split.train.n + split.test.n - split.dropped_members.size - split.dropped_nonmembers.size
        assert 0.0 <= result.accuracy <= 1.0


class TestReplay:
    def test_single_repeat_is_chance(self, split):
        result = attack_replay(_sum_parity(split.train.n_classes), split, n_repeats=1)
        assert result.accuracy == 0.5
        assert result.queries_per_target == 1

    def test_deterministic_target_is_chance(self, split):
        result = attack_replay(_sum_parity(split.train.n_classes), split, n_repeats=3)
        assert result.accuracy == 0.5
        assert result.detail["identical_nonmembers"] == 1.0

    def test_splitai_without_distillation_leaks(self, split, tiny_cfg):
        splitai = train_splitai(split.train, K=5, L=2, cfg=tiny_cfg, seed=4)
        query = splitai_query_fn(splitai, np.random.default_rng(0))
        result = attack_replay(query, split, n_repeats=3)
        assert result.detail["identical_members"] == 1.0
        assert result.accuracy > 0.8

    def test_invalid_repeats(self, split):
        with pytest.raises(InvalidParameterError):
            attack_replay(_first_class, split, n_repeats=0)
