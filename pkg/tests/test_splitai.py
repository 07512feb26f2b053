"""
Split-AI: non-model indices, subsets, training and adaptive inference
"""

import numpy as np
import pytest
from scipy.stats import ks_2samp

from app.errors import ConflictingDuplicateError, DimensionMismatchError, EmptySubsetError, InvalidParameterError
from app.models.data import Dataset, FeatureKind
from app.models.game import Learner, LearnerSpec
from app.models.kernel import TrainConfig
from app.models.splitai import InferenceBranch, NonModelIndexTable
from app.services import nn_kernel
from app.services.data import generate_synthetic
from app.services.game import RandomGuessAdversary, play_sqmi_game
from app.services.splitai import (
    InferenceTrace,
    assign_non_model_indices,
    build_member_index,
    build_subsets,
    splitai_infer,
    splitai_infer_all_average,
    splitai_infer_batch,
    train_splitai,
)


class TestNonModelIndices:
    def test_rows_have_l_distinct_indices(self):
        table = assign_non_model_indices(200, K=7, L=3, seed=1)
        assert table.indices.shape == (200, 3)
        assert all(len(set(row)) == 3 for row in table.to_lists())
        assert table.indices.min() >= 0 and table.indices.max() < 7

    def test_deterministic_per_seed(self):
        a = assign_non_model_indices(50, 5, 2, seed=4)
        b = assign_non_model_indices(50, 5, 2, seed=4)
        np.testing.assert_array_equal(a.indices, b.indices)

    @pytest.mark.parametrize("K,L", [(5, 0), (5, 5), (3, 4)])
    def test_invalid_k_l(self, K, L):
        with pytest.raises(InvalidParameterError):
            assign_non_model_indices(10, K, L, seed=0)


class TestSubsets:
    def test_figure_layout(self):
        # A=(4,5), B=(2,3), C=(1,2) in 1-based sub-model numbers
        table = NonModelIndexTable(indices=np.array([[3, 4], [1, 2], [0, 1]]), K=5, L=2)
        subsets = [s.tolist() for s in build_subsets(3, table)]
        assert subsets == [[0, 1], [0], [0, 2], [1, 2], [1, 2]]

    def test_each_sample_in_k_minus_l_subsets(self):
        table = assign_non_model_indices(300, K=6, L=2, seed=2)
        counts = np.zeros(300, dtype=int)
        for subset in build_subsets(300, table):
            counts[subset] += 1
        assert np.all(counts == 4)

    def test_k2_l1_is_a_partition(self):
        table = assign_non_model_indices(100, K=2, L=1, seed=3)
        a, b = build_subsets(100, table)
        assert np.intersect1d(a, b).size == 0
        assert a.size + b.size == 100

    def test_l_equals_k_minus_one(self):
        table = assign_non_model_indices(60, K=4, L=3, seed=5)
        for i, subset in enumerate(build_subsets(60, table)):
            expected = [s for s in range(60) if i not in table.for_sample(s)]
            assert subset.tolist() == expected

    def test_desk_subset_sizes(self):
        table = assign_non_model_indices(1000, K=25, L=10, seed=6)
        sizes = np.array([s.size for s in build_subsets(1000, table)])
        assert sizes.sum() == 1000 * 15
        assert np.all(np.abs(sizes - 600) <= 50)

    def test_table_must_cover_dataset(self):
        table = assign_non_model_indices(10, 3, 1, seed=0)
        with pytest.raises(InvalidParameterError):
            build_subsets(11, table)


class TestMemberIndex:
    def test_duplicates_with_same_label_share_first_index(self):
        data = Dataset.from_arrays(np.array([[0, 1], [0, 1], [1, 1]]), np.array([1, 1, 0]), 2, FeatureKind.BINARY)
        index = build_member_index(data)
        assert len(index) == 2
        assert sorted(index.values()) == [0, 2]

    def test_duplicates_share_non_model_indices(self, members_nonmembers, tiny_cfg):
        members, _ = members_nonmembers
        data = Dataset.from_arrays(
            np.vstack([members.features, members.features[:10]]),
            np.concatenate([members.labels, members.labels[:10]]),
            members.n_classes,
            members.feature_kind,
        )
        model = train_splitai(data, K=4, L=2, cfg=tiny_cfg, seed=12, n_jobs=1)
        np.testing.assert_array_equal(model.idnon.indices[members.n:], model.idnon.indices[:10])
        subsets = model.subsets()
        for j in range(10):
            copy = members.n + j
            assert model.lookup(data.features[copy]) == j
            for i in model.idnon.for_sample(j):
                assert j not in subsets[i] and copy not in subsets[i]

    def test_conflicting_duplicates_rejected(self):
        data = Dataset.from_arrays(np.array([[0, 1], [0, 1]]), np.array([0, 1]), 2, FeatureKind.BINARY)
        with pytest.raises(ConflictingDuplicateError):
            build_member_index(data)


class TestTraining:
    def test_submodels_exclude_their_non_model_samples(self, members_nonmembers, tiny_cfg):
        members, _ = members_nonmembers
        model = train_splitai(members, K=4, L=2, cfg=tiny_cfg, seed=8, n_jobs=1)
        assert len(model.submodels) == 4
        subsets = model.subsets()
        for s in range(members.n):
            for i in model.idnon.for_sample(s):
                assert s not in set(subsets[i].tolist())

    def test_training_order_does_not_matter(self, members_nonmembers, tiny_cfg):
        members, _ = members_nonmembers
        serial = train_splitai(members, K=3, L=1, cfg=tiny_cfg, seed=9, n_jobs=1)
        threaded = train_splitai(members, K=3, L=1, cfg=tiny_cfg, seed=9, n_jobs=3)
        for a, b in zip(serial.submodels, threaded.submodels):
            for pa, pb in zip(a.parameters(), b.parameters()):
                np.testing.assert_array_equal(pa, pb)

    def test_empty_subset_rejected(self, abc_dataset):
        cfg = TrainConfig(epochs=1, batch_size=1, hidden_sizes=[2])
        # with one sample, one of the K=2 sub-models gets nothing
        single = abc_dataset.subset(np.array([0]))
        with pytest.raises(EmptySubsetError):
            train_splitai(single, K=2, L=1, cfg=cfg, seed=0, n_jobs=1)


class TestInference:
    @pytest.fixture
    def model(self, members_nonmembers, tiny_cfg):
        members, _ = members_nonmembers
        return train_splitai(members, K=5, L=2, cfg=tiny_cfg, seed=10, n_jobs=1)

    def test_member_uses_only_its_non_models(self, model, members_nonmembers):
        members, _ = members_nonmembers
        x = members.features[0]
        s = model.lookup(x)
        non_models = model.idnon.for_sample(s)
        trace = InferenceTrace()
        out = splitai_infer(model, x, np.random.default_rng(0), trace)
        expected = np.mean([nn_kernel.predict(model.submodels[i], x) for i in non_models], axis=0)
        np.testing.assert_allclose(out, expected, rtol=1e-12)
        assert trace.records[0].branch == InferenceBranch.MEMBER
        assert trace.records[0].evaluated_models == non_models

    def test_no_member_query_reaches_a_model_that_saw_it(self, model, members_nonmembers):
        members, _ = members_nonmembers
        trace = InferenceTrace()
        splitai_infer_batch(model, members.features, np.random.default_rng(6), trace)
        subsets = [set(s.tolist()) for s in model.subsets()]
        assert trace.member_queries == members.n
        for s, record in enumerate(trace.records):
            assert record.branch == InferenceBranch.MEMBER
            assert record.matched_sample == s
            assert not any(s in subsets[i] for i in record.evaluated_models)

    def test_member_answer_ignores_rng(self, model, members_nonmembers):
        members, _ = members_nonmembers
        a = splitai_infer(model, members.features[3], np.random.default_rng(1))
        b = splitai_infer(model, members.features[3], np.random.default_rng(2))
        np.testing.assert_array_equal(a, b)

    def test_non_member_answers_vary(self, model):
        x = np.full(model.n_inputs, 0.5)
        rng = np.random.default_rng(3)
        trace = InferenceTrace()
        outputs = {splitai_infer(model, x, rng, trace).tobytes() for _ in range(100)}
        assert len(outputs) >= 2
        assert trace.nonmember_queries == 100

    def test_outputs_are_confidence_vectors(self, model, members_nonmembers):
        _, nonmembers = members_nonmembers
        out = splitai_infer_batch(model, nonmembers.features, np.random.default_rng(4))
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-6)

    def test_all_average_differs_from_adaptive_on_members(self, model, members_nonmembers):
        members, _ = members_nonmembers
        adaptive = splitai_infer_batch(model, members.features, np.random.default_rng(5))
        average = splitai_infer_all_average(model, members.features)
        np.testing.assert_allclose(average.sum(axis=1), 1.0, atol=1e-6)
        assert not np.allclose(adaptive, average)

    def test_all_average_of_two_models(self, members_nonmembers, tiny_cfg):
        members, _ = members_nonmembers
        model = train_splitai(members, K=2, L=1, cfg=tiny_cfg, seed=11, n_jobs=1)
        x = members.features[1]
        expected = (nn_kernel.predict(model.submodels[0], x) + nn_kernel.predict(model.submodels[1], x)) / 2
        np.testing.assert_allclose(splitai_infer_all_average(model, x), expected, rtol=1e-12)

    def test_dimension_mismatch(self, model):
        with pytest.raises(DimensionMismatchError):
            splitai_infer(model, np.zeros(model.n_inputs + 1), np.random.default_rng(0))


@pytest.mark.slow
def test_member_and_non_member_outputs_share_a_distribution():
    X = generate_synthetic(2, 20, 50, 0.2, seed=21)
    spec = LearnerSpec(
        learner=Learner.SPLITAI,
        train_config=TrainConfig(epochs=20, batch_size=8, learning_rate=0.01, hidden_sizes=[16]),
        K=5,
        L=2,
    )
    transcript = play_sqmi_game(spec, RandomGuessAdversary(0), X, trials=240, seed=22, time_budget_s=1e9)
    member, nonmember = [], []
    for r in transcript.records:
        (member if r.true_bit else nonmember).append(r.response[r.label])
    assert ks_2samp(member, nonmember).pvalue > 0.01
