"""
Datasets: synthetic generation, CSV I/O and the evaluation split
"""

import numpy as np
import pytest

from app.errors import DataFormatError, InvalidParameterError
from app.models.data import Dataset, FeatureKind, Lineage
from app.services.data import generate_synthetic, load_csv, make_eval_split, partition_members, save_csv


class TestSynthetic:
    def test_zero_noise_copies_prototypes(self):
        data = generate_synthetic(4, 16, 10, 0.0, seed=1)
        for y in range(4):
            rows = data.features[data.labels == y]
            assert np.all(rows == rows[0])

    def test_within_class_hamming_distance(self):
        data = generate_synthetic(10, 100, 200, 0.1, seed=2)
        distances = []
        for y in range(10):
            rows = data.features[data.labels == y][:60]
            diff = (rows[:, None, :] != rows[None, :, :]).sum(axis=2)
            distances.append(diff[np.triu_indices(rows.shape[0], k=1)])
        assert abs(np.concatenate(distances).mean() - 18.0) < 2.0

    def test_seeds_give_different_prototypes(self):
        a = generate_synthetic(3, 50, 1, 0.0, seed=1)
        b = generate_synthetic(3, 50, 1, 0.0, seed=2)
        proto_a = {int(y): a.features[a.labels == y][0] for y in range(3)}
        proto_b = {int(y): b.features[b.labels == y][0] for y in range(3)}
        assert any(np.any(proto_a[y] != proto_b[y]) for y in range(3))

    def test_shape_and_kind(self):
        data = generate_synthetic(10, 100, 5, 0.4, seed=3)
        assert (data.n, data.d, data.n_classes) == (50, 100, 10)
        assert data.feature_kind == FeatureKind.BINARY

    @pytest.mark.parametrize(
        "args",
        [(1, 10, 5, 0.1), (5, 3, 5, 0.1), (3, 10, 0, 0.1), (3, 10, 5, 0.6)],
    )
    def test_invalid_parameters(self, args):
        with pytest.raises(InvalidParameterError):
            generate_synthetic(*args, seed=0)


class TestDatasetModel:
    def test_caller_arrays_stay_writable(self):
        features = np.array([[0.0, 1.0], [1.0, 0.0]])
        labels = np.array([0, 1])
        data = Dataset(features=features, labels=labels, n_classes=2, feature_kind=FeatureKind.BINARY)
        assert features.flags.writeable and labels.flags.writeable
        assert not data.features.flags.writeable
        features[0, 0] = 1.0
        assert data.features[0, 0] == 0.0


class TestCsv:
    def test_round_trip_is_bit_identical(self, tmp_path, abc_dataset):
        path = save_csv(abc_dataset, tmp_path / "abc.csv")
        loaded = load_csv(path, n_classes=2)
        np.testing.assert_array_equal(loaded.features, abc_dataset.features)
        np.testing.assert_array_equal(loaded.labels, abc_dataset.labels)
        assert loaded.feature_kind == FeatureKind.BINARY

    def test_real_values_round_trip(self, tmp_path):
        data = Dataset.from_arrays(np.array([[0.1, 1 / 3], [2.5e-8, -7.0]]), np.array([0, 1]), 2, FeatureKind.REAL)
        loaded = load_csv(save_csv(data, tmp_path / "real.csv"))
        np.testing.assert_array_equal(loaded.features, data.features)
        assert loaded.feature_kind == FeatureKind.REAL

    def test_label_above_declared_classes(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("f0,f1,label\n0,1,0\n1,0,3\n")
        with pytest.raises(DataFormatError) as exc:
            load_csv(path, n_classes=2)
        assert exc.value.context["line"] == 3

    def test_non_numeric_value_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("f0,f1,label\n0,1,0\n1,x,1\n")
        with pytest.raises(DataFormatError) as exc:
            load_csv(path)
        assert exc.value.context["line"] == 3

    def test_missing_label_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("f0,f1\n0,1\n")
        with pytest.raises(DataFormatError):
            load_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataFormatError):
            load_csv(tmp_path / "absent.csv")


class TestPartition:
    def test_members_and_nonmembers_cover_pool(self, pool):
        members, nonmembers = partition_members(pool, 90, seed=5)
        assert members.n + nonmembers.n == pool.n
        assert members.n == 90

    def test_invalid_size(self, pool):
        with pytest.raises(InvalidParameterError):
            partition_members(pool, pool.n, seed=0)


class TestEvalSplit:
    @pytest.fixture
    def big(self):
        data = generate_synthetic(2, 20, 1000, 0.3, seed=4)
        return partition_members(data, 1000, seed=1)

    def test_half_knowledge(self, big):
        split = make_eval_split(*big, 0.5, seed=2)
        assert split.attacker_known_members.size == 500
        assert split.attacker_known_nonmembers.size == 500

    def test_fraction_sizes(self, big):
        high = make_eval_split(*big, 0.9, seed=3)
        low = make_eval_split(*big, 0.1, seed=3)
        assert high.attacker_known_members.size == 900
        assert low.attacker_known_members.size == 100

    @pytest.mark.parametrize("fraction,n_known", [(0.29, 29), (0.57, 57), (0.58, 58)])
    def test_known_size_is_exact_floor(self, pool, fraction, n_known):
        members, nonmembers = partition_members(pool, 100, seed=0)
        split = make_eval_split(members, nonmembers, fraction, seed=3)
        assert split.attacker_known_members.size == n_known

    def test_unbalanced_sides_are_down_sampled(self, pool):
        members, nonmembers = partition_members(pool, 120, seed=0)
        split = make_eval_split(members, nonmembers, 0.5, seed=1)
        assert split.eval_members.size == split.eval_nonmembers.size
        covered = np.sort(np.concatenate([split.attacker_known_members, split.eval_members, split.dropped_members]))
        np.testing.assert_array_equal(covered, np.arange(members.n))
        assert split.dropped_members.size > 0

    def test_known_and_eval_are_disjoint(self, split):
        assert np.intersect1d(split.attacker_known_members, split.eval_members).size == 0
        assert np.intersect1d(split.attacker_known_nonmembers, split.eval_nonmembers).size == 0

    def test_slices_carry_lineage(self, split):
        assert split.known_members().lineage == Lineage.KNOWN
        assert split.eval_nonmember_set().lineage == Lineage.EVAL

    @pytest.mark.parametrize("fraction", [0.0, 1.0])
    def test_fraction_must_be_open(self, members_nonmembers, fraction):
        with pytest.raises(InvalidParameterError):
            make_eval_split(*members_nonmembers, fraction, seed=0)
