"""
Data Models
Datasets and the member / non-member evaluation split
"""

from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.utils.encoding import array_fingerprint


class FeatureKind(str, Enum):
    """Feature value domain"""
    BINARY = "binary"
    REAL = "real"


class Lineage(str, Enum):
    """Where a slice of evaluation data may be used"""
    KNOWN = "known"  # attacker calibration / attack-model training only
    EVAL = "eval"    # accuracy reporting only


class Dataset(BaseModel):
    """
    Feature matrix with class labels

    features is (n, d) float64, labels is (n,) int64 in [0, n_classes).
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    features: np.ndarray
    labels: np.ndarray
    n_classes: int = Field(..., ge=2)
    feature_kind: FeatureKind
    lineage: Optional[Lineage] = Field(None, description="Set on slices cut from an EvalSplit")

    @field_validator("features", "labels")
    @classmethod
    def _read_only(cls, value: np.ndarray) -> np.ndarray:
        """Writable inputs are copied; the caller keeps its own buffer"""
        if value.flags.writeable:
            value = value.copy()
            value.setflags(write=False)
        return value

    @model_validator(mode="after")
    def _check_invariants(self) -> "Dataset":
        features = self.features
        labels = self.labels
        if features.ndim != 2 or features.shape[0] < 1:
            raise ValueError(f"features must be a non-empty 2-D matrix, got shape {features.shape}")
        if labels.shape != (features.shape[0],):
            raise ValueError(f"labels shape {labels.shape} does not match {features.shape[0]} rows")
        if labels.min() < 0 or labels.max() >= self.n_classes:
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        if self.feature_kind == FeatureKind.BINARY and not np.all((features == 0) | (features == 1)):
            raise ValueError("binary dataset contains values outside {0, 1}")
        return self

    @classmethod
    def from_arrays(
        cls,
        features: np.ndarray,
        labels: np.ndarray,
        n_classes: int,
        feature_kind: FeatureKind,
        lineage: Optional[Lineage] = None,
    ) -> "Dataset":
        """Build from arrays, copying into canonical dtypes"""
        return cls(
            features=np.array(features, dtype=np.float64),
            labels=np.array(labels, dtype=np.int64),
            n_classes=n_classes,
            feature_kind=feature_kind,
            lineage=lineage,
        )

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def d(self) -> int:
        return int(self.features.shape[1])

    @property
    def is_binary(self) -> bool:
        return self.feature_kind == FeatureKind.BINARY

    def subset(self, indices: np.ndarray, lineage: Optional[Lineage] = None) -> "Dataset":
        """Rows at indices, in the given order"""
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset.from_arrays(
            self.features[indices],
            self.labels[indices],
            self.n_classes,
            self.feature_kind,
            lineage=lineage if lineage is not None else self.lineage,
        )

    def one_hot(self) -> np.ndarray:
        """(n, k) one-hot matrix of the labels"""
        return np.eye(self.n_classes, dtype=np.float64)[self.labels]

    def fingerprint(self) -> str:
        """Stable content hash used in manifests"""
        return array_fingerprint(self.features, self.labels)

    def manifest(self, seed: Optional[int] = None) -> dict:
        """(n, d, k, feature_kind, seed) line recorded in experiment reports"""
        return {
            "n": self.n,
            "d": self.d,
            "k": self.n_classes,
            "feature_kind": self.feature_kind.value,
            "seed": seed,
            "fingerprint": self.fingerprint(),
        }


class EvalSplit(BaseModel):
    """
    Members / non-members partitioned into attacker-known and evaluation halves

    Index arrays point into train (members) and test (non-members). The
    evaluation sides are balanced by down-sampling; indices removed by the
    down-sampling are kept in dropped_* so that known, eval and dropped
    cover each parent set exactly.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    train: Dataset
    test: Dataset
    attacker_known_members: np.ndarray
    attacker_known_nonmembers: np.ndarray
    eval_members: np.ndarray
    eval_nonmembers: np.ndarray
    dropped_members: np.ndarray
    dropped_nonmembers: np.ndarray
    knowledge_fraction: float = Field(..., gt=0.0, lt=1.0)
    seed: int

    @model_validator(mode="after")
    def _check_invariants(self) -> "EvalSplit":
        for parent, parts, side in (
            (self.train, (self.attacker_known_members, self.eval_members, self.dropped_members), "members"),
            (self.test, (self.attacker_known_nonmembers, self.eval_nonmembers, self.dropped_nonmembers), "non-members"),
        ):
            joined = np.concatenate(parts)
            if joined.size != parent.n or not np.array_equal(np.sort(joined), np.arange(parent.n)):
                raise ValueError(f"known/eval/dropped {side} indices must partition the parent set")
        if self.eval_members.size != self.eval_nonmembers.size:
            raise ValueError("evaluation members and non-members must be balanced")
        return self

    def known_members(self) -> Dataset:
        return self.train.subset(self.attacker_known_members, Lineage.KNOWN)

    def known_nonmembers(self) -> Dataset:
        return self.test.subset(self.attacker_known_nonmembers, Lineage.KNOWN)

    def eval_member_set(self) -> Dataset:
        return self.train.subset(self.eval_members, Lineage.EVAL)

    def eval_nonmember_set(self) -> Dataset:
        return self.test.subset(self.eval_nonmembers, Lineage.EVAL)
