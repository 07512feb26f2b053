"""
Split-AI Ensemble
Non-model index assignment, overlapping subsets, K sub-models and adaptive inference
"""

import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from app.config import get_settings
from app.errors import ConflictingDuplicateError, DimensionMismatchError, EmptySubsetError, InvalidParameterError
from app.models.data import Dataset
from app.models.kernel import LabelKind, TrainConfig
from app.models.splitai import InferenceBranch, NonModelIndexTable, TraceRecord
from app.services import nn_kernel
from app.services.nn_kernel import Mlp
from app.utils.encoding import canonical_feature_bytes, derive_seed
from app.utils.validation import is_valid_k_l

logger = logging.getLogger(__name__)

QueryFn = Callable[[np.ndarray], np.ndarray]


class InferenceTrace:
    """
    Evaluation-trace hook

    Collects one TraceRecord per answered query so callers can check which
    sub-models were consulted and which branch answered.
    """

    def __init__(self):
        self.records: List[TraceRecord] = []

    def record(self, branch: InferenceBranch, matched_sample: int, evaluated: Sequence[int]) -> None:
        self.records.append(
            TraceRecord(branch=branch, matched_sample=matched_sample, evaluated_models=tuple(evaluated))
        )

    @property
    def member_queries(self) -> int:
        return sum(1 for r in self.records if r.branch == InferenceBranch.MEMBER)

    @property
    def nonmember_queries(self) -> int:
        return sum(1 for r in self.records if r.branch == InferenceBranch.NON_MEMBER)

    def __len__(self) -> int:
        return len(self.records)


class SplitAiModel:
    """
    F_theta_I: K sub-models, their non-model index table and the member index

    Immutable after construction. Inference needs a caller-owned numpy
    Generator; the model itself holds no random state.
    """

    def __init__(
        self,
        submodels: Sequence[Mlp],
        idnon: NonModelIndexTable,
        member_index: Dict[bytes, int],
        rng_seed: int,
        binary_features: bool,
        dataset_fingerprint: str,
    ):
        if len(submodels) != idnon.K:
            raise InvalidParameterError(f"expected {idnon.K} sub-models, got {len(submodels)}")
        self.submodels = tuple(submodels)
        self.idnon = idnon
        self.member_index = dict(member_index)
        self.rng_seed = rng_seed
        self.binary_features = binary_features
        self.dataset_fingerprint = dataset_fingerprint

    @property
    def K(self) -> int:
        return self.idnon.K

    @property
    def L(self) -> int:
        return self.idnon.L

    @property
    def n_train(self) -> int:
        return self.idnon.n_samples

    @property
    def n_inputs(self) -> int:
        return self.submodels[0].n_inputs

    @property
    def n_classes(self) -> int:
        return self.submodels[0].n_classes

    def lookup(self, x: np.ndarray) -> Optional[int]:
        """Training-sample index of an exact match, or None"""
        if self.binary_features and not np.all((x == 0) | (x == 1)):
            return None
        return self.member_index.get(canonical_feature_bytes(x, self.binary_features))

    def subsets(self) -> List[np.ndarray]:
        return build_subsets(self.n_train, self.idnon)


def assign_non_model_indices(n_samples: int, K: int, L: int, seed: int) -> NonModelIndexTable:
    """
    Draw Id_non for every training sample

    Each row is L indices drawn uniformly without replacement from [0, K),
    independently per sample, stored in ascending order.

    Args:
        n_samples: Training-set size
        K: Number of sub-models
        L: Non-model indices per sample
        seed: Generator seed

    Returns:
        NonModelIndexTable
    """
    is_valid, error = is_valid_k_l(K, L)
    if not is_valid:
        raise InvalidParameterError(error)
    if n_samples < 1:
        raise InvalidParameterError(f"n_samples must be positive, got {n_samples}")

    rng = np.random.default_rng(seed)
    # argsort of iid uniforms is a uniform random permutation per row
    draws = np.argsort(rng.random((n_samples, K)), axis=1)[:, :L]
    return NonModelIndexTable(indices=np.sort(draws, axis=1).astype(np.int64), K=K, L=L)


def build_subsets(data: Union[Dataset, int], idnon: NonModelIndexTable) -> List[np.ndarray]:
    """
    Training subsets D_i = { s : i not in Id_non(s) }

    Args:
        data: Training Dataset (or its size)
        idnon: Non-model index table covering every sample

    Returns:
        K ascending index arrays
    """
    n = data if isinstance(data, int) else data.n
    if idnon.n_samples != n:
        raise InvalidParameterError(f"index table covers {idnon.n_samples} samples, dataset has {n}")
    included = np.ones((n, idnon.K), dtype=bool)
    included[np.arange(n)[:, None], idnon.indices] = False
    return [np.flatnonzero(included[:, i]) for i in range(idnon.K)]


def build_member_index(data: Dataset) -> Dict[bytes, int]:
    """
    Exact-match map from canonical feature bytes to first training index

    Duplicates with the same label share the first occurrence; duplicates
    with different labels are rejected. train_splitai gives such duplicates
    the first occurrence's Id_non row, so the looked-up sub-models never
    saw any copy.
    """
    index: Dict[bytes, int] = {}
    for s in range(data.n):
        key = canonical_feature_bytes(data.features[s], data.is_binary)
        first = index.get(key)
        if first is None:
            index[key] = s
        elif data.labels[first] != data.labels[s]:
            raise ConflictingDuplicateError(
                f"Samples {first} and {s} share a feature vector but have labels "
                f"{int(data.labels[first])} and {int(data.labels[s])}",
                samples=[first, s],
            )
    return index


def share_duplicate_indices(
    data: Dataset,
    idnon: NonModelIndexTable,
    member_index: Dict[bytes, int],
) -> NonModelIndexTable:
    """Copy the Id_non row of each first occurrence onto its same-label duplicates"""
    first = np.array(
        [member_index[canonical_feature_bytes(data.features[s], data.is_binary)] for s in range(data.n)],
        dtype=np.int64,
    )
    if np.array_equal(first, np.arange(data.n)):
        return idnon
    logger.info(f"Sharing non-model indices across {int((first != np.arange(data.n)).sum())} duplicate samples")
    return NonModelIndexTable(indices=idnon.indices[first], K=idnon.K, L=idnon.L)


def _train_submodel(data: Dataset, subset: np.ndarray, cfg: TrainConfig, index: int) -> Mlp:
    logger.debug(f"Training sub-model {index} on {subset.size} samples (seed={cfg.seed})")
    if cfg.batch_size > subset.size:
        # subset sizes are random; small draws train full-batch
        cfg = cfg.model_copy(update={"batch_size": int(subset.size)})
    return nn_kernel.train(
        data.features[subset],
        data.labels[subset],
        LabelKind.HARD_CLASS,
        cfg,
        n_classes=data.n_classes,
    )


def train_splitai(
    data: Dataset,
    K: int,
    L: int,
    cfg: TrainConfig,
    seed: int,
    n_jobs: Optional[int] = None,
) -> SplitAiModel:
    """
    Training phase of the Split-AI ensemble

    Args:
        data: Member set D_tr
        K: Number of sub-models
        L: Non-model indices per sample
        cfg: Sub-model training configuration (its seed is replaced per sub-model)
        seed: Split-AI seed; drives Id_non and the per-sub-model seeds seed^i
        n_jobs: Parallel training jobs (defaults to settings.n_jobs)

    Returns:
        SplitAiModel
    """
    member_index = build_member_index(data)
    idnon = share_duplicate_indices(data, assign_non_model_indices(data.n, K, L, seed), member_index)
    subsets = build_subsets(data, idnon)
    for i, subset in enumerate(subsets):
        if subset.size == 0:
            raise EmptySubsetError(
                f"Sub-model {i} has no training samples; use more data or a smaller L/K",
                submodel=i,
            )

    jobs = n_jobs if n_jobs is not None else get_settings().n_jobs
    logger.info(f"Training Split-AI: K={K}, L={L}, n={data.n}, mean subset={np.mean([s.size for s in subsets]):.1f}")
    submodels = Parallel(n_jobs=jobs, prefer="threads")(
        delayed(_train_submodel)(data, subsets[i], cfg.with_seed(derive_seed(seed, i)), i)
        for i in range(K)
    )
    logger.info(f"✅ Split-AI trained ({K} sub-models)")
    return SplitAiModel(
        submodels=list(submodels),
        idnon=idnon,
        member_index=member_index,
        rng_seed=seed,
        binary_features=data.is_binary,
        dataset_fingerprint=data.fingerprint(),
    )


def _check_queries(model: SplitAiModel, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[None, :]
    if features.ndim != 2 or features.shape[1] != model.n_inputs:
        raise DimensionMismatchError(expected=model.n_inputs, got=int(features.shape[-1]))
    return features


def _average_over_sets(
    model: SplitAiModel,
    features: np.ndarray,
    index_sets: np.ndarray,
) -> Tuple[np.ndarray, List[List[int]]]:
    """Average sub-model outputs per row over that row's index set, evaluating nothing else"""
    out = np.zeros((features.shape[0], model.n_classes), dtype=np.float64)
    evaluated: List[List[int]] = [[] for _ in range(features.shape[0])]
    for i in range(model.K):
        rows = np.flatnonzero((index_sets == i).any(axis=1))
        if rows.size == 0:
            continue
        out[rows] += nn_kernel.predict_batch(model.submodels[i], features[rows])
        for r in rows:
            evaluated[r].append(i)
    return out / index_sets.shape[1], evaluated


def splitai_infer_batch(
    model: SplitAiModel,
    features: np.ndarray,
    rng: np.random.Generator,
    trace: Optional[InferenceTrace] = None,
) -> np.ndarray:
    """
    Inference phase for a batch of queries

    Rows that exactly match a training sample s are answered with the mean
    of the sub-models in Id_non(s). Every other row draws a training sample
    s' uniformly (one draw per row, in row order) and uses Id_non(s').

    Args:
        model: Trained Split-AI
        features: (m, d) queries
        rng: Caller-owned randomness for the non-member branch
        trace: Optional evaluation trace

    Returns:
        (m, k) confidence matrix
    """
    features = _check_queries(model, features)
    matches = [model.lookup(row) for row in features]
    is_member = np.array([m is not None for m in matches], dtype=bool)
    sample_idx = np.array([m if m is not None else -1 for m in matches], dtype=np.int64)
    n_random = int((~is_member).sum())
    if n_random:
        sample_idx[~is_member] = rng.integers(0, model.n_train, size=n_random)

    index_sets = model.idnon.indices[sample_idx]
    out, evaluated = _average_over_sets(model, features, index_sets)
    if trace is not None:
        for r in range(features.shape[0]):
            branch = InferenceBranch.MEMBER if is_member[r] else InferenceBranch.NON_MEMBER
            trace.record(branch, int(sample_idx[r]), evaluated[r])
    return out


def splitai_infer(
    model: SplitAiModel,
    x: np.ndarray,
    rng: np.random.Generator,
    trace: Optional[InferenceTrace] = None,
) -> np.ndarray:
    """Adaptive inference for one feature vector"""
    return splitai_infer_batch(model, np.asarray(x, dtype=np.float64)[None, :], rng, trace)[0]


def splitai_infer_all_average(model: SplitAiModel, x: np.ndarray) -> np.ndarray:
    """
    Average of all K sub-model outputs (no adaptive inference)

    Accepts one vector or a batch; deterministic.
    """
    features = _check_queries(model, x)
    out = np.mean([nn_kernel.predict_batch(m, features) for m in model.submodels], axis=0)
    return out[0] if np.asarray(x).ndim == 1 else out


def splitai_query_fn(model: SplitAiModel, rng: np.random.Generator) -> QueryFn:
    """Black-box query function over adaptive inference; not safe to share across threads"""
    def query(features: np.ndarray) -> np.ndarray:
        return splitai_infer_batch(model, features, rng)
    return query


def all_average_query_fn(model: SplitAiModel) -> QueryFn:
    """Black-box query function over the all-outputs average"""
    def query(features: np.ndarray) -> np.ndarray:
        return splitai_infer_all_average(model, np.atleast_2d(features))
    return query


def submodel_accuracies(model: SplitAiModel, data: Dataset) -> List[float]:
    """Test accuracy of every individual sub-model"""
    return [nn_kernel.accuracy(m, data.features, data.labels) for m in model.submodels]
