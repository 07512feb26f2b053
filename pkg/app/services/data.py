"""
Dataset Service
Synthetic generation, CSV ingestion and the member / non-member split protocol
"""

import logging
import math
from fractions import Fraction
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd

from app.errors import DataFormatError, InvalidParameterError
from app.models.data import Dataset, EvalSplit, FeatureKind
from app.utils.encoding import atomic_write_text
from app.utils.validation import is_binary_matrix, is_valid_flip_noise, is_valid_open_fraction

logger = logging.getLogger(__name__)

LABEL_COLUMN = "label"


def generate_synthetic(
    n_classes: int,
    n_features: int,
    n_per_class: int,
    flip_noise: float,
    seed: int,
) -> Dataset:
    """
    Binary prototype-plus-bitflip classification data

    Each class draws a random binary prototype; every sample copies its
    class prototype and flips each bit independently with probability
    flip_noise. Rows are shuffled with the same generator.

    Args:
        n_classes: Number of classes (>= 2)
        n_features: Feature dimension (>= n_classes)
        n_per_class: Samples per class
        flip_noise: Bit-flip probability in [0, 0.5]
        seed: Generator seed

    Returns:
        Binary Dataset with n_classes * n_per_class rows
    """
    if n_classes < 2:
        raise InvalidParameterError(f"n_classes must be at least 2, got {n_classes}")
    if n_features < n_classes:
        raise InvalidParameterError(f"n_features ({n_features}) must be >= n_classes ({n_classes})")
    if n_per_class < 1:
        raise InvalidParameterError(f"n_per_class must be positive, got {n_per_class}")
    is_valid, error = is_valid_flip_noise(flip_noise)
    if not is_valid:
        raise InvalidParameterError(error)

    rng = np.random.default_rng(seed)
    prototypes = rng.integers(0, 2, size=(n_classes, n_features), dtype=np.int64)
    labels = np.repeat(np.arange(n_classes, dtype=np.int64), n_per_class)
    flips = (rng.random((labels.size, n_features)) < flip_noise).astype(np.int64)
    features = prototypes[labels] ^ flips

    order = rng.permutation(labels.size)
    logger.info(
        f"Generated synthetic data: k={n_classes}, d={n_features}, "
        f"n={labels.size}, flip_noise={flip_noise}, seed={seed}"
    )
    return Dataset.from_arrays(features[order], labels[order], n_classes, FeatureKind.BINARY)


def partition_members(dataset: Dataset, n_members: int, seed: int) -> Tuple[Dataset, Dataset]:
    """
    Split a pool into members (D_tr) and non-members (D_te)

    Args:
        dataset: Pool to split
        n_members: Rows assigned to the member side
        seed: Split seed

    Returns:
        (members, nonmembers)
    """
    if not 0 < n_members < dataset.n:
        raise InvalidParameterError(f"n_members must be in (0, {dataset.n}), got {n_members}")
    order = np.random.default_rng(seed).permutation(dataset.n)
    return dataset.subset(np.sort(order[:n_members])), dataset.subset(np.sort(order[n_members:]))


def _line_of(position: int) -> int:
    # header is line 1
    return position + 2


def load_csv(path: Union[str, Path], n_classes: Optional[int] = None) -> Dataset:
    """
    Load a dataset from CSV

    The file needs a header row and a final "label" column; every other
    column must be numeric. Row order is preserved and the feature kind is
    binary iff every feature value is 0 or 1.

    Args:
        path: CSV file
        n_classes: Declared class count; labels must be below it. Inferred when omitted.

    Returns:
        Dataset
    """
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"File not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.ParserError as exc:
        raise DataFormatError(f"Malformed CSV ({exc})") from exc
    except pd.errors.EmptyDataError as exc:
        raise DataFormatError("File is empty", line=1) from exc

    if frame.columns.size < 2 or frame.columns[-1] != LABEL_COLUMN:
        raise DataFormatError(f"Last column must be '{LABEL_COLUMN}'", line=1)
    if frame.shape[0] == 0:
        raise DataFormatError("No data rows", line=2)

    short_rows = np.flatnonzero(frame.isna().any(axis=1).to_numpy())
    if short_rows.size:
        raise DataFormatError(
            f"Ragged row: expected {frame.columns.size} fields",
            line=_line_of(int(short_rows[0])),
        )

    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().to_numpy()
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise DataFormatError(
            f"Non-numeric value {frame.iat[row, col]!r} in column '{frame.columns[col]}'",
            line=_line_of(int(row)),
        )

    features = frame.iloc[:, :-1].to_numpy(dtype=str).astype(np.float64)
    raw_labels = numeric[LABEL_COLUMN].to_numpy(dtype=np.float64)
    non_integer = np.flatnonzero((raw_labels != np.round(raw_labels)) | (raw_labels < 0))
    if non_integer.size:
        raise DataFormatError("Labels must be non-negative integers", line=_line_of(int(non_integer[0])))
    labels = raw_labels.astype(np.int64)

    k = n_classes if n_classes is not None else max(int(labels.max()) + 1, 2)
    out_of_range = np.flatnonzero(labels >= k)
    if out_of_range.size:
        raise DataFormatError(
            f"Label {labels[out_of_range[0]]} is not below declared class count {k}",
            line=_line_of(int(out_of_range[0])),
        )

    kind = FeatureKind.BINARY if is_binary_matrix(features) else FeatureKind.REAL
    logger.info(f"Loaded {path}: n={features.shape[0]}, d={features.shape[1]}, k={k}, kind={kind.value}")
    return Dataset.from_arrays(features, labels, k, kind)


def save_csv(dataset: Dataset, path: Union[str, Path]) -> Path:
    """
    Write a dataset as CSV (features f0..f{d-1}, then label)

    Binary features are written as integers and real features with 17
    significant digits so load_csv reproduces them bit for bit.
    """
    columns = [f"f{j}" for j in range(dataset.d)]
    if dataset.is_binary:
        frame = pd.DataFrame(dataset.features.astype(np.int64), columns=columns)
    else:
        frame = pd.DataFrame(dataset.features, columns=columns)
    frame[LABEL_COLUMN] = dataset.labels
    text = frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")
    return atomic_write_text(path, text)


def make_eval_split(
    members: Dataset,
    nonmembers: Dataset,
    knowledge_fraction: float,
    seed: int,
) -> EvalSplit:
    """
    Partition members and non-members into attacker-known and evaluation sets

    The known sets are uniform random subsets of floor(fraction * size) on
    each side. The larger evaluation side is then down-sampled (same seed)
    to balance members against non-members.

    Args:
        members: D_tr
        nonmembers: D_te
        knowledge_fraction: Attacker knowledge fraction in (0, 1)
        seed: Split seed

    Returns:
        EvalSplit
    """
    is_valid, error = is_valid_open_fraction(knowledge_fraction, "knowledge_fraction")
    if not is_valid:
        raise InvalidParameterError(error)

    rng = np.random.default_rng(seed)

    def _known_and_rest(n: int) -> Tuple[np.ndarray, np.ndarray]:
        # exact decimal: 0.29 of 100 is 29
        n_known = math.floor(Fraction(str(knowledge_fraction)) * n)
        perm = rng.permutation(n)
        return np.sort(perm[:n_known]), np.sort(perm[n_known:])

    known_m, eval_m = _known_and_rest(members.n)
    known_nm, eval_nm = _known_and_rest(nonmembers.n)

    def _balance(larger: np.ndarray, size: int) -> Tuple[np.ndarray, np.ndarray]:
        keep = np.sort(rng.choice(larger, size=size, replace=False))
        return keep, np.setdiff1d(larger, keep)

    dropped_m = np.empty(0, dtype=np.int64)
    dropped_nm = np.empty(0, dtype=np.int64)
    if eval_m.size > eval_nm.size:
        eval_m, dropped_m = _balance(eval_m, eval_nm.size)
    elif eval_nm.size > eval_m.size:
        eval_nm, dropped_nm = _balance(eval_nm, eval_m.size)

    logger.info(
        f"Eval split: known {known_m.size}/{known_nm.size}, "
        f"eval {eval_m.size}/{eval_nm.size} (fraction={knowledge_fraction})"
    )
    return EvalSplit(
        train=members,
        test=nonmembers,
        attacker_known_members=known_m,
        attacker_known_nonmembers=known_nm,
        eval_members=eval_m,
        eval_nonmembers=eval_nm,
        dropped_members=dropped_m.astype(np.int64),
        dropped_nonmembers=dropped_nm.astype(np.int64),
        knowledge_fraction=knowledge_fraction,
        seed=seed,
    )
