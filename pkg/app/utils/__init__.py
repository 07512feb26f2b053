"""
Utilities package
Encoding and validation utilities
"""

from app.utils.encoding import (
    mix64,
    derive_seed,
    canonical_feature_bytes,
    array_fingerprint,
    bits_hash,
    atomic_write_text,
    atomic_save_npz,
    dump_json,
)

from app.utils.validation import (
    is_valid_open_fraction,
    is_valid_lambda,
    is_valid_k_l,
    is_valid_flip_noise,
    is_binary_matrix,
    is_valid_confidence_vector,
)

__all__ = [
    'mix64',
    'derive_seed',
    'canonical_feature_bytes',
    'array_fingerprint',
    'bits_hash',
    'atomic_write_text',
    'atomic_save_npz',
    'dump_json',
    'is_valid_open_fraction',
    'is_valid_lambda',
    'is_valid_k_l',
    'is_valid_flip_noise',
    'is_binary_matrix',
    'is_valid_confidence_vector',
]
