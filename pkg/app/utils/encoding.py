"""
Encoding Utilities
Seed derivation, fingerprints, canonical feature bytes and atomic writes
"""

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, Union

import numpy as np

_MASK64 = (1 << 64) - 1


def mix64(value: int) -> int:
    """
    SplitMix64 finalizer

    Args:
        value: Any integer, truncated to 64 bits

    Returns:
        Well-mixed 64-bit integer
    """
    z = value & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, index: int) -> int:
    """Per-job seed: seed XOR index, passed through a 64-bit mix"""
    return mix64((seed & _MASK64) ^ index)


def canonical_feature_bytes(x: np.ndarray, binary: bool) -> bytes:
    """
    Canonical byte key for exact-match lookup

    Binary features compare exactly; real features are rounded to 9
    decimal places first, and -0.0 is folded into 0.0.
    """
    if binary:
        return np.asarray(x, dtype=np.uint8).tobytes()
    rounded = np.round(np.asarray(x, dtype=np.float64), 9) + 0.0
    return rounded.tobytes()


def array_fingerprint(*arrays: np.ndarray) -> str:
    """SHA-256 hex digest over the raw bytes of the given arrays"""
    digest = hashlib.sha256()
    for arr in arrays:
        arr = np.ascontiguousarray(arr)
        digest.update(str(arr.dtype).encode())
        digest.update(str(arr.shape).encode())
        digest.update(arr.tobytes())
    return digest.hexdigest()


def bits_hash(bits: Iterable[int]) -> str:
    """Short hash of a bit vector, used in game transcripts"""
    payload = bytes(int(b) for b in bits)
    return hashlib.sha256(payload).hexdigest()[:16]


def atomic_write_text(path: Union[str, Path], text: str) -> Path:
    """
    Write text to path through a temp file and rename

    A reader never observes a partially written file at the final path.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def dump_json(data: Dict[str, Any]) -> str:
    """Deterministic JSON rendering used for reports and manifests"""
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def atomic_save_npz(path: Union[str, Path], **arrays: np.ndarray) -> Path:
    """np.savez through a temp file and rename"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent))
    try:
        with os.fdopen(fd, "wb") as handle:
            np.savez(handle, **arrays)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path
