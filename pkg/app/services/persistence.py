"""
Model Persistence
Directory formats for Split-AI, distilled and plain models; round-trips are bit-exact
"""

import json
import logging
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from app.errors import DataFormatError
from app.models.distill import ProtectedModel, SoftLabelSet
from app.models.kernel import Activation, TrainConfig
from app.models.splitai import NonModelIndexTable
from app.services.nn_kernel import Mlp
from app.services.splitai import SplitAiModel
from app.utils.encoding import atomic_save_npz, atomic_write_text, dump_json

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
PARAMS = "params.npz"
SOFT_LABELS = "soft_labels.npz"

PathLike = Union[str, Path]


def _mlp_arrays(model: Mlp) -> Dict[str, np.ndarray]:
    arrays = {}
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"W{i}"] = w
        arrays[f"b{i}"] = b
    return arrays


def _mlp_from_arrays(arrays, n_layers: int, activation: str, history) -> Mlp:
    try:
        weights = [np.array(arrays[f"W{i}"]) for i in range(n_layers)]
        biases = [np.array(arrays[f"b{i}"]) for i in range(n_layers)]
    except KeyError as exc:
        raise DataFormatError(f"Parameter archive is missing {exc}") from exc
    return Mlp(weights, biases, Activation(activation), history)


def _write_manifest(directory: Path, kind: str, **fields) -> None:
    atomic_write_text(directory / MANIFEST, dump_json({"format_version": FORMAT_VERSION, "kind": kind, **fields}))


def _read_manifest(directory: Path, kind: str) -> dict:
    path = directory / MANIFEST
    if not path.exists():
        raise DataFormatError(f"No manifest in {directory}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"Unreadable manifest ({exc.msg})", line=exc.lineno) from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DataFormatError(f"Unsupported format version {manifest.get('format_version')}")
    if manifest.get("kind") != kind:
        raise DataFormatError(f"Expected a {kind} directory, found {manifest.get('kind')}")
    return manifest


def _mlp_manifest(model: Mlp) -> dict:
    return {
        "activation": model.activation.value,
        "layer_sizes": model.layer_sizes,
        "n_layers": len(model.weights),
        "history": list(model.history),
    }


def _load_npz(path: Path) -> Dict[str, np.ndarray]:
    if not path.exists():
        raise DataFormatError(f"Missing {path.name}")
    with np.load(path) as archive:
        return {key: archive[key] for key in archive.files}


# Plain models


def save_mlp(model: Mlp, cfg: TrainConfig, directory: PathLike) -> Path:
    """Undefended (or any) Mlp with its training configuration"""
    directory = Path(directory)
    atomic_save_npz(directory / PARAMS, **_mlp_arrays(model))
    _write_manifest(directory, "mlp", train_config=cfg.model_dump(mode="json"), **_mlp_manifest(model))
    logger.info(f"Saved model to {directory}")
    return directory


def load_mlp(directory: PathLike) -> Tuple[Mlp, TrainConfig]:
    directory = Path(directory)
    manifest = _read_manifest(directory, "mlp")
    model = _mlp_from_arrays(_load_npz(directory / PARAMS), manifest["n_layers"], manifest["activation"], manifest["history"])
    return model, TrainConfig.model_validate(manifest["train_config"])


# Distilled models


def save_protected(protected: ProtectedModel, directory: PathLike, soft_labels: Optional[SoftLabelSet] = None) -> Path:
    """Distilled model; the soft-label set is written only when given"""
    directory = Path(directory)
    atomic_save_npz(directory / PARAMS, **_mlp_arrays(protected.model))
    if soft_labels is not None:
        atomic_save_npz(directory / SOFT_LABELS, labels=soft_labels.labels)
    _write_manifest(
        directory,
        "distilled",
        lam=protected.lam,
        splitai_seed=protected.splitai_seed,
        dataset_fingerprint=protected.dataset_fingerprint,
        train_config=protected.train_config.model_dump(mode="json"),
        soft_labels=soft_labels is not None,
        **_mlp_manifest(protected.model),
    )
    logger.info(f"Saved distilled model (lambda={protected.lam}) to {directory}")
    return directory


def load_protected(directory: PathLike) -> Tuple[ProtectedModel, Optional[SoftLabelSet]]:
    directory = Path(directory)
    manifest = _read_manifest(directory, "distilled")
    model = _mlp_from_arrays(_load_npz(directory / PARAMS), manifest["n_layers"], manifest["activation"], manifest["history"])
    protected = ProtectedModel(
        model=model,
        lam=manifest["lam"],
        train_config=TrainConfig.model_validate(manifest["train_config"]),
        splitai_seed=manifest["splitai_seed"],
        dataset_fingerprint=manifest["dataset_fingerprint"],
    )
    soft = None
    if manifest.get("soft_labels"):
        soft = SoftLabelSet(
            labels=_load_npz(directory / SOFT_LABELS)["labels"],
            splitai_seed=manifest["splitai_seed"],
            lam=manifest["lam"],
        )
    return protected, soft


# Split-AI


def _submodel_file(i: int) -> str:
    return f"submodel_{i:03d}.npz"


def save_splitai(model: SplitAiModel, directory: PathLike) -> Path:
    """
    Split-AI directory layout

    manifest.json, idnon.json, members.npz (canonical keys and sample
    indices) and one submodel_XXX.npz per sub-model.
    """
    directory = Path(directory)
    for i, sub in enumerate(model.submodels):
        atomic_save_npz(directory / _submodel_file(i), **_mlp_arrays(sub))
    atomic_write_text(directory / "idnon.json", json.dumps(model.idnon.to_lists()) + "\n")

    keys = sorted(model.member_index.items(), key=lambda kv: kv[1])
    key_width = len(keys[0][0]) if keys else 0
    atomic_save_npz(
        directory / "members.npz",
        keys=np.array([np.frombuffer(k, dtype=np.uint8) for k, _ in keys], dtype=np.uint8).reshape(len(keys), key_width),
        samples=np.array([s for _, s in keys], dtype=np.int64),
    )
    _write_manifest(
        directory,
        "splitai",
        K=model.K,
        L=model.L,
        n_train=model.n_train,
        seed=model.rng_seed,
        binary_features=model.binary_features,
        dataset_fingerprint=model.dataset_fingerprint,
        submodels=[_mlp_manifest(sub) for sub in model.submodels],
    )
    logger.info(f"Saved Split-AI (K={model.K}, L={model.L}) to {directory}")
    return directory


def load_splitai(directory: PathLike) -> SplitAiModel:
    directory = Path(directory)
    manifest = _read_manifest(directory, "splitai")
    submodels = [
        _mlp_from_arrays(_load_npz(directory / _submodel_file(i)), meta["n_layers"], meta["activation"], meta["history"])
        for i, meta in enumerate(manifest["submodels"])
    ]
    idnon_path = directory / "idnon.json"
    if not idnon_path.exists():
        raise DataFormatError(f"Missing idnon.json in {directory}")
    idnon = NonModelIndexTable(
        indices=np.array(json.loads(idnon_path.read_text(encoding="utf-8")), dtype=np.int64),
        K=manifest["K"],
        L=manifest["L"],
    )
    members = _load_npz(directory / "members.npz")
    member_index = {bytes(k.tobytes()): int(s) for k, s in zip(members["keys"], members["samples"])}
    return SplitAiModel(
        submodels=submodels,
        idnon=idnon,
        member_index=member_index,
        rng_seed=manifest["seed"],
        binary_features=manifest["binary_features"],
        dataset_fingerprint=manifest["dataset_fingerprint"],
    )


def model_kind(directory: PathLike) -> str:
    """The kind recorded in a model directory's manifest"""
    path = Path(directory) / MANIFEST
    if not path.exists():
        raise DataFormatError(f"No manifest in {directory}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))["kind"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise DataFormatError(f"Unreadable manifest in {directory}") from exc
