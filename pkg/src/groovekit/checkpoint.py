"""Versioned binary checkpoints for every model family.

Layout (little-endian): magic "GVCK", version byte, family byte, task byte,
flags byte (bit0 = transfer conditioning, bit1 = trained), u16 infill
category bitmask, u16 dim count + u32 dims, u16 tensor count, then per
tensor: u16 name length, utf-8 name, u8 rank, u32 shape, float32 values.
A human-readable JSON sidecar (written by the CLI) carries the training
config and corpus fingerprint.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .baselines import LinearParams, TrainStats
from .errors import DataError
from .neural import MLPParams, Seq2SeqParams
from .representation import MAX_OFFSET, GrooveTensor

_MAGIC = b"GVCK"
_VERSION = 1

FAMILY_QUANTIZED = "quantized"
FAMILY_LINEAR = "linear"
FAMILY_KNN = "knn"
FAMILY_MLP = "mlp"
FAMILY_SEQ2SEQ = "seq2seq"

_FAMILY_CODES = {
    FAMILY_QUANTIZED: 1,
    FAMILY_LINEAR: 2,
    FAMILY_KNN: 3,
    FAMILY_MLP: 4,
    FAMILY_SEQ2SEQ: 5,
}
_FAMILY_NAMES = {v: k for k, v in _FAMILY_CODES.items()}

_TASK_CODES = {"humanize": 1, "infill": 2, "tap2drum": 3}
_TASK_NAMES = {v: k for k, v in _TASK_CODES.items()}


@dataclass(slots=True)
class KnnParams:
    """Retrieval humanizer: the training windows themselves plus K."""

    trainset: list[GrooveTensor]
    k: int = 20


ModelParams = TrainStats | LinearParams | KnnParams | MLPParams | Seq2SeqParams


@dataclass(slots=True)
class Checkpoint:
    family: str
    task: str
    model: ModelParams


def _mask_from_categories(categories: tuple[int, ...]) -> int:
    mask = 0
    for c in categories:
        mask |= 1 << c
    return mask


def _categories_from_mask(mask: int) -> tuple[int, ...]:
    return tuple(c for c in range(16) if mask & (1 << c))


def _pack_tensor(name: str, array: np.ndarray) -> bytes:
    encoded = name.encode("utf-8")
    data = np.ascontiguousarray(array, dtype="<f4")
    out = struct.pack("<H", len(encoded)) + encoded
    out += struct.pack("<B", data.ndim)
    out += struct.pack(f"<{data.ndim}I", *data.shape)
    return out + data.tobytes()


def _model_payload(model: ModelParams) -> tuple[str, bool, bool, int, list[int], dict[str, np.ndarray]]:
    """(family, conditioned, trained, infill_mask, dims, named tensors)."""
    if isinstance(model, TrainStats):
        return FAMILY_QUANTIZED, False, True, 0, [], {"mean_velocity": np.array([model.mean_velocity])}
    if isinstance(model, LinearParams):
        tensors = {"weights_velocity": model.weights_velocity, "weights_offset": model.weights_offset}
        return FAMILY_LINEAR, False, True, 0, [], tensors
    if isinstance(model, KnnParams):
        tensors = {
            "hits": np.stack([g.hits for g in model.trainset]),
            "velocities": np.stack([g.velocities for g in model.trainset]),
            "offsets": np.stack([g.offsets for g in model.trainset]),
            "tempos": np.array([g.tempo_bpm for g in model.trainset]),
        }
        return FAMILY_KNN, False, True, 0, [model.k], tensors
    if isinstance(model, MLPParams):
        tensors = {k: t.data for k, t in model.tensors.items()}
        return FAMILY_MLP, False, model.trained, 0, [model.timesteps, model.hidden_dim], tensors
    if isinstance(model, Seq2SeqParams):
        tensors = {k: t.data for k, t in model.tensors.items()}
        dims = [model.input_dim, model.enc_dim, model.z_dim, model.dec_dim]
        mask = _mask_from_categories(model.infill_categories)
        return FAMILY_SEQ2SEQ, model.conditioned, model.trained, mask, dims, tensors
    raise TypeError(f"cannot checkpoint {type(model).__name__}")


def save_checkpoint(path: str, model: ModelParams, task: str = "humanize") -> None:
    family, conditioned, trained, mask, dims, tensors = _model_payload(model)
    if isinstance(model, Seq2SeqParams):
        task = model.task
    flags = (1 if conditioned else 0) | (2 if trained else 0)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<BBBB", _VERSION, _FAMILY_CODES[family], _TASK_CODES[task], flags))
        fh.write(struct.pack("<H", mask))
        fh.write(struct.pack("<H", len(dims)))
        fh.write(struct.pack(f"<{len(dims)}I", *dims) if dims else b"")
        fh.write(struct.pack("<H", len(tensors)))
        for name in sorted(tensors):
            fh.write(_pack_tensor(name, tensors[name]))


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise DataError(f"{path}: not a checkpoint (bad magic)")
    try:
        version, family_code, task_code, flags = struct.unpack_from("<BBBB", data, 4)
        if version != _VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        (mask,) = struct.unpack_from("<H", data, 8)
        (ndims,) = struct.unpack_from("<H", data, 10)
        pos = 12
        dims = list(struct.unpack_from(f"<{ndims}I", data, pos)) if ndims else []
        pos += 4 * ndims
        (ntensors,) = struct.unpack_from("<H", data, pos)
        pos += 2
        tensors: dict[str, np.ndarray] = {}
        for _ in range(ntensors):
            (name_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos : pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            count = int(np.prod(shape)) if rank else 1
            values = np.frombuffer(data, dtype="<f4", count=count, offset=pos)
            pos += 4 * count
            tensors[name] = values.reshape(shape).astype(np.float64)
    except (struct.error, ValueError) as exc:
        raise DataError(f"{path}: truncated checkpoint") from exc

    family = _FAMILY_NAMES.get(family_code)
    task = _TASK_NAMES.get(task_code)
    if family is None or task is None:
        raise DataError(f"{path}: unknown family/task codes {family_code}/{task_code}")
    conditioned = bool(flags & 1)
    trained = bool(flags & 2)
    model = _rebuild_model(family, task, conditioned, trained, mask, dims, tensors)
    return Checkpoint(family=family, task=task, model=model)


def _rebuild_model(
    family: str,
    task: str,
    conditioned: bool,
    trained: bool,
    mask: int,
    dims: list[int],
    tensors: dict[str, np.ndarray],
) -> ModelParams:
    if family == FAMILY_QUANTIZED:
        return TrainStats(mean_velocity=float(tensors["mean_velocity"][0]))
    if family == FAMILY_LINEAR:
        return LinearParams(
            weights_velocity=tensors["weights_velocity"], weights_offset=tensors["weights_offset"]
        )
    if family == FAMILY_KNN:
        # float32 storage may round values onto the half-open bound; clip back
        hits = tensors["hits"]
        vels = np.clip(tensors["velocities"], 0.0, 1.0)
        offs = np.clip(tensors["offsets"], -0.5, MAX_OFFSET)
        tempos = tensors["tempos"]
        trainset = [
            GrooveTensor(hits[i], vels[i], offs[i], float(tempos[i])) for i in range(hits.shape[0])
        ]
        return KnnParams(trainset=trainset, k=dims[0])
    if family == FAMILY_MLP:
        params = MLPParams(
            tensors={k: ad.parameter(v) for k, v in tensors.items()},
            timesteps=dims[0],
            hidden_dim=dims[1],
            trained=trained,
        )
        return params
    params = Seq2SeqParams(
        tensors={k: ad.parameter(v) for k, v in tensors.items()},
        task=task,
        input_dim=dims[0],
        enc_dim=dims[1],
        z_dim=dims[2],
        dec_dim=dims[3],
        conditioned=conditioned,
        infill_categories=_categories_from_mask(mask) or (2, 3),
        trained=trained,
    )
    return params
