"""Binary model blobs.

Layout (little-endian): magic ``RGRM`` + version byte ``1``, u8 kind tag,
u32 length + UTF-8 JSON header (config and fit metadata), u32 array count,
then per array: u16 name length, name, u8 dtype code, u8 ndim, ndim x u64
shape, raw data.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import UnsupportedFormat
from .base import Regressor, RegressorKind

MAGIC = b"RGRM"
VERSION = b"1"
_DTYPES = {0: "<f8", 1: "<i8", 2: "<i4", 3: "|b1"}
_CODES = {np.dtype(v).str: k for k, v in _DTYPES.items()}


def _kind_tag(kind: RegressorKind) -> int:
    return list(RegressorKind).index(kind)


def model_to_bytes(model: Regressor) -> bytes:
    if not model.is_fitted:
        raise ValueError("only fitted models can be serialized")
    header = json.dumps(
        {
            "config": model.config,
            "train_time_ms": model.train_time_ms,
            "converged": model.converged,
            "n_features": model.n_features,
        },
        sort_keys=True,
    ).encode("utf-8")
    parts = [MAGIC, VERSION, struct.pack("<BI", _kind_tag(model.kind), len(header)), header]
    state = model._state()
    parts.append(struct.pack("<I", len(state)))
    for name in sorted(state):
        arr = np.asarray(state[name])
        if arr.dtype == np.int32:
            arr = arr.astype("<i4")
        elif arr.dtype.kind in "iu":
            arr = arr.astype("<i8")
        elif arr.dtype == bool:
            arr = arr.astype("|b1")
        else:
            arr = arr.astype("<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<BB", _CODES[arr.dtype.str], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


def model_from_bytes(blob: bytes) -> Regressor:
    from . import REGISTRY

    if blob[:4] != MAGIC:
        raise UnsupportedFormat("not a model blob")
    if blob[4:5] != VERSION:
        raise UnsupportedFormat(f"unknown model blob version {blob[4:5]!r}")
    pos = 5
    tag, hlen = struct.unpack_from("<BI", blob, pos)
    pos += 5
    kinds = list(RegressorKind)
    if tag >= len(kinds):
        raise UnsupportedFormat(f"unknown kind tag {tag}")
    header = json.loads(blob[pos : pos + hlen].decode("utf-8"))
    pos += hlen
    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    state = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos : pos + nlen].decode("utf-8")
        pos += nlen
        code, ndim = struct.unpack_from("<BB", blob, pos)
        pos += 2
        shape = struct.unpack_from(f"<{ndim}Q", blob, pos)
        pos += 8 * ndim
        dtype = np.dtype(_DTYPES[code])
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype=dtype, count=size, offset=pos).reshape(shape)
        pos += size * dtype.itemsize
        state[name] = arr.astype(dtype.newbyteorder("="))
    if pos != len(blob):
        raise UnsupportedFormat("trailing bytes after model payload")

    model = REGISTRY[kinds[tag]](**header["config"])
    model._restore(state)
    model.train_time_ms = header["train_time_ms"]
    model.converged = header["converged"]
    model.n_features = header["n_features"]
    model.is_fitted = True
    return model


def save_model(model: Regressor, path) -> None:
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(model))


def load_model(path) -> Regressor:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
