"""Vector dataset readers, writers and seeded synthetic stand-ins.

The ``.fvecs`` / ``.bvecs`` containers used by the texmex corpora store each
vector as a little-endian int32 dimension header followed by that many
components (float32 for fvecs, uint8 for bvecs).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import CorruptFile, DimensionVaries, EmptyDataset, InvalidData

PROFILES = ("sift_like", "deep_like", "mnist_like", "labelme_like")

SIFT_MAX = 218
MNIST_MAX = 255
LABELME_MAX = 58104.0


@dataclass(frozen=True)
class DatasetMeta:
    name: str
    n: int
    d: int
    source: str  # "file" or "synthetic"
    value_range: tuple[float, float]

    @classmethod
    def describe(cls, name: str, matrix: np.ndarray, source: str) -> "DatasetMeta":
        n, d = matrix.shape
        return cls(name, n, d, source, (float(matrix.min()), float(matrix.max())))


def check_finite(matrix: np.ndarray) -> None:
    """Raise InvalidData at the first non-finite entry in row-major order."""
    bad = ~np.isfinite(matrix)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise InvalidData(int(row), int(col))


def _read_vecs(path: str | os.PathLike, component: np.dtype) -> np.ndarray:
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0:
        raise EmptyDataset(f"{os.fspath(path)} contains no records")
    if raw.size < 4:
        raise CorruptFile(0)
    width = component.itemsize
    d = int(raw[:4].view("<i4")[0])
    if d <= 0:
        raise CorruptFile(0, f"non-positive dimension {d} at byte offset 0")
    record = 4 + d * width

    # fast path: uniform records, validated with one strided view of the headers
    if raw.size % record == 0:
        rows = raw.reshape(-1, record)
        dims = rows[:, :4].copy().view("<i4").ravel()
        if (dims == d).all():
            return rows[:, 4:].copy().view(component.newbyteorder("<")).reshape(len(rows), d)

    offset, index = 0, 0
    while offset < raw.size:
        if offset + 4 > raw.size:
            raise CorruptFile(offset)
        found = int(raw[offset : offset + 4].view("<i4")[0])
        if found != d:
            raise DimensionVaries(index, d, found)
        if offset + record > raw.size:
            raise CorruptFile(offset)
        offset += record
        index += 1
    raise AssertionError("unreachable: uniform file rejected by fast path")


def read_fvecs(path: str | os.PathLike) -> tuple[DatasetMeta, np.ndarray]:
    """Read an ``.fvecs`` file into an (n, d) float64 matrix."""
    data = _read_vecs(path, np.dtype(np.float32)).astype(np.float64)
    check_finite(data)
    name = os.path.basename(os.fspath(path))
    return DatasetMeta.describe(name, data, "file"), data


def read_bvecs(path: str | os.PathLike) -> tuple[DatasetMeta, np.ndarray]:
    """Read a ``.bvecs`` file; byte components are widened to float64."""
    data = _read_vecs(path, np.dtype(np.uint8)).astype(np.float64)
    name = os.path.basename(os.fspath(path))
    return DatasetMeta.describe(name, data, "file"), data


def _write_vecs(path, matrix: np.ndarray, component: str) -> None:
    n, d = matrix.shape
    out = np.empty((n, 4 + d * np.dtype(component).itemsize), dtype=np.uint8)
    out[:, :4] = np.full((n, 1), d, dtype="<i4").view(np.uint8)
    out[:, 4:] = np.ascontiguousarray(matrix, dtype=component).view(np.uint8)
    out.tofile(path)


def write_fvecs(path: str | os.PathLike, matrix) -> None:
    matrix = np.atleast_2d(np.asarray(matrix))
    check_finite(matrix)
    _write_vecs(path, matrix, "<f4")


def write_bvecs(path: str | os.PathLike, matrix) -> None:
    matrix = np.atleast_2d(np.asarray(matrix))
    if matrix.size and (
        np.any(matrix < 0) or np.any(matrix > 255) or np.any(matrix != np.rint(matrix))
    ):
        raise ValueError("bvecs components must be integers in [0, 255]")
    _write_vecs(path, matrix, "u1")


def synth_dataset(
    profile: str, n: int, d: int, seed: int, clusters: int = 16
) -> np.ndarray:
    """Draw a seeded Gaussian-mixture dataset shaped like one of the corpora.

    Cluster sizes come from a Dirichlet draw and per-cluster spreads are
    log-uniform, so local density (and therefore the search radius a query
    needs) varies with location.

    Parameters
    ----------
    profile : {"sift_like", "deep_like", "mnist_like", "labelme_like"}
        ``sift_like`` yields integers in [0, 218], ``mnist_like`` integers in
        [0, 255], ``deep_like`` unconstrained reals and ``labelme_like``
        nonnegative reals no larger than 58104.
    """
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; expected one of {PROFILES}")
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    rng = np.random.default_rng(seed)
    weights = rng.dirichlet(np.full(clusters, 2.0))
    assign = rng.choice(clusters, size=n, p=weights)

    if profile == "sift_like":
        centers = rng.uniform(0.0, 110.0, (clusters, d))
        lo, hi = 4.0, 24.0
    elif profile == "mnist_like":
        ink = rng.random((clusters, d)) < 0.35
        centers = ink * rng.uniform(64.0, 255.0, (clusters, d))
        lo, hi = 10.0, 50.0
    elif profile == "deep_like":
        centers = rng.normal(0.0, 8.0, (clusters, d))
        lo, hi = 0.8, 4.0
    else:
        centers = rng.uniform(0.0, 8000.0, (clusters, d))
        lo, hi = 300.0, 2000.0
    spreads = np.exp(rng.uniform(np.log(lo), np.log(hi), clusters))

    X = centers[assign] + rng.standard_normal((n, d)) * spreads[assign, None]
    if profile == "sift_like":
        X = np.rint(np.clip(X, 0, SIFT_MAX))
    elif profile == "mnist_like":
        X = np.rint(np.clip(X, 0, MNIST_MAX))
    elif profile == "labelme_like":
        X = np.clip(X, 0.0, LABELME_MAX)
    return X


def split_queries(
    matrix: np.ndarray, q: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Hold out ``q`` seeded-random rows as queries.

    Returns ``(index_rows, query_rows)``; both keep the original row order.
    """
    n = len(matrix)
    if not 0 <= q < n:
        raise ValueError(f"need 0 <= q < n, got q={q}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    held = np.sort(perm[:q])
    kept = np.sort(perm[q:])
    return matrix[kept], matrix[held]
