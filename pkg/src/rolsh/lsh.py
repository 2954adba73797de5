"""Euclidean LSH with collision counting and virtual rehashing.

Every projection ``j`` hashes a point ``x`` to ``floor((a_j . x + b_j) / w)``
with ``a_j ~ N(0, I)`` and ``b_j ~ U[0, w)``.  Only these base-level values are
stored.  Searching at radius level ``r`` (one of ``1, c, c**2, ...``) merges
buckets by floor division, ``floor(h / r)``, which is the same as hashing with
bucket width ``r * w`` and therefore never touches the data again.

A point becomes a candidate at level ``r`` once it shares a bucket with the
query in at least ``l`` of the ``m`` projections.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy.stats import norm

from .data import check_finite
from .errors import (
    DatasetEmpty,
    DimensionMismatch,
    InvalidRadius,
    InvalidSensitivity,
    UnsupportedFormat,
)

DEFAULT_W = 2.184
DEFAULT_DELTA = 0.1
DEFAULT_C = 2
DEFAULT_BETA = 0.01
MIN_PROJECTIONS = 16
MAX_PROJECTIONS = 256

INDEX_MAGIC = b"ROLSH1"
_INDEX_HEADER = struct.Struct("<IIIdQ")
_PROJECT_CHUNK = 2048


def collision_probability(s, w: float = DEFAULT_W):
    """Probability that two points at distance ``s`` share a bucket of width ``w``.

    This is the standard p-stable (Gaussian) formula
    ``1 - 2*Phi(-w/s) - 2/(sqrt(2*pi)*(w/s)) * (1 - exp(-(w/s)**2 / 2))``.
    """
    s = np.asarray(s, dtype=np.float64)
    t = w / s
    p = 1.0 - 2.0 * norm.cdf(-t) - 2.0 / (math.sqrt(2.0 * math.pi) * t) * (
        1.0 - np.exp(-(t**2) / 2.0)
    )
    return p if p.ndim else float(p)


@dataclass(frozen=True)
class SensitivityParams:
    """(R, cR, p1, p2)-sensitivity plus the allowed error probability."""

    p1: float
    p2: float
    R: float = 1.0
    c: int = DEFAULT_C
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        if not self.R > 0:
            raise InvalidSensitivity(f"R must be positive, got {self.R}")
        if not self.c > 1:
            raise InvalidSensitivity(f"c must exceed 1, got {self.c}")
        if not (0 < self.p2 < 1 and 0 < self.p1 <= 1):
            raise InvalidSensitivity(f"probabilities out of range: p1={self.p1}, p2={self.p2}")
        if not self.p1 > self.p2:
            raise InvalidSensitivity(f"need p1 > p2, got p1={self.p1}, p2={self.p2}")
        if not 0 < self.delta < 1:
            raise InvalidSensitivity(f"delta must lie in (0, 1), got {self.delta}")

    @classmethod
    def from_width(
        cls, w: float = DEFAULT_W, c: int = DEFAULT_C, delta: float = DEFAULT_DELTA, R: float = 1.0
    ) -> "SensitivityParams":
        return cls(
            p1=collision_probability(1.0, w),
            p2=collision_probability(float(c), w),
            R=R,
            c=c,
            delta=delta,
        )


def compute_collision_threshold(
    n: int, m: int, params: SensitivityParams, override: int | None = None
) -> int:
    """Collision threshold ``l = ceil(m * (p1 + p2) / 2)`` clamped to [1, m].

    ``n`` is accepted so callers that derive ``l`` from the dataset size can
    share the signature; the midpoint rule does not use it.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if not params.p1 > params.p2:
        raise InvalidSensitivity(f"need p1 > p2, got p1={params.p1}, p2={params.p2}")
    if override is not None:
        l = int(override)
    else:
        # the tolerance absorbs representation error such as 100*(0.8+0.6)/2
        l = math.ceil(m * (params.p1 + params.p2) / 2.0 - 1e-9)
    return min(max(l, 1), m)


def default_projection_count(params: SensitivityParams) -> int:
    """``ceil(ln(1/delta) / (2 (p1 - p2)^2))`` clamped to [16, 256]."""
    m = math.ceil(math.log(1.0 / params.delta) / (2.0 * (params.p1 - params.p2) ** 2))
    return min(max(m, MIN_PROJECTIONS), MAX_PROJECTIONS)


def default_candidate_quota(k: int, n: int, beta: float = DEFAULT_BETA) -> int:
    return k + math.ceil(beta * n)


@dataclass(frozen=True)
class HashFunction:
    a: np.ndarray
    b: float
    w: float

    def __post_init__(self):
        if not self.w > 0:
            raise ValueError("w must be positive")
        if not 0 <= self.b < self.w:
            raise ValueError("b must lie in [0, w)")

    def __call__(self, x) -> int:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.a.shape:
            raise DimensionMismatch(f"expected {self.a.shape[0]} coordinates, got {x.shape}")
        return math.floor((float((self.a * x).sum()) + self.b) / self.w)


def _project(a: np.ndarray, X: np.ndarray) -> np.ndarray:
    # Elementwise product then a last-axis sum: the result for a row does not
    # depend on which other rows share the batch (BLAS gemm gives no such
    # promise), so a query identical to a stored point hashes identically.
    out = np.empty((len(X), len(a)))
    for start in range(0, len(X), _PROJECT_CHUNK):
        block = X[start : start + _PROJECT_CHUNK]
        out[start : start + len(block)] = (block[:, None, :] * a[None, :, :]).sum(axis=-1)
    return out


def _hash_rows(a: np.ndarray, b: np.ndarray, w: float, X: np.ndarray) -> np.ndarray:
    h = np.floor((_project(a, X) + b) / w)
    if h.size and np.abs(h).max() >= 2**31 - 1:
        raise OverflowError("hash values exceed 32-bit range; rescale the data or widen w")
    return h.astype(np.int32)


@dataclass(frozen=True, eq=False)
class ProjectionTable:
    """The ``m`` hash functions and the base-level signatures of a dataset.

    ``a`` is (m, d), ``b`` is (m,), ``signatures`` is (n, m) int32.  Arrays are
    read-only once built.
    """

    a: np.ndarray
    b: np.ndarray
    w: float
    seed: int
    signatures: np.ndarray
    hash_min: int = field(init=False)
    hash_max: int = field(init=False)
    _columns: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        # (m, n) copy: per-projection rows make collision counting ~3x faster
        object.__setattr__(self, "_columns", np.ascontiguousarray(self.signatures.T))
        for arr in (self.a, self.b, self.signatures, self._columns):
            arr.setflags(write=False)
        lo = int(self.signatures.min()) if self.signatures.size else 0
        hi = int(self.signatures.max()) if self.signatures.size else 0
        object.__setattr__(self, "hash_min", lo)
        object.__setattr__(self, "hash_max", hi)

    @property
    def n(self) -> int:
        return self.signatures.shape[0]

    @property
    def m(self) -> int:
        return self.a.shape[0]

    @property
    def d(self) -> int:
        return self.a.shape[1]

    @property
    def funcs(self) -> list[HashFunction]:
        return [HashFunction(self.a[j], float(self.b[j]), self.w) for j in range(self.m)]

    def hash(self, X) -> np.ndarray:
        """Base-level hash values of one point (shape (m,)) or a batch (k, m)."""
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X2 = X[None, :] if single else X
        if X2.ndim != 2 or X2.shape[1] != self.d:
            raise DimensionMismatch(f"expected {self.d} coordinates, got shape {X.shape}")
        check_finite(X2)
        h = _hash_rows(self.a, self.b, self.w, X2)
        return h[0] if single else h

    def saturation_level(self, query_hash: np.ndarray, c: int = DEFAULT_C) -> int:
        """First level at which every bucket index is -1 or 0.

        Coarser levels cannot change any collision, so a search reaching this
        level treats the whole dataset as candidates.
        """
        top = max(self.hash_max, int(query_hash.max())) + 1
        bottom = -min(self.hash_min, int(query_hash.min()))
        need = max(top, bottom, 1)
        level = 1
        while level < need:
            level *= c
        return level

    def to_bytes(self) -> bytes:
        head = INDEX_MAGIC + _INDEX_HEADER.pack(self.n, self.d, self.m, self.w, self.seed)
        funcs = np.hstack([self.a, self.b[:, None]]).astype("<f8")
        return head + funcs.tobytes() + self.signatures.astype("<i4").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ProjectionTable":
        if blob[: len(INDEX_MAGIC)] != INDEX_MAGIC:
            raise UnsupportedFormat("not a ROLSH1 index blob")
        pos = len(INDEX_MAGIC)
        n, d, m, w, seed = _INDEX_HEADER.unpack_from(blob, pos)
        pos += _INDEX_HEADER.size
        fsize = m * (d + 1) * 8
        ssize = n * m * 4
        if len(blob) != pos + fsize + ssize:
            raise UnsupportedFormat(
                f"index blob length {len(blob)} does not match header (expected {pos + fsize + ssize})"
            )
        funcs = np.frombuffer(blob, dtype="<f8", count=m * (d + 1), offset=pos).reshape(m, d + 1)
        sig = np.frombuffer(blob, dtype="<i4", count=n * m, offset=pos + fsize).reshape(n, m)
        return cls(
            a=funcs[:, :d].astype(np.float64),
            b=funcs[:, d].astype(np.float64),
            w=float(w),
            seed=int(seed),
            signatures=sig.astype(np.int32),
        )


def save_index(table: ProjectionTable, path) -> None:
    with open(path, "wb") as fh:
        fh.write(table.to_bytes())


def load_index(path) -> ProjectionTable:
    with open(path, "rb") as fh:
        return ProjectionTable.from_bytes(fh.read())


def build_index(dataset, m: int, w: float = DEFAULT_W, seed: int = 0) -> ProjectionTable:
    """Draw ``m`` seeded hash functions and hash every row of ``dataset``."""
    X = np.asarray(dataset, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise DatasetEmpty(f"dataset must be a non-empty 2-d matrix, got shape {X.shape}")
    if m < 1:
        raise ValueError("m must be >= 1")
    if not w > 0:
        raise ValueError("w must be positive")
    if not 0 <= seed < 2**64:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    check_finite(X)
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, X.shape[1]))
    b = rng.uniform(0.0, w, m)
    return ProjectionTable(a=a, b=b, w=float(w), seed=int(seed), signatures=_hash_rows(a, b, w, X))


def table_from_functions(dataset, funcs: Sequence[HashFunction], seed: int = 0) -> ProjectionTable:
    """Build a table from explicit hash functions (all sharing one ``w``)."""
    X = np.asarray(dataset, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DatasetEmpty("dataset must be a non-empty 2-d matrix")
    check_finite(X)
    widths = {f.w for f in funcs}
    if len(widths) != 1:
        raise ValueError("all hash functions must share one bucket width")
    a = np.array([f.a for f in funcs], dtype=np.float64)
    b = np.array([f.b for f in funcs], dtype=np.float64)
    w = widths.pop()
    return ProjectionTable(a=a, b=b, w=w, seed=seed, signatures=_hash_rows(a, b, w, X))


def _check_level(radius_level) -> None:
    if np.any(np.asarray(radius_level) <= 0):
        raise InvalidRadius(f"radius level must be positive, got {radius_level}")


def _divide_levels(hashes: np.ndarray, radius_level) -> np.ndarray:
    r = np.asarray(radius_level)
    if hashes.dtype.kind == "i" and r.dtype.kind in "iu" and not np.all(r <= np.iinfo(hashes.dtype).max):
        # a level beyond the dtype's range leaves only buckets 0 and -1
        return np.where(hashes < 0, -1, 0).astype(hashes.dtype)
    return np.floor_divide(hashes, radius_level)


def bucket_at_level(base_hash, radius_level):
    """Bucket index at a coarser level: ``floor(base_hash / radius_level)``."""
    _check_level(radius_level)
    if isinstance(base_hash, np.ndarray):
        return _divide_levels(base_hash, radius_level)
    return int(base_hash) // int(radius_level)


def collision_count(
    table: ProjectionTable, query, point_id: int, radius_level: int
) -> int:
    """Projections in which ``point_id`` shares the query's bucket at a level."""
    _check_level(radius_level)
    if not 0 <= point_id < table.n:
        raise IndexError(f"point_id {point_id} out of range for n={table.n}")
    qh = table.hash(query)
    sig = table.signatures[point_id]
    return int(
        np.count_nonzero(bucket_at_level(sig, radius_level) == bucket_at_level(qh, radius_level))
    )


def collision_counts(table: ProjectionTable, query_hash: np.ndarray, radius_level: int) -> np.ndarray:
    """Collision counts of every stored point against precomputed query hashes."""
    _check_level(radius_level)
    r = int(radius_level)
    same = _divide_levels(table._columns, r) == _divide_levels(np.asarray(query_hash), r)[:, None]
    return same.sum(axis=0, dtype=np.int32)


def level_sequence(start: int, c: int = DEFAULT_C) -> Iterator[int]:
    r = start
    while True:
        yield r
        r *= c


def is_level(r, c: int = DEFAULT_C) -> bool:
    """True when ``r`` is a power of ``c`` (including ``c**0 == 1``)."""
    if r != int(r) or r < 1:
        return False
    r = int(r)
    while r % c == 0:
        r //= c
    return r == 1


def snap_radius(predicted: float, c: int = DEFAULT_C, cap: int | None = None) -> int:
    """Largest level ``c**i`` not exceeding ``max(predicted, 1)``."""
    target = max(float(predicted), 1.0)
    level = 1
    while level * c <= target and (cap is None or level < cap):
        level *= c
    return level


@dataclass(frozen=True)
class QueryPlan:
    query: np.ndarray
    k: int
    l: int
    candidate_quota: int
    start_radius: int = 1
    c: int = DEFAULT_C

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.l < 1:
            raise ValueError("l must be >= 1")
        if self.candidate_quota < 1:
            raise ValueError("candidate_quota must be >= 1")
        if int(self.c) != self.c or self.c < 2:
            raise ValueError("virtual rehashing needs an integer c >= 2")
        if int(self.start_radius) != self.start_radius or self.start_radius < 1:
            raise InvalidRadius(f"start radius must be an integer >= 1, got {self.start_radius}")


def make_plan(
    table: ProjectionTable,
    query,
    k: int,
    params: SensitivityParams | None = None,
    *,
    l: int | None = None,
    candidate_quota: int | None = None,
    start_radius: int = 1,
    beta: float = DEFAULT_BETA,
) -> QueryPlan:
    """Fill a QueryPlan with the default threshold and quota for ``table``."""
    params = params or SensitivityParams.from_width(table.w)
    kk = min(k, table.n)
    return QueryPlan(
        query=np.asarray(query, dtype=np.float64),
        k=k,
        l=compute_collision_threshold(table.n, table.m, params, override=l),
        candidate_quota=candidate_quota or default_candidate_quota(kk, table.n, beta),
        start_radius=start_radius,
        c=params.c,
    )


@dataclass(frozen=True)
class QueryResult:
    ids: np.ndarray
    distances: np.ndarray
    terminal_radius: int
    levels_visited: int
    start_radius: int
    candidates: int
    clamped: bool = False
    fallback: bool = False

    @property
    def neighbors(self) -> list[tuple[int, float]]:
        return list(zip(self.ids.tolist(), self.distances.tolist()))


@dataclass
class _Level:
    radius: int
    candidates: np.ndarray  # ids
    distances: np.ndarray  # full-length, NaN where unverified
    covers_all: bool


def _walk(
    table: ProjectionTable, dataset: np.ndarray, query: np.ndarray, l: int, start: int, c: int
) -> Iterator[_Level]:
    """Yield successive levels with their (nested) candidate sets verified."""
    qh = table.hash(query)
    sat = table.saturation_level(qh, c)
    dist = np.full(table.n, np.nan)
    seen = np.zeros(table.n, dtype=bool)
    r = start
    while True:
        covers = r >= sat
        if covers:
            cand = np.arange(table.n)
        else:
            cand = np.flatnonzero(collision_counts(table, qh, r) >= l)
        fresh = cand[~seen[cand]]
        if len(fresh):
            diff = dataset[fresh] - query
            dist[fresh] = np.sqrt((diff * diff).sum(axis=1))
            seen[fresh] = True
        covers = covers or len(cand) == table.n
        yield _Level(r, cand, dist, covers)
        if covers:
            return
        r *= c


def _validate(table: ProjectionTable, plan: QueryPlan, dataset) -> np.ndarray:
    X = np.asarray(dataset, dtype=np.float64)
    if X.shape != (table.n, table.d):
        raise DimensionMismatch(f"dataset shape {X.shape} does not match index ({table.n}, {table.d})")
    if plan.query.shape != (table.d,):
        raise DimensionMismatch(f"query has shape {plan.query.shape}, expected ({table.d},)")
    if plan.l > table.m:
        raise ValueError(f"l={plan.l} exceeds m={table.m}")
    return X


def query_knn(table: ProjectionTable, plan: QueryPlan, dataset, *, _fallback: bool = False) -> QueryResult:
    """c-approximate k-NN search by exponential radius growth from ``plan.start_radius``.

    A level ends the search once ``k`` verified candidates lie within ``c * r``,
    the candidate count reaches the quota, or the level covers the whole
    dataset.  The k nearest verified candidates are returned.
    """
    X = _validate(table, plan, dataset)
    k = min(plan.k, table.n)
    clamped = k < plan.k
    if clamped:
        warnings.warn(f"k={plan.k} exceeds n={table.n}; clamped", RuntimeWarning, stacklevel=2)

    levels = 0
    for level in _walk(table, X, plan.query, plan.l, plan.start_radius, plan.c):
        levels += 1
        d = level.distances[level.candidates]
        within = np.count_nonzero(d <= plan.c * level.radius)
        if within >= k or len(level.candidates) >= plan.candidate_quota or level.covers_all:
            break

    order = np.lexsort((level.candidates, d))[:k]
    return QueryResult(
        ids=level.candidates[order],
        distances=d[order],
        terminal_radius=level.radius,
        levels_visited=levels,
        start_radius=plan.start_radius,
        candidates=len(level.candidates),
        clamped=clamped,
        fallback=_fallback,
    )


def query_knn_predicted(
    table: ProjectionTable, plan: QueryPlan, dataset, predicted_radius: float
) -> QueryResult:
    """Same search, started at the snapped predicted radius.

    Non-finite predictions fall back to radius 1 and set ``fallback``.  When
    the snapped level is too small the search keeps growing from there.
    """
    fallback = not math.isfinite(predicted_radius)
    if fallback:
        start = 1
    else:
        cap = table.saturation_level(table.hash(plan.query), plan.c)
        start = snap_radius(predicted_radius, plan.c, cap=cap)
    moved = QueryPlan(
        query=plan.query,
        k=plan.k,
        l=plan.l,
        candidate_quota=plan.candidate_quota,
        start_radius=start,
        c=plan.c,
    )
    return query_knn(table, moved, dataset, _fallback=fallback)


def terminal_radii(
    table: ProjectionTable,
    dataset,
    query,
    ks: Sequence[int],
    l: int,
    c: int = DEFAULT_C,
    beta: float = DEFAULT_BETA,
) -> dict[int, int]:
    """Terminal radius of a from-1 search for several ``k`` in a single walk.

    Equivalent to running ``query_knn`` once per ``k`` with the default quota,
    because termination at a level depends only on that level's candidates.
    """
    X = np.asarray(dataset, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (table.d,):
        raise DimensionMismatch(f"query has shape {query.shape}, expected ({table.d},)")
    pending = {int(k): min(int(k), table.n) for k in ks}
    out: dict[int, int] = {}
    for level in _walk(table, X, query, l, 1, c):
        d = level.distances[level.candidates]
        within = np.count_nonzero(d <= c * level.radius)
        ncand = len(level.candidates)
        for k, kk in list(pending.items()):
            quota = default_candidate_quota(kk, table.n, beta)
            if within >= kk or ncand >= quota or level.covers_all:
                out[k] = level.radius
                del pending[k]
        if not pending:
            break
    return out


def brute_force_knn(dataset, query, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact k-NN by full scan; ties broken by lower id."""
    X = np.asarray(dataset, dtype=np.float64)
    diff = X - np.asarray(query, dtype=np.float64)
    dist = np.sqrt((diff * diff).sum(axis=1))
    order = np.lexsort((np.arange(len(X)), dist))[:k]
    return order, dist[order]
