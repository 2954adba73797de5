"""Ground-truth search radii, query features and the five training scenarios."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import lsh
from .errors import DimensionMismatch, PoolTooSmall, RolshError

log = logging.getLogger(__name__)

ALL_K = (1, 10, 25, 50, 75, 90, 100)
SCENARIO_SIZES = (5000, 10000, 50000)
TEST_FRACTION = 0.2
MAX_SKIP_FRACTION = 0.01


@dataclass(frozen=True)
class TrainingSample:
    features: np.ndarray
    k: int
    label: float

    def __post_init__(self):
        if not self.label >= 1:
            raise ValueError(f"label must be >= 1, got {self.label}")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")


@dataclass(frozen=True)
class ScenarioSpec:
    id: int
    k_values: tuple[int, ...]
    total_size: int

    def __post_init__(self):
        if not set(self.k_values) <= set(ALL_K):
            raise ValueError(f"k values {self.k_values} outside {ALL_K}")
        if self.total_size not in SCENARIO_SIZES:
            raise ValueError(f"total size {self.total_size} not in {SCENARIO_SIZES}")

    @property
    def test_size(self) -> int:
        return math.ceil(TEST_FRACTION * self.total_size)

    def allocation(self, total: int | None = None) -> dict[int, int]:
        """Even split over ``k_values``; the remainder goes to the smallest k."""
        total = self.total_size if total is None else total
        ks = sorted(self.k_values)
        base, rest = divmod(total, len(ks))
        counts = {k: base for k in ks}
        counts[ks[0]] += rest
        return counts


SCENARIOS = {
    1: ScenarioSpec(1, (1, 50, 100), 10000),
    2: ScenarioSpec(2, (1, 25, 50, 75, 100), 5000),
    3: ScenarioSpec(3, (1, 25, 50, 75, 100), 10000),
    4: ScenarioSpec(4, (1, 25, 50, 75, 100), 50000),
    5: ScenarioSpec(5, (1, 10, 25, 50, 75, 90, 100), 10000),
}


def extract_features(
    table: lsh.ProjectionTable, query, k: int, mode: str = "hash"
) -> np.ndarray:
    """Feature vector for a (query, k) pair.

    ``mode="hash"`` gives the query's base-level hash values divided by ``m``
    followed by ``k``; ``mode="coords"`` uses the raw coordinates instead.
    """
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (table.d,):
        raise DimensionMismatch(f"query has shape {query.shape}, expected ({table.d},)")
    if mode == "hash":
        head = table.hash(query) / table.m
    elif mode == "coords":
        head = query
    else:
        raise ValueError(f"unknown feature mode {mode!r}")
    return np.append(head, float(k))


def extract_feature_matrix(
    table: lsh.ProjectionTable, queries, ks, mode: str = "hash"
) -> np.ndarray:
    """Vectorized ``extract_features`` for aligned arrays of queries and k."""
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    ks = np.broadcast_to(np.asarray(ks, dtype=np.float64), (len(queries),))
    if queries.shape[1] != table.d:
        raise DimensionMismatch(f"queries have {queries.shape[1]} columns, expected {table.d}")
    head = table.hash(queries) / table.m if mode == "hash" else queries
    if mode not in ("hash", "coords"):
        raise ValueError(f"unknown feature mode {mode!r}")
    return np.column_stack([head, ks])


def generate_ground_truth(
    table: lsh.ProjectionTable,
    dataset,
    queries,
    k_values: Iterable[int],
    params: lsh.SensitivityParams | None = None,
    *,
    l: int | None = None,
    feature_mode: str = "hash",
) -> list[TrainingSample]:
    """Label every (query, k) with the terminal radius of a from-1 search.

    Samples come out query-major, k ascending.  Queries that fail are logged
    and skipped; more than 1% failures aborts the batch.
    """
    params = params or lsh.SensitivityParams.from_width(table.w)
    thresh = lsh.compute_collision_threshold(table.n, table.m, params, override=l)
    ks = sorted(set(int(k) for k in k_values))
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    X = np.asarray(dataset, dtype=np.float64)

    samples: list[TrainingSample] = []
    failed = 0
    for qi, q in enumerate(queries):
        try:
            radii = lsh.terminal_radii(table, X, q, ks, thresh, params.c)
            base = extract_features(table, q, 0, feature_mode)
        except RolshError as exc:
            failed += 1
            log.warning("ground truth skipped query %d: %s", qi, exc)
            continue
        for k in ks:
            feats = base.copy()
            feats[-1] = k
            samples.append(TrainingSample(feats, k, float(radii[k])))
    if failed > MAX_SKIP_FRACTION * len(queries):
        raise RolshError(f"{failed} of {len(queries)} ground-truth queries failed")
    return samples


def samples_to_arrays(samples: Sequence[TrainingSample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack samples into (features, k, labels) arrays."""
    if not samples:
        return np.empty((0, 0)), np.empty(0, dtype=np.int64), np.empty(0)
    X = np.vstack([s.features for s in samples])
    k = np.array([s.k for s in samples], dtype=np.int64)
    y = np.array([s.label for s in samples], dtype=np.float64)
    return X, k, y


def _query_groups(samples: Sequence[TrainingSample]) -> np.ndarray:
    # samples built from the same query share every feature but the last
    keys: dict[bytes, int] = {}
    groups = np.empty(len(samples), dtype=np.int64)
    for i, s in enumerate(samples):
        groups[i] = keys.setdefault(np.ascontiguousarray(s.features[:-1]).tobytes(), len(keys))
    return groups


def build_scenario(
    samples: Sequence[TrainingSample], spec: ScenarioSpec, seed: int
) -> tuple[list[int], list[int]]:
    """Draw train and test index lists (into ``samples``) for one scenario.

    Queries, not just samples, are kept apart: the pool's queries are shuffled
    once and split into a train group and a test group, and each k draws its
    quota from its own side.  Train holds exactly ``spec.total_size`` samples,
    test ``ceil(0.2 * total_size)``, both spread evenly over ``spec.k_values``.
    """
    train_alloc = spec.allocation()
    test_alloc = spec.allocation(spec.test_size)
    groups = _query_groups(samples)
    ks = np.array([s.k for s in samples])

    rng = np.random.default_rng(seed)
    order = rng.permutation(groups.max() + 1 if len(groups) else 0)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))

    n_train_groups = max(train_alloc.values())
    train: list[int] = []
    test: list[int] = []
    for k in sorted(spec.k_values):
        idx = np.flatnonzero(ks == k)
        needed = train_alloc[k] + test_alloc[k]
        if len(idx) < needed:
            raise PoolTooSmall(needed, len(idx), k)
        idx = idx[np.argsort(rank[groups[idx]], kind="stable")]
        r = rank[groups[idx]]
        train_side = idx[r < n_train_groups]
        test_side = idx[r >= n_train_groups]
        if len(train_side) < train_alloc[k]:
            raise PoolTooSmall(needed, len(idx), k)
        if len(test_side) < test_alloc[k]:
            raise PoolTooSmall(n_train_groups + test_alloc[k], len(idx), k)
        train.extend(train_side[: train_alloc[k]].tolist())
        test.extend(test_side[: test_alloc[k]].tolist())
    return sorted(train), sorted(test)


def queries_needed(specs: Iterable[ScenarioSpec]) -> int:
    """Distinct queries a pool must hold to serve every given scenario."""
    need = 0
    for spec in specs:
        train = max(spec.allocation().values())
        test = max(spec.allocation(spec.test_size).values())
        need = max(need, train + test)
    return need


def write_samples_csv(path, samples: Sequence[TrainingSample]) -> None:
    """Write samples with header ``k,label,f0,...,fm`` (17 significant digits)."""
    width = len(samples[0].features) if samples else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "label"] + [f"f{i}" for i in range(width)])
        for s in samples:
            w.writerow([s.k, "%.17g" % s.label] + ["%.17g" % v for v in s.features])


def read_samples_csv(path) -> list[TrainingSample]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.reader(fh)
        header = next(rows)
        if header[:2] != ["k", "label"]:
            raise ValueError(f"unexpected sample header {header[:2]}")
        return [
            TrainingSample(np.array([float(v) for v in row[2:]]), int(row[0]), float(row[1]))
            for row in rows
        ]
