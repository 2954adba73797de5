"""Accuracy and latency metrics plus the per-cell comparison report."""

from __future__ import annotations

import csv
import math
import statistics
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import DimensionMismatch, DuplicateCell, EmptyInput, TimingIsolationError, ZeroVariance

REPORT_COLUMNS = (
    "dataset", "scenario", "kind", "fold", "mse", "r2_paper", "r2_standard",
    "train_ms", "predict_ms", "n_train", "n_test", "seed", "flags",
)
SUMMARY_COLUMNS = (
    "dataset", "scenario", "kind", "cv_folds",
    "cv_mse_mean", "cv_mse_std", "cv_r2_paper_mean", "cv_r2_paper_std",
    "cv_r2_standard_mean", "cv_r2_standard_std",
    "test_mse", "test_r2_paper", "test_r2_standard", "train_ms", "predict_ms", "flags",
)
HELD_OUT = -1


def _pair(y, yhat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).ravel()
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if y.shape != yhat.shape:
        raise DimensionMismatch(f"length mismatch: {y.size} labels vs {yhat.size} predictions")
    if y.size == 0:
        raise EmptyInput("metrics need at least one value")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(yhat))):
        raise ValueError("metrics need finite inputs")
    return y, yhat


def mse(y, yhat) -> float:
    """Mean of squared differences between actual and predicted values."""
    y, yhat = _pair(y, yhat)
    r = y - yhat
    return float(np.mean(r * r))


def _total_ss(y: np.ndarray) -> tuple[float, float]:
    if y.size < 2:
        raise EmptyInput("R^2 needs at least two values")
    ybar = float(np.mean(y))
    ss = float(np.sum((y - ybar) ** 2))
    if ss == 0.0:
        raise ZeroVariance("labels have zero variance; R^2 is undefined")
    return ybar, ss


def r_squared_paper(y, yhat) -> float:
    """Explained-variance ratio ``sum((yhat - ybar)^2) / sum((y - ybar)^2)``.

    ``ybar`` is the mean of the actual values.  It equals the usual
    coefficient of determination only for least-squares fits with an
    intercept, and is never negative.
    """
    y, yhat = _pair(y, yhat)
    ybar, ss = _total_ss(y)
    return float(np.sum((yhat - ybar) ** 2) / ss)


def r_squared_standard(y, yhat) -> float:
    """``1 - SS_res / SS_tot``."""
    y, yhat = _pair(y, yhat)
    _, ss = _total_ss(y)
    return float(1.0 - np.sum((y - yhat) ** 2) / ss)


def time_predictions(model, X, repetitions: int = 5) -> float:
    """Median wall-clock milliseconds of full-batch ``model.predict(X)``.

    One untimed warm-up call runs first.  BLAS pools are pinned to one thread
    and the call refuses to run while other Python threads are alive.
    """
    if repetitions < 3:
        raise ValueError("need at least 3 repetitions")
    if threading.active_count() > 1:
        raise TimingIsolationError(f"{threading.active_count()} threads active during timing")
    with threadpool_limits(limits=1):
        model.predict(X)
        laps = []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            model.predict(X)
            laps.append((time.perf_counter() - t0) * 1e3)
    return float(statistics.median(laps))


@dataclass(frozen=True)
class MetricSet:
    mse: float
    r2_paper: float
    r2_standard: float
    predict_time_ms: float
    train_time_ms: float
    n_eval: int

    def __post_init__(self):
        if self.mse < 0 or self.r2_paper < 0:
            raise ValueError("mse and r2_paper must be nonnegative")
        if self.predict_time_ms < 0 or self.train_time_ms < 0:
            raise ValueError("times must be nonnegative")

    @classmethod
    def score(
        cls, y, yhat, *, train_time_ms: float = 0.0, predict_time_ms: float = 0.0
    ) -> "MetricSet":
        y, yhat = _pair(y, yhat)
        try:
            rp, rs = r_squared_paper(y, yhat), r_squared_standard(y, yhat)
        except (ZeroVariance, EmptyInput):
            rp = rs = math.nan
        return cls(mse(y, yhat), rp, rs, predict_time_ms, train_time_ms, int(y.size))


@dataclass(frozen=True)
class ReportRow:
    dataset: str
    scenario: int
    kind: str
    fold: int  # -1 marks the held-out test split
    metrics: MetricSet
    n_train: int
    seed: int
    flags: tuple[str, ...] = field(default=())

    @property
    def cell(self) -> tuple[str, int, str, int]:
        return (self.dataset, self.scenario, self.kind, self.fold)


def _kind_rank(kind: str) -> tuple[int, str]:
    from .regress import RegressorKind

    names = [k.value for k in RegressorKind]
    return (names.index(kind) if kind in names else len(names), kind)


def build_report(results: Iterable[ReportRow]) -> list[ReportRow]:
    """Sort rows by dataset, scenario, kind and fold, rejecting duplicate cells."""
    rows = list(results)
    if not rows:
        raise EmptyInput("report needs at least one result")
    seen: set = set()
    for row in rows:
        if row.cell in seen:
            raise DuplicateCell(f"duplicate report cell {row.cell}")
        seen.add(row.cell)
    return sorted(rows, key=lambda r: (r.dataset, r.scenario, _kind_rank(r.kind), r.fold))


def _fmt(x: float) -> str:
    return "%.17g" % x


def report_records(rows: Sequence[ReportRow]) -> list[list[str]]:
    out = []
    for r in rows:
        m = r.metrics
        out.append([
            r.dataset, str(r.scenario), r.kind, str(r.fold), _fmt(m.mse), _fmt(m.r2_paper),
            _fmt(m.r2_standard), _fmt(m.train_time_ms), _fmt(m.predict_time_ms),
            str(r.n_train), str(m.n_eval), str(r.seed), ";".join(r.flags),
        ])
    return out


def write_report_csv(path, rows: Sequence[ReportRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        w.writerows(report_records(rows))


def read_report_csv(path) -> list[ReportRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
            raise ValueError(f"unexpected report header {reader.fieldnames}")
        rows = []
        for rec in reader:
            metrics = MetricSet(
                float(rec["mse"]), float(rec["r2_paper"]), float(rec["r2_standard"]),
                float(rec["predict_ms"]), float(rec["train_ms"]), int(rec["n_test"]),
            )
            flags = tuple(f for f in rec["flags"].split(";") if f)
            rows.append(ReportRow(
                rec["dataset"], int(rec["scenario"]), rec["kind"], int(rec["fold"]),
                metrics, int(rec["n_train"]), int(rec["seed"]), flags,
            ))
        return rows


def _mean_std(values: list[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    arr = np.asarray(values)
    return float(arr.mean()), float(arr.std(ddof=1)) if len(arr) > 1 else 0.0


def summarize_report(rows: Sequence[ReportRow]) -> list[list[str]]:
    """One record per (dataset, scenario, kind): fold mean/std and test metrics."""
    cells: dict[tuple, list[ReportRow]] = {}
    for r in build_report(rows):
        cells.setdefault((r.dataset, r.scenario, r.kind), []).append(r)
    out = []
    for (dataset, scenario, kind), group in cells.items():
        folds = [r for r in group if r.fold != HELD_OUT]
        test = next((r for r in group if r.fold == HELD_OUT), None)
        stats = []
        for attr in ("mse", "r2_paper", "r2_standard"):
            stats.extend(_mean_std([getattr(r.metrics, attr) for r in folds]))
        nan = math.nan
        tm = test.metrics if test else None
        flags = sorted({f for r in group for f in r.flags})
        out.append(
            [dataset, str(scenario), kind, str(len(folds))]
            + [_fmt(v) for v in stats]
            + [_fmt(tm.mse if tm else nan), _fmt(tm.r2_paper if tm else nan),
               _fmt(tm.r2_standard if tm else nan), _fmt(tm.train_time_ms if tm else nan),
               _fmt(tm.predict_time_ms if tm else nan), ";".join(flags)]
        )
    return out


def write_summary_csv(path, rows: Sequence[ReportRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        w.writerows(summarize_report(rows))


def evaluate(
    model, X_test, y_test, *, timing_repetitions: int = 5, timer: Callable = time_predictions
) -> MetricSet:
    """Score a fitted model on held-out data, including its prediction latency."""
    yhat = model.predict(X_test)
    return MetricSet.score(
        y_test,
        yhat,
        train_time_ms=getattr(model, "train_time_ms", 0.0),
        predict_time_ms=timer(model, X_test, timing_repetitions),
    )
