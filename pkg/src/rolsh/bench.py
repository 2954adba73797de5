"""End-to-end benchmark: index, ground truth, scenarios, fits, evaluation, report.

Every stage writes its artifacts under one output directory and records them
in ``manifest.json`` with a SHA-256 content hash and a cache key derived from
the configuration slice the stage depends on.  A later run reuses any stage
whose key matches and whose artifacts still hash correctly.  The report is
always re-emitted from the persisted evaluation results.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy
import yaml
from threadpoolctl import threadpool_limits

from . import __version__, lsh, metrics, radius, regress
from .data import read_bvecs, read_fvecs, split_queries, synth_dataset
from .errors import ConfigError, ModelNotFound, RolshError
from .metrics import HELD_OUT, MetricSet, ReportRow
from .regress import RegressorKind

log = logging.getLogger(__name__)

ALL_KINDS = tuple(k.value for k in RegressorKind)
MANIFEST = "manifest.json"
FAILED = "FAILED"
THREADS_ENV = "ROLSH_BENCH_THREADS"

# counter slots for seed derivation
_DATA, _INDEX, _SPLIT, _FOLDS, _FIT = range(5)


class StageFailure(RolshError):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage} failed: {cause}")


@dataclass
class DatasetSpec:
    """Synthetic profile with ``n`` indexed points, or an fvecs/bvecs path.

    Synthetic queries are drawn on top of the ``n`` indexed points; file
    datasets give up their queries from the rows read.  ``queries=None``
    sizes the pool to the selected scenarios.
    """

    profile: str | None = "sift_like"
    path: str | None = None
    n: int = 20000
    d: int = 64
    queries: int | None = None


@dataclass
class LshSpec:
    w: float = lsh.DEFAULT_W
    delta: float = lsh.DEFAULT_DELTA
    c: int = lsh.DEFAULT_C
    m: int | None = None
    l: int | None = None


@dataclass
class DemoSpec:
    scenario: int = 3
    kind: str = "mlp"
    k: int = 10
    count: int = 200


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    lsh: LshSpec = field(default_factory=LshSpec)
    scenarios: tuple[int, ...] = (1, 2, 3, 4, 5)
    kinds: tuple[str, ...] = ALL_KINDS
    folds: int = 10
    seed: int = 0
    out: str = "runs/default"
    features: str = "hash"
    log_labels: bool = False
    timing_repetitions: int = 5
    threads: int = 1
    regressors: dict = field(default_factory=dict)
    demo: DemoSpec = field(default_factory=DemoSpec)

    def validate(self) -> "ExperimentConfig":
        ds = self.dataset
        if ds.path is not None:
            if not Path(ds.path).is_file():
                raise ConfigError(f"dataset path {ds.path} does not exist")
            if Path(ds.path).suffix not in (".fvecs", ".bvecs"):
                raise ConfigError(f"dataset path must end in .fvecs or .bvecs: {ds.path}")
        elif ds.profile is None:
            raise ConfigError("dataset needs a profile or a path")
        elif ds.n < 1 or ds.d < 1:
            raise ConfigError("dataset n and d must be positive")
        if ds.queries is not None and ds.queries < 1:
            raise ConfigError("dataset.queries must be positive")
        p = self.lsh
        if not p.w > 0 or not 0 < p.delta < 1:
            raise ConfigError("lsh.w must be > 0 and lsh.delta in (0, 1)")
        if int(p.c) != p.c or p.c < 2:
            raise ConfigError("lsh.c must be an integer >= 2")
        if p.m is not None and p.m < 1:
            raise ConfigError("lsh.m must be positive")
        bad = set(self.scenarios) - set(radius.SCENARIOS)
        if bad or not self.scenarios:
            raise ConfigError(f"unknown scenarios {sorted(bad)}")
        bad = set(self.kinds) - set(ALL_KINDS)
        if bad or not self.kinds:
            raise ConfigError(f"unknown regressor kinds {sorted(bad)}")
        if self.folds == 1 or self.folds < 0:
            raise ConfigError("folds must be 0 (no cross-validation) or >= 2")
        if self.features not in ("hash", "coords"):
            raise ConfigError(f"features must be 'hash' or 'coords', not {self.features!r}")
        if self.timing_repetitions < 3:
            raise ConfigError("timing_repetitions must be >= 3")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        for kind, opts in self.regressors.items():
            if kind not in ALL_KINDS:
                raise ConfigError(f"regressors: unknown kind {kind!r}")
            regress.make(kind, opts)
        if self.demo.kind not in ALL_KINDS or self.demo.scenario not in radius.SCENARIOS:
            raise ConfigError("demo names an unknown kind or scenario")
        return self

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["scenarios"] = list(self.scenarios)
        out["kinds"] = list(self.kinds)
        return out


def _build(cls, raw, where: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    return cls(**raw)


def _int_list(value, where: str) -> tuple:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    try:
        return tuple(int(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: expected a list of integers") from exc


def config_from_dict(raw: dict | None, **overrides) -> ExperimentConfig:
    """Build and validate a config; non-None ``overrides`` win over ``raw``."""
    raw = dict(raw or {})
    for key, value in overrides.items():
        if value is not None:
            raw[key] = value
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    try:
        kw = dict(raw)
        kw["dataset"] = _build(DatasetSpec, raw.get("dataset"), "dataset")
        kw["lsh"] = _build(LshSpec, raw.get("lsh"), "lsh")
        kw["demo"] = _build(DemoSpec, raw.get("demo"), "demo")
        if "scenarios" in raw:
            kw["scenarios"] = tuple(sorted(set(_int_list(raw["scenarios"], "scenarios"))))
        if "kinds" in raw:
            kinds = raw["kinds"].split(",") if isinstance(raw["kinds"], str) else raw["kinds"]
            chosen = {str(k).strip() for k in kinds if str(k).strip()}
            kw["kinds"] = tuple(k for k in ALL_KINDS if k in chosen) + tuple(sorted(chosen - set(ALL_KINDS)))
        kw["regressors"] = dict(raw.get("regressors") or {})
        cfg = ExperimentConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def load_config(path=None, **overrides) -> ExperimentConfig:
    raw = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a mapping")
    return config_from_dict(raw, **overrides)


def resolve_threads(flag: int | None) -> int | None:
    """``--threads`` wins; the environment variable is the fallback."""
    if flag is not None:
        return flag
    env = os.environ.get(THREADS_ENV)
    if env is None or env == "":
        return None
    try:
        return int(env)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from exc


def stage_seed(master: int, *counters: int) -> int:
    """Independent 64-bit seed for the stage addressed by ``counters``."""
    seq = np.random.SeedSequence(master, spawn_key=tuple(counters))
    return int(seq.generate_state(1, np.uint64)[0])


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _key(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def verify_manifest(out) -> list[str]:
    """Artifacts that are missing or whose content no longer matches the manifest."""
    out = Path(out)
    manifest = json.loads((out / MANIFEST).read_text(encoding="utf-8"))
    problems = []
    for name, entry in sorted(manifest.get("stages", {}).items()):
        for rel, digest in sorted(entry.get("artifacts", {}).items()):
            path = out / rel
            if not path.is_file():
                problems.append(f"{name}: missing {rel}")
            elif sha256_file(path) != digest:
                problems.append(f"{name}: hash mismatch for {rel}")
    return problems


def _fit_job(kind, config, X, y, seed, path) -> tuple[str, float]:
    with threadpool_limits(limits=1):
        model = regress.fit(kind, config, X, y, seed=seed)
    regress.save_model(model, path)
    return str(path), model.train_time_ms


class Pipeline:
    """Stage runner over one output directory."""

    def __init__(self, config: ExperimentConfig):
        self.cfg = config
        self.out = Path(config.out)
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / MANIFEST
        self.manifest = json.loads(path.read_text(encoding="utf-8")) if path.is_file() else {}
        self.manifest.setdefault("stages", {})
        self.manifest.update(
            config=config.to_dict(),
            config_hash=_key(config.to_dict()),
            master_seed=config.seed,
            versions={
                "rolsh": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
        )
        self._cache: dict = {}

    # bookkeeping

    def _save_manifest(self):
        tmp = self.out / (MANIFEST + ".tmp")
        tmp.write_text(json.dumps(self.manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        tmp.replace(self.out / MANIFEST)

    def _fresh(self, name: str, key: str) -> bool:
        entry = self.manifest["stages"].get(name)
        if not entry or entry.get("key") != key:
            return False
        for rel, digest in entry.get("artifacts", {}).items():
            path = self.out / rel
            if not path.is_file() or sha256_file(path) != digest:
                log.warning("%s: artifact %s changed, rerunning", name, rel)
                return False
        return True

    def _record(self, name: str, key: str, artifacts, wall_s: float, **extra):
        self.manifest["stages"][name] = {
            "key": key,
            "wall_s": round(wall_s, 6),
            "artifacts": {str(Path(a).relative_to(self.out)): sha256_file(a) for a in artifacts},
            **extra,
        }
        self._save_manifest()

    @contextmanager
    def _stage(self, name: str):
        try:
            yield
        except Exception as exc:
            (self.out / FAILED).write_text(f"{name}\n{type(exc).__name__}: {exc}\n", encoding="utf-8")
            self._save_manifest()
            raise StageFailure(name, exc) from exc

    def _clear_failed(self):
        (self.out / FAILED).unlink(missing_ok=True)

    # stages

    def params(self) -> lsh.SensitivityParams:
        p = self.cfg.lsh
        return lsh.SensitivityParams.from_width(p.w, int(p.c), p.delta)

    def dataset(self):
        """(indexed points, query pool, cache key)."""
        if "dataset" in self._cache:
            return self._cache["dataset"]
        ds, seed = self.cfg.dataset, stage_seed(self.cfg.seed, _DATA)
        q = ds.queries or radius.queries_needed(radius.SCENARIOS[s] for s in self.cfg.scenarios)
        with self._stage("index"):
            if ds.path is not None:
                reader = read_bvecs if ds.path.endswith(".bvecs") else read_fvecs
                _, X = reader(ds.path)
                source = sha256_file(ds.path)
                data, queries = split_queries(X, q, seed)
            else:
                X = synth_dataset(ds.profile, ds.n + q, ds.d, seed)
                source = [ds.profile, ds.n, ds.d]
                data, queries = split_queries(X, q, stage_seed(self.cfg.seed, _DATA, 1))
        self._cache["dataset"] = (data, queries, _key("data", source, q, seed))
        return self._cache["dataset"]

    def index(self) -> lsh.ProjectionTable:
        if "index" in self._cache:
            return self._cache["index"]
        data, _, data_key = self.dataset()
        p = self.cfg.lsh
        m = p.m or lsh.default_projection_count(self.params())
        seed = stage_seed(self.cfg.seed, _INDEX)
        key = _key("index", data_key, p.w, m, seed)
        path = self.out / "index.rolsh"
        with self._stage("index"):
            if self._fresh("index", key):
                table = lsh.load_index(path)
            else:
                t0 = time.perf_counter()
                table = lsh.build_index(data, m, w=p.w, seed=seed)
                lsh.save_index(table, path)
                self._record("index", key, [path], time.perf_counter() - t0, seed=seed, m=m)
        self._cache["index"] = (table, key)
        return self._cache["index"]

    def truth(self) -> list[radius.TrainingSample]:
        if "truth" in self._cache:
            return self._cache["truth"]
        table, index_key = self.index()
        data, queries, _ = self.dataset()
        key = _key("truth", index_key, self.cfg.lsh.delta, self.cfg.lsh.c, self.cfg.lsh.l, self.cfg.features)
        path = self.out / "truth.csv"
        with self._stage("truth"):
            if self._fresh("truth", key):
                samples = radius.read_samples_csv(path)
            else:
                t0 = time.perf_counter()
                samples = radius.generate_ground_truth(
                    table, data, queries, radius.ALL_K, self.params(),
                    l=self.cfg.lsh.l, feature_mode=self.cfg.features,
                )
                radius.write_samples_csv(path, samples)
                self._record("truth", key, [path], time.perf_counter() - t0, samples=len(samples))
        self._cache["truth"] = (samples, key)
        return self._cache["truth"]

    def arrays(self):
        if "arrays" not in self._cache:
            samples, _ = self.truth()
            F, K, y = radius.samples_to_arrays(samples)
            if self.cfg.log_labels:
                y = np.log2(y)
            self._cache["arrays"] = (F, K, y)
        return self._cache["arrays"]

    def scenario(self, sid: int) -> tuple[np.ndarray, np.ndarray, str]:
        name = f"scenario/{sid}"
        if name in self._cache:
            return self._cache[name]
        samples, truth_key = self.truth()
        seed = stage_seed(self.cfg.seed, _SPLIT, sid)
        key = _key("scenario", truth_key, sid, seed)
        path = self.out / "scenarios" / f"scenario_{sid}.json"
        with self._stage("scenarios"):
            if self._fresh(name, key):
                doc = json.loads(path.read_text(encoding="utf-8"))
                train, test = doc["train"], doc["test"]
            else:
                t0 = time.perf_counter()
                train, test = radius.build_scenario(samples, radius.SCENARIOS[sid], seed)
                spec = radius.SCENARIOS[sid]
                path.parent.mkdir(exist_ok=True)
                doc = {
                    "scenario": sid, "k_values": list(spec.k_values), "seed": seed,
                    "train": train, "test": test,
                }
                path.write_text(json.dumps(doc) + "\n", encoding="utf-8")
                self._record(name, key, [path], time.perf_counter() - t0, seed=seed)
        self._cache[name] = (np.asarray(train), np.asarray(test), key)
        return self._cache[name]

    def scenarios(self):
        return {sid: self.scenario(sid) for sid in self.cfg.scenarios}

    def _fold_parts(self, sid: int, n_train: int) -> list[np.ndarray]:
        if self.cfg.folds == 0:
            return []
        return regress.kfold_indices(n_train, self.cfg.folds, stage_seed(self.cfg.seed, _FOLDS, sid))

    def _cells(self):
        """Every (scenario, kind, fold) model the config asks for, with its rows."""
        for sid in self.cfg.scenarios:
            train, test, split_key = self.scenario(sid)
            parts = self._fold_parts(sid, len(train))
            jobs = [(HELD_OUT, train, test)]
            for i, part in enumerate(parts):
                rest = np.sort(np.concatenate(parts[:i] + parts[i + 1 :]))
                jobs.append((i, train[rest], train[part]))
            for kind in self.cfg.kinds:
                for fold, fit_rows, eval_rows in jobs:
                    yield self._cell(sid, kind, fold, split_key, fit_rows, eval_rows)

    def _cell(self, sid, kind, fold, split_key, fit_rows=None, eval_rows=None) -> dict:
        seed = stage_seed(self.cfg.seed, _FIT, sid, ALL_KINDS.index(kind), fold + 1)
        key = _key(
            "fit", split_key, kind, self.cfg.regressors.get(kind, {}), self.cfg.folds,
            fold, seed, self.cfg.log_labels,
        )
        tag = "test" if fold == HELD_OUT else f"f{fold}"
        return {
            "sid": sid, "kind": kind, "fold": fold, "seed": seed, "key": key,
            "name": f"fit/s{sid}-{kind}-{tag}",
            "path": self.out / "models" / f"s{sid}-{kind}-{tag}.rgrm",
            "fit_rows": fit_rows, "eval_rows": eval_rows,
        }

    def train(self) -> list[dict]:
        cells = list(self._cells())
        F, _, y = self.arrays()
        (self.out / "models").mkdir(exist_ok=True)
        todo = [c for c in cells if not self._fresh(c["name"], c["key"])]
        log.info("train: %d of %d models to fit", len(todo), len(cells))
        with self._stage("train"):
            if self.cfg.threads > 1 and len(todo) > 1:
                with ProcessPoolExecutor(max_workers=self.cfg.threads) as pool:
                    futures = [
                        (c, time.perf_counter(), pool.submit(
                            _fit_job, c["kind"], self.cfg.regressors.get(c["kind"]),
                            F[c["fit_rows"]], y[c["fit_rows"]], c["seed"], c["path"],
                        ))
                        for c in todo
                    ]
                    for c, t0, fut in futures:
                        fut.result()
                        self._record(c["name"], c["key"], [c["path"]], time.perf_counter() - t0, seed=c["seed"])
            else:
                for c in todo:
                    t0 = time.perf_counter()
                    _fit_job(c["kind"], self.cfg.regressors.get(c["kind"]),
                             F[c["fit_rows"]], y[c["fit_rows"]], c["seed"], c["path"])
                    self._record(c["name"], c["key"], [c["path"]], time.perf_counter() - t0, seed=c["seed"])
        return cells

    def evaluate(self) -> list[ReportRow]:
        cells = self.train()
        F, _, y = self.arrays()
        name_of = lambda sid, kind: f"eval/s{sid}-{kind}"
        groups: dict[tuple, list[dict]] = {}
        for c in cells:
            groups.setdefault((c["sid"], c["kind"]), []).append(c)
        (self.out / "results").mkdir(exist_ok=True)
        rows: list[ReportRow] = []
        dataset = self._dataset_name()
        with self._stage("eval"), threadpool_limits(limits=1):
            for (sid, kind), group in groups.items():
                name = name_of(sid, kind)
                key = _key("eval", [c["key"] for c in group], self.cfg.timing_repetitions)
                path = self.out / "results" / f"s{sid}-{kind}.json"
                if not self._fresh(name, key):
                    t0 = time.perf_counter()
                    records = []
                    for c in group:
                        model = regress.load_model(c["path"])
                        Xe, ye = F[c["eval_rows"]], y[c["eval_rows"]]
                        ms = metrics.evaluate(model, Xe, ye, timing_repetitions=self.cfg.timing_repetitions)
                        flags = list(model.flags) + (["log_labels"] if self.cfg.log_labels else [])
                        records.append({
                            "fold": c["fold"], "metrics": dataclasses.asdict(ms),
                            "n_train": len(c["fit_rows"]), "seed": c["seed"], "flags": flags,
                        })
                    path.write_text(json.dumps(records, indent=1) + "\n", encoding="utf-8")
                    self._record(name, key, [path], time.perf_counter() - t0)
                for rec in json.loads(path.read_text(encoding="utf-8")):
                    rows.append(ReportRow(
                        dataset, sid, kind, rec["fold"], MetricSet(**rec["metrics"]),
                        rec["n_train"], rec["seed"], tuple(rec["flags"]),
                    ))
        return rows

    def _dataset_name(self) -> str:
        ds = self.cfg.dataset
        return Path(ds.path).stem if ds.path else ds.profile

    def report(self) -> tuple[Path, Path]:
        rows = self.evaluate()
        report_path, summary_path = self.out / "report.csv", self.out / "summary.csv"
        with self._stage("report"):
            t0 = time.perf_counter()
            rows = metrics.build_report(rows)
            metrics.write_report_csv(report_path, rows)
            metrics.write_summary_csv(summary_path, rows)
            self._record("report", "", [report_path, summary_path], time.perf_counter() - t0)
        return report_path, summary_path

    def model_for(self, sid: int, kind: str) -> regress.Regressor:
        """Held-out model of a cell, provided it was fit under the current config."""
        path = self.out / "models" / f"s{sid}-{kind}-test.rgrm"
        if not path.is_file():
            raise ModelNotFound(f"no trained {kind} model for scenario {sid} under {self.out}")
        cell = self._cell(sid, kind, HELD_OUT, self.scenario(sid)[2])
        if not self._fresh(cell["name"], cell["key"]):
            raise ModelNotFound(f"{path} was trained under a different config; rerun train")
        return regress.load_model(path)

    def held_out_queries(self, sid: int) -> np.ndarray:
        """Query-pool rows whose samples sit on the test side of a scenario."""
        samples, _ = self.truth()
        _, test, _ = self.scenario(sid)
        table, _ = self.index()
        _, queries, _ = self.dataset()
        heads = {np.ascontiguousarray(samples[i].features[:-1]).tobytes() for i in test}
        F = radius.extract_feature_matrix(table, queries, 0, self.cfg.features)
        keep = [i for i in range(len(queries)) if np.ascontiguousarray(F[i, :-1]).tobytes() in heads]
        return np.asarray(keep, dtype=np.int64)


DEMO_COLUMNS = (
    "query", "k", "predicted", "start_radius",
    "levels_from_one", "radius_from_one", "recall_from_one",
    "levels_predicted", "radius_predicted", "recall_predicted",
)


@dataclass
class DemoResult:
    rows: list[dict]
    summary: dict

    def write_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=DEMO_COLUMNS, lineterminator="\n")
            w.writeheader()
            w.writerows(self.rows)


def run_query_demo(
    config: ExperimentConfig,
    k: int | None = None,
    count: int | None = None,
    *,
    predictor: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
    scenario: int | None = None,
    kind: str | None = None,
) -> DemoResult:
    """Compare from-1 search against predicted-start search on held-out queries.

    ``predictor(features, queries)`` returns one starting radius per query.
    By default it is the trained held-out model of ``scenario``/``kind``.
    """
    demo = config.demo
    k, count = k or demo.k, count or demo.count
    sid, kind = scenario or demo.scenario, kind or demo.kind
    pipe = Pipeline(config)
    if predictor is None:
        model = pipe.model_for(sid, kind)

        def predictor(F, Q):
            pred = model.predict(F)
            return np.exp2(pred) if config.log_labels else pred

    table, _ = pipe.index()
    data, queries, _ = pipe.dataset()
    ids = pipe.held_out_queries(sid)[:count]
    Q = queries[ids]
    F = radius.extract_feature_matrix(table, Q, k, config.features)
    predicted = np.asarray(predictor(F, Q), dtype=np.float64).ravel()
    params = pipe.params()
    l = lsh.compute_collision_threshold(table.n, table.m, params, override=config.lsh.l)

    rows = []
    for qi, q, r_hat in zip(ids, Q, predicted):
        plan = lsh.make_plan(table, q, k, params, l=l)
        base = lsh.query_knn(table, plan, data)
        fast = lsh.query_knn_predicted(table, plan, data, float(r_hat))
        truth, _ = lsh.brute_force_knn(data, q, len(base.ids))
        want = set(truth.tolist())
        rows.append({
            "query": int(qi), "k": k, "predicted": float(r_hat), "start_radius": fast.start_radius,
            "levels_from_one": base.levels_visited, "radius_from_one": base.terminal_radius,
            "recall_from_one": len(want & set(base.ids.tolist())) / len(want),
            "levels_predicted": fast.levels_visited, "radius_predicted": fast.terminal_radius,
            "recall_predicted": len(want & set(fast.ids.tolist())) / len(want),
        })
    mean = lambda col: float(np.mean([r[col] for r in rows])) if rows else math.nan
    summary = {
        "queries": len(rows),
        "mean_levels_from_one": mean("levels_from_one"),
        "mean_levels_predicted": mean("levels_predicted"),
        "mean_recall_from_one": mean("recall_from_one"),
        "mean_recall_predicted": mean("recall_predicted"),
    }
    return DemoResult(rows, summary)


def run_experiment(config: ExperimentConfig, verb: str = "all"):
    """Run ``verb`` and everything upstream of it; returns the stage's output."""
    pipe = Pipeline(config)
    steps = {
        "index": lambda: pipe.index()[0],
        "truth": lambda: pipe.truth()[0],
        "scenarios": pipe.scenarios,
        "train": pipe.train,
        "eval": pipe.evaluate,
        "report": pipe.report,
        "all": pipe.report,
    }
    if verb not in steps:
        raise ConfigError(f"unknown verb {verb!r}")
    with threadpool_limits(limits=1):
        result = steps[verb]()
    pipe._clear_failed()
    return result
