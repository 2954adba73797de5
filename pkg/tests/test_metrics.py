import csv
import math
import threading
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rolsh import metrics, regress
from rolsh.errors import DimensionMismatch, DuplicateCell, EmptyInput, TimingIsolationError, ZeroVariance
from rolsh.metrics import HELD_OUT, MetricSet, ReportRow

KINDS = [k.value for k in regress.RegressorKind]


def _exact_r2(y, yhat):
    # rational arithmetic oracle
    y = [Fraction(v) for v in y]
    yhat = [Fraction(v) for v in yhat]
    ybar = sum(y) / len(y)
    tot = sum((v - ybar) ** 2 for v in y)
    return float(sum((v - ybar) ** 2 for v in yhat) / tot), float(1 - sum((a - b) ** 2 for a, b in zip(y, yhat)) / tot)


class TestMse:
    def test_examples(self):
        assert metrics.mse([1, 2, 3], [1, 2, 3]) == 0.0
        assert metrics.mse([0, 0, 0, 0], [2, 2, 2, 2]) == 4.0
        assert metrics.mse([1, 2], [2, 4]) == 2.5

    def test_errors(self):
        with pytest.raises(DimensionMismatch):
            metrics.mse([1, 2], [1])
        with pytest.raises(EmptyInput):
            metrics.mse([], [])

    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30), st.floats(-10, 10))
    def test_residual_sign_symmetry(self, y, r):
        y = np.array(y)
        assert metrics.mse(y, y + r) == pytest.approx(metrics.mse(y, y - r), rel=1e-12, abs=1e-12)


class TestRSquared:
    def test_explained_variance_form_examples(self):
        y = np.array([1.0, 4.0, 2.0, 8.0])
        assert metrics.r_squared_paper(y, y) == 1.0
        assert metrics.r_squared_paper(y, np.full(4, y.mean())) == 0.0

    def test_standard_examples(self):
        y = np.array([3.0, -1.0, 2.0, 7.0])
        assert metrics.r_squared_standard(y, y) == 1.0
        assert metrics.r_squared_standard(y, np.full(4, y.mean())) == 0.0

    def test_forms_disagree_off_least_squares(self):
        y = np.array([1.0, 2.0, 6.0, 3.0, 9.0])
        bad = -y + 2 * y.mean()
        assert metrics.r_squared_standard(y, bad) == pytest.approx(-3.0, abs=1e-12)
        assert metrics.r_squared_paper(y, bad) == pytest.approx(1.0, abs=1e-12)

    def test_against_rational_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            y = rng.normal(0, 5, 12)
            yhat = y + rng.normal(0, 2, 12)
            rp, rs = _exact_r2(y, yhat)
            assert metrics.r_squared_paper(y, yhat) == pytest.approx(rp, abs=1e-12)
            assert metrics.r_squared_standard(y, yhat) == pytest.approx(rs, abs=1e-12)

    def test_ols_identity(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            n, f = int(rng.integers(10, 80)), int(rng.integers(1, 6))
            X = rng.normal(0, 3, (n, f))
            y = X @ rng.normal(0, 1, f) + rng.normal(0, 2, n)
            yhat = regress.fit("linear", None, X, y).predict(X)
            assert abs(metrics.r_squared_paper(y, yhat) - metrics.r_squared_standard(y, yhat)) <= 1e-9

    def test_scale_invariance(self):
        y = np.array([1.0, 3.0, 2.0, 5.0])
        yhat = np.array([1.5, 2.5, 2.0, 4.0])
        for s in (0.01, 3.0, 1e4):
            assert metrics.r_squared_paper(s * y, s * yhat) == pytest.approx(metrics.r_squared_paper(y, yhat), rel=1e-12)
            assert metrics.r_squared_standard(s * y, s * yhat) == pytest.approx(metrics.r_squared_standard(y, yhat), rel=1e-12)

    def test_zero_variance(self):
        with pytest.raises(ZeroVariance):
            metrics.r_squared_paper([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])
        with pytest.raises(ZeroVariance):
            metrics.r_squared_standard([2.0, 2.0], [1.0, 2.0])

    def test_metric_set_nan_on_zero_variance(self):
        ms = MetricSet.score([1.0, 1.0, 1.0], [1.0, 2.0, 1.0])
        assert math.isnan(ms.r2_paper) and ms.mse == pytest.approx(1 / 3)


@pytest.fixture(scope="module")
def linear():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(400, 21))
    return regress.fit("linear", None, X, X @ rng.normal(size=21))


class TestTiming:
    def test_requires_three_repetitions(self, linear):
        with pytest.raises(ValueError):
            metrics.time_predictions(linear, np.zeros((3, 21)), repetitions=2)

    def test_stability(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(2000, 21))
        model = regress.fit("gradient_boosting", {"n_estimators": 40}, X, X[:, 0])
        a = metrics.time_predictions(model, X, 5)
        b = metrics.time_predictions(model, X, 5)
        assert abs(a - b) < 0.5 * max(a, b)

    def test_linear_scaling(self, linear):
        rng = np.random.default_rng(4)
        small = rng.normal(size=(200000, 21))
        big = np.vstack([small, small])
        t1 = metrics.time_predictions(linear, small, 7)
        t2 = metrics.time_predictions(linear, big, 7)
        assert t2 <= 2 * t1 * 1.5

    def test_svr_slower_than_linear(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(3000, 21))
        y = np.sin(X[:, 0]) * 3 + X[:, 1] ** 2
        svr = regress.fit("svr", None, X, y)
        assert len(svr.dual_coef_) >= 500
        lin = regress.fit("linear", None, X, y)
        batch = X[:2000]
        assert metrics.time_predictions(lin, batch) < metrics.time_predictions(svr, batch)

    def test_refuses_with_extra_threads(self, linear):
        stop = threading.Event()
        worker = threading.Thread(target=stop.wait)
        worker.start()
        try:
            with pytest.raises(TimingIsolationError):
                metrics.time_predictions(linear, np.zeros((5, 21)))
        finally:
            stop.set()
            worker.join()


def _rows(datasets=("d",), scenarios=range(1, 6), folds=(HELD_OUT,)):
    out = []
    rng = np.random.default_rng(6)
    for d in datasets:
        for s in scenarios:
            for k in KINDS:
                for f in folds:
                    ms = MetricSet(float(rng.uniform(1, 9)), 0.5, 0.4, 1.25, 3.5, 100)
                    out.append(ReportRow(d, s, k, f, ms, 1000, 7, ("standardized",) if k == "svr" else ()))
    return out


class TestReport:
    def test_cardinality(self, tmp_path):
        rows = metrics.build_report(_rows())
        assert len(rows) == 50
        path = tmp_path / "s.csv"
        metrics.write_summary_csv(path, rows)
        with open(path) as fh:
            assert len(list(csv.reader(fh))) == 51

    def test_ordering_stable_under_shuffle(self):
        rows = _rows(datasets=("b", "a"), folds=(HELD_OUT, 0, 1))
        want = metrics.report_records(metrics.build_report(rows))
        rng = np.random.default_rng(7)
        for _ in range(5):
            shuffled = [rows[i] for i in rng.permutation(len(rows))]
            assert metrics.report_records(metrics.build_report(shuffled)) == want
        assert want[0][:4] == ["a", "1", "linear", "-1"]
        assert [r[2] for r in want[: 3 * 10 : 3]] == KINDS

    def test_duplicate_cell(self):
        rows = _rows(scenarios=[1])
        with pytest.raises(DuplicateCell):
            metrics.build_report(rows + rows[:1])

    def test_empty(self):
        with pytest.raises(EmptyInput):
            metrics.build_report([])

    def test_reemit_byte_identical(self, tmp_path):
        rows = metrics.build_report(_rows(folds=(HELD_OUT, 0, 1, 2)))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        metrics.write_report_csv(a, rows)
        metrics.write_report_csv(b, metrics.build_report(metrics.read_report_csv(a)))
        assert a.read_bytes() == b.read_bytes()
        text = a.read_bytes()
        assert b"\r" not in text
        assert text.split(b"\n", 1)[0].decode() == ",".join(metrics.REPORT_COLUMNS)

    def test_summary_statistics(self):
        rows = []
        for f, m in enumerate([1.0, 2.0, 6.0]):
            rows.append(ReportRow("d", 1, "ridge", f, MetricSet(m, 0.5, 0.5, 0.0, 0.0, 10), 90, 0))
        rows.append(ReportRow("d", 1, "ridge", HELD_OUT, MetricSet(4.0, 0.25, 0.2, 1.5, 2.5, 20), 100, 0))
        (rec,) = metrics.summarize_report(rows)
        got = dict(zip(metrics.SUMMARY_COLUMNS, rec))
        assert got["cv_folds"] == "3"
        assert float(got["cv_mse_mean"]) == 3.0
        assert float(got["cv_mse_std"]) == pytest.approx(np.std([1, 2, 6], ddof=1), abs=1e-15)
        assert float(got["test_mse"]) == 4.0 and float(got["predict_ms"]) == 1.5

    def test_full_precision(self, tmp_path):
        ms = MetricSet(1 / 3, math.pi / 4, -math.e, 0.1, 0.2, 3)
        path = tmp_path / "r.csv"
        metrics.write_report_csv(path, [ReportRow("d", 1, "mlp", 0, ms, 9, 1)])
        (back,) = metrics.read_report_csv(path)
        assert back.metrics == ms


class TestEvaluate:
    def test_uses_injected_timer(self):
        X = np.arange(20.0)[:, None]
        model = regress.fit("linear", None, X, 3 * X.ravel())
        ms = metrics.evaluate(model, X, 3 * X.ravel(), timer=lambda m, x, r: 42.0)
        assert ms.predict_time_ms == 42.0 and ms.mse == pytest.approx(0.0, abs=1e-20)
        assert ms.n_eval == 20
