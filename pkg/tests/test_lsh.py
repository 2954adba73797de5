import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rolsh import lsh
from rolsh.data import split_queries, synth_dataset
from rolsh.errors import (
    DatasetEmpty,
    DimensionMismatch,
    InvalidData,
    InvalidRadius,
    InvalidSensitivity,
    UnsupportedFormat,
)

PARAMS = lsh.SensitivityParams.from_width()


@pytest.fixture(scope="module")
def small():
    X = synth_dataset("sift_like", 1200, 16, seed=21)
    data, queries = split_queries(X, 200, seed=2)
    table = lsh.build_index(data, m=lsh.default_projection_count(PARAMS), seed=5)
    return data, queries, table


class TestBuildIndex:
    def test_single_point_signature(self):
        f = lsh.HashFunction(np.array([1.0, 0.0]), 0.5, 2.184)
        table = lsh.table_from_functions([[3.0, 7.0]], [f])
        assert table.signatures.tolist() == [[1]]
        assert f([3.0, 7.0]) == 1

    def test_origin_hashes_to_zero(self):
        f = lsh.HashFunction(np.array([0.3, -1.2, 4.0]), 0.0, 2.184)
        table = lsh.table_from_functions([[0.0, 0.0, 0.0]], [f])
        assert table.signatures.tolist() == [[0]]

    def test_signatures_match_per_point_recomputation(self):
        X = np.random.default_rng(8).standard_normal((100, 4)) * 3.0
        table = lsh.build_index(X, m=8, w=2.184, seed=17)
        for i, x in enumerate(X):
            for j in range(8):
                exact = math.fsum(table.a[j, t] * x[t] for t in range(4))
                assert table.signatures[i, j] == math.floor((exact + table.b[j]) / table.w)

    def test_functions_are_gaussian_with_offsets_in_range(self):
        table = lsh.build_index(np.zeros((1, 200)), m=50, w=2.184, seed=1)
        assert abs(table.a.mean()) < 0.05 and abs(table.a.std() - 1) < 0.05
        assert np.all((0 <= table.b) & (table.b < table.w))

    def test_seed_determinism(self, small):
        data, _, table = small
        again = lsh.build_index(data, m=table.m, seed=5)
        assert again.signatures.tobytes() == table.signatures.tobytes()
        other = lsh.build_index(data, m=table.m, seed=6)
        assert other.signatures.tobytes() != table.signatures.tobytes()

    def test_errors(self):
        with pytest.raises(DatasetEmpty):
            lsh.build_index(np.empty((0, 3)), m=4)
        bad = np.ones((3, 2))
        bad[2, 1] = np.nan
        with pytest.raises(InvalidData) as err:
            lsh.build_index(bad, m=4)
        assert (err.value.row, err.value.col) == (2, 1)

    def test_table_is_immutable(self, small):
        with pytest.raises(ValueError):
            small[2].signatures[0, 0] = 1


class TestBucketAtLevel:
    def test_examples(self):
        assert lsh.bucket_at_level(5, 1) == 5
        assert lsh.bucket_at_level(5, 4) == 1
        assert lsh.bucket_at_level(-5, 4) == -2

    def test_invalid(self):
        with pytest.raises(InvalidRadius):
            lsh.bucket_at_level(3, 0)
        with pytest.raises(InvalidRadius):
            lsh.bucket_at_level(3, -2)

    def test_nesting_exhaustive(self):
        h = np.arange(-1000, 1001)
        levels = [1, 2, 4, 8, 16, 32, 64]
        for i, r1 in enumerate(levels):
            b1 = lsh.bucket_at_level(h, r1)
            for r2 in levels[i + 1 :]:
                b2 = lsh.bucket_at_level(h, r2)
                same1 = b1[:, None] == b1[None, :]
                same2 = b2[:, None] == b2[None, :]
                assert not np.any(same1 & ~same2)

    def test_array_matches_scalar(self):
        h = np.arange(-50, 51, dtype=np.int32)
        assert lsh.bucket_at_level(h, 8).tolist() == [lsh.bucket_at_level(int(v), 8) for v in h]


class TestCollisionCount:
    def test_identical_point_collides_everywhere(self, small):
        data, _, table = small
        for r in (1, 2, 64, 1024):
            assert lsh.collision_count(table, data[7], 7, r) == table.m

    def test_direct_count(self):
        funcs = [lsh.HashFunction(np.eye(4)[j], 0.0, 1.0) for j in range(4)]
        table = lsh.table_from_functions([[1.0, 2.0, 3.0, 4.0]], funcs)
        assert table.signatures.tolist() == [[1, 2, 3, 4]]
        assert lsh.collision_count(table, [1.0, 2.0, 0.0, 0.0], 0, 1) == 2

    def test_monotone_in_level(self, small):
        data, queries, table = small
        rng = np.random.default_rng(0)
        for _ in range(60):
            q = queries[rng.integers(len(queries))]
            p = int(rng.integers(table.n))
            counts = [lsh.collision_count(table, q, p, 2**i) for i in range(12)]
            assert counts == sorted(counts)

    def test_vectorized_matches_scalar(self, small):
        _, queries, table = small
        qh = table.hash(queries[0])
        counts = lsh.collision_counts(table, qh, 8)
        for p in range(0, table.n, 97):
            assert counts[p] == lsh.collision_count(table, queries[0], p, 8)

    def test_dimension_mismatch(self, small):
        with pytest.raises(DimensionMismatch):
            lsh.collision_count(small[2], np.zeros(3), 0, 1)


class TestThreshold:
    def test_degenerate_limit(self):
        params = lsh.SensitivityParams(p1=1.0, p2=1.0 - 1e-12)
        assert lsh.compute_collision_threshold(1000, 10, params) == 10

    def test_midpoint_arithmetic(self):
        params = lsh.SensitivityParams(p1=0.8, p2=0.6)
        assert lsh.compute_collision_threshold(1000, 100, params) == 70

    def test_rejects_p1_le_p2(self):
        with pytest.raises(InvalidSensitivity):
            lsh.SensitivityParams(p1=0.4, p2=0.6)

    @given(st.floats(0.01, 0.98), st.floats(0.0, 1.0), st.integers(1, 300))
    def test_bounds_and_monotone(self, p2, frac, m):
        lo = lsh.SensitivityParams(p1=p2 + 0.01, p2=p2)
        hi = lsh.SensitivityParams(p1=p2 + 0.01 + frac * (0.999 - p2 - 0.01), p2=p2)
        a = lsh.compute_collision_threshold(100, m, lo)
        b = lsh.compute_collision_threshold(100, m, hi)
        assert 1 <= a <= b <= m

    def test_defaults_from_width(self):
        # Gaussian p-stable collision probabilities for w = 2.184, c = 2
        assert PARAMS.p1 == pytest.approx(0.63935, abs=1e-4)
        assert PARAMS.p2 == pytest.approx(0.39701, abs=1e-4)
        assert lsh.default_projection_count(PARAMS) == 20
        assert lsh.compute_collision_threshold(10**6, 20, PARAMS) == 11

    def test_collision_probability_matches_quadrature(self):
        # independent oracle: P(collision) = int_0^w (1/s) f(t/s) (1 - t/w) dt, f = 2*phi
        from scipy.integrate import quad
        from scipy.stats import norm

        w = 2.184
        for s in (0.5, 1.0, 2.0, 3.7):
            val, _ = quad(lambda t: 2 * norm.pdf(t / s) / s * (1 - t / w), 0, w)
            assert lsh.collision_probability(s, w) == pytest.approx(val, abs=1e-10)

    def test_false_negative_rate_within_delta(self):
        # a true 1-NN within the level radius must reach l collisions
        X = synth_dataset("sift_like", 8000, 32, seed=3)
        data, queries = split_queries(X, 500, seed=4)
        table = lsh.build_index(data, lsh.default_projection_count(PARAMS), seed=9)
        l = lsh.compute_collision_threshold(table.n, table.m, PARAMS)
        misses = 0
        for q in queries:
            nn, dist = lsh.brute_force_knn(data, q, 1)
            r = 1
            while r < dist[0]:
                r *= 2
            misses += lsh.collision_count(table, q, int(nn[0]), r) < l
        assert misses / len(queries) <= PARAMS.delta


class TestSensitivity:
    @pytest.mark.parametrize("R", [1, 4])
    def test_measured_collision_rates(self, R):
        rng = np.random.default_rng(R)
        d, pairs, m = 16, 400, 64
        X = rng.normal(0, 50.0, (pairs, d))
        u = rng.standard_normal((pairs, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        near = X + u * rng.uniform(0.2 * R, R, pairs)[:, None]
        far = X + u * rng.uniform(2.0 * R * 1.01, 3.0 * R, pairs)[:, None]
        table = lsh.build_index(X, m=m, seed=R + 100)
        for other, bound, sign in ((near, PARAMS.p1, 1), (far, PARAMS.p2, -1)):
            hy = table.hash(other)
            rate = np.mean(table.signatures // R == hy // R)
            sigma = math.sqrt(bound * (1 - bound) / (pairs * m))
            if sign > 0:
                assert rate >= bound - 3 * sigma
            else:
                assert rate <= bound + 3 * sigma


class TestQueryKnn:
    def test_single_point_dataset(self):
        data = np.array([[5.0, -3.0, 2.0]])
        table = lsh.build_index(data, m=16, seed=0)
        q = np.array([40.0, 12.0, -9.0])
        res = lsh.query_knn(table, lsh.make_plan(table, q, 1, PARAMS), data)
        assert res.ids.tolist() == [0]
        l = lsh.compute_collision_threshold(1, 16, PARAMS)
        first = next(r for r in (2**i for i in range(40)) if lsh.collision_count(table, q, 0, r) >= l)
        assert res.terminal_radius == first

    def test_query_equal_to_stored_point(self, small):
        data, _, table = small
        res = lsh.query_knn(table, lsh.make_plan(table, data[42], 1, PARAMS), data)
        assert res.ids[0] == 42 and res.distances[0] == 0.0
        assert res.terminal_radius == 1 and res.levels_visited == 1

    def test_c_approximation_against_brute_force(self):
        X = synth_dataset("sift_like", 1200, 16, seed=31)
        data, queries = split_queries(X, 200, seed=32)
        table = lsh.build_index(data, lsh.default_projection_count(PARAMS), seed=33)
        good = 0
        for q in queries:
            res = lsh.query_knn(table, lsh.make_plan(table, q, 10, PARAMS), data)
            _, true = lsh.brute_force_knn(data, q, 10)
            good += np.all(res.distances <= PARAMS.c * true[-1])
        assert good / len(queries) >= 1 - PARAMS.delta

    def test_result_invariants(self, small):
        data, queries, table = small
        for q in queries[:40]:
            res = lsh.query_knn(table, lsh.make_plan(table, q, 15, PARAMS), data)
            assert len(res.ids) == 15
            assert np.all(np.diff(res.distances) >= 0)
            direct = np.array([math.sqrt(math.fsum((data[i] - q) ** 2)) for i in res.ids])
            np.testing.assert_allclose(res.distances, direct, rtol=1e-9)
            assert res.terminal_radius >= res.start_radius
            assert lsh.is_level(res.terminal_radius)

    def test_k_larger_than_n_is_clamped(self):
        data = np.random.default_rng(0).normal(0, 10, (5, 3))
        table = lsh.build_index(data, m=16, seed=0)
        with pytest.warns(RuntimeWarning):
            res = lsh.query_knn(table, lsh.make_plan(table, data[0], 9, PARAMS), data)
        assert res.clamped and len(res.ids) == 5

    def test_candidate_sets_nested(self, small):
        data, queries, table = small
        l = lsh.compute_collision_threshold(table.n, table.m, PARAMS)
        for q in queries[:20]:
            qh = table.hash(q)
            prev = None
            for i in range(11):
                cand = set(np.flatnonzero(lsh.collision_counts(table, qh, 2**i) >= l))
                if prev is not None:
                    assert prev <= cand
                prev = cand

    def test_dimension_mismatch(self, small):
        data, _, table = small
        plan = lsh.make_plan(table, np.zeros(table.d), 1, PARAMS)
        with pytest.raises(DimensionMismatch):
            lsh.query_knn(table, plan, data[:, :3])

    def test_terminal_radii_matches_per_k_search(self, small):
        data, queries, table = small
        ks = [1, 10, 25, 50, 100]
        l = lsh.compute_collision_threshold(table.n, table.m, PARAMS)
        for q in queries[:25]:
            multi = lsh.terminal_radii(table, data, q, ks, l)
            for k in ks:
                single = lsh.query_knn(table, lsh.make_plan(table, q, k, PARAMS), data)
                assert multi[k] == single.terminal_radius


class TestPredictedStart:
    def test_prediction_one_is_identical(self, small):
        data, queries, table = small
        for q in queries[:20]:
            plan = lsh.make_plan(table, q, 10, PARAMS)
            a = lsh.query_knn(table, plan, data)
            b = lsh.query_knn_predicted(table, plan, data, 1.0)
            assert a.ids.tobytes() == b.ids.tobytes()
            assert a.distances.tobytes() == b.distances.tobytes()
            assert (a.terminal_radius, a.levels_visited, a.candidates) == (
                b.terminal_radius,
                b.levels_visited,
                b.candidates,
            )

    def test_replay_of_terminal_radius(self, small):
        data, queries, table = small
        for q in queries[:30]:
            plan = lsh.make_plan(table, q, 10, PARAMS)
            base = lsh.query_knn(table, plan, data)
            res = lsh.query_knn_predicted(table, plan, data, float(base.terminal_radius))
            assert res.levels_visited == 1
            assert res.ids.tolist() == base.ids.tolist()

    def test_overshoot_recall_not_worse(self, small):
        data, queries, table = small
        for q in queries[:30]:
            plan = lsh.make_plan(table, q, 10, PARAMS)
            base = lsh.query_knn(table, plan, data)
            big = lsh.query_knn_predicted(table, plan, data, base.terminal_radius * 8.0)
            true, _ = lsh.brute_force_knn(data, q, 10)
            recall = lambda r: len(set(r.ids) & set(true)) / 10
            assert recall(big) >= recall(base)
            # the k nearest among the candidates verified at that level
            l = plan.l
            cand = np.flatnonzero(lsh.collision_counts(table, table.hash(q), big.terminal_radius) >= l)
            if big.terminal_radius >= table.saturation_level(table.hash(q)):
                cand = np.arange(table.n)
            best, _ = lsh.brute_force_knn(data[cand], q, 10)
            assert sorted(cand[best]) == sorted(big.ids)

    def test_undershoot_matches_from_one(self, small):
        data, queries, table = small
        for q in queries[:30]:
            plan = lsh.make_plan(table, q, 10, PARAMS)
            base = lsh.query_knn(table, plan, data)
            if base.terminal_radius < 4:
                continue
            res = lsh.query_knn_predicted(table, plan, data, base.terminal_radius / 3.0)
            assert res.ids.tolist() == base.ids.tolist()
            assert res.terminal_radius == base.terminal_radius
            assert res.levels_visited < base.levels_visited

    def test_non_finite_prediction_falls_back(self, small):
        data, queries, table = small
        plan = lsh.make_plan(table, queries[0], 5, PARAMS)
        base = lsh.query_knn(table, plan, data)
        for bad in (np.nan, np.inf):
            res = lsh.query_knn_predicted(table, plan, data, bad)
            assert res.fallback and res.start_radius == 1
            assert res.ids.tolist() == base.ids.tolist()

    @given(st.floats(-10, 1e12, allow_nan=False))
    def test_snap_radius(self, r):
        s = lsh.snap_radius(r)
        assert lsh.is_level(s)
        assert s <= max(r, 1.0) < 2 * s


class TestPersistence:
    def test_round_trip_bit_exact(self, small, tmp_path):
        _, _, table = small
        path = tmp_path / "idx.rolsh"
        lsh.save_index(table, path)
        back = lsh.load_index(path)
        assert back.to_bytes() == table.to_bytes()
        assert back.a.tobytes() == table.a.tobytes()
        assert back.signatures.tobytes() == table.signatures.tobytes()
        assert (back.w, back.seed, back.n, back.m, back.d) == (table.w, table.seed, table.n, table.m, table.d)

    def test_layout(self):
        table = lsh.build_index(np.array([[1.0, 2.0], [3.0, -4.0]]), m=3, seed=2**63 + 5)
        blob = table.to_bytes()
        assert blob[:6] == b"ROLSH1"
        assert np.frombuffer(blob[6:18], "<u4").tolist() == [2, 2, 3]
        assert np.frombuffer(blob[18:26], "<f8")[0] == 2.184
        assert np.frombuffer(blob[26:34], "<u8")[0] == 2**63 + 5
        assert len(blob) == 34 + 3 * 3 * 8 + 2 * 3 * 4

    def test_rejects_bad_magic(self):
        with pytest.raises(UnsupportedFormat):
            lsh.ProjectionTable.from_bytes(b"NOTIDX" + b"\0" * 40)


class TestHugeLevels:
    def test_levels_past_int32_match_python_division(self):
        h = np.array([-(2**31), -5, -1, 0, 3, 2**31 - 1], dtype=np.int32)
        for r in (2**31, 2**33, 2**62):
            expected = [int(v) // r for v in h]
            assert lsh.bucket_at_level(h, r).tolist() == expected

    def test_collision_counts_at_huge_level_is_full(self):
        rng = np.random.default_rng(0)
        data = rng.normal(size=(50, 4))
        table = lsh.build_index(data, 8, seed=1)
        counts = lsh.collision_counts(table, table.hash(data[0]), 2**40)
        assert counts.max() <= 8 and counts[0] == 8
