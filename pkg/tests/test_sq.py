import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from qireg.sq import (QueryLedger, SamplingError, build_matrix, build_vector, make_rng,
                      mat_fro_norm, mat_query, mat_row_norm, mat_sample1, mat_sample1_many,
                      mat_sample2, mat_sample2_many, tree_discrepancy, vec_norm, vec_query,
                      vec_sample, vec_sample_many)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def freq(draws, size):
    return np.bincount(draws, minlength=size) / len(draws)


class TestVector:
    def test_norm_of_3_4(self):
        sv = build_vector([3, 4])
        assert sv.sqnorm == 25
        assert sv.norm() == 5

    def test_empty_rejected(self):
        with pytest.raises(SamplingError, match="empty vector"):
            build_vector([])

    def test_ones_leaves(self):
        sv = build_vector([1, 1, 1, 1])
        assert sv.sqnorm == 4
        assert np.all(sv.tree[sv.cap:sv.cap + 4] == 1)

    def test_non_finite_rejected(self):
        with pytest.raises(SamplingError):
            build_vector([1.0, np.nan])

    def test_frozen(self):
        sv = build_vector([1.0, 2.0])
        with pytest.raises(ValueError):
            sv.values[0] = 5.0

    def test_query_and_norm(self):
        sv = build_vector([3, 4])
        assert vec_query(sv, 1) == 4
        assert vec_norm(sv) == 5
        assert vec_norm(build_vector([0])) == 0
        with pytest.raises(SamplingError):
            vec_query(sv, 2)

    def test_sample_probabilities_3_4(self):
        rng = make_rng(1)
        f = freq(vec_sample_many(build_vector([3, 4]), rng, 100_000), 2)
        assert abs(f[0] - 0.36) < 0.01 and abs(f[1] - 0.64) < 0.01

    def test_single_mass_point(self):
        rng = make_rng(2)
        sv = build_vector([0, 0, 5])
        assert {vec_sample(sv, rng) for _ in range(200)} == {2}

    def test_uniform_chi_square(self):
        counts = np.bincount(vec_sample_many(build_vector([1, 1, 1, 1]), make_rng(3), 100_000), minlength=4)
        chi2 = stats.chisquare(counts).statistic
        assert chi2 < stats.chi2.ppf(0.999, 3)

    def test_zero_vector_cannot_sample(self):
        with pytest.raises(SamplingError, match="zero vector"):
            vec_sample(build_vector([0.0, 0.0]), make_rng(0))

    def test_tree_reads_ceil_log2(self):
        for n in (1, 2, 3, 7, 8, 9, 100):
            sv = build_vector(np.ones(n))
            led = QueryLedger()
            vec_sample_many(sv, make_rng(0), 10, led)
            assert led.tree_reads == 10 * math.ceil(math.log2(n))
            assert led["sample"] == 10

    @settings(max_examples=50, deadline=None)
    @given(st.lists(finite, min_size=1, max_size=64))
    def test_tree_consistency(self, vals):
        sv = build_vector(vals)
        assert tree_discrepancy(sv.tree, sv.cap) <= 1e-12

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=64), st.integers(0, 2**32))
    def test_zero_entries_never_sampled(self, vals, seed):
        v = np.array(vals)
        if not np.any(v * v > 0):
            return
        draws = vec_sample_many(build_vector(v), make_rng(seed), 2000)
        assert np.all(v[draws] != 0)

    def test_distribution_tv_random(self):
        rng = make_rng(4)
        v = rng.standard_normal(64)
        p = v * v / np.sum(v * v)
        f = freq(vec_sample_many(build_vector(v), rng, 100_000), 64)
        assert 0.5 * np.abs(f - p).sum() < 0.02

    def test_determinism(self):
        sv = build_vector(np.arange(1.0, 20.0))
        a = vec_sample_many(sv, make_rng(9), 50)
        b = vec_sample_many(sv, make_rng(9), 50)
        assert np.array_equal(a, b)


class TestMatrix:
    def test_identity(self):
        sm = build_matrix(np.eye(2))
        assert sm.fro_sq == 2
        assert np.allclose(np.sqrt(sm.row_sq), [1, 1])

    def test_rank_one(self):
        sm = build_matrix([[1, 2], [2, 4]])
        assert sm.fro_sq == 25
        assert mat_row_norm(sm, 0) == pytest.approx(math.sqrt(5))
        assert mat_row_norm(sm, 1) == pytest.approx(2 * math.sqrt(5))
        assert mat_fro_norm(sm) == pytest.approx(5)

    def test_zero_matrix_builds_but_cannot_sample(self):
        sm = build_matrix(np.zeros((3, 3)))
        assert sm.fro_sq == 0
        with pytest.raises(SamplingError, match="zero matrix"):
            mat_sample1(sm, make_rng(0))

    def test_ragged_and_empty(self):
        with pytest.raises(SamplingError, match="ragged"):
            build_matrix([[1, 2], [3]])
        with pytest.raises(SamplingError, match="empty"):
            build_matrix(np.zeros((0, 3)))

    def test_sample1_diag(self):
        f = freq(mat_sample1_many(build_matrix(np.diag([1.0, 2.0])), make_rng(5), 100_000), 2)
        assert abs(f[1] - 0.8) < 0.01

    def test_sample2_and_zero_row(self):
        sm = build_matrix([[3, 4], [0, 0]])
        f = freq(mat_sample2_many(sm, 0, make_rng(6), 100_000), 2)
        assert abs(f[1] - 0.64) < 0.01
        with pytest.raises(SamplingError, match="zero row"):
            mat_sample2(sm, 1, make_rng(0))

    def test_query_and_ledger(self):
        sm = build_matrix([[1, 2], [3, 4]])
        led = QueryLedger()
        assert mat_query(sm, 1, 0, led) == 3
        mat_sample1(sm, make_rng(0), led)
        mat_sample2(sm, 0, make_rng(0), led)
        assert led.as_dict() == {"sample": 0, "sample1": 1, "sample2": 1, "query": 1, "norm": 0}
        assert led.total == 3

    def test_row_tree_leaves_match_rownorm_tree(self):
        rng = make_rng(7)
        sm = build_matrix(rng.standard_normal((9, 13)))
        assert np.array_equal(sm.row_trees[:, 1], sm.row_sq)
        assert tree_discrepancy(sm.rownorms.tree, sm.rownorms.cap) <= 1e-12
        for i in range(9):
            assert tree_discrepancy(sm.row_trees[i], sm.cap) <= 1e-12

    def test_joint_distribution(self):
        rng = make_rng(8)
        A = rng.standard_normal((4, 5))
        A[1, 2] = 0.0
        sm = build_matrix(A)
        rows = mat_sample1_many(sm, rng, 100_000)
        cols = np.array([mat_sample2(sm, int(r), rng) for r in rows[:20_000]])
        counts = np.zeros_like(A)
        np.add.at(counts, (rows[:20_000], cols), 1)
        p = A * A / np.sum(A * A)
        assert counts[1, 2] == 0
        assert 0.5 * np.abs(counts / 20_000 - p).sum() < 0.03


def test_ledger_merge_and_validation():
    a, b = QueryLedger(query=3), QueryLedger(norm=2)
    a.merge(b)
    assert a["query"] == 3 and a["norm"] == 2
    with pytest.raises(KeyError):
        a.add("bogus")
    with pytest.raises(ValueError):
        a.add("query", -1)
