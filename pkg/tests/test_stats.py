from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurofuse.errors import NumericalError, ValidationError
from neurofuse.stats import (
    chi_square_2x2,
    fdr_bh,
    hedges_g,
    one_way_anova,
    pearson,
    permutation_test,
    student_t,
    student_t_summary,
)

from oracles import bh_reject_bruteforce, chi_square, hedges, pearson_cov, pooled_t

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
samples = st.lists(finite, min_size=3, max_size=25).filter(lambda v: np.ptp(v) > 1e-6)


# ---------------------------------------------------------------- t tests


def test_identical_samples_give_zero_t():
    x = [1.0, 2.0, 4.0, 7.0]
    res = student_t(x, x)
    assert res.statistic == 0.0
    assert res.p_value == pytest.approx(1.0)


def test_student_t_matches_formula_oracle():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a = rng.normal(0, 1, rng.integers(2, 30))
        b = rng.normal(0.3, 2, rng.integers(2, 30))
        assert student_t(a, b).statistic == pytest.approx(pooled_t(a, b), abs=1e-12, rel=1e-12)


def test_singleton_sample_rejected():
    with pytest.raises(ValidationError):
        student_t([1.0], [1.0, 2.0, 3.0])


def test_summary_t_anchor():
    res = student_t_summary(49.24, 10.99, 70, 54.84, 9.78, 180)
    assert res.statistic == pytest.approx(-3.92, abs=0.01)
    assert res.p_value == pytest.approx(1.15e-4, abs=5e-6)
    assert res.df == 248


def test_summary_t_equal_means():
    assert student_t_summary(5.0, 1.0, 10, 5.0, 2.0, 12).statistic == 0.0


def test_summary_matches_raw_data():
    rng = np.random.default_rng(8)
    a = rng.normal(3, 2, 15)
    b = rng.normal(4, 1, 22)
    raw = student_t(a, b)
    summ = student_t_summary(a.mean(), a.std(ddof=1), a.size, b.mean(), b.std(ddof=1), b.size)
    assert summ.statistic == pytest.approx(raw.statistic, abs=1e-12)
    assert summ.p_value == pytest.approx(raw.p_value, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(samples, samples)
def test_student_t_antisymmetric(a, b):
    ab, ba = student_t(a, b), student_t(b, a)
    assert ab.statistic == pytest.approx(-ba.statistic, abs=1e-9)
    assert ab.p_value == pytest.approx(ba.p_value, abs=1e-12)


# ---------------------------------------------------------------- chi-square


def test_chi_square_anchor():
    res = chi_square_2x2([[52, 18], [135, 45]])
    assert res.statistic == pytest.approx(0.0136, abs=5e-4)
    assert res.p_value == pytest.approx(0.907, abs=5e-3)


def test_proportional_table_gives_zero():
    assert chi_square_2x2([[10, 20], [30, 60]]).statistic == pytest.approx(0.0, abs=1e-12)


def test_chi_square_matches_direct_sum():
    rng = np.random.default_rng(5)
    for _ in range(100):
        table = rng.integers(1, 80, (2, 2))
        assert chi_square_2x2(table).statistic == pytest.approx(chi_square(table), rel=1e-12, abs=1e-12)


def test_chi_square_rejects_empty_margin():
    with pytest.raises((ValidationError, NumericalError)):
        chi_square_2x2([[0, 0], [3, 4]])


# ---------------------------------------------------------------- Hedges' g


def test_hedges_equal_means():
    assert hedges_g([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]).g == 0.0


def test_hedges_unit_difference_plugin():
    # two samples of 5 with pooled sd 1 and means 1 apart
    base = np.array([-2.0, -1.0, 0.0, 1.0, 2.0]) / np.sqrt(2.5)
    es = hedges_g(base + 1.0, base)
    assert (es.m1 - es.m2) / es.s == pytest.approx(1.0, abs=1e-12)
    assert es.g == pytest.approx(28 / 31, abs=1e-12)


def test_hedges_matches_oracle():
    rng = np.random.default_rng(11)
    for _ in range(100):
        a = rng.normal(0, rng.uniform(0.5, 3), rng.integers(2, 40))
        b = rng.normal(1, rng.uniform(0.5, 3), rng.integers(2, 40))
        assert hedges_g(a, b).g == pytest.approx(hedges(a, b), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(samples, samples, st.floats(-100, 100))
def test_hedges_shift_invariant_and_sign_equivariant(a, b, c):
    g = hedges_g(a, b).g
    shifted = hedges_g(np.add(a, c), np.add(b, c)).g
    assert shifted == pytest.approx(g, abs=1e-6 * max(1, abs(g)))
    assert hedges_g(np.negative(a), np.negative(b)).g == pytest.approx(-g, abs=1e-9)


# ---------------------------------------------------------------- BH-FDR


def test_fdr_nothing_rejected_when_all_one():
    assert not fdr_bh([1.0] * 6).reject.any()


def test_fdr_single_small_p():
    assert fdr_bh([0.01], 0.05).reject.tolist() == [True]


def test_fdr_worked_example_rejects_first_two():
    p = [0.01, 0.02, 0.04, 0.20, 0.50]
    res = fdr_bh(p, 0.05)
    assert res.reject.tolist() == [True, True, False, False, False]
    assert res.reject.tolist() == bh_reject_bruteforce(p, 0.05).tolist()


pvals = st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=40)


@settings(max_examples=150, deadline=None)
@given(pvals, st.floats(0.001, 0.5))
def test_fdr_matches_bruteforce(p, q):
    assert fdr_bh(p, q).reject.tolist() == bh_reject_bruteforce(p, q).tolist()


@settings(max_examples=100, deadline=None)
@given(pvals, st.floats(0.001, 0.5), st.floats(0.001, 0.5))
def test_fdr_monotone_in_q(p, q1, q2):
    lo, hi = sorted((q1, q2))
    r_lo, r_hi = fdr_bh(p, lo).reject, fdr_bh(p, hi).reject
    assert not (r_lo & ~r_hi).any()


def test_fdr_adjusted_values_bounded_and_monotone():
    rng = np.random.default_rng(2)
    p = rng.random(30) ** 3
    adj = fdr_bh(p, 0.05).p_adjusted
    assert np.all(adj >= p - 1e-15) and np.all(adj <= 1)
    order = np.argsort(p)
    assert np.all(np.diff(adj[order]) >= -1e-15)


# ---------------------------------------------------------------- ANOVA


def test_anova_equal_means():
    res = one_way_anova([[1.0, 2.0, 3.0], [0.0, 2.0, 4.0], [2.0, 2.0 - 1e-3, 2.0 + 1e-3]])
    assert res.statistic == pytest.approx(0.0, abs=1e-12)
    assert res.p_value == pytest.approx(1.0)


def test_anova_single_group_rejected():
    with pytest.raises(ValidationError):
        one_way_anova([[1.0, 2.0, 3.0]])


@settings(max_examples=60, deadline=None)
@given(samples, samples)
def test_anova_two_groups_is_t_squared(a, b):
    f = one_way_anova([a, b]).statistic
    t = student_t(a, b).statistic
    assert f == pytest.approx(t * t, rel=1e-10, abs=1e-10)


# ---------------------------------------------------------------- Pearson


def test_pearson_exact_lines():
    x = np.arange(10.0)
    assert pearson(x, 2 * x + 1).statistic == pytest.approx(1.0)
    assert pearson(x, -x).statistic == pytest.approx(-1.0)


def test_pearson_matches_covariance_definition():
    rng = np.random.default_rng(4)
    for _ in range(50):
        x = rng.normal(size=20)
        y = 0.5 * x + rng.normal(size=20)
        assert pearson(x, y).statistic == pytest.approx(pearson_cov(x, y), abs=1e-12)


def test_pearson_constant_input():
    with pytest.raises(NumericalError):
        pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


# ---------------------------------------------------------------- permutation


def test_permutation_add_one_floor():
    # no relabelling of two well-separated groups of 50 matches the observed split
    separated = permutation_test(np.arange(50.0) + 1000, np.arange(50.0), n_perm=99, seed=0)
    assert separated.p_value == pytest.approx(1 / 100)


def test_permutation_seed_reproducible():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=12), rng.normal(size=15)
    assert permutation_test(a, b, n_perm=500, seed=7).p_value == permutation_test(a, b, n_perm=500, seed=7).p_value


def test_permutation_identical_groups():
    x = [1.0, 3.0, 2.0, 5.0]
    assert permutation_test(x, x, n_perm=200).p_value == 1.0


@settings(max_examples=30, deadline=None)
@given(samples, samples, st.integers(0, 1000), st.sampled_from(["mean_diff", "t"]))
def test_permutation_swap_invariant(a, b, seed, stat):
    ab = permutation_test(a, b, statistic=stat, n_perm=200, seed=seed)
    ba = permutation_test(b, a, statistic=stat, n_perm=200, seed=seed)
    assert ab.p_value == ba.p_value
    assert ab.statistic == pytest.approx(-ba.statistic, abs=1e-9)


def test_permutation_agrees_with_analytic_t():
    rng = np.random.default_rng(21)
    a = rng.normal(0, 1, 40)
    b = rng.normal(0.4, 1, 40)
    perm = permutation_test(a, b, statistic="t", n_perm=10_000, seed=3)
    assert perm.p_value == pytest.approx(student_t(a, b).p_value, abs=0.02)


def test_permutation_empty_group():
    with pytest.raises(ValidationError):
        permutation_test([], [1.0, 2.0])
