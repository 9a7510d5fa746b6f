from __future__ import annotations

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from neurofuse.errors import ValidationError
from neurofuse.ingest import (
    ClinicalRecord,
    CovariateDesign,
    VoxelFeatureMatrix,
    assemble_joint_matrix,
    drop_subjects,
    impute_clinical,
    impute_winsorized,
    regress_covariates,
    screen_outliers,
)

from oracles import winsorized_fill


def _matrix(values, gm=None):
    values = np.asarray(values, dtype=float)
    gm = values.shape[1] // 2 if gm is None else gm
    return VoxelFeatureMatrix(values, gm, values.shape[1] - gm, [f"s{i}" for i in range(values.shape[0])])


# ---------------------------------------------------------------- imputation


def test_complete_list_unchanged():
    values = [float(v) for v in range(1, 21)]
    assert impute_winsorized(values, 0.05) == values


def test_winsorized_fill_hand_value():
    values = [float(v) for v in range(1, 21)]
    values[9] = None  # drop the 10
    out = impute_winsorized(values, 0.05)
    # 19 observed, k = round(0.95) = 1: 1 -> 2 and 20 -> 19
    expected = (2 + sum(range(2, 10)) + sum(range(11, 20)) + 19) / 19
    assert expected == pytest.approx(200 / 19)
    assert out[9] == pytest.approx(expected, abs=1e-12)
    assert out[:9] == values[:9]


def test_all_missing_rejected():
    with pytest.raises(ValidationError, match="no data to impute"):
        impute_winsorized([None, None], 0.05)


def test_bad_fraction_rejected():
    with pytest.raises(ValidationError):
        impute_winsorized([1.0, None], 0.6)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.one_of(st.none(), st.floats(-1e4, 1e4)), min_size=1, max_size=40).filter(
        lambda v: any(x is not None for x in v)
    ),
    st.floats(0, 0.45),
)
def test_imputation_matches_oracle_and_is_idempotent(values, fraction):
    out = impute_winsorized(values, fraction)
    observed = [v for v in values if v is not None]
    fill = winsorized_fill(observed, fraction)
    for v, o in zip(values, out):
        if v is None:
            assert o == pytest.approx(fill, rel=1e-12, abs=1e-9)
        else:
            assert o == v
    assert impute_winsorized(out, fraction) == out


def test_clinical_imputation_only_touches_pd():
    recs = [
        ClinicalRecord("h1", "HC", 50, "M"),
        ClinicalRecord("p1", "PD", 60, "F", updrs_off=30.0, age_at_onset=50.0),
        ClinicalRecord("p2", "PD", 40, "M", updrs_off=None, age_at_onset=None),
        ClinicalRecord("p3", "PD", 70, "M", updrs_off=20.0, age_at_onset=60.0),
    ]
    out = impute_clinical(recs, 0.0)
    assert out[0].updrs_off is None
    assert out[2].updrs_off == pytest.approx(25.0)
    # the winsorized mean onset (55) would exceed this patient's age
    assert out[2].age_at_onset == pytest.approx(40.0)
    assert out[1].hy is None  # missing for every PD patient


def test_record_invariants():
    with pytest.raises(ValidationError):
        ClinicalRecord("x", "XX", 50, "M")
    with pytest.raises(ValidationError):
        ClinicalRecord("x", "PD", 50, "M", age_at_onset=51.0)
    with pytest.raises(ValidationError):
        ClinicalRecord("x", "PD", 0, "M")


# ---------------------------------------------------------------- covariates


def _design(n, rng):
    ages = rng.uniform(20, 80, n)
    genders = rng.choice(["M", "F"], n)
    return ages, genders, CovariateDesign.from_demographics(ages, genders)


def test_constant_covariates_leave_data_unchanged():
    rng = np.random.default_rng(0)
    values = rng.normal(size=(6, 8))
    design = CovariateDesign.from_demographics([50.0] * 6, ["M"] * 6)
    out = regress_covariates(_matrix(values), design)
    np.testing.assert_allclose(out.values, values, atol=1e-12)


def test_planted_age_effect_removed():
    rng = np.random.default_rng(1)
    n = 40
    ages, genders, design = _design(n, rng)
    values = rng.normal(size=(n, 10))
    values[:, 3] = 3 * ages + rng.normal(0, 0.1, n)
    out = regress_covariates(_matrix(values), design)
    r = np.corrcoef(out.values[:, 3], ages)[0, 1]
    assert abs(r) < 1e-10


def test_duplicated_age_column_is_rank_error():
    rng = np.random.default_rng(2)
    ages = rng.uniform(20, 80, 10)
    mat = np.column_stack([np.ones(10), ages, ages])
    design = CovariateDesign(mat, ["intercept", "age", "age_copy"])
    with pytest.raises(ValidationError, match="age_copy"):
        regress_covariates(_matrix(rng.normal(size=(10, 4))), design)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(8, 30))
def test_regression_orthogonal_and_mean_preserving(seed, n):
    rng = np.random.default_rng(seed)
    ages, genders, design = _design(n, rng)
    # one subject of a gender makes age x gender collinear with gender
    assume(min(np.unique(genders, return_counts=True)[1]) >= 2 and len(set(genders)) == 2)
    values = rng.normal(size=(n, 6)) + np.outer(ages, rng.normal(size=6))
    out = regress_covariates(_matrix(values), design)
    np.testing.assert_allclose(out.values.mean(axis=0), values.mean(axis=0), atol=1e-10 * max(1, np.abs(values).max()))
    X = design.matrix[:, 1:]
    for j in range(out.values.shape[1]):
        col = out.values[:, j] - out.values[:, j].mean()
        for c in X.T:
            cc = c - c.mean()
            r = (col @ cc) / np.sqrt((col @ col) * (cc @ cc)) if col @ col > 0 else 0.0
            assert abs(r) < 1e-8


# ---------------------------------------------------------------- outliers


def test_identical_rows_not_flagged():
    row = np.linspace(0, 1, 20)
    report = screen_outliers(_matrix(np.tile(row, (5, 1))))
    np.testing.assert_allclose(report.correlations, 1.0)
    assert report.flagged == []


def test_inverted_row_flagged():
    rng = np.random.default_rng(4)
    base = rng.normal(size=30)
    values = np.tile(base, (10, 1)) + rng.normal(0, 0.01, (10, 30))
    values[7] = -base
    report = screen_outliers(_matrix(values), 3.0)
    assert report.flagged == ["s7"]


def test_literal_reference_cannot_flag_single_outlier_of_ten():
    # with the subject included in its own reference, one outlier among n
    # reaches at most (n - 1) / sqrt(n) = 2.85 sd below the mean
    rng = np.random.default_rng(4)
    base = rng.normal(size=30)
    values = np.tile(base, (10, 1)) + rng.normal(0, 0.01, (10, 30))
    values[7] = -base
    assert screen_outliers(_matrix(values), 3.0, reference="all").flagged == []


def test_two_subjects_insufficient():
    with pytest.raises(ValidationError, match="insufficient subjects"):
        screen_outliers(_matrix(np.ones((2, 4)) + np.arange(4)))


def test_zero_variance_row_flagged_with_code():
    rng = np.random.default_rng(5)
    values = rng.normal(size=(6, 10))
    values[2] = 1.0
    report = screen_outliers(_matrix(values))
    assert report.codes[2] == "zero_variance"
    assert "s2" in report.flagged


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-3, 1e3))
def test_outlier_flags_scale_invariant(seed, scale):
    rng = np.random.default_rng(seed)
    values = rng.normal(size=(12, 15)) + rng.normal(size=15)
    a = screen_outliers(_matrix(values)).flags
    b = screen_outliers(_matrix(values * scale)).flags
    assert a.tolist() == b.tolist()


# ---------------------------------------------------------------- assembly


def test_assembly_shapes_and_order():
    ids = ["z", "a"]
    m = assemble_joint_matrix(np.ones((2, 3)), np.zeros((2, 4)), ids)
    assert m.values.shape == (2, 7)
    assert (m.gm_width, m.wm_width) == (3, 4)
    assert m.subject_order == ids


def test_assembly_requires_both_tissues():
    with pytest.raises(ValidationError, match="both tissues required"):
        assemble_joint_matrix(np.ones((2, 3)), np.zeros((2, 0)), ["a", "b"])


def test_drop_subjects():
    m = _matrix(np.arange(12.0).reshape(3, 4))
    out = drop_subjects(m, ["s1"])
    assert out.subject_order == ["s0", "s2"]
    np.testing.assert_array_equal(out.values, m.values[[0, 2]])
