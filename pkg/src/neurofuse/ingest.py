"""Cohort preparation: clinical imputation, covariate regression, outlier
screening, and assembly of the joint GM||WM feature matrix."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal, Optional, Sequence

import numpy as np

from .errors import ValidationError

CLINICAL_FIELDS = ("subject_id", "group", "age", "gender", "updrs_off", "updrs_on", "hy", "age_at_onset")
OPTIONAL_SCORES = ("updrs_off", "updrs_on", "hy", "age_at_onset")

# gender coding used by the covariate design
GENDER_CODE = {"M": 0.0, "F": 1.0}


@dataclass
class ClinicalRecord:
    subject_id: str
    group: str
    age: float
    gender: str
    updrs_off: Optional[float] = None
    updrs_on: Optional[float] = None
    hy: Optional[float] = None
    age_at_onset: Optional[float] = None

    def __post_init__(self):
        if self.group not in ("HC", "PD"):
            raise ValidationError(f"{self.subject_id}: group must be HC or PD, got {self.group!r}")
        if self.gender not in GENDER_CODE:
            raise ValidationError(f"{self.subject_id}: gender must be M or F, got {self.gender!r}")
        if not (self.age > 0):
            raise ValidationError(f"{self.subject_id}: age must be positive")
        if self.age_at_onset is not None and self.age_at_onset > self.age:
            raise ValidationError(f"{self.subject_id}: age_at_onset exceeds age")

    def missing(self) -> list[str]:
        return [f for f in OPTIONAL_SCORES if getattr(self, f) is None]


@dataclass
class VoxelFeatureMatrix:
    """Subjects x (GM voxels + WM voxels) feature matrix."""

    values: np.ndarray
    gm_width: int
    wm_width: int
    subject_order: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValidationError("voxel values must be a 2-D matrix")
        if self.gm_width < 1 or self.wm_width < 1:
            raise ValidationError("both tissues required", code="missing_tissue")
        if self.values.shape[1] != self.gm_width + self.wm_width:
            raise ValidationError(
                f"column count {self.values.shape[1]} != gm_width + wm_width "
                f"({self.gm_width} + {self.wm_width})"
            )
        if len(self.subject_order) != self.values.shape[0]:
            raise ValidationError(
                f"{len(self.subject_order)} subject ids for {self.values.shape[0]} rows"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("voxel values contain non-finite entries", code="non_finite")

    @property
    def n_subjects(self) -> int:
        return self.values.shape[0]

    @property
    def gm(self) -> np.ndarray:
        return self.values[:, : self.gm_width]

    @property
    def wm(self) -> np.ndarray:
        return self.values[:, self.gm_width :]


@dataclass
class CovariateDesign:
    matrix: np.ndarray
    names: list[str]

    @classmethod
    def from_demographics(cls, ages: Sequence[float], genders: Sequence[str]) -> "CovariateDesign":
        """Intercept, age, gender (M=0, F=1) and the age x gender product."""
        age = np.asarray(ages, dtype=float)
        try:
            sex = np.array([GENDER_CODE[g] for g in genders])
        except KeyError as exc:
            raise ValidationError(f"unknown gender code {exc.args[0]!r}") from None
        if age.shape != sex.shape:
            raise ValidationError("ages and genders differ in length")
        mat = np.column_stack([np.ones_like(age), age, sex, age * sex])
        return cls(mat, ["intercept", "age", "gender", "age_x_gender"])

    @classmethod
    def from_records(cls, records: Sequence[ClinicalRecord]) -> "CovariateDesign":
        return cls.from_demographics([r.age for r in records], [r.gender for r in records])


@dataclass
class OutlierReport:
    subject_ids: list[str]
    correlations: np.ndarray
    flags: np.ndarray
    codes: list[str]
    threshold: float
    sd_multiplier: float

    @property
    def flagged(self) -> list[str]:
        return [s for s, f in zip(self.subject_ids, self.flags) if f]


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def impute_winsorized(values: Sequence[Optional[float]], winsor_fraction: float = 0.05) -> list[float]:
    """Fill missing entries with the winsorized mean of the observed ones.

    ``k = round(winsor_fraction * n)`` observations at each tail are
    replaced by the nearest retained order statistic before averaging.
    Observed entries are returned unchanged.
    """
    if not 0 <= winsor_fraction < 0.5:
        raise ValidationError(f"winsor_fraction must lie in [0, 0.5), got {winsor_fraction}")
    missing = [v is None or (isinstance(v, float) and math.isnan(v)) for v in values]
    observed = np.array([v for v, m in zip(values, missing) if not m], dtype=float)
    if observed.size == 0:
        raise ValidationError("no data to impute", code="no_data")
    if not any(missing):
        return [float(v) for v in values]

    n = observed.size
    k = _round_half_up(winsor_fraction * n)
    ordered = np.sort(observed)
    if k > 0 and 2 * k < n:
        ordered[:k] = ordered[k]
        ordered[n - k :] = ordered[n - k - 1]
    fill = float(ordered.mean())
    return [fill if m else float(v) for v, m in zip(values, missing)]


def impute_clinical(records: Sequence[ClinicalRecord], winsor_fraction: float = 0.05) -> list[ClinicalRecord]:
    """Impute optional clinical scores per variable across the PD cohort.

    HC records are returned untouched; a score that is missing for every
    PD patient is left missing. An imputed age at onset is capped at the
    patient's age so the record stays valid.
    """
    out = list(records)
    pd_idx = [i for i, r in enumerate(out) if r.group == "PD"]
    for name in OPTIONAL_SCORES:
        column = [getattr(out[i], name) for i in pd_idx]
        if all(v is None for v in column):
            continue
        filled = impute_winsorized(column, winsor_fraction)
        for i, v, was in zip(pd_idx, filled, column):
            if name == "age_at_onset" and was is None:
                v = min(v, out[i].age)
            out[i] = replace(out[i], **{name: v})
    return out


def _check_design(design: CovariateDesign) -> tuple[np.ndarray, list[str]]:
    X = np.asarray(design.matrix, dtype=float)
    names = list(design.names)
    if not np.all(np.isfinite(X)):
        raise ValidationError("design matrix contains non-finite entries")
    # covariates that are constant across subjects fold into the intercept
    keep = [0] + [j for j in range(1, X.shape[1]) if np.ptp(X[:, j]) > 0]
    X = X[:, keep]
    names = [names[j] for j in keep]

    basis: list[int] = []
    collinear: list[str] = []
    for j in range(X.shape[1]):
        trial = basis + [j]
        sv = np.linalg.svd(X[:, trial] / np.linalg.norm(X[:, trial], axis=0), compute_uv=False)
        if sv[-1] > 1e-10 * sv[0]:
            basis.append(j)
        else:
            collinear.append(names[j])
    if collinear:
        raise ValidationError(
            "design is rank deficient; collinear columns: " + ", ".join(collinear),
            code="rank_deficient",
        )
    return X, names


def regress_covariates(matrix: VoxelFeatureMatrix, design: CovariateDesign) -> VoxelFeatureMatrix:
    """Voxel-wise OLS against the design; returns residuals plus voxel means."""
    X, _ = _check_design(design)
    Y = matrix.values
    if X.shape[0] != Y.shape[0]:
        raise ValidationError(f"design has {X.shape[0]} rows, matrix has {Y.shape[0]}", code="row_mismatch")
    beta, *_ = np.linalg.lstsq(X, Y, rcond=None)
    resid = Y - X @ beta
    out = resid + Y.mean(axis=0)
    return VoxelFeatureMatrix(out, matrix.gm_width, matrix.wm_width, list(matrix.subject_order))


def screen_outliers(
    matrix: VoxelFeatureMatrix,
    sd_multiplier: float = 3.0,
    reference: Literal["leave_one_out", "all"] = "leave_one_out",
) -> OutlierReport:
    """Correlate each subject with the group mean map and flag low outliers.

    A subject is flagged when its correlation falls below ``mean - m * sd``
    of the reference correlations. With ``reference="leave_one_out"`` the
    mean and sd exclude the subject being tested, so that a single outlier
    in a small cohort cannot mask itself; ``"all"`` uses every subject.
    Zero-variance rows get ``nan`` correlation, code ``"zero_variance"``,
    and are always flagged. Nothing is dropped here.
    """
    Y = matrix.values
    n = Y.shape[0]
    if n < 3:
        raise ValidationError("insufficient subjects", code="insufficient_subjects")
    mean_map = Y.mean(axis=0)
    mc = mean_map - mean_map.mean()
    rc = Y - Y.mean(axis=1, keepdims=True)
    row_ss = (rc**2).sum(axis=1)
    denom = np.sqrt(row_ss * (mc @ mc))
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(denom > 0, (rc @ mc) / denom, np.nan)
    r = np.clip(r, -1.0, 1.0)
    codes = ["zero_variance" if not np.isfinite(v) else "ok" for v in r]

    valid = np.isfinite(r)
    flags = ~valid
    thresholds = np.full(n, np.nan)
    for s in range(n):
        if not valid[s]:
            continue
        if reference == "leave_one_out":
            ref = r[valid & (np.arange(n) != s)]
        else:
            ref = r[valid]
        if ref.size < 2:
            continue
        thresholds[s] = ref.mean() - sd_multiplier * ref.std(ddof=1)
        flags[s] = r[s] < thresholds[s]
    if reference == "all" and valid.sum() >= 2:
        threshold = float(r[valid].mean() - sd_multiplier * r[valid].std(ddof=1))
    else:
        threshold = float(np.nanmin(thresholds)) if np.isfinite(thresholds).any() else float("nan")
    return OutlierReport(list(matrix.subject_order), r, flags, codes, threshold, sd_multiplier)


def drop_subjects(matrix: VoxelFeatureMatrix, subject_ids: Sequence[str]) -> VoxelFeatureMatrix:
    drop = set(subject_ids)
    keep = [i for i, s in enumerate(matrix.subject_order) if s not in drop]
    if len(keep) == matrix.n_subjects:
        return matrix
    return VoxelFeatureMatrix(
        matrix.values[keep], matrix.gm_width, matrix.wm_width, [matrix.subject_order[i] for i in keep]
    )


def assemble_joint_matrix(gm, wm, ids: Sequence[str]) -> VoxelFeatureMatrix:
    """Concatenate per-subject GM and WM voxel rows side by side."""
    gm = np.atleast_2d(np.asarray(gm, dtype=float))
    wm = np.atleast_2d(np.asarray(wm, dtype=float))
    ids = list(ids)
    if gm.shape[0] != wm.shape[0] or gm.shape[0] != len(ids):
        raise ValidationError(
            f"row counts differ: gm {gm.shape[0]}, wm {wm.shape[0]}, ids {len(ids)}",
            code="row_mismatch",
        )
    if gm.shape[1] == 0 or wm.shape[1] == 0:
        raise ValidationError("both tissues required", code="missing_tissue")
    return VoxelFeatureMatrix(np.hstack([gm, wm]), gm.shape[1], wm.shape[1], ids)


def pd_hc_masks(records: Sequence[ClinicalRecord], subject_order: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """Boolean HC / PD row masks aligned to ``subject_order``."""
    group = {r.subject_id: r.group for r in records}
    try:
        labels = [group[s] for s in subject_order]
    except KeyError as exc:
        raise ValidationError(f"subject {exc.args[0]!r} has no clinical record") from None
    labels = np.array(labels)
    return labels == "HC", labels == "PD"

