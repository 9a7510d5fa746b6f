"""Statistical primitives: two-sample t, chi-square, Hedges' g, BH-FDR,
one-way ANOVA, Pearson correlation and a label-permutation engine.

All tests return a :class:`TestResult`. Tail probabilities come from
``scipy.stats`` distribution objects.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from scipy import stats as _sps

from .errors import NumericalError, ValidationError

__all__ = [
    "TestResult",
    "EffectSize",
    "FdrResult",
    "student_t",
    "student_t_summary",
    "chi_square_2x2",
    "hedges_g",
    "fdr_bh",
    "one_way_anova",
    "pearson",
    "permutation_test",
]


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    df: float
    kind: Literal["t", "chi2", "F", "r", "permutation"]

    __test__ = False  # keep pytest from collecting this as a test class


@dataclass(frozen=True)
class EffectSize:
    g: float
    m1: float
    m2: float
    s: float
    n1: int
    n2: int

    @property
    def correction(self) -> float:
        return 1.0 - 3.0 / (4.0 * (self.n1 + self.n2) - 9.0)


@dataclass(frozen=True)
class FdrResult:
    reject: np.ndarray
    p_adjusted: np.ndarray
    q: float


def _clip_p(p: float) -> float:
    return float(min(1.0, max(0.0, p)))


def _as_sample(x, name: str, min_n: int = 2) -> np.ndarray:
    arr = np.asarray(x, dtype=float).ravel()
    if arr.size < min_n:
        raise ValidationError(f"{name} needs at least {min_n} values, got {arr.size}", code="too_few")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values", code="non_finite")
    return arr


def _pooled_t(m1, s1, n1, m2, s2, n2) -> TestResult:
    df = n1 + n2 - 2
    pooled_var = ((n1 - 1) * s1**2 + (n2 - 1) * s2**2) / df
    if not pooled_var > 0:
        raise NumericalError("pooled variance is zero", code="zero_variance")
    se = np.sqrt(pooled_var * (1.0 / n1 + 1.0 / n2))
    t = (m1 - m2) / se
    p = 2.0 * _sps.t.sf(abs(t), df)
    return TestResult(float(t), _clip_p(p), float(df), "t")


def student_t(a, b) -> TestResult:
    """Pooled-variance two-sample Student's t-test, two-sided."""
    a = _as_sample(a, "a")
    b = _as_sample(b, "b")
    return _pooled_t(a.mean(), a.std(ddof=1), a.size, b.mean(), b.std(ddof=1), b.size)


def student_t_summary(m1: float, s1: float, n1: int, m2: float, s2: float, n2: int) -> TestResult:
    """Pooled-variance t-test from group means, standard deviations and sizes."""
    if n1 < 2 or n2 < 2:
        raise ValidationError("each group needs n >= 2", code="too_few")
    if s1 < 0 or s2 < 0:
        raise ValidationError("standard deviations must be non-negative")
    if s1 == 0 and s2 == 0:
        raise NumericalError("both standard deviations are zero", code="zero_variance")
    return _pooled_t(m1, s1, n1, m2, s2, n2)


def chi_square_2x2(counts) -> TestResult:
    """Pearson chi-square on a 2x2 contingency table, no continuity correction."""
    obs = np.asarray(counts, dtype=float)
    if obs.shape != (2, 2):
        raise ValidationError(f"expected a 2x2 table, got shape {obs.shape}")
    if np.any(obs < 0):
        raise ValidationError("counts must be non-negative")
    rows = obs.sum(axis=1)
    cols = obs.sum(axis=0)
    if np.any(rows == 0) or np.any(cols == 0):
        raise ValidationError("table has a zero marginal", code="zero_marginal")
    expected = np.outer(rows, cols) / obs.sum()
    chi2 = float(((obs - expected) ** 2 / expected).sum())
    return TestResult(chi2, _clip_p(_sps.chi2.sf(chi2, 1)), 1.0, "chi2")


def hedges_g(a, b) -> EffectSize:
    """Bias-corrected standardized mean difference ``(mean(a) - mean(b)) / s``.

    ``s`` is the pooled standard deviation and the small-sample correction
    is ``1 - 3 / (4 (n1 + n2) - 9)``.
    """
    a = _as_sample(a, "a")
    b = _as_sample(b, "b")
    n1, n2 = a.size, b.size
    m1, m2 = float(a.mean()), float(b.mean())
    pooled_var = ((n1 - 1) * a.var(ddof=1) + (n2 - 1) * b.var(ddof=1)) / (n1 + n2 - 2)
    s = float(np.sqrt(pooled_var))
    if not s > 0:
        raise NumericalError("pooled standard deviation is zero", code="zero_variance")
    corr = 1.0 - 3.0 / (4.0 * (n1 + n2) - 9.0)
    return EffectSize(g=(m1 - m2) / s * corr, m1=m1, m2=m2, s=s, n1=n1, n2=n2)


def fdr_bh(p_values: Sequence[float], q: float = 0.05) -> FdrResult:
    """Benjamini-Hochberg step-up procedure.

    Rejects every hypothesis whose rank is at most the largest ``i`` with
    ``p_(i) <= i q / m``. Adjusted p-values are the usual step-up minima,
    capped at 1.
    """
    p = np.asarray(p_values, dtype=float).ravel()
    if not 0 < q < 1:
        raise ValidationError(f"q must lie in (0, 1), got {q}")
    if p.size == 0:
        return FdrResult(np.zeros(0, dtype=bool), np.zeros(0), q)
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ValidationError("p-values must lie in [0, 1]", code="p_range")
    m = p.size
    order = np.argsort(p, kind="stable")
    ranked = p[order]
    ranks = np.arange(1, m + 1)
    below = ranked * m <= ranks * q
    reject = np.zeros(m, dtype=bool)
    if below.any():
        k = int(np.nonzero(below)[0].max())
        reject[order[: k + 1]] = True
    adj_sorted = np.minimum.accumulate((ranked * m / ranks)[::-1])[::-1]
    adjusted = np.empty(m)
    adjusted[order] = np.minimum(adj_sorted, 1.0)
    return FdrResult(reject, adjusted, q)


def one_way_anova(groups: Sequence) -> TestResult:
    samples = [_as_sample(g, f"group {i}") for i, g in enumerate(groups)]
    if len(samples) < 2:
        raise ValidationError("ANOVA needs at least two groups", code="too_few_groups")
    k = len(samples)
    n = sum(s.size for s in samples)
    grand = np.concatenate(samples).mean()
    ss_between = sum(s.size * (s.mean() - grand) ** 2 for s in samples)
    ss_within = sum(((s - s.mean()) ** 2).sum() for s in samples)
    if not ss_within > 0:
        raise NumericalError("within-group variance is zero", code="zero_variance")
    df1, df2 = k - 1, n - k
    f = (ss_between / df1) / (ss_within / df2)
    return TestResult(float(f), _clip_p(_sps.f.sf(f, df1, df2)), float(df1), "F")


def pearson(x, y) -> TestResult:
    """Pearson r with a two-sided p-value from the t transform (df = n - 2)."""
    x = _as_sample(x, "x", min_n=3)
    y = _as_sample(y, "y", min_n=3)
    if x.size != y.size:
        raise ValidationError(f"length mismatch: {x.size} vs {y.size}", code="length")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx, syy = (xc**2).sum(), (yc**2).sum()
    if sxx == 0 or syy == 0:
        raise NumericalError("zero variance input", code="zero_variance")
    r = float(np.clip((xc @ yc) / np.sqrt(sxx * syy), -1.0, 1.0))
    df = x.size - 2
    if abs(r) >= 1.0:
        p = 0.0
    else:
        t = r * np.sqrt(df / (1.0 - r * r))
        p = 2.0 * _sps.t.sf(abs(t), df)
    return TestResult(r, _clip_p(p), float(df), "r")


def _group_stat(values: np.ndarray, labels: np.ndarray, statistic: str) -> np.ndarray:
    # labels: (..., n) boolean, True marks group b
    in_b = labels.astype(float)
    in_a = 1.0 - in_b
    na = in_a.sum(axis=-1)
    nb = in_b.sum(axis=-1)
    ma = (in_a * values).sum(axis=-1) / na
    mb = (in_b * values).sum(axis=-1) / nb
    diff = ma - mb
    if statistic == "mean_diff":
        return diff
    ssa = (in_a * (values - ma[..., None]) ** 2).sum(axis=-1)
    ssb = (in_b * (values - mb[..., None]) ** 2).sum(axis=-1)
    pooled = (ssa + ssb) / (na + nb - 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        return diff / np.sqrt(pooled * (1.0 / na + 1.0 / nb))


def permutation_test(
    values_a,
    values_b,
    statistic: Literal["mean_diff", "t"] = "mean_diff",
    n_perm: int = 9999,
    seed: int = 0,
) -> TestResult:
    """Two-sided label-permutation test with the add-one p-value convention.

    The two samples are put in a canonical order (by size, then by sorted
    values) and the pooled values are sorted before labels are shuffled.
    Swapping ``values_a`` and ``values_b``, or reordering either sample,
    therefore gives the same p-value for the same seed and a negated
    statistic.
    """
    a = np.asarray(values_a, dtype=float).ravel()
    b = np.asarray(values_b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValidationError("both groups must be non-empty", code="empty_group")
    if statistic not in ("mean_diff", "t"):
        raise ValidationError(f"unknown statistic {statistic!r}")
    if n_perm < 1:
        raise ValidationError("n_perm must be >= 1")
    if statistic == "t" and (a.size + b.size) < 3:
        raise ValidationError("t statistic needs at least 3 pooled values", code="too_few")

    a, b = np.sort(a), np.sort(b)
    sign = 1.0
    if (b.size, b.tolist()) < (a.size, a.tolist()):
        a, b, sign = b, a, -1.0
    pooled = np.concatenate([a, b])
    labels = np.concatenate([np.zeros(a.size, bool), np.ones(b.size, bool)])
    order = np.argsort(pooled, kind="stable")
    pooled, labels = pooled[order], labels[order]
    observed = float(_group_stat(pooled, labels, statistic))
    if not np.isfinite(observed):
        raise NumericalError("observed statistic is undefined (zero variance)", code="zero_variance")

    rng = np.random.default_rng(seed)
    idx = np.arange(pooled.size)
    exceed = 0
    batch = 2048
    tol = 1e-12 * max(1.0, abs(observed))
    for start in range(0, n_perm, batch):
        m = min(batch, n_perm - start)
        perms = rng.permuted(np.broadcast_to(idx, (m, idx.size)), axis=1)
        null = _group_stat(pooled, labels[perms], statistic)
        null = np.where(np.isfinite(null), null, 0.0)
        exceed += int(np.count_nonzero(np.abs(null) >= abs(observed) - tol))
    p = (1 + exceed) / (n_perm + 1)
    return TestResult(sign * observed + 0.0, _clip_p(p), float(n_perm), "permutation")
