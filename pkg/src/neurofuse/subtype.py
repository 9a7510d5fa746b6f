"""Effect-size ranking of ICA components and loading-threshold subtyping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

from .errors import NeurofuseError, ValidationError
from .ingest import ClinicalRecord
from .stats import fdr_bh, hedges_g, one_way_anova, pearson, student_t

SUBTYPE_LABELS = ("A", "B", "AB", "Unassigned")
CLINICAL_VARIABLES = ("age", "updrs_off", "updrs_on", "hy", "age_at_onset")


@dataclass
class ComponentRanking:
    t: np.ndarray
    p: np.ndarray
    p_fdr: np.ndarray
    g: np.ndarray
    significant: np.ndarray
    order: list[int]  # significant components by descending |g|
    q: float
    errors: dict[int, str] = field(default_factory=dict)

    def rank_of(self, component: int) -> Optional[int]:
        return self.order.index(component) + 1 if component in self.order else None

    def rows(self):
        for c in range(self.t.size):
            yield (c + 1, float(self.t[c]), float(self.p[c]), float(self.p_fdr[c]), float(self.g[c]),
                   self.rank_of(c) or "")


def _group_masks(groups: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    labels = np.asarray(groups)
    hc, pd = labels == "HC", labels == "PD"
    if not hc.any() or not pd.any():
        raise ValidationError("both HC and PD groups must be non-empty", code="empty_group")
    return hc, pd


def rank_components(loadings, groups: Sequence[str], q: float = 0.05) -> ComponentRanking:
    """t-test HC vs PD per component, BH-FDR across components, Hedges' g.

    Components whose test fails (e.g. zero variance) get ``nan`` statistics,
    p = 1, and an entry in ``errors``; they never rank.
    """
    L = np.atleast_2d(np.asarray(loadings, dtype=float))
    hc, pd = _group_masks(groups)
    if L.shape[0] != hc.size:
        raise ValidationError(f"{L.shape[0]} loading rows for {hc.size} group labels")
    C = L.shape[1]
    if C < 1:
        raise ValidationError("need at least one component")
    t = np.full(C, np.nan)
    p = np.ones(C)
    g = np.full(C, np.nan)
    errors: dict[int, str] = {}
    for c in range(C):
        try:
            res = student_t(L[hc, c], L[pd, c])
            t[c], p[c] = res.statistic, res.p_value
            g[c] = hedges_g(L[hc, c], L[pd, c]).g
        except NeurofuseError as exc:
            errors[c] = str(exc)
            t[c], p[c], g[c] = np.nan, 1.0, np.nan
    fdr = fdr_bh(p, q)
    sig = fdr.reject & np.isfinite(g)
    idx = np.nonzero(sig)[0]
    # stable sort on -|g| keeps lower component index first among ties
    order = idx[np.argsort(-np.abs(g[idx]), kind="stable")].tolist()
    return ComponentRanking(t, p, fdr.p_adjusted, g, sig, order, q, errors)


def threshold_loadings(loadings, mean: Optional[float] = None) -> np.ndarray:
    """Select patients on the far side of the mean.

    With ``mu`` the mean (of ``loadings`` unless given), selects
    ``loading > mu`` when ``mu >= 0`` and ``loading < mu`` when ``mu < 0``.
    Returns a boolean mask.
    """
    x = np.asarray(loadings, dtype=float).ravel()
    if x.size == 0:
        raise ValidationError("no loadings to threshold", code="empty")
    mu = float(x.mean()) if mean is None else float(mean)
    return x > mu if mu >= 0 else x < mu


@dataclass
class SubtypeAssignment:
    labels: dict[str, str]
    provenance: dict[str, str]

    def members(self, label: str) -> list[str]:
        return [s for s, lab in self.labels.items() if lab == label]

    def counts(self) -> dict[str, int]:
        return {lab: len(self.members(lab)) for lab in SUBTYPE_LABELS}


def assign_subtypes(
    selection_1: set,
    selection_2: set,
    pd_cohort: Sequence,
    names: tuple[str, str] = ("1", "2"),
) -> SubtypeAssignment:
    """A = sel1 - sel2, B = sel2 - sel1, AB = intersection, rest Unassigned."""
    cohort = list(pd_cohort)
    cset = set(cohort)
    s1, s2 = set(selection_1), set(selection_2)
    stray = sorted(map(str, (s1 | s2) - cset))
    if stray:
        raise ValidationError(f"selected subjects outside the PD cohort: {stray}", code="outside_cohort")
    labels, prov = {}, {}
    for s in cohort:
        in1, in2 = s in s1, s in s2
        if in1 and in2:
            labels[s], prov[s] = "AB", f"{names[0]};{names[1]}"
        elif in1:
            labels[s], prov[s] = "A", names[0]
        elif in2:
            labels[s], prov[s] = "B", names[1]
        else:
            labels[s], prov[s] = "Unassigned", ""
    return SubtypeAssignment(labels, prov)


def subtype_from_loadings(
    loadings,
    subject_ids: Sequence[str],
    groups: Sequence[str],
    ranking: ComponentRanking,
    n_select: int = 2,
    mean_population: Literal["pd", "all"] = "pd",
) -> tuple[SubtypeAssignment, list[int]]:
    """Threshold the top ``n_select`` ranked components and assign subtypes.

    Only the first two selected components define A/B/AB; returns the
    assignment and the component indices used.
    """
    if len(ranking.order) == 0:
        raise ValidationError("no significant components", code="no_significant")
    if len(ranking.order) < 2 or n_select < 2:
        raise ValidationError("subtyping needs two significant components", code="too_few_components")
    L = np.asarray(loadings, dtype=float)
    _, pd = _group_masks(groups)
    ids = np.asarray(subject_ids)
    comps = ranking.order[:n_select]
    selections = []
    for c in comps[:2]:
        mu = float(L[:, c].mean()) if mean_population == "all" else None
        mask = threshold_loadings(L[pd, c], mean=mu)
        selections.append(set(ids[pd][mask].tolist()))
    names = (f"comp_{comps[0] + 1}", f"comp_{comps[1] + 1}")
    return assign_subtypes(selections[0], selections[1], ids[pd].tolist(), names), comps


@dataclass
class CorrelationRow:
    subtype: str
    component: int
    variable: str
    r: float
    p: float
    n: int

    @property
    def significant(self) -> bool:
        return self.p < 0.05


def correlate_loadings_clinical(
    assignment: SubtypeAssignment,
    loadings,
    subject_ids: Sequence[str],
    components: Sequence[int],
    records: Sequence[ClinicalRecord],
    variables: Sequence[str] = CLINICAL_VARIABLES,
) -> tuple[list[CorrelationRow], list[str]]:
    """Pearson r between component loadings and clinical scores within each subtype.

    Subtypes with fewer than 3 members are skipped, as are variables with
    missing or constant values inside a subtype; each skip adds a notice.
    """
    L = np.asarray(loadings, dtype=float)
    row_of = {s: i for i, s in enumerate(subject_ids)}
    rec = {r.subject_id: r for r in records}
    rows: list[CorrelationRow] = []
    notices: list[str] = []
    for label in ("A", "B", "AB"):
        members = assignment.members(label)
        if len(members) < 3:
            notices.append(f"subtype {label}: {len(members)} member(s), skipped")
            continue
        idx = [row_of[s] for s in members]
        for c in components:
            for var in variables:
                vals = [getattr(rec[s], var) for s in members]
                if any(v is None for v in vals):
                    notices.append(f"subtype {label}: {var} has missing values, skipped")
                    continue
                try:
                    res = pearson(L[idx, c], vals)
                except NeurofuseError as exc:
                    notices.append(f"subtype {label}, comp_{c + 1}, {var}: {exc}")
                    continue
                rows.append(CorrelationRow(label, c + 1, var, res.statistic, res.p_value, len(members)))
    return rows, notices


def subtype_anova(
    assignment: SubtypeAssignment,
    records: Sequence[ClinicalRecord],
    variables: Sequence[str] = CLINICAL_VARIABLES,
) -> dict[str, tuple[float, float]]:
    """One-way ANOVA of each clinical variable across subtypes A, B, AB."""
    rec = {r.subject_id: r for r in records}
    out = {}
    for var in variables:
        groups = []
        for label in ("A", "B", "AB"):
            vals = [getattr(rec[s], var) for s in assignment.members(label)]
            vals = [v for v in vals if v is not None]
            if len(vals) >= 2:
                groups.append(vals)
        if len(groups) < 2:
            continue
        try:
            res = one_way_anova(groups)
        except NeurofuseError:
            continue
        out[var] = (res.statistic, res.p_value)
    return out
