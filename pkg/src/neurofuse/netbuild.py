"""Cross-tissue structural covariance networks.

Regional GM and WM volumes are correlated across subjects into an R x R
association matrix (rows GM, columns WM). Mutual K-nearest-neighbour
thresholding keeps a GM-WM pair only when each side ranks the other among
its K strongest associations. The bipartite pair set is then collapsed
onto an R-node region graph for metric computation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

from .errors import NumericalError, ValidationError


@dataclass
class RegionalVolumeTable:
    values: np.ndarray  # subjects x R
    region_names: list[str]
    tissue: Literal["GM", "WM"]
    subject_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        n, r = self.values.shape
        if r < 2:
            raise ValidationError("a regional table needs at least 2 regions")
        if len(self.region_names) != r:
            raise ValidationError(f"{len(self.region_names)} names for {r} regions")
        if self.tissue not in ("GM", "WM"):
            raise ValidationError(f"tissue must be GM or WM, got {self.tissue!r}")
        if not self.subject_ids:
            self.subject_ids = [f"s{i:04d}" for i in range(n)]
        if len(self.subject_ids) != n:
            raise ValidationError(f"{len(self.subject_ids)} subject ids for {n} rows")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("regional volumes must be finite", code="non_finite")
        if np.any(self.values < 0):
            raise ValidationError("regional volumes must be non-negative", code="negative")

    @property
    def n_regions(self) -> int:
        return self.values.shape[1]

    def subset(self, subject_ids: Sequence[str]) -> "RegionalVolumeTable":
        index = {s: i for i, s in enumerate(self.subject_ids)}
        try:
            rows = [index[s] for s in subject_ids]
        except KeyError as exc:
            raise ValidationError(f"subject {exc.args[0]!r} not in {self.tissue} table") from None
        return RegionalVolumeTable(self.values[rows], list(self.region_names), self.tissue, list(subject_ids))


@dataclass
class AssociationMatrix:
    entries: np.ndarray  # R x R, rows GM regions, columns WM regions
    n_subjects: int
    region_names: list[str] = field(default_factory=list)

    @property
    def n_regions(self) -> int:
        return self.entries.shape[0]


@dataclass
class MutualAdjacency:
    pairs: np.ndarray  # R x R bool, pairs[i, j] <=> GM_i and WM_j are mutual neighbours
    row_top: np.ndarray  # R x R bool, WM_j in GM_i's top K
    col_top: np.ndarray  # R x R bool, GM_i in WM_j's top K
    k: int

    @property
    def n_regions(self) -> int:
        return self.pairs.shape[0]

    @property
    def mutual_pairs(self) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in zip(*np.nonzero(self.pairs))}

    def bipartite(self, include_self_pairs: bool = True) -> np.ndarray:
        """2R x 2R adjacency; nodes 0..R-1 are GM, R..2R-1 are WM."""
        r = self.n_regions
        p = self.pairs.copy()
        if not include_self_pairs:
            np.fill_diagonal(p, False)
        out = np.zeros((2 * r, 2 * r), dtype=bool)
        out[:r, r:] = p
        out[r:, :r] = p.T
        return out


@dataclass
class RegionGraph:
    adjacency: np.ndarray  # R x R symmetric, hollow, bool
    region_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        a = np.asarray(self.adjacency).astype(bool)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValidationError("adjacency must be square")
        if not np.array_equal(a, a.T):
            raise ValidationError("adjacency must be symmetric")
        if a.diagonal().any():
            raise ValidationError("adjacency must have an empty diagonal")
        self.adjacency = a
        if not self.region_names:
            self.region_names = [str(i + 1) for i in range(a.shape[0])]
        if len(self.region_names) != a.shape[0]:
            raise ValidationError("region name count does not match node count")

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return list(zip(i.tolist(), j.tolist()))

    @property
    def n_edges(self) -> int:
        return int(np.triu(self.adjacency, 1).sum())

    @property
    def isolated(self) -> list[int]:
        return np.nonzero(~self.adjacency.any(axis=1))[0].tolist()


def aggregate_regional_volumes(voxel_values, atlas_labels, region_ids: Optional[Sequence[int]] = None) -> np.ndarray:
    """Sum voxel values per atlas region.

    ``region_ids`` fixes the output order and the set of legal labels;
    by default it is the sorted set of labels present.
    """
    values = np.asarray(voxel_values, dtype=float)
    labels = np.asarray(atlas_labels)
    if values.shape[-1] != labels.shape[0]:
        raise ValidationError(f"{labels.shape[0]} labels for {values.shape[-1]} voxels")
    ids = np.unique(labels) if region_ids is None else np.asarray(region_ids)
    lookup = {int(r): k for k, r in enumerate(ids)}
    unknown = sorted(set(np.unique(labels).tolist()) - set(lookup))
    if unknown:
        raise ValidationError(f"unknown atlas labels: {unknown}", code="unknown_label")
    index = np.array([lookup[int(v)] for v in labels], dtype=int)
    onehot = np.zeros((labels.shape[0], ids.shape[0]))
    onehot[np.arange(labels.shape[0]), index] = 1.0
    return values @ onehot


def build_association_matrix(gm: RegionalVolumeTable, wm: RegionalVolumeTable) -> AssociationMatrix:
    """Pearson correlation of every GM region with every WM region across subjects."""
    if gm.subject_ids != wm.subject_ids:
        raise ValidationError("GM and WM tables list different subjects or orders", code="subject_mismatch")
    n = gm.values.shape[0]
    if n < 3:
        raise ValidationError(f"need at least 3 subjects, got {n}", code="too_few")
    if gm.n_regions != wm.n_regions:
        raise ValidationError("GM and WM tables have different region counts")
    g = gm.values - gm.values.mean(axis=0)
    w = wm.values - wm.values.mean(axis=0)
    gs = np.sqrt((g**2).sum(axis=0))
    ws = np.sqrt((w**2).sum(axis=0))
    for table, scale in ((gm, gs), (wm, ws)):
        flat = np.nonzero(scale == 0)[0]
        if flat.size:
            names = ", ".join(table.region_names[k] for k in flat)
            raise NumericalError(f"zero-variance {table.tissue} region(s): {names}", code="zero_variance")
    entries = np.clip((g.T @ w) / np.outer(gs, ws), -1.0, 1.0)
    return AssociationMatrix(entries, n, list(gm.region_names))


def default_k(n_regions: int) -> int:
    """``floor(sqrt(R))``, at least 1."""
    if n_regions < 1:
        raise ValidationError("n_regions must be >= 1")
    return max(1, math.isqrt(n_regions))


def _top_k_mask(scores: np.ndarray, k: int, axis: int) -> np.ndarray:
    # stable descending sort: among equal scores the lower index ranks first
    order = np.argsort(-scores, axis=axis, kind="stable")
    ranks = np.empty_like(order)
    idx = np.arange(scores.shape[axis])
    if axis == 1:
        np.put_along_axis(ranks, order, np.broadcast_to(idx, scores.shape), axis=1)
    else:
        np.put_along_axis(ranks, order, np.broadcast_to(idx[:, None], scores.shape), axis=0)
    return ranks < k


def mknn_threshold(
    assoc: AssociationMatrix | np.ndarray,
    k: Optional[int] = None,
    rank_by: Literal["signed", "abs"] = "signed",
) -> MutualAdjacency:
    """Mutual K-nearest-neighbour binarization of a GM x WM association matrix.

    GM region i keeps the K largest entries of row i, WM region j the K
    largest of column j; (i, j) survives when both keep it.
    """
    entries = assoc.entries if isinstance(assoc, AssociationMatrix) else np.asarray(assoc, dtype=float)
    r = entries.shape[0]
    if entries.ndim != 2 or entries.shape[1] != r:
        raise ValidationError("association matrix must be square")
    if k is None:
        k = default_k(r)
    if not 1 <= k <= r:
        raise ValidationError(f"K={k} outside [1, {r}]", code="bad_k")
    if rank_by not in ("signed", "abs"):
        raise ValidationError(f"rank_by must be 'signed' or 'abs', got {rank_by!r}")
    scores = np.abs(entries) if rank_by == "abs" else entries
    row_top = _top_k_mask(scores, k, axis=1)
    col_top = _top_k_mask(scores, k, axis=0)
    return MutualAdjacency(row_top & col_top, row_top, col_top, k)


def collapse_region_graph(adj: MutualAdjacency, region_names: Optional[Sequence[str]] = None) -> RegionGraph:
    """OR-symmetrize the mutual pair matrix and drop GM_i-WM_i self pairs."""
    b = adj.pairs | adj.pairs.T
    np.fill_diagonal(b, False)
    return RegionGraph(b, list(region_names) if region_names else [])


def edge_rows(assoc: AssociationMatrix, adj: MutualAdjacency, include_self_pairs: bool = True):
    """Rows for the bipartite edge-list export: every pair ranked in the top K
    by at least one side, with its weight and mutual flag."""
    names = assoc.region_names or [str(i + 1) for i in range(assoc.n_regions)]
    cand = adj.row_top | adj.col_top
    for i, j in zip(*np.nonzero(cand)):
        if i == j and not include_self_pairs:
            continue
        yield names[i], names[j], float(assoc.entries[i, j]), int(adj.pairs[i, j])
