"""Per-subject cross-tissue networks and their integer fingerprints.

A subject's network comes from the similarity ``1 / ((gm_i - wm_j)^2 + 1)``
between regional GM and WM volumes, binarized with the same mutual-KNN
rule as cohort networks. The binary region graph is encoded as a single
non-negative integer: upper-triangle bits read row-major, with pair (1, 2)
as the most significant bit. Codes at R = 56 need 1540 bits, so they are
serialized as decimal strings.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ValidationError
from .netbuild import RegionGraph, collapse_region_graph, default_k, mknn_threshold


@dataclass(frozen=True)
class UbninCode:
    subject_id: str
    code: int
    n_regions: int
    k: int

    @property
    def bit_width(self) -> int:
        return self.n_regions * (self.n_regions - 1) // 2

    @property
    def decimal(self) -> str:
        return str(self.code)


def volume_similarity_matrix(rgmv, rwmv) -> np.ndarray:
    """``w[i, j] = 1 / ((rgmv[i] - rwmv[j])^2 + 1)``, all entries in (0, 1]."""
    g = np.asarray(rgmv, dtype=float).ravel()
    w = np.asarray(rwmv, dtype=float).ravel()
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(w))):
        raise ValidationError("regional volumes must be finite", code="non_finite")
    return 1.0 / ((g[:, None] - w[None, :]) ** 2 + 1.0)


def binarize_individual(weights, k: Optional[int] = None) -> RegionGraph:
    weights = np.asarray(weights, dtype=float)
    if k is None:
        k = default_k(weights.shape[0])
    return collapse_region_graph(mknn_threshold(weights, k))


def encode_graph(graph: RegionGraph | np.ndarray) -> int:
    a = graph.adjacency if isinstance(graph, RegionGraph) else np.asarray(graph, dtype=bool)
    n = a.shape[0]
    bits = a[np.triu_indices(n, 1)]
    if bits.size == 0:
        return 0
    return int("".join("1" if b else "0" for b in bits), 2)


def decode_graph(code: int, n_regions: int) -> np.ndarray:
    width = n_regions * (n_regions - 1) // 2
    if code < 0 or code >= (1 << width):
        raise ValidationError(f"code out of range for {n_regions} regions", code="code_range")
    bits = np.array([c == "1" for c in format(code, f"0{width}b")], dtype=bool) if width else np.zeros(0, bool)
    a = np.zeros((n_regions, n_regions), dtype=bool)
    a[np.triu_indices(n_regions, 1)] = bits
    return a | a.T


def encode_ubnin(graph: RegionGraph | np.ndarray, subject_id: str = "", k: int = 0) -> UbninCode:
    a = graph.adjacency if isinstance(graph, RegionGraph) else np.asarray(graph, dtype=bool)
    return UbninCode(subject_id, encode_graph(a), a.shape[0], k)


def subject_ubnin(subject_id: str, rgmv, rwmv, k: Optional[int] = None) -> UbninCode:
    weights = volume_similarity_matrix(rgmv, rwmv)
    k = default_k(weights.shape[0]) if k is None else k
    return encode_ubnin(binarize_individual(weights, k), subject_id, k)
