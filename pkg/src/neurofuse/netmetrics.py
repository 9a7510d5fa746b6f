"""Graph metrics for binary undirected region graphs.

Graphs are passed either as :class:`~neurofuse.netbuild.RegionGraph` or as
a square symmetric 0/1 array. Isolated nodes count towards N everywhere.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import networkx as nx
import numpy as np

from .errors import NumericalError, ValidationError
from .netbuild import RegionGraph
from .stats import TestResult, permutation_test, student_t


def _adj(graph) -> np.ndarray:
    a = graph.adjacency if isinstance(graph, RegionGraph) else np.asarray(graph)
    a = a.astype(bool)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError("adjacency must be square")
    if not np.array_equal(a, a.T) or a.diagonal().any():
        raise ValidationError("graph must be simple and undirected")
    return a


def _neighbors(a: np.ndarray) -> list[np.ndarray]:
    return [np.nonzero(row)[0] for row in a]


# --------------------------------------------------------------------------
# degree, density


def degree_density(graph) -> tuple[np.ndarray, float, float]:
    """Return ``(degrees, average degree, density)``."""
    a = _adj(graph)
    n = a.shape[0]
    if n < 2:
        raise ValidationError("density undefined for fewer than 2 nodes", code="too_small")
    deg = a.sum(axis=1).astype(int)
    e = deg.sum() / 2
    return deg, float(2 * e / n), float(2 * e / (n * (n - 1)))


# --------------------------------------------------------------------------
# shortest paths


def distance_matrix(graph) -> np.ndarray:
    """Hop distances from BFS; unreachable pairs are ``inf``."""
    a = _adj(graph)
    n = a.shape[0]
    nbrs = _neighbors(a)
    dist = np.full((n, n), np.inf)
    for s in range(n):
        dist[s, s] = 0
        q = deque([s])
        while q:
            v = q.popleft()
            for w in nbrs[v]:
                if dist[s, w] == np.inf:
                    dist[s, w] = dist[s, v] + 1
                    q.append(w)
    return dist


def betweenness(graph, normalized: bool = False) -> np.ndarray:
    """Brandes betweenness centrality (raw pair counts for undirected graphs).

    ``normalized=True`` divides by ``(N-1)(N-2)/2``.
    """
    a = _adj(graph)
    n = a.shape[0]
    nbrs = _neighbors(a)
    bc = np.zeros(n)
    for s in range(n):
        stack = []
        preds: list[list[int]] = [[] for _ in range(n)]
        sigma = np.zeros(n)
        sigma[s] = 1.0
        dist = np.full(n, -1)
        dist[s] = 0
        q = deque([s])
        while q:
            v = q.popleft()
            stack.append(v)
            for w in nbrs[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    q.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = np.zeros(n)
        while stack:
            w = stack.pop()
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                bc[w] += delta[w]
    bc /= 2.0
    if normalized and n > 2:
        bc /= (n - 1) * (n - 2) / 2.0
    return bc


def path_efficiency(graph) -> tuple[float, float]:
    """Return ``(characteristic path length, global efficiency)``.

    Path length is the mean over finite distances between distinct nodes;
    it is ``nan`` when no pair is connected. Efficiency averages ``1/d``
    over all ordered pairs with ``1/inf = 0``.
    """
    dist = distance_matrix(graph)
    n = dist.shape[0]
    if n < 2:
        raise ValidationError("need at least 2 nodes", code="too_small")
    off = ~np.eye(n, dtype=bool)
    d = dist[off]
    finite = np.isfinite(d)
    eff = float((1.0 / d[finite]).sum() / (n * (n - 1)))
    length = float(d[finite].mean()) if finite.any() else float("nan")
    return length, eff


def characteristic_path_length(graph) -> float:
    length, _ = path_efficiency(graph)
    if not np.isfinite(length):
        raise NumericalError("path length undefined: no connected pair", code="no_paths")
    return length


def global_efficiency(graph) -> float:
    return path_efficiency(graph)[1]


# --------------------------------------------------------------------------
# clustering


def clustering_transitivity(graph) -> tuple[np.ndarray, float]:
    """Nodal clustering coefficients and global transitivity.

    Nodes with degree < 2 get 0; transitivity is 0 when the graph has no
    connected triple.
    """
    a = _adj(graph).astype(float)
    k = a.sum(axis=1)
    closed = np.einsum("ij,jk,ki->i", a, a, a)  # 2 x triangles through each node
    pairs = k * (k - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(pairs > 0, closed / pairs, 0.0)
    total = pairs.sum()
    trans = float(closed.sum() / total) if total > 0 else 0.0
    return c, trans


# --------------------------------------------------------------------------
# centrality and mixing


def largest_component(graph) -> np.ndarray:
    """Node indices of the largest connected component (ties: lowest index)."""
    a = _adj(graph)
    n = a.shape[0]
    nbrs = _neighbors(a)
    seen = np.full(n, -1)
    best: list[int] = []
    for s in range(n):
        if seen[s] >= 0:
            continue
        comp = [s]
        seen[s] = s
        q = deque([s])
        while q:
            v = q.popleft()
            for w in nbrs[v]:
                if seen[w] < 0:
                    seen[w] = s
                    comp.append(w)
                    q.append(w)
        if len(comp) > len(best):
            best = comp
    return np.array(sorted(best), dtype=int)


def eigenvector_centrality(graph, tol: float = 1e-13, max_iter: int = 100_000) -> np.ndarray:
    """Principal eigenvector of the largest component, unit norm, zeros elsewhere.

    Power iteration on ``A + I`` avoids the oscillation bipartite
    components produce with plain ``A``.
    """
    a = _adj(graph)
    if not a.any():
        raise ValidationError("eigenvector centrality needs at least one edge", code="edgeless")
    comp = largest_component(a)
    sub = a[np.ix_(comp, comp)].astype(float) + np.eye(comp.size)
    x = np.ones(comp.size) / np.sqrt(comp.size)
    for _ in range(max_iter):
        y = sub @ x
        y /= np.linalg.norm(y)
        if np.abs(y - x).max() < tol:
            x = y
            break
        x = y
    else:
        raise NumericalError("eigenvector centrality did not converge", code="no_convergence")
    out = np.zeros(a.shape[0])
    out[comp] = np.abs(x)
    return out


def assortativity(graph) -> float:
    """Pearson correlation of endpoint degrees over both orientations of each edge."""
    a = _adj(graph)
    deg = a.sum(axis=1).astype(float)
    i, j = np.nonzero(a)  # symmetric: each edge appears in both orientations
    if i.size == 0:
        raise ValidationError("assortativity needs at least one edge", code="edgeless")
    x, y = deg[i], deg[j]
    xc, yc = x - x.mean(), y - y.mean()
    denom = np.sqrt((xc**2).sum() * (yc**2).sum())
    if denom == 0:
        raise NumericalError("assortativity undefined: all edge endpoints share one degree", code="regular")
    return float((xc @ yc) / denom)


# --------------------------------------------------------------------------
# communities


@dataclass
class CommunityPartition:
    modules: np.ndarray
    modularity: float

    @property
    def n_modules(self) -> int:
        return int(np.unique(self.modules).size)


def modularity(graph, modules: Sequence[int]) -> float:
    """Newman modularity of a node partition; 0 for an edgeless graph."""
    a = _adj(graph).astype(float)
    m = np.asarray(modules)
    two_m = a.sum()
    if two_m == 0:
        return 0.0
    k = a.sum(axis=1)
    same = m[:, None] == m[None, :]
    return float(((a - np.outer(k, k) / two_m) * same).sum() / two_m)


def _canonical_modules(labels: np.ndarray) -> np.ndarray:
    # relabel modules 0, 1, ... in order of their lowest node index
    out = np.empty_like(labels)
    mapping: dict[int, int] = {}
    for i, lab in enumerate(labels):
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    return out


def community_partition(graph, seed: int = 0, resolution: float = 1.0) -> CommunityPartition:
    """Louvain modularity communities; isolated nodes form singleton modules."""
    a = _adj(graph)
    n = a.shape[0]
    g = nx.Graph()
    g.add_nodes_from(range(n))
    g.add_edges_from(zip(*np.nonzero(np.triu(a, 1))))
    labels = np.empty(n, dtype=int)
    if g.number_of_edges() == 0:
        labels[:] = np.arange(n)
    else:
        comms = nx.community.louvain_communities(g, seed=seed, resolution=resolution)
        for c, members in enumerate(sorted(comms, key=min)):
            labels[list(members)] = c
    labels = _canonical_modules(labels)
    return CommunityPartition(labels, modularity(a, labels))


def participation_coefficient(graph, partition: CommunityPartition | Sequence[int]) -> np.ndarray:
    a = _adj(graph).astype(float)
    modules = partition.modules if isinstance(partition, CommunityPartition) else np.asarray(partition)
    if modules.shape[0] != a.shape[0]:
        raise ValidationError("partition does not cover every node", code="uncovered")
    k = a.sum(axis=1)
    ids = np.unique(modules)
    onehot = (modules[:, None] == ids[None, :]).astype(float)
    k_is = a @ onehot
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(k > 0, 1.0 - ((k_is / k[:, None]) ** 2).sum(axis=1), 0.0)
    return p


# --------------------------------------------------------------------------
# null models


def _edge_array(a: np.ndarray) -> np.ndarray:
    i, j = np.nonzero(np.triu(a, 1))
    return np.column_stack([i, j])


def rewire_degree_preserving(
    graph, n_swaps: int, rng: np.random.Generator, max_attempts: Optional[int] = None
) -> tuple[np.ndarray, int]:
    """Maslov-Sneppen double-edge swaps; returns ``(adjacency, accepted swaps)``."""
    a = _adj(graph).copy()
    edges = _edge_array(a)
    m = edges.shape[0]
    if m < 2:
        return a, 0
    if max_attempts is None:
        max_attempts = 100 * max(n_swaps, 1)
    accepted = 0
    attempts = 0
    while accepted < n_swaps and attempts < max_attempts:
        attempts += 1
        e1, e2 = rng.choice(m, size=2, replace=False)
        u, v = edges[e1]
        x, y = edges[e2]
        if rng.random() < 0.5:
            x, y = y, x
        # (u, v), (x, y) -> (u, y), (x, v)
        if len({u, v, x, y}) < 4 or a[u, y] or a[x, v]:
            continue
        a[u, v] = a[v, u] = a[x, y] = a[y, x] = False
        a[u, y] = a[y, u] = a[x, v] = a[v, x] = True
        edges[e1] = (u, y)
        edges[e2] = (x, v)
        accepted += 1
    return a, accepted


def random_graph_same_size(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    iu, ju = np.triu_indices(n, 1)
    pick = rng.choice(iu.size, size=m, replace=False)
    a = np.zeros((n, n), dtype=bool)
    a[iu[pick], ju[pick]] = True
    return a | a.T


@dataclass
class SmallWorldResult:
    gamma: float
    lam: float
    clustering: float
    path_length: float
    null_clustering: float
    null_path_length: float
    n_fallback: int


def small_world_norms(graph, n_null: int = 100, seed: int = 0, swaps_per_edge: int = 10) -> SmallWorldResult:
    """Clustering and path length normalized by degree-preserving nulls.

    Each null is rewired with ``swaps_per_edge * E`` accepted swaps. If a
    null stalls below ``E`` accepted swaps it is replaced by a uniform
    random graph with the same N and E, counted in ``n_fallback``.
    """
    a = _adj(graph)
    n = a.shape[0]
    m = int(np.triu(a, 1).sum())
    if m < 2:
        raise ValidationError("small-world normalization needs at least 2 edges", code="too_few_edges")
    c_obs = float(clustering_transitivity(a)[0].mean())
    l_obs = path_efficiency(a)[0]
    cs, ls = [], []
    fallback = 0
    for k in range(n_null):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, k])))
        null, accepted = rewire_degree_preserving(a, swaps_per_edge * m, rng)
        if accepted < m:
            null = random_graph_same_size(n, m, rng)
            fallback += 1
        cs.append(clustering_transitivity(null)[0].mean())
        ls.append(path_efficiency(null)[0])
    c_null = float(np.mean(cs))
    finite = [v for v in ls if np.isfinite(v)]
    l_null = float(np.mean(finite)) if finite else float("nan")
    if c_null == 0:
        raise NumericalError("null graphs have zero mean clustering; gamma undefined", code="degenerate_null")
    if not np.isfinite(l_obs) or not np.isfinite(l_null):
        raise NumericalError("path length undefined for graph or nulls; lambda undefined", code="degenerate_null")
    return SmallWorldResult(c_obs / c_null, l_obs / l_null, c_obs, l_obs, c_null, l_null, fallback)


# --------------------------------------------------------------------------
# hubs and comparison


@dataclass
class HubSet:
    hubs: list[int]
    criteria: dict[int, list[str]]
    degree_cutoff: float
    betweenness_cutoff: float


def find_hubs(degree, betweenness_values, mode: Literal["either", "both"] = "either") -> HubSet:
    """Nodes whose degree and/or betweenness exceed mean + 1 sd (sample sd)."""
    deg = np.asarray(degree, dtype=float)
    btw = np.asarray(betweenness_values, dtype=float)
    if deg.shape != btw.shape:
        raise ValidationError("degree and betweenness vectors differ in length")
    if mode not in ("either", "both"):
        raise ValidationError(f"mode must be 'either' or 'both', got {mode!r}")

    def cutoff(v):
        return float(v.mean() + v.std(ddof=1)) if v.size > 1 else float("inf")

    dc, bc = cutoff(deg), cutoff(btw)
    hubs, criteria = [], {}
    for i in range(deg.size):
        hit = []
        if deg[i] > dc:
            hit.append("degree")
        if btw[i] > bc:
            hit.append("betweenness")
        if (mode == "either" and hit) or (mode == "both" and len(hit) == 2):
            hubs.append(i)
            criteria[i] = hit
    return HubSet(hubs, criteria, dc, bc)


def compare_networks(
    metric_a,
    metric_b,
    method: Literal["student_t", "permutation"] = "student_t",
    n_perm: int = 10_000,
    seed: int = 0,
) -> TestResult:
    """Two-sample comparison of a nodal metric between two networks."""
    a = np.asarray(metric_a, dtype=float)
    b = np.asarray(metric_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValidationError("metric vectors must be non-empty", code="empty_group")
    if method == "student_t":
        return student_t(a, b)
    if method == "permutation":
        return permutation_test(a, b, statistic="t", n_perm=n_perm, seed=seed)
    raise ValidationError(f"unknown method {method!r}")


# --------------------------------------------------------------------------
# report


NODAL_FIELDS = ("degree", "betweenness", "clustering", "eigenvector", "participation")
SCALAR_FIELDS = (
    "n_nodes",
    "n_edges",
    "density",
    "average_degree",
    "global_efficiency",
    "path_length",
    "transitivity",
    "assortativity",
    "modularity",
    "gamma",
    "lambda",
)


@dataclass
class GraphMetricsReport:
    scalars: dict[str, float]
    nodal: dict[str, np.ndarray]
    hubs: HubSet
    partition: CommunityPartition
    notes: list[str] = field(default_factory=list)

    def to_dict(self, region_names: Sequence[str]) -> dict:
        def clean(v):
            v = float(v)
            return v if np.isfinite(v) else None

        return {
            "scalars": {k: clean(self.scalars[k]) for k in SCALAR_FIELDS},
            "nodal": {
                k: {name: clean(v) for name, v in zip(region_names, self.nodal[k])} for k in NODAL_FIELDS
            },
            "modules": {name: int(m) for name, m in zip(region_names, self.partition.modules)},
            "hubs": [region_names[i] for i in self.hubs.hubs],
            "notes": list(self.notes),
        }


def compute_metrics(
    graph,
    seed: int = 0,
    n_null: int = 100,
    hub_mode: Literal["either", "both"] = "either",
    partition: Optional[Sequence[int]] = None,
) -> GraphMetricsReport:
    """Full metric bundle; undefined scalars are recorded as ``nan`` with a note."""
    a = _adj(graph)
    notes: list[str] = []
    deg, avg, dens = degree_density(a)
    btw = betweenness(a)
    clus, trans = clustering_transitivity(a)
    length, eff = path_efficiency(a)
    if not np.isfinite(length):
        notes.append("path_length undefined: no connected pair")
    try:
        eig = eigenvector_centrality(a)
    except ValidationError as exc:
        eig = np.zeros(a.shape[0])
        notes.append(f"eigenvector: {exc}")
    try:
        assort = assortativity(a)
    except (ValidationError, NumericalError) as exc:
        assort = float("nan")
        notes.append(f"assortativity: {exc}")
    if partition is None:
        part = community_partition(a, seed=seed)
    else:
        labels = np.asarray(partition)
        part = CommunityPartition(labels, modularity(a, labels))
    pc = participation_coefficient(a, part)
    try:
        sw = small_world_norms(a, n_null=n_null, seed=seed)
        gamma, lam = sw.gamma, sw.lam
        if sw.n_fallback:
            notes.append(f"small-world: {sw.n_fallback}/{n_null} nulls fell back to same-size random graphs")
    except (ValidationError, NumericalError) as exc:
        gamma = lam = float("nan")
        notes.append(f"small-world: {exc}")
    hubs = find_hubs(deg, btw, mode=hub_mode)
    scalars = {
        "n_nodes": float(a.shape[0]),
        "n_edges": float(deg.sum() / 2),
        "density": dens,
        "average_degree": avg,
        "global_efficiency": eff,
        "path_length": length,
        "transitivity": trans,
        "assortativity": assort,
        "modularity": part.modularity,
        "gamma": gamma,
        "lambda": lam,
    }
    nodal = {
        "degree": deg.astype(float),
        "betweenness": btw,
        "clustering": clus,
        "eigenvector": eig,
        "participation": pc,
    }
    return GraphMetricsReport(scalars, nodal, hubs, part, notes)
