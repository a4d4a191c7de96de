"""Graph topology, weighted Laplacians and spectral quantities.

Edges are stored in canonical form ``(min, max)`` and every per-edge array in
the package is aligned with ``Graph.edges``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

__all__ = [
    "GraphError",
    "Graph",
    "DelayProfile",
    "AugmentedGraph",
    "laplacian",
    "lambda2",
    "spectral_radius",
    "time_diameter",
    "edge_neighbors",
    "augment",
]


class GraphError(ValueError):
    """Invalid topology or per-edge data."""


def _canonical(e: Sequence[int]) -> tuple[int, int]:
    i, j = int(e[0]), int(e[1])
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on nodes ``0..n-1``.

    Connectivity is checked on construction unless ``require_connected`` is
    false (used for disjoint-union test graphs).
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    require_connected: bool = True
    adjacency: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)
    _index: dict = field(init=False, repr=False, compare=False)

    def __init__(self, n: int, edges: Iterable[Sequence[int]], require_connected: bool = True):
        n = int(n)
        if n < 1:
            raise GraphError("graph needs at least one node")
        canon: list[tuple[int, int]] = []
        seen: set[tuple[int, int]] = set()
        for e in edges:
            i, j = _canonical(e)
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if i < 0 or j >= n:
                raise GraphError(f"edge {(i, j)} out of range for n={n}")
            if (i, j) in seen:
                raise GraphError(f"duplicate edge {(i, j)}")
            seen.add((i, j))
            canon.append((i, j))
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", tuple(canon))
        object.__setattr__(self, "require_connected", bool(require_connected))
        adj: list[list[int]] = [[] for _ in range(n)]
        for k, (i, j) in enumerate(canon):
            adj[i].append(k)
            adj[j].append(k)
        object.__setattr__(self, "adjacency", tuple(tuple(a) for a in adj))
        object.__setattr__(self, "_index", {e: k for k, e in enumerate(canon)})
        if require_connected and not self.is_connected():
            raise GraphError("graph is not connected")

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        """Arrays ``(i, j)`` of edge endpoints aligned with ``edges``."""
        if not self.edges:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        arr = np.asarray(self.edges, dtype=np.int64)
        return arr[:, 0].copy(), arr[:, 1].copy()

    def edge_index(self, e: Sequence[int]) -> int:
        try:
            return self._index[_canonical(e)]
        except KeyError:
            raise GraphError(f"unknown edge {tuple(e)}") from None

    def has_edge(self, e: Sequence[int]) -> bool:
        return _canonical(e) in self._index

    def neighbors(self, i: int) -> list[int]:
        out = []
        for k in self.adjacency[i]:
            a, b = self.edges[k]
            out.append(b if a == i else a)
        return out

    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self.adjacency], dtype=np.int64)

    def incidence(self) -> np.ndarray:
        """Unsigned node-edge incidence matrix (n x m)."""
        inc = np.zeros((self.n, self.m))
        if self.m:
            i, j = self.endpoints
            cols = np.arange(self.m)
            inc[i, cols] = 1.0
            inc[j, cols] = 1.0
        return inc

    def edge_adjacency(self) -> np.ndarray:
        """Boolean m x m matrix of edges sharing a node; the diagonal is true."""
        inc = self.incidence()
        return (inc.T @ inc) > 0

    def is_connected(self, weights: np.ndarray | None = None) -> bool:
        """Connectivity, optionally restricted to edges with positive weight."""
        if self.n == 1:
            return True
        mask = np.ones(self.m, dtype=bool) if weights is None else np.asarray(weights) > 0
        i, j = self.endpoints
        mat = coo_matrix((np.ones(int(mask.sum())), (i[mask], j[mask])), shape=(self.n, self.n))
        ncomp, _ = connected_components(mat, directed=False)
        return ncomp == 1

    def subgraph(self, keep: np.ndarray, require_connected: bool = True) -> "Graph":
        keep = np.asarray(keep, dtype=bool)
        return Graph(self.n, [e for e, k in zip(self.edges, keep) if k], require_connected)

    def edge_array(self, values: Mapping | Sequence[float] | np.ndarray | float, name: str = "value") -> np.ndarray:
        """Turn a scalar, a sequence aligned with ``edges`` or a mapping keyed by
        edge pairs into an array aligned with ``edges``."""
        if np.isscalar(values):
            return np.full(self.m, float(values))
        if isinstance(values, Mapping):
            out = np.full(self.m, np.nan)
            for e, v in values.items():
                out[self.edge_index(e)] = float(v)
            if np.isnan(out).any():
                missing = [self.edges[k] for k in np.flatnonzero(np.isnan(out))]
                raise GraphError(f"{name} missing for edges {missing[:5]}")
            return out
        arr = np.asarray(values, dtype=float).reshape(-1)
        if arr.shape[0] != self.m:
            raise GraphError(f"{name}: expected {self.m} entries, got {arr.shape[0]}")
        return arr


@dataclass(frozen=True)
class DelayProfile:
    """Upper bounds on communication delays (per edge) and computation delays
    (per node), in seconds."""

    tau_comm: np.ndarray
    tau_comp: np.ndarray
    tau_comm_node: np.ndarray

    @classmethod
    def build(cls, graph: Graph, tau_comm, tau_comp=0.0) -> "DelayProfile":
        tc = graph.edge_array(tau_comm, "tau_comm")
        tp = np.full(graph.n, float(tau_comp)) if np.isscalar(tau_comp) else np.asarray(tau_comp, float)
        if tp.shape != (graph.n,):
            raise GraphError(f"tau_comp: expected {graph.n} entries")
        if (tc < 0).any() or (tp < 0).any() or not np.isfinite(tc).all() or not np.isfinite(tp).all():
            raise GraphError("delays must be finite and non-negative")
        node = np.zeros(graph.n)
        for i, inc in enumerate(graph.adjacency):
            if inc:
                node[i] = tc[list(inc)].max()
        for a in (tc, tp, node):
            a.setflags(write=False)
        return cls(tc, tp, node)

    @property
    def tau_max_comm(self) -> float:
        return float(self.tau_comm.max()) if self.tau_comm.size else 0.0

    @property
    def tau_max(self) -> float:
        """Largest delay bound over edges and computations."""
        return max(self.tau_max_comm, float(self.tau_comp.max()) if self.tau_comp.size else 0.0)


@dataclass(frozen=True)
class AugmentedGraph:
    """Base graph plus one virtual computation node ``n + i`` per node ``i``
    and one virtual edge ``(i, n + i)``.

    The first ``base.m`` edges of ``graph`` are the base edges in the same
    order; the virtual edge of node ``i`` has index ``base.m + i``.
    """

    base: Graph
    graph: Graph
    delays: DelayProfile

    def virtual_node(self, i: int) -> int:
        return self.base.n + i

    def virtual_edge(self, i: int) -> int:
        return self.base.m + i

    def weights(self, base_weights, virtual_weights) -> np.ndarray:
        return np.concatenate([self.base.edge_array(base_weights), np.broadcast_to(virtual_weights, (self.base.n,))])


def laplacian(graph: Graph, weights) -> np.ndarray:
    """Dense weighted Laplacian: ``-w_ij`` off the diagonal, weighted degrees
    on it."""
    w = graph.edge_array(weights, "weights")
    L = np.zeros((graph.n, graph.n))
    if graph.m:
        i, j = graph.endpoints
        np.add.at(L, (i, j), -w)
        np.add.at(L, (j, i), -w)
        np.add.at(L, (i, i), w)
        np.add.at(L, (j, j), w)
    return L


def _eigvals(graph: Graph, weights) -> np.ndarray:
    return np.linalg.eigvalsh(laplacian(graph, weights))


def lambda2(graph: Graph, weights) -> float:
    """Second smallest eigenvalue of the weighted Laplacian (algebraic
    connectivity); zero when the positive-weight graph is disconnected."""
    if graph.n < 2:
        return 0.0
    ev = _eigvals(graph, weights)
    return max(float(ev[1]), 0.0)


def spectral_radius(graph: Graph, weights) -> float:
    if graph.n < 2:
        return 0.0
    return max(float(_eigvals(graph, weights)[-1]), 0.0)


def time_diameter(graph: Graph, delays: DelayProfile) -> float:
    """Largest time distance ``tau_i^comp + tau_j^comp + shortest path`` over
    node pairs."""
    if graph.n == 1:
        return 2.0 * float(delays.tau_comp[0])
    i, j = graph.endpoints
    # csgraph treats explicit zeros as missing edges; a tiny offset keeps them
    w = np.asarray(delays.tau_comm, float)
    eps = np.finfo(float).tiny
    mat = coo_matrix((np.r_[w, w] + eps, (np.r_[i, j], np.r_[j, i])), shape=(graph.n, graph.n)).tocsr()
    dist = dijkstra(mat, directed=False)
    if not np.isfinite(dist).all():
        raise GraphError("time diameter is infinite: graph is disconnected")
    dist = np.where(dist <= graph.n * eps * 2, 0.0, dist)
    comp = np.asarray(delays.tau_comp, float)
    total = dist + comp[:, None] + comp[None, :]
    return float(total.max())


def edge_neighbors(graph: Graph, e: Sequence[int]) -> set[tuple[int, int]]:
    """Edges sharing at least one node with ``e``, including ``e``."""
    k = graph.edge_index(e)
    a, b = graph.edges[k]
    return {graph.edges[x] for x in set(graph.adjacency[a]) | set(graph.adjacency[b])}


def augment(graph: Graph, delays: DelayProfile) -> AugmentedGraph:
    if graph.n < 2 or graph.m == 0:
        raise GraphError("augmentation needs a connected base graph with at least one edge")
    n = graph.n
    aug = Graph(2 * n, list(graph.edges) + [(i, n + i) for i in range(n)])
    tau = np.concatenate([delays.tau_comm, delays.tau_comp])
    aug_delays = DelayProfile.build(aug, tau, np.zeros(2 * n))
    return AugmentedGraph(graph, aug, aug_delays)
