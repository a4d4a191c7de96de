"""Network description shared by the simulators and the tuner."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .graph import DelayProfile, Graph, GraphError

__all__ = ["CapacityProfile", "NetworkSpec"]

UNBOUNDED = float("inf")


def _caps(values, size: int, name: str) -> np.ndarray:
    if values is None:
        return np.full(size, UNBOUNDED)
    if np.isscalar(values):
        arr = np.full(size, float(values))
    else:
        arr = np.array([UNBOUNDED if v is None else float(v) for v in np.asarray(values, dtype=object).reshape(-1)])
    if arr.shape != (size,):
        raise GraphError(f"{name}: expected {size} entries")
    finite = arr[np.isfinite(arr)]
    if (finite < 1).any() or (finite != np.floor(finite)).any():
        raise GraphError(f"{name}: bounded capacities must be positive integers")
    return arr


@dataclass(frozen=True)
class CapacityProfile:
    """Capacity limits; ``inf`` means unbounded.

    ``q_edge[e]`` bounds messages on edge ``e`` per window ``tau_e``;
    ``q_comm[i]`` bounds communications of node ``i`` per window
    ``tau_comm_node[i]``; ``q_comp[i]`` bounds computations per ``tau_comp[i]``.
    """

    q_edge: np.ndarray
    q_comm: np.ndarray
    q_comp: np.ndarray

    @classmethod
    def build(cls, graph: Graph, q_edge=None, q_comm=None, q_comp=None) -> "CapacityProfile":
        if isinstance(q_edge, dict):
            q_edge = graph.edge_array(q_edge, "q_edge")
        return cls(_caps(q_edge, graph.m, "q_edge"), _caps(q_comm, graph.n, "q_comm"), _caps(q_comp, graph.n, "q_comp"))

    @classmethod
    def unbounded(cls, graph: Graph) -> "CapacityProfile":
        return cls.build(graph)

    @property
    def bounded(self) -> bool:
        return bool(np.isfinite(self.q_edge).any() or np.isfinite(self.q_comm).any() or np.isfinite(self.q_comp).any())


@dataclass(frozen=True)
class NetworkSpec:
    """Topology, delay bounds, Poisson intensities and capacities.

    ``p_comm`` is aligned with ``graph.edges``; ``p_comp`` has one entry per
    node (zero disables computation clocks).
    """

    graph: Graph
    delays: DelayProfile
    p_comm: np.ndarray
    p_comp: np.ndarray
    caps: CapacityProfile

    @classmethod
    def build(cls, graph: Graph, tau_comm, tau_comp=0.0, p_comm=None, p_comp=None, caps: CapacityProfile | None = None) -> "NetworkSpec":
        delays = tau_comm if isinstance(tau_comm, DelayProfile) else DelayProfile.build(graph, tau_comm, tau_comp)
        if p_comm is None or (isinstance(p_comm, str) and p_comm == "1/tau"):
            if (delays.tau_comm <= 0).any():
                raise GraphError("default intensities 1/tau need positive edge delays")
            pc = 1.0 / delays.tau_comm
        else:
            pc = graph.edge_array(p_comm, "p_comm")
        if p_comp is None:
            pp = np.zeros(graph.n)
        elif isinstance(p_comp, str) and p_comp == "1/tau":
            if (delays.tau_comp <= 0).any():
                raise GraphError("default computation intensities 1/tau need positive computation delays")
            pp = 1.0 / delays.tau_comp
        else:
            pp = np.full(graph.n, float(p_comp)) if np.isscalar(p_comp) else np.asarray(p_comp, float).copy()
        net = cls(graph, delays, np.asarray(pc, float), np.asarray(pp, float), caps or CapacityProfile.unbounded(graph))
        net.validate()
        return net

    def validate(self) -> None:
        g = self.graph
        if self.p_comm.shape != (g.m,) or self.p_comp.shape != (g.n,):
            raise GraphError("intensity arrays do not match the graph")
        if (self.p_comm < 0).any() or (self.p_comp < 0).any():
            raise GraphError("intensities must be non-negative")
        if not (np.isfinite(self.p_comm).all() and np.isfinite(self.p_comp).all()):
            raise GraphError("intensities must be finite")
        if self.caps.q_edge.shape != (g.m,) or self.caps.q_comm.shape != (g.n,) or self.caps.q_comp.shape != (g.n,):
            raise GraphError("capacity arrays do not match the graph")

    def with_intensities(self, p_comm=None, p_comp=None) -> "NetworkSpec":
        net = replace(
            self,
            p_comm=self.p_comm if p_comm is None else np.asarray(p_comm, float),
            p_comp=self.p_comp if p_comp is None else np.asarray(p_comp, float),
        )
        net.validate()
        return net

    def with_caps(self, caps: CapacityProfile) -> "NetworkSpec":
        return replace(self, caps=caps)

    def restrict(self, keep: np.ndarray) -> "NetworkSpec":
        """Network on the edges flagged in ``keep`` (connectivity enforced)."""
        keep = np.asarray(keep, bool)
        sub = self.graph.subgraph(keep)
        delays = DelayProfile.build(sub, self.delays.tau_comm[keep], self.delays.tau_comp)
        caps = CapacityProfile(self.caps.q_edge[keep], self.caps.q_comm, self.caps.q_comp)
        return NetworkSpec(sub, delays, self.p_comm[keep], self.p_comp.copy(), caps)

    @property
    def tau_max(self) -> float:
        """Largest delay over the clocks that are actually active."""
        t = self.delays.tau_max_comm
        if (self.p_comp > 0).any():
            t = max(t, float(self.delays.tau_comp[self.p_comp > 0].max()))
        return t
