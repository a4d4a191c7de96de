"""Step sizes, rate certificates and feasibility checks derived from the
convergence theorems for delayed gossip and delayed decentralized optimization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import DelayProfile, Graph, lambda2, spectral_radius
from .network import CapacityProfile, NetworkSpec

__all__ = [
    "CAPACITY_CONSTANT",
    "SAFETY",
    "TunedParameters",
    "CapacityCheck",
    "gossip_step_sizes",
    "ddo_step_sizes",
    "gamma_gossip",
    "gamma_ddo",
    "capacity_feasible",
    "max_capacity_intensities",
    "bound_curve",
    "certify_mean_stability",
    "tune_gossip",
    "tune_ddo",
]

E = math.e
CAPACITY_CONSTANT = 1.0 / (1.0 - math.sqrt(math.log(6.0) / 2.0))
# strict inequalities in the rate conditions stay strict
SAFETY = 0.999
CAPACITY_RTOL = 1e-12


def _k_comm(graph: Graph, p: np.ndarray, tau: np.ndarray) -> np.ndarray:
    B = graph.edge_adjacency().astype(float)
    denom = 1.0 + tau * (B @ p) + E * (B @ (p * tau))
    return p / denom


def gossip_step_sizes(net: NetworkSpec) -> np.ndarray:
    """``K_ij = p_ij / (1 + sum_{(kl)~(ij)} p_kl (tau_ij + e tau_kl))``, the sum
    running over edges sharing a node with ``(ij)``, ``(ij)`` included."""
    return _k_comm(net.graph, net.p_comm, net.delays.tau_comm)


def ddo_step_sizes(net: NetworkSpec) -> tuple[np.ndarray, np.ndarray]:
    """Communication step sizes as for gossip, and
    ``K_i^comp = p_i^comp / (1 + sum_{j~i} p_ij (tau_i^comp + e tau_ij))``."""
    g = net.graph
    k_comm = gossip_step_sizes(net)
    tau = net.delays.tau_comm
    k_comp = np.zeros(g.n)
    for i in range(g.n):
        inc = list(g.adjacency[i])
        s = float(np.sum(net.p_comm[inc] * (net.delays.tau_comp[i] + E * tau[inc])))
        k_comp[i] = net.p_comp[i] / (1.0 + s)
    return k_comm, k_comp


def gamma_gossip(graph: Graph, K, tau_max: float, epsilon: float = 1.0) -> float:
    """``min(epsilon * lambda2(Laplacian(K)) / 2, 1 / tau_max)``."""
    spectral = epsilon * lambda2(graph, K) / 2.0
    return min(spectral, 1.0 / tau_max) if tau_max > 0 else spectral


def gamma_ddo(graph: Graph, K, sigma: float, L: float, tau_max: float, capacity_on: bool = False) -> float:
    """``min(sigma / (4L) * lambda2(Laplacian(K)), 1 / tau_max)``; the constant
    is ``sigma / (8L)`` when capacity gating is active."""
    factor = sigma / (8.0 * L) if capacity_on else sigma / (4.0 * L)
    spectral = factor * lambda2(graph, K)
    return min(spectral, 1.0 / tau_max) if tau_max > 0 else spectral


@dataclass(frozen=True)
class CapacityCheck:
    kind: str  # "comp", "edge" or "comm"
    index: int
    load: float  # c * p * tau (summed over incident edges for "comm")
    cap: float

    @property
    def ok(self) -> bool:
        # equality is allowed; the relative slack absorbs rounding in c * (q / c)
        return self.load <= self.cap * (1.0 + CAPACITY_RTOL)


def capacity_feasible(net: NetworkSpec, caps: CapacityProfile | None = None) -> tuple[bool, list[CapacityCheck]]:
    """Check ``c p tau <= q`` for computations, edges and node communications."""
    caps = caps or net.caps
    g, d, c = net.graph, net.delays, CAPACITY_CONSTANT
    checks = []
    for i in range(g.n):
        checks.append(CapacityCheck("comp", i, c * net.p_comp[i] * d.tau_comp[i], float(caps.q_comp[i])))
    for e in range(g.m):
        checks.append(CapacityCheck("edge", e, c * net.p_comm[e] * d.tau_comm[e], float(caps.q_edge[e])))
    for i in range(g.n):
        load = c * float(net.p_comm[list(g.adjacency[i])].sum()) * d.tau_comm_node[i]
        checks.append(CapacityCheck("comm", i, load, float(caps.q_comm[i])))
    return all(ch.ok for ch in checks), checks


def max_capacity_intensities(graph: Graph, delays: DelayProfile, caps: CapacityProfile,
                             p_comp_default: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Largest intensities meeting the capacity conditions at equality.

    Edge intensities keep the ``1/tau_ij`` pattern around each node: node ``i``
    allows ``beta_i / tau_ij`` with ``beta_i`` saturating its communication
    cap, and each edge takes the smallest of its own cap and its two
    endpoints' allowances. Without any finite cap this is ``1/tau``.
    """
    c = CAPACITY_CONSTANT
    tau = delays.tau_comm
    if (tau <= 0).any():
        raise ValueError("capacity-limited intensities need positive edge delays")
    beta = np.full(graph.n, np.inf)
    for i in range(graph.n):
        if np.isfinite(caps.q_comm[i]) and graph.adjacency[i]:
            inv = float((1.0 / tau[list(graph.adjacency[i])]).sum())
            beta[i] = caps.q_comm[i] / (c * delays.tau_comm_node[i] * inv)
    i, j = graph.endpoints
    p = np.minimum(caps.q_edge / (c * tau), np.minimum(beta[i], beta[j]) / tau)
    p = np.where(np.isfinite(p), p, 1.0 / tau)
    tc = delays.tau_comp
    with np.errstate(divide="ignore"):
        default_comp = np.where(tc > 0, 1.0 / np.where(tc > 0, tc, 1.0), p_comp_default)
        capped = np.where(tc > 0, caps.q_comp / (c * np.where(tc > 0, tc, 1.0)), np.inf)
    p_comp = np.where(np.isfinite(capped), capped, default_comp)
    return p, p_comp


def bound_curve(gamma: float, tau_max: float, prefactor, T):
    """``prefactor * exp(-gamma T / 2) * (1 + tau_max / T) / (1 - gamma tau_max)``."""
    if gamma * tau_max >= 1.0:
        raise ValueError(f"bound needs gamma * tau_max < 1 (got {gamma * tau_max})")
    T = np.asarray(T, float)
    out = prefactor * np.exp(-gamma * T / 2.0) * (1.0 + tau_max / T) / (1.0 - gamma * tau_max)
    return float(out) if out.ndim == 0 else out


def certify_mean_stability(graph: Graph, K, delays: DelayProfile) -> tuple[float, bool]:
    """Spectral radius of the Laplacian weighted by ``tau_ij K_ij``; the
    delayed mean dynamics are stable when it is below one."""
    rho = spectral_radius(graph, np.asarray(delays.tau_comm) * graph.edge_array(K))
    return rho, rho < 1.0


@dataclass(frozen=True)
class TunedParameters:
    algorithm: str
    K_comm: np.ndarray
    K_comp: np.ndarray
    gamma: float
    gamma_limit: float
    tau_max: float
    prefactor: float
    lambda2: float
    rho: float
    mean_stable: bool
    capacity_feasible: bool
    capacity_report: list = field(default_factory=list, repr=False)

    @property
    def certified(self) -> bool:
        return self.gamma * self.tau_max < 1.0 and self.mean_stable and self.capacity_feasible

    def bound(self, T):
        return bound_curve(self.gamma, self.tau_max, self.prefactor, T)

    def report(self, graph: Graph | None = None) -> str:
        lines = [f"algorithm: {self.algorithm}"]
        edges = graph.edges if graph is not None else range(len(self.K_comm))
        for e, k in zip(edges, self.K_comm):
            lines.append(f"K_comm {e}: {float(k)!r}")
        if self.algorithm == "ddo":
            for i, k in enumerate(self.K_comp):
                lines.append(f"K_comp {i}: {float(k)!r}")
        lines += [
            f"lambda2: {float(self.lambda2)!r}",
            f"tau_max: {float(self.tau_max)!r}",
            f"gamma_limit: {float(self.gamma_limit)!r}",
            f"gamma: {float(self.gamma)!r}",
            f"gamma*tau_max: {float(self.gamma * self.tau_max)!r}",
            f"rho: {float(self.rho)!r}",
            f"mean_stable: {self.mean_stable}",
            f"capacity_feasible: {self.capacity_feasible}",
        ]
        for ch in self.capacity_report:
            if not ch.ok:
                lines.append(f"capacity violated: {ch.kind} {ch.index}: load {ch.load!r} > cap {ch.cap!r}")
        return "\n".join(lines)


def tune_gossip(net: NetworkSpec, safety: float = SAFETY, epsilon: float | None = None) -> TunedParameters:
    """Step sizes and certified rate for delayed randomized gossip.

    ``epsilon`` lower-bounds the acceptance probability of gated clocks; it
    defaults to 1/2 with finite caps and 1 otherwise.
    """
    K = gossip_step_sizes(net)
    if epsilon is None:
        epsilon = 0.5 if net.caps.bounded else 1.0
    tau_max = net.delays.tau_max_comm
    lim = gamma_gossip(net.graph, K, tau_max, epsilon)
    rho, stable = certify_mean_stability(net.graph, K, net.delays)
    ok, rep = capacity_feasible(net)
    return TunedParameters("gossip", K, np.zeros(net.graph.n), safety * lim, lim, tau_max, 1.0,
                           lambda2(net.graph, K), rho, stable, ok, rep)


def tune_ddo(net: NetworkSpec, sigma: float, L: float, safety: float = SAFETY) -> TunedParameters:
    """Step sizes and certified rate for delayed decentralized optimization."""
    K, Kc = ddo_step_sizes(net)
    tau_max = net.delays.tau_max
    lim = gamma_ddo(net.graph, K, sigma, L, tau_max, net.caps.bounded)
    rho, stable = certify_mean_stability(net.graph, K, net.delays)
    ok, rep = capacity_feasible(net)
    return TunedParameters("ddo", K, Kc, safety * lim, lim, tau_max, L / sigma,
                           lambda2(net.graph, K), rho, stable, ok, rep)
