"""Delay-aware choice of edge intensities.

Maximises ``J(p) = lambda2(Lap(K(p))) - omega * sum_e p_e tau_e`` over
``p >= 0``, where ``K(p)`` are the gossip step sizes, then drops edges whose
intensity vanished.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, GraphError, laplacian, lambda2
from .tuning import _k_comm

__all__ = ["SparsifyProblem", "SparsifyResult", "objective", "grad_objective", "optimize", "prune_graph", "default_omega"]

PRUNE_THRESHOLD = 1e-6
DEGENERATE_GAP = 1e-8
ARMIJO = 1e-4


@dataclass
class SparsifyProblem:
    graph: Graph
    tau: np.ndarray
    omega: float
    p0: np.ndarray
    p_max: np.ndarray | None = None

    def __post_init__(self):
        self.tau = self.graph.edge_array(self.tau, "tau")
        self.p0 = self.graph.edge_array(self.p0, "p0")
        if self.omega < 0:
            raise GraphError("omega must be non-negative")
        if (self.tau <= 0).any():
            raise GraphError("sparsification needs positive delays on every edge")
        if self.p_max is not None:
            self.p_max = self.graph.edge_array(self.p_max, "p_max")

    def project(self, p: np.ndarray) -> np.ndarray:
        p = np.maximum(p, 0.0)
        return p if self.p_max is None else np.minimum(p, self.p_max)


def default_omega(graph: Graph, tau, p0) -> float:
    """Penalty weight making both terms of ``J`` comparable at ``p0``."""
    tau = graph.edge_array(tau)
    p0 = graph.edge_array(p0)
    return 0.5 * lambda2(graph, _k_comm(graph, p0, tau)) / float((p0 * tau).sum())


def objective(p, problem: SparsifyProblem) -> float:
    p = np.asarray(p, float)
    if (p < 0).any():
        raise ValueError("intensities must be non-negative")
    K = _k_comm(problem.graph, p, problem.tau)
    return lambda2(problem.graph, K) - problem.omega * float((p * problem.tau).sum())


def grad_objective(p, problem: SparsifyProblem) -> tuple[np.ndarray, bool]:
    """Gradient of ``J`` and a flag raised when ``lambda2`` is (nearly)
    repeated, in which case the first eigenvector gives a subgradient."""
    g = problem.graph
    p = np.asarray(p, float)
    tau = problem.tau
    B = g.edge_adjacency().astype(float)
    D = 1.0 + tau * (B @ p) + math.e * (B @ (p * tau))
    K = p / D
    w, V = np.linalg.eigh(laplacian(g, K))
    degenerate = g.n > 2 and (w[2] - w[1]) <= DEGENERATE_GAP
    u = V[:, 1]
    i, j = g.endpoints
    s = (u[i] - u[j]) ** 2  # d lambda2 / d K_e
    h = s * p / D ** 2
    grad = s / D - (B @ (h * tau) + math.e * tau * (B @ h)) - problem.omega * tau
    return grad, degenerate


@dataclass
class SparsifyResult:
    p: np.ndarray
    history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def optimize(problem: SparsifyProblem, iters: int = 500, tol: float = 1e-8, p_init=None) -> SparsifyResult:
    """Projected gradient ascent with backtracking (step halved from 1.0,
    Armijo constant 1e-4). Only improving steps are taken, so ``J`` never
    decreases."""
    p = problem.project(np.array(problem.p0 if p_init is None else p_init, float))
    J = objective(p, problem)
    hist = [J]
    res = SparsifyResult(p, hist)
    for it in range(iters):
        grad, degenerate = grad_objective(p, problem)
        pg = problem.project(p + grad) - p
        if np.linalg.norm(pg) <= tol:
            res.converged = True
            break
        step = 0.5 if degenerate else 1.0
        while step > 1e-14:
            cand = problem.project(p + step * grad)
            Jc = objective(cand, problem)
            if Jc >= J + ARMIJO * float(grad @ (cand - p)) and Jc >= J:
                break
            step *= 0.5
        else:
            res.converged = True
            break
        p, J = cand, Jc
        hist.append(J)
        res.iterations = it + 1
    res.p = p
    return res


def prune_graph(graph: Graph, p, threshold: float = PRUNE_THRESHOLD) -> tuple[Graph, np.ndarray, np.ndarray]:
    """Remove edges with intensity below ``threshold``.

    Returns the pruned graph, its intensities and the kept-edge mask; raises
    if the remaining graph is disconnected.
    """
    p = graph.edge_array(p, "p")
    keep = p >= threshold
    if not graph.is_connected(keep.astype(float)):
        raise GraphError("pruning would disconnect the graph")
    return graph.subgraph(keep), p[keep], keep
