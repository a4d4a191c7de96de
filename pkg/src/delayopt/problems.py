"""Graph, delay and objective generators shared by tests and presets."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .graph import Graph, GraphError

__all__ = ["DelayMixture", "QuadraticLocal", "LogSumExpLocal", "gen_graph", "gen_quadratics", "exact_minimizer"]

MAX_RESAMPLES = 100


@dataclass(frozen=True)
class DelayMixture:
    """Independent per-edge delays drawn from a finite distribution."""

    values: tuple[float, ...]
    probs: tuple[float, ...]
    seed: int = 0

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise GraphError("delay mixture: values and probs must have the same nonzero length")
        if any(v <= 0 for v in self.values):
            raise GraphError("delay mixture: values must be positive")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-12:
            raise GraphError("delay mixture: probs must form a probability vector")

    def sample(self, m: int) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        idx = rng.choice(len(self.values), size=m, p=np.asarray(self.probs, float))
        return np.asarray(self.values, float)[idx]


def _ring(n: int) -> list[tuple[int, int]]:
    if n < 3:
        raise GraphError("ring needs n >= 3")
    return [(i, (i + 1) % n) for i in range(n)]


def gen_graph(kind: str, params: dict | None = None, seed: int = 0) -> Graph:
    """Build a connected graph.

    ``kind`` is one of ``ring``, ``line``, ``star``, ``complete``, ``grid``
    (params ``rows``, ``cols``) or ``erdos_renyi`` (params ``n``, ``prob``);
    the others take ``n``. Erdos-Renyi samples are redrawn until connected.
    """
    params = dict(params or {})
    if kind == "grid":
        rows, cols = int(params["rows"]), int(params["cols"])
        edges = []
        for r in range(rows):
            for c in range(cols):
                v = r * cols + c
                if c + 1 < cols:
                    edges.append((v, v + 1))
                if r + 1 < rows:
                    edges.append((v, v + cols))
        return Graph(rows * cols, edges)
    n = int(params["n"])
    if kind == "ring":
        return Graph(n, _ring(n))
    if kind == "line":
        return Graph(n, [(i, i + 1) for i in range(n - 1)])
    if kind == "star":
        return Graph(n, [(0, i) for i in range(1, n)])
    if kind == "complete":
        return Graph(n, list(combinations(range(n), 2)))
    if kind == "erdos_renyi":
        prob = float(params["prob"])
        rng = np.random.default_rng(seed)
        pairs = list(combinations(range(n), 2))
        for _ in range(MAX_RESAMPLES):
            keep = rng.random(len(pairs)) < prob
            g = Graph(n, [e for e, k in zip(pairs, keep) if k], require_connected=False)
            if g.m and g.is_connected():
                return Graph(n, g.edges)
        raise GraphError(f"no connected Erdos-Renyi sample after {MAX_RESAMPLES} draws (n={n}, prob={prob})")
    raise GraphError(f"unknown graph kind {kind!r}")


@dataclass(frozen=True)
class QuadraticLocal:
    """``f(z) = (a/2) * ||z - c||^2``."""

    a: float
    c: np.ndarray

    def value(self, z: np.ndarray) -> float:
        r = np.asarray(z, float) - self.c
        return 0.5 * self.a * float(r @ r)

    def grad(self, z: np.ndarray) -> np.ndarray:
        return self.a * (np.asarray(z, float) - self.c)

    def hess(self, z: np.ndarray) -> np.ndarray:
        return self.a * np.eye(self.c.shape[0])

    @property
    def smoothness(self) -> float:
        return float(self.a)


@dataclass(frozen=True)
class LogSumExpLocal:
    """``f(z) = (mu/2) ||z||^2 + log sum_k exp(<w_k, z> + b_k)``.

    Strongly convex with modulus ``mu``; smooth with constant
    ``mu + max_k ||w_k||^2``.
    """

    mu: float
    w: np.ndarray
    b: np.ndarray

    def _soft(self, z):
        s = self.w @ np.asarray(z, float) + self.b
        s = np.exp(s - s.max())
        return s / s.sum()

    def value(self, z: np.ndarray) -> float:
        z = np.asarray(z, float)
        s = self.w @ z + self.b
        top = s.max()
        return 0.5 * self.mu * float(z @ z) + float(top + np.log(np.exp(s - top).sum()))

    def grad(self, z: np.ndarray) -> np.ndarray:
        return self.mu * np.asarray(z, float) + self.w.T @ self._soft(z)

    def hess(self, z: np.ndarray) -> np.ndarray:
        pi = self._soft(z)
        wbar = self.w.T @ pi
        cov = (self.w.T * pi) @ self.w - np.outer(wbar, wbar)
        return self.mu * np.eye(self.w.shape[1]) + cov

    @property
    def smoothness(self) -> float:
        return float(self.mu + (self.w ** 2).sum(axis=1).max())


def gen_quadratics(n: int, d: int, sigma: float, L: float, seed: int = 0) -> list[QuadraticLocal]:
    """Quadratics with curvature uniform in ``[sigma, L]`` and Gaussian centers."""
    if not 0 < sigma <= L:
        raise ValueError("need 0 < sigma <= L")
    rng = np.random.default_rng(seed)
    a = rng.uniform(sigma, L, size=n)
    c = rng.standard_normal((n, d))
    return [QuadraticLocal(float(ai), ci.copy()) for ai, ci in zip(a, c)]


def exact_minimizer(locals_: list) -> np.ndarray:
    """Minimizer of the sum of quadratics: the curvature-weighted mean of the centers."""
    if not all(isinstance(f, QuadraticLocal) for f in locals_):
        raise TypeError("exact_minimizer supports quadratic locals only")
    a = np.array([f.a for f in locals_])
    c = np.stack([f.c for f in locals_])
    return (a[:, None] * c).sum(axis=0) / a.sum()
