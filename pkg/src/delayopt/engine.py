"""Continuized block-coordinate descent with delayed reads.

Blocks are updated at the ticks of independent clocks; an update at time ``t``
of block ``k`` uses the full state as it was at ``t - tau_k``. Between ticks
the state is constant.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

__all__ = [
    "DivergenceError",
    "HistoryBuffer",
    "BlockObjective",
    "QuadraticBlockObjective",
    "Trace",
    "generic_step_sizes",
    "read_delayed",
    "run",
]

BLOWUP = 1e12


class DivergenceError(RuntimeError):
    """State became non-finite or the error exploded."""


class HistoryBuffer:
    """Piecewise-constant trajectory of one block.

    ``read(t)`` returns the latest snapshot with time ``<= t`` and the initial
    value for any time before the first update.
    """

    def __init__(self, initial: np.ndarray):
        self.times: list[float] = [-math.inf]
        self.values: list[np.ndarray] = [np.array(initial, dtype=float, copy=True)]
        self.floor = -math.inf

    def append(self, t: float, value: np.ndarray) -> None:
        if t < self.times[-1]:
            raise ValueError(f"snapshot at {t} precedes the last one at {self.times[-1]}")
        self.times.append(float(t))
        self.values.append(np.array(value, dtype=float, copy=True))

    def read(self, t: float) -> np.ndarray:
        if t < self.floor:
            raise RuntimeError(f"read at {t} below the pruned horizon {self.floor}")
        return self.values[bisect_right(self.times, t) - 1]

    def prune(self, before: float) -> None:
        """Drop snapshots that no read at time ``>= before`` can reach."""
        k = bisect_right(self.times, before) - 1
        if k > 0:
            del self.times[:k]
            del self.values[:k]
        self.floor = max(self.floor, before)

    def __len__(self) -> int:
        return len(self.times)


def read_delayed(buffer: HistoryBuffer, t: float, tau: float) -> np.ndarray:
    return buffer.read(t - tau)


class BlockObjective(Protocol):
    """Smooth strongly convex function of block variables.

    ``grad_block(k, blocks)`` is the partial gradient with respect to block
    ``k`` at the point given as a list of block arrays.
    """

    n_blocks: int
    block_dims: Sequence[int]
    sigma: float
    L: np.ndarray
    M: np.ndarray
    adjacency: Sequence[Sequence[int]]

    def grad_block(self, k: int, blocks: list[np.ndarray]) -> np.ndarray: ...

    def value(self, blocks: list[np.ndarray]) -> float: ...


@dataclass
class QuadraticBlockObjective:
    """``G(x) = x^T Q x / 2 - b^T x`` split into contiguous coordinate blocks."""

    Q: np.ndarray
    b: np.ndarray
    block_dims: Sequence[int]
    sigma: float = field(init=False)
    L: np.ndarray = field(init=False)
    M: np.ndarray = field(init=False)
    adjacency: list = field(init=False)

    def __post_init__(self):
        self.Q = np.asarray(self.Q, float)
        self.b = np.asarray(self.b, float)
        self._cuts = np.r_[0, np.cumsum(self.block_dims)]
        if self._cuts[-1] != self.Q.shape[0]:
            raise ValueError("block sizes do not cover Q")
        nb = len(self.block_dims)
        self.M = np.zeros((nb, nb))
        for k in range(nb):
            for l in range(nb):
                self.M[k, l] = np.linalg.norm(self._blk(k, l), 2)
        self.L = np.diag(self.M).copy()
        self.sigma = float(np.linalg.eigvalsh(self.Q)[0])
        self.adjacency = [[l for l in range(nb) if self.M[k, l] > 0] for k in range(nb)]

    @property
    def n_blocks(self) -> int:
        return len(self.block_dims)

    def _blk(self, k, l):
        c = self._cuts
        return self.Q[c[k]:c[k + 1], c[l]:c[l + 1]]

    def split(self, x: np.ndarray) -> list[np.ndarray]:
        c = self._cuts
        return [np.array(x[c[k]:c[k + 1]], float) for k in range(self.n_blocks)]

    def grad_block(self, k: int, blocks: list[np.ndarray]) -> np.ndarray:
        c = self._cuts
        return self.Q[c[k]:c[k + 1]] @ np.concatenate(blocks) - self.b[c[k]:c[k + 1]]

    def value(self, blocks: list[np.ndarray]) -> float:
        x = np.concatenate(blocks)
        return 0.5 * float(x @ self.Q @ x) - float(self.b @ x)

    def minimizer(self) -> list[np.ndarray]:
        return self.split(np.linalg.solve(self.Q, self.b))


def generic_step_sizes(p, tau, L, M, adjacency) -> np.ndarray:
    """``K_k = p_k / (1 + sum_{l~k} p_l (tau_k M_kl + e tau_l M_lk) / sqrt(L_k L_l))``.

    The gradient step of block ``k`` is then ``K_k / (p_k L_k)``.
    """
    p = np.asarray(p, float)
    tau = np.asarray(tau, float)
    L = np.asarray(L, float)
    M = np.asarray(M, float)
    if (L <= 0).any():
        raise ValueError("block smoothness constants must be positive")
    K = np.empty(len(p))
    for k in range(len(p)):
        s = 0.0
        for l in adjacency[k]:
            s += p[l] * (tau[k] * M[k, l] + math.e * tau[l] * M[l, k]) / math.sqrt(L[k] * L[l])
        K[k] = p[k] / (1.0 + s)
    return K


@dataclass
class Trace:
    """Sampled run output.

    ``err2`` is the squared distance of the output to the target,
    ``ewa_err2`` the same for the exponentially averaged output, and
    ``werr2`` the exponentially weighted time average of ``err2``.
    ``status`` is 0 for a completed run, 1 if the state became non-finite and
    2 if the error exceeded ``BLOWUP`` times its initial value.
    """

    times: np.ndarray
    err2: np.ndarray
    energy: np.ndarray
    attempted: np.ndarray
    accepted: np.ndarray
    conserved: np.ndarray | None = None
    ewa_err2: np.ndarray | None = None
    werr2: np.ndarray | None = None
    states: np.ndarray | None = None
    duals: np.ndarray | None = None
    gap: np.ndarray | None = None
    status: int = 0
    final: np.ndarray | None = None
    final_dual: np.ndarray | None = None

    @property
    def diverged(self) -> bool:
        return self.status != 0


def run(objective, times, blocks, step_sizes, x0: list[np.ndarray], sample_times, delays,
        accepted=None, energy=None, target: list[np.ndarray] | None = None, prune: bool = True,
        record_states: bool = False, optimum_value: float | None = None) -> Trace:
    """Simulate the jump process on a given event sequence.

    ``blocks[k]`` is the block updated at ``times[k]``; rejected events
    (``accepted[k] == 0``) change nothing but are counted. Samples record the
    state after every event at or before the sample time.
    """
    times = np.asarray(times, float)
    blocks = np.asarray(blocks, np.int64)
    if len(times) and (np.diff(times) < 0).any():
        raise ValueError("event times must be non-decreasing")
    nb = objective.n_blocks
    acc = np.ones(len(times), bool) if accepted is None else np.asarray(accepted, bool)
    en = np.zeros(len(times)) if energy is None else np.asarray(energy, float)
    delays = np.asarray(delays, float)
    eta = np.asarray(step_sizes, float)
    sample_times = np.asarray(sample_times, float)
    state = [np.array(v, float, copy=True) for v in x0]
    hist = [HistoryBuffer(v) for v in state]
    if target is None and hasattr(objective, "minimizer"):
        target = objective.minimizer()

    def err(st):
        if target is None:
            return math.nan
        return float(sum(((a - b) ** 2).sum() for a, b in zip(st, target)))

    S = len(sample_times)
    out = Trace(sample_times.copy(), np.full(S, np.nan), np.full(S, np.nan), np.zeros(S, np.int64),
                np.zeros(S, np.int64), gap=np.full(S, np.nan))
    states = [] if record_states else None
    err0 = err(state)
    n_att = n_acc = 0
    total_en = 0.0
    tau_max = float(delays.max()) if delays.size else 0.0
    max_gap = 0.0
    prev_t = 0.0
    ns = 0
    e = 0
    E = len(times)
    while True:
        while ns < S and (e >= E or sample_times[ns] < times[e]):
            out.err2[ns] = err(state)
            if optimum_value is not None:
                out.gap[ns] = objective.value(state) - optimum_value
            out.energy[ns] = total_en
            out.attempted[ns] = n_att
            out.accepted[ns] = n_acc
            if record_states:
                states.append(np.concatenate([s.ravel() for s in state]))
            if err0 > 0 and out.err2[ns] > BLOWUP * err0:
                out.status = 2
            ns += 1
        if out.status or e >= E:
            break
        t = times[e]
        k = int(blocks[e])
        n_att += 1
        max_gap = max(max_gap, t - prev_t)
        prev_t = t
        if acc[e]:
            n_acc += 1
            total_en += en[e]
            read = [h.read(t - delays[k]) for h in hist]
            state[k] = state[k] - eta[k] * objective.grad_block(k, read)
            if not np.isfinite(state[k]).all():
                out.status = 1
                break
            hist[k].append(t, state[k])
        if prune and e % 256 == 255:
            horizon = t - 2.0 * (tau_max + max_gap)
            for h in hist:
                h.prune(horizon)
        e += 1
    if record_states:
        out.states = np.array(states)
    out.final = np.concatenate([s.ravel() for s in state])
    return out
