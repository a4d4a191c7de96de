"""Poisson clocks, capacity gating and sliding-window counts."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import backend
from .network import NetworkSpec

__all__ = [
    "COMM",
    "COMP",
    "PointStream",
    "EventStream",
    "clock_rng",
    "sample_ppp",
    "merge_streams",
    "window_count",
    "network_events",
    "gate_events",
    "capacity_audit",
    "poisson_tail_bound",
]

COMM = 0
COMP = 1
# clock families used to key random streams
KEY_EDGE, KEY_COMP, KEY_NODE, KEY_PICK = 0, 1, 2, 3

VIOLATION_NAMES = {1: "edge", 2: "comm_i", 4: "comm_j", 8: "comp"}


def clock_rng(seed: int, kind: int, a: int, b: int = 0) -> np.random.Generator:
    """Independent random stream for one clock, keyed by ``(seed, kind, a, b)``.

    Adding or removing a clock leaves the other clocks' streams unchanged.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(kind), int(a), int(b))))


@dataclass(frozen=True)
class PointStream:
    clock: tuple
    rate: float
    points: np.ndarray


def sample_ppp(rate: float, horizon: float, rng: np.random.Generator, clock: tuple = ()) -> PointStream:
    """Homogeneous Poisson process on ``[0, horizon]`` from exponential gaps."""
    if not rate > 0:
        raise ValueError(f"rate must be positive, got {rate}")
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    mean = rate * horizon
    chunk = int(mean + 6.0 * math.sqrt(mean) + 16)
    times = np.cumsum(rng.exponential(1.0 / rate, size=chunk))
    while times[-1] <= horizon:
        more = np.cumsum(rng.exponential(1.0 / rate, size=chunk)) + times[-1]
        times = np.concatenate([times, more])
    return PointStream(clock, float(rate), times[: np.searchsorted(times, horizon, side="right")])


def merge_streams(streams: list[PointStream]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Merge into global time order, ties broken by stream position then
    sequence number. Returns ``(times, stream index, sequence number)``."""
    if not streams:
        return np.zeros(0), np.zeros(0, np.int64), np.zeros(0, np.int64)
    times = np.concatenate([s.points for s in streams])
    sid = np.concatenate([np.full(len(s.points), k, np.int64) for k, s in enumerate(streams)])
    seq = np.concatenate([np.arange(len(s.points), dtype=np.int64) for s in streams])
    order = np.argsort(times, kind="stable")
    return times[order], sid[order], seq[order]


def window_count(points, t: float, tau: float) -> int:
    """Number of points in the half-open window ``[t - tau, t)``."""
    pts = points.points if isinstance(points, PointStream) else np.asarray(points, float)
    if tau <= 0:
        return 0
    return int(np.searchsorted(pts, t, side="left") - np.searchsorted(pts, t - tau, side="left"))


@dataclass
class EventStream:
    """Merged clock ticks of a network.

    ``kind`` is ``COMM`` (edge ``edge`` between ``i`` and ``j``) or ``COMP``
    (node ``i``; ``edge`` and ``j`` are -1). ``violated`` is a bitmask over
    ``VIOLATION_NAMES``.
    """

    time: np.ndarray
    kind: np.ndarray
    i: np.ndarray
    j: np.ndarray
    edge: np.ndarray
    accepted: np.ndarray
    violated: np.ndarray

    def __len__(self) -> int:
        return len(self.time)

    def violations(self, k: int) -> list[str]:
        return [name for bit, name in VIOLATION_NAMES.items() if self.violated[k] & bit]


def network_events(net: NetworkSpec, horizon: float, seed: int, count_mode: str = "accepted") -> EventStream:
    """Sample every active clock of ``net`` and gate the merged stream."""
    g = net.graph
    streams: list[PointStream] = []
    meta: list[tuple[int, int, int, int]] = []
    for e, (i, j) in enumerate(g.edges):
        if net.p_comm[e] > 0:
            streams.append(sample_ppp(net.p_comm[e], horizon, clock_rng(seed, KEY_EDGE, i, j), (KEY_EDGE, i, j)))
            meta.append((COMM, i, j, e))
    for i in range(g.n):
        if net.p_comp[i] > 0:
            streams.append(sample_ppp(net.p_comp[i], horizon, clock_rng(seed, KEY_COMP, i), (KEY_COMP, i, 0)))
            meta.append((COMP, i, -1, -1))
    times, sid, _ = merge_streams(streams)
    m = np.asarray(meta, dtype=np.int64).reshape(-1, 4)
    rows = m[sid] if len(sid) else np.zeros((0, 4), np.int64)
    ev = EventStream(
        time=times,
        kind=rows[:, 0].astype(np.int8),
        i=rows[:, 1].copy(),
        j=rows[:, 2].copy(),
        edge=rows[:, 3].copy(),
        accepted=np.ones(len(times), np.uint8),
        violated=np.zeros(len(times), np.uint8),
    )
    return gate_events(ev, net, count_mode)


def _constraints(ev: EventStream, net: NetworkSpec):
    g = net.graph
    caps = net.caps
    d = net.delays
    m, n = g.m, g.n
    cons_tau = np.concatenate([d.tau_comm, d.tau_comm_node, d.tau_comp]).astype(float)
    cons_cap = np.concatenate([caps.q_edge, caps.q_comm, caps.q_comp]).astype(float)
    E = len(ev)
    slots = np.full((E, 3), -1, dtype=np.int64)
    comm = ev.kind == COMM
    comp = ~comm
    slots[comm, 0] = ev.edge[comm]
    slots[comm, 1] = m + ev.i[comm]
    slots[comm, 2] = m + ev.j[comm]
    slots[comp, 0] = m + n + ev.i[comp]
    # unbounded constraints never bind; drop them to keep the fold cheap
    unbounded = np.r_[~np.isfinite(cons_cap), True]
    slots[unbounded[slots]] = -1
    return slots, cons_tau, cons_cap


def gate_events(ev: EventStream, net: NetworkSpec, count_mode: str = "accepted") -> EventStream:
    """Apply the capacity caps of ``net`` to a merged event stream.

    With ``count_mode="accepted"`` the window counts include only previously
    accepted events; ``"base"`` counts every tick of the untruncated clocks.
    """
    if count_mode not in ("accepted", "base"):
        raise ValueError(f"count_mode must be 'accepted' or 'base', got {count_mode!r}")
    if not net.caps.bounded or len(ev) == 0:
        ev.accepted = np.ones(len(ev), np.uint8)
        ev.violated = np.zeros(len(ev), np.uint8)
        return ev
    slots, cons_tau, cons_cap = _constraints(ev, net)
    acc, vio = backend.gate(np.ascontiguousarray(ev.time, float), slots, cons_tau, cons_cap, count_mode == "base")
    acc = np.asarray(acc, np.uint8)
    vio = np.asarray(vio, np.uint8)
    comp = ev.kind == COMP
    vio[comp] = np.where(vio[comp] & 1, 8, 0)
    ev.accepted = acc
    ev.violated = vio
    return ev


def capacity_audit(ev: EventStream, net: NetworkSpec) -> int:
    """Replay accepted events and count window-cap violations (0 on a valid run).

    Independent of the gating fold: counts come from sorted searches over the
    accepted times of each constraint.
    """
    slots, cons_tau, cons_cap = _constraints(ev, net)
    acc = np.asarray(ev.accepted, bool)
    bad = 0
    for c in np.unique(slots[slots >= 0]):
        hit = acc & (slots == c).any(axis=1)
        t = ev.time[hit]
        before = np.searchsorted(t, t, side="left") - np.searchsorted(t, t - cons_tau[c], side="left")
        bad += int((before + 1 > cons_cap[c]).sum())
    return bad


def poisson_tail_bound(mu: float, x: float) -> float:
    """Upper bound ``exp(-x^2 / (mu + x))`` on ``P(Z >= mu + x)`` for ``Z ~ Poisson(mu)``."""
    if mu + x <= 0:
        raise ValueError("need mu + x > 0")
    return math.exp(-x * x / (mu + x))
