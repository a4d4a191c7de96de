"""Delayed randomized gossip for network averaging.

Oracle mode runs one Poisson clock per edge; at a tick ``t`` of edge ``(ij)``
both endpoints move along the difference of their values as they were at
``t - tau_ij``. Protocol mode schedules the same exchanges from node clocks
with a ping handshake, so reads are ``tau_ij + 2 tau_ping`` old.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .engine import BLOWUP, Trace
from .graph import GraphError
from .kernels import backend
from .network import NetworkSpec
from .ppp import COMM, KEY_NODE, KEY_PICK, EventStream, clock_rng, network_events

__all__ = ["ProtocolConfig", "run_gossip", "protocol_events", "ewa", "consensus_error", "simulate_events"]


@dataclass(frozen=True)
class ProtocolConfig:
    """``mode`` is ``"oracle"`` or ``"protocol"``; ``tau_ping`` (scalar or per
    edge) only matters in protocol mode."""

    mode: str = "oracle"
    tau_ping: float | np.ndarray = 0.0

    def ping(self, net: NetworkSpec) -> np.ndarray:
        tp = net.graph.edge_array(self.tau_ping, "tau_ping")
        if (tp < 0).any():
            raise GraphError("tau_ping must be non-negative")
        if (tp > net.delays.tau_comm).any():
            raise GraphError("tau_ping exceeds the edge delay on some edge")
        return tp


def default_samples(horizon: float, n: int = 201) -> np.ndarray:
    return np.linspace(0.0, horizon, n)


def simulate_events(n: int, d: int, ev: EventStream, tau_read: np.ndarray, cx: np.ndarray, cy: np.ndarray,
                    energy: np.ndarray, x0, y0, sample_times, gamma: float, target, *,
                    qa=None, qc=None, sigma_half: float = 0.0, ydiv: float = 1.0, out_scale: float = 1.0,
                    cons_wx: float = 1.0, cons_wy: float = 0.0, record_states: bool = False,
                    kernels=None) -> Trace:
    """Run the compiled (or fallback) event loop and wrap its output."""
    kb = kernels or backend
    sample_times = np.ascontiguousarray(sample_times, float)
    res = kb.simulate(
        int(n), int(d),
        np.ascontiguousarray(ev.time, float), np.ascontiguousarray(ev.kind, np.int8),
        np.ascontiguousarray(ev.i, np.int64), np.ascontiguousarray(ev.j, np.int64),
        np.ascontiguousarray(tau_read, float), np.ascontiguousarray(cx, float), np.ascontiguousarray(cy, float),
        np.ascontiguousarray(ev.accepted, np.uint8), np.ascontiguousarray(energy, float),
        np.ascontiguousarray(x0, float).reshape(n, d), np.ascontiguousarray(y0, float).reshape(n, d),
        np.ascontiguousarray(np.zeros(n) if qa is None else qa, float),
        np.ascontiguousarray(np.zeros((n, d)) if qc is None else qc, float).reshape(n, d),
        float(sigma_half), float(ydiv), sample_times, float(gamma),
        np.ascontiguousarray(target, float).reshape(n, d), float(out_scale),
        float(cons_wx), float(cons_wy), BLOWUP, bool(record_states),
    )
    return Trace(
        times=sample_times.copy(), err2=res["err2"], energy=res["energy"], attempted=res["attempted"],
        accepted=res["accepted"], conserved=res["conserved"], ewa_err2=res["ewa_err2"], werr2=res["werr2"],
        states=res["states_x"] if record_states else None, duals=res["states_y"] if record_states else None,
        status=int(res["status"]), final=res["x"], final_dual=res["y"],
    )


def _window_ok(entries: list, s: float, width: float, cap: float) -> bool:
    # entries are [start, valid_until]; live ones started in [s - width, s)
    if not math.isfinite(cap):
        return True
    cnt = sum(1 for a, b in entries if s - width <= a < s and b > s)
    return cnt < cap


def protocol_events(net: NetworkSpec, horizon: float, seed: int, protocol: ProtocolConfig) -> tuple[EventStream, np.ndarray]:
    """Node-initiated handshakes turned into update events.

    Node ``i`` ticks at rate ``sum_j p_ij / 2`` and picks ``j`` with
    probability proportional to ``p_ij``. A handshake started at ``t`` is
    checked against ``i``'s communication cap at ``t``, ``j``'s at
    ``t + tau_ping`` and the edge cap at ``t + 2 tau_ping``; if it passes, the
    update lands at ``t + 2 tau_ping + tau_ij`` using values from time ``t``.
    Refused handshakes appear as rejected events at their refusal time.
    Returns the events and the read delay of each.
    """
    g = net.graph
    tp = protocol.ping(net)
    tau = net.delays.tau_comm
    caps = net.caps
    ticks = []
    for i in range(g.n):
        inc = list(g.adjacency[i])
        rates = net.p_comm[inc]
        total = float(rates.sum()) / 2.0
        if total <= 0:
            continue
        rng = clock_rng(seed, KEY_NODE, i)
        pick = clock_rng(seed, KEY_PICK, i)
        t = 0.0
        while True:
            t += rng.exponential(1.0 / total)
            if t > horizon:
                break
            e = inc[min(int(np.searchsorted(np.cumsum(rates), pick.random() * rates.sum(), side="right")), len(inc) - 1)]
            ticks.append((t, i, e))
    ticks.sort(key=lambda r: (r[0], r[1]))

    # phases: 0 initiate at i, 1 ping reaches j, 2 edge check
    heap = [(t, 0, k) for k, (t, _, _) in enumerate(ticks)]
    heapq.heapify(heap)
    node_log: list[list] = [[] for _ in range(g.n)]
    edge_log: list[list] = [[] for _ in range(g.m)]
    held: dict[int, list] = {}
    out = []  # (time, i, j, edge, accepted, read delay)
    while heap:
        s, phase, k = heapq.heappop(heap)
        t0, i, e = ticks[k]
        a, b = g.edges[e]
        j = b if a == i else a
        if phase == 0:
            if not _window_ok(node_log[i], s, net.delays.tau_comm_node[i], caps.q_comm[i]):
                out.append((s, i, j, e, 0, 0.0))
                continue
            ent = [s, math.inf]
            node_log[i].append(ent)
            held[k] = [ent]
            heapq.heappush(heap, (t0 + tp[e], 1, k))
        elif phase == 1:
            if not _window_ok(node_log[j], s, net.delays.tau_comm_node[j], caps.q_comm[j]):
                held[k][0][1] = t0 + 2 * tp[e]
                out.append((t0 + 2 * tp[e], i, j, e, 0, 0.0))
                continue
            ent = [s, math.inf]
            node_log[j].append(ent)
            held[k].append(ent)
            heapq.heappush(heap, (t0 + 2 * tp[e], 2, k))
        else:
            if not _window_ok([[x, math.inf] for x in edge_log[e]], s, tau[e], caps.q_edge[e]):
                for ent in held[k]:
                    ent[1] = s
                out.append((s, i, j, e, 0, 0.0))
                continue
            edge_log[e].append(s)
            u = s + tau[e]
            if u <= horizon:
                out.append((u, i, j, e, 1, tau[e] + 2 * tp[e]))
    out.sort(key=lambda r: r[0])
    arr = np.array([r[:5] for r in out], dtype=float).reshape(-1, 5)
    ev = EventStream(
        time=arr[:, 0].copy(),
        kind=np.full(len(arr), COMM, np.int8),
        i=arr[:, 1].astype(np.int64),
        j=arr[:, 2].astype(np.int64),
        edge=arr[:, 3].astype(np.int64),
        accepted=arr[:, 4].astype(np.uint8),
        violated=np.zeros(len(arr), np.uint8),
    )
    return ev, np.array([r[5] for r in out], dtype=float)


def run_gossip(net: NetworkSpec, K, x0, horizon: float, seed: int, sample_times=None,
               protocol: ProtocolConfig | None = None, gamma: float = 0.0, count_mode: str = "accepted",
               dual_consistent_scaling: bool = False, record_states: bool = False, kernels=None) -> Trace:
    """Simulate delayed randomized gossip up to ``horizon``.

    An accepted tick of edge ``(ij)`` sets ``x_i -= (K_ij/p_ij)(xh_i - xh_j)``
    and ``x_j += (K_ij/p_ij)(xh_i - xh_j)`` with delayed reads ``xh``.
    ``gamma > 0`` also tracks the exponentially averaged trajectory.
    ``dual_consistent_scaling`` halves the coefficient.
    """
    protocol = protocol or ProtocolConfig()
    g = net.graph
    K = g.edge_array(K, "K")
    if (K <= 0).any() or (net.p_comm <= 0).any():
        raise GraphError("gossip needs positive step sizes and intensities on every edge")
    x0 = np.asarray(x0, float)
    x0 = x0.reshape(g.n, -1)
    d = x0.shape[1]
    coef = K / net.p_comm * (0.5 if dual_consistent_scaling else 1.0)
    comm_only = net.with_intensities(p_comp=np.zeros(g.n))
    if protocol.mode == "oracle":
        ev = network_events(comm_only, horizon, seed, count_mode)
        tau_read = net.delays.tau_comm[ev.edge]
    elif protocol.mode == "protocol":
        ev, tau_read = protocol_events(comm_only, horizon, seed, protocol)
    else:
        raise GraphError(f"unknown gossip mode {protocol.mode!r}")
    if sample_times is None:
        sample_times = default_samples(horizon)
    target = np.broadcast_to(x0.mean(axis=0), x0.shape)
    return simulate_events(
        g.n, d, ev, tau_read, coef[ev.edge], np.zeros(len(ev)), net.delays.tau_comm[ev.edge],
        x0, np.zeros_like(x0), sample_times, gamma, target, record_states=record_states, kernels=kernels,
    )


def ewa(change_times, values, gamma: float, t):
    """Exponentially weighted average ``gamma int_0^t e^{gamma s} x_s ds / (e^{gamma t} - 1)``
    of a piecewise-constant trajectory.

    ``values[k]`` holds on ``[change_times[k], change_times[k+1])`` with
    ``change_times[0] == 0``. Each segment is integrated in closed form.
    """
    ct = np.asarray(change_times, float)
    vals = np.asarray(values, float)
    if ct[0] != 0.0:
        raise ValueError("trajectory must start at time 0")
    if t <= 0:
        return vals[0].copy()
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    ends = np.minimum(np.r_[ct[1:], np.inf], t)
    starts = np.minimum(ct, t)
    w = np.exp(gamma * (starts - t)) * np.expm1(gamma * (ends - starts)) / (-math.expm1(-gamma * t))
    return np.tensordot(w, vals, axes=(0, 0))


def consensus_error(states, average=None) -> np.ndarray:
    """``||x_t - xbar||^2`` for each sampled state (shape ``(S, n, d)``)."""
    states = np.asarray(states, float)
    if average is None:
        average = states[0].mean(axis=0)
    return ((states - np.asarray(average)[None, None, :]) ** 2).sum(axis=(1, 2))
