"""Delayed decentralized optimization: gossip on communication variables
``x`` combined with local dual steps on computation variables ``y``.

Computation ticks of node ``i`` use values read ``tau_i^comp`` in the past:
``g = grad phi_i^*(y_hat / s)``, ``y -= (sigma K/p)(g - x_hat)`` and
``x -= (K/(2p))(x_hat - g)`` with ``phi_i = f_i - (sigma/4)||.||^2``.
Communication ticks are delayed gossip steps on ``x``. Both kinds of update
leave ``sum_i (2 sigma x_i + y_i)`` unchanged.

Two variants are provided. ``"printed"`` uses ``s = 1`` and reports
``(sigma/2) x``; its fixed point solves ``sum_i grad f_i(v) + 1.5 sigma n v = 0``
rather than the optimality condition. ``"consistent"`` (the default) uses
``s = 4`` and reports ``x``, whose fixed point is the minimizer of
``sum_i f_i``.
"""

from __future__ import annotations

import math
from bisect import bisect_right

import numpy as np

from .engine import BLOWUP, Trace
from .gossip import default_samples, simulate_events
from .graph import GraphError
from .network import NetworkSpec
from .ppp import COMM, network_events
from .problems import QuadraticLocal, exact_minimizer

__all__ = ["VARIANTS", "phi_grad", "conj_grad_phi", "run_ddo", "exact_minimizer", "printed_fixed_point"]

VARIANTS = {"consistent": (4.0, None), "printed": (1.0, "half_sigma")}
NEWTON_TOL = 1e-10
NEWTON_ITERS = 200


def phi_grad(local, z, sigma: float) -> np.ndarray:
    """Gradient of ``phi = f - (sigma/4)||.||^2``."""
    z = np.asarray(z, float)
    return local.grad(z) - 0.5 * sigma * z


def conj_grad_phi(local, y, sigma: float) -> np.ndarray:
    """The point ``z`` with ``grad phi(z) = y``.

    Closed form for quadratics; otherwise damped Newton on
    ``phi(z) - <y, z>`` with a backtracking safeguard.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    y = np.asarray(y, float)
    if isinstance(local, QuadraticLocal):
        return (y + local.a * local.c) / (local.a - 0.5 * sigma)
    z = np.zeros_like(y)

    def h(v):
        return local.value(v) - 0.25 * sigma * float(v @ v) - float(y @ v)

    hz = h(z)
    for _ in range(NEWTON_ITERS):
        g = phi_grad(local, z, sigma) - y
        if np.linalg.norm(g) <= NEWTON_TOL:
            return z
        H = local.hess(z) - 0.5 * sigma * np.eye(len(z))
        try:
            C = np.linalg.cholesky(H)
        except np.linalg.LinAlgError:
            raise RuntimeError("conjugate gradient oracle: phi is not strongly convex at the iterate") from None
        step = np.linalg.solve(C.T, np.linalg.solve(C, g))
        s = 1.0
        gnorm = np.linalg.norm(g)
        while True:
            cand = z - s * step
            hc = h(cand)
            if hc <= hz - 1e-4 * s * float(g @ step) or s < 1e-12:
                break
            # near the solution h stalls at rounding level; the gradient norm still decides
            if np.linalg.norm(phi_grad(local, cand, sigma) - y) < (1.0 - 1e-4 * s) * gnorm:
                break
            s *= 0.5
        z, hz = cand, hc
    if np.linalg.norm(phi_grad(local, z, sigma) - y) <= NEWTON_TOL:
        return z
    raise RuntimeError(f"conjugate gradient oracle did not converge in {NEWTON_ITERS} iterations")


def printed_fixed_point(locals_: list, sigma: float) -> np.ndarray:
    """Consensus value reached by the ``"printed"`` variant on quadratics,
    before the ``sigma/2`` output scaling."""
    a = np.array([f.a for f in locals_])
    c = np.stack([f.c for f in locals_])
    return (a[:, None] * c).sum(axis=0) / (a.sum() + 1.5 * sigma * len(locals_))


def _check_locals(locals_, n, sigma):
    if len(locals_) != n:
        raise GraphError(f"expected {n} local functions, got {len(locals_)}")
    for f in locals_:
        if isinstance(f, QuadraticLocal) and f.a < sigma:
            raise GraphError(f"local curvature {f.a} below sigma={sigma}")


def run_ddo(net: NetworkSpec, K_comm, K_comp, locals_: list, horizon: float, seed: int, sigma: float,
            sample_times=None, gamma: float = 0.0, variant: str = "consistent",
            dual_consistent_scaling: bool = False, count_mode: str = "accepted", x0=None, y0=None,
            target=None, record_states: bool = False, kernels=None) -> Trace:
    """Simulate delayed decentralized optimization from ``x = y = 0``.

    ``err2`` in the trace is the squared distance between the node outputs
    and the replicated minimizer.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {sorted(VARIANTS)}")
    g = net.graph
    _check_locals(locals_, g.n, sigma)
    K_comm = g.edge_array(K_comm, "K_comm")
    K_comp = np.asarray(K_comp, float)
    if (net.p_comm <= 0).any():
        raise GraphError("every edge needs a positive intensity")
    d = int(np.asarray(locals_[0].grad(np.zeros(_dim(locals_[0])))).shape[0])
    ydiv, scale_kind = VARIANTS[variant]
    out_scale = 0.5 * sigma if scale_kind == "half_sigma" else 1.0
    x0 = np.zeros((g.n, d)) if x0 is None else np.asarray(x0, float).reshape(g.n, d)
    y0 = np.zeros((g.n, d)) if y0 is None else np.asarray(y0, float).reshape(g.n, d)
    if target is None:
        if all(isinstance(f, QuadraticLocal) for f in locals_):
            target = exact_minimizer(locals_)
        else:
            target = np.full(d, np.nan)
    target = np.broadcast_to(np.asarray(target, float), (g.n, d))
    if sample_times is None:
        sample_times = default_samples(horizon)

    ev = network_events(net, horizon, seed, count_mode)
    comm = ev.kind == COMM
    coef_comm = K_comm / net.p_comm * (0.5 if dual_consistent_scaling else 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        coef_comp_x = np.where(net.p_comp > 0, K_comp / (2.0 * net.p_comp), 0.0)
        coef_comp_y = np.where(net.p_comp > 0, sigma * K_comp / net.p_comp, 0.0)
    cx = np.where(comm, coef_comm[np.where(comm, ev.edge, 0)], coef_comp_x[ev.i])
    cy = np.where(comm, 0.0, coef_comp_y[ev.i])
    tau_read = np.where(comm, net.delays.tau_comm[np.where(comm, ev.edge, 0)], net.delays.tau_comp[ev.i])
    energy = np.where(comm, net.delays.tau_comm[np.where(comm, ev.edge, 0)], 0.0)

    if all(isinstance(f, QuadraticLocal) for f in locals_):
        qa = np.array([f.a for f in locals_], float)
        qc = np.stack([np.asarray(f.c, float) for f in locals_])
        return simulate_events(
            g.n, d, ev, tau_read, cx, cy, energy, x0, y0, sample_times, gamma, target,
            qa=qa, qc=qc, sigma_half=0.5 * sigma, ydiv=ydiv, out_scale=out_scale,
            cons_wx=2.0 * sigma, cons_wy=1.0, record_states=record_states, kernels=kernels,
        )
    return _run_general(g.n, d, ev, tau_read, cx, cy, energy, x0, y0, sample_times, target, locals_,
                        sigma, ydiv, out_scale, record_states)


def _dim(local) -> int:
    if isinstance(local, QuadraticLocal):
        return len(local.c)
    return local.w.shape[1]


def _run_general(n, d, ev, tau_read, cx, cy, energy, x0, y0, sample_times, target, locals_,
                 sigma, ydiv, out_scale, record_states) -> Trace:
    """Event loop for locals without a closed-form conjugate."""
    x = np.array(x0, float)
    y = np.array(y0, float)
    ht = [[-math.inf] for _ in range(n)]
    hx = [[x[i].copy()] for i in range(n)]
    hy = [[y[i].copy()] for i in range(n)]
    S = len(sample_times)
    tr = Trace(np.asarray(sample_times, float).copy(), np.full(S, np.nan), np.full(S, np.nan),
               np.zeros(S, np.int64), np.zeros(S, np.int64), conserved=np.full((S, d), np.nan))
    states, duals = [], []

    def err():
        return float(((out_scale * x - target) ** 2).sum())

    err0 = err()
    n_att = n_acc = 0
    en = 0.0
    ns = 0
    E = len(ev)
    for e in range(E + 1):
        t_next = ev.time[e] if e < E else math.inf
        while ns < S and sample_times[ns] < t_next:
            tr.err2[ns] = err()
            tr.energy[ns] = en
            tr.attempted[ns] = n_att
            tr.accepted[ns] = n_acc
            tr.conserved[ns] = (2.0 * sigma * x + y).sum(axis=0)
            if record_states:
                states.append(x.copy())
                duals.append(y.copy())
            if err0 > 0 and tr.err2[ns] > BLOWUP * err0:
                tr.status = 2
            ns += 1
        if e == E or tr.status:
            break
        n_att += 1
        if not ev.accepted[e]:
            continue
        n_acc += 1
        en += energy[e]
        t = ev.time[e]
        i = int(ev.i[e])
        tr_t = t - tau_read[e]
        ri = bisect_right(ht[i], tr_t) - 1
        if ev.kind[e] == COMM:
            j = int(ev.j[e])
            rj = bisect_right(ht[j], tr_t) - 1
            delta = cx[e] * (hx[i][ri] - hx[j][rj])
            x[i] -= delta
            x[j] += delta
            touched = (i, j)
        else:
            xh, yh = hx[i][ri], hy[i][ri]
            gi = conj_grad_phi(locals_[i], yh / ydiv, sigma)
            x[i] -= cx[e] * (xh - gi)
            y[i] -= cy[e] * (gi - xh)
            touched = (i,)
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            tr.status = 1
            break
        for a in touched:
            ht[a].append(t)
            hx[a].append(x[a].copy())
            hy[a].append(y[a].copy())
    if record_states:
        tr.states = np.array(states)
        tr.duals = np.array(duals)
    tr.final = x
    tr.final_dual = y
    return tr
