"""Pure-Python versions of the compiled loops in ``_kernels.pyx``.

``gate`` and ``simulate`` follow the compiled code operation by operation so
both paths produce bit-identical output. ``dde_rk4`` is vectorised over edges
and agrees with the compiled version to rounding.
"""

from __future__ import annotations

import math

import numpy as np

_exp = math.exp
_expm1 = math.expm1
_isfinite = math.isfinite


def gate(ev_time, ev_cons, cons_tau, cons_cap, count_base):
    E = len(ev_time)
    C = len(cons_tau)
    times = ev_time.tolist()
    cons = ev_cons.tolist()
    taus = cons_tau.tolist()
    caps = cons_cap.tolist()
    bufs = [[] for _ in range(C)]
    heads = [0] * C
    accepted = np.zeros(E, dtype=np.uint8)
    violated = np.zeros(E, dtype=np.uint8)
    for e in range(E):
        t = times[e]
        slots = cons[e]
        bits = 0
        for s in range(3):
            c = slots[s]
            if c < 0:
                continue
            buf = bufs[c]
            h = heads[c]
            lo = t - taus[c]
            while h < len(buf) and buf[h] < lo:
                h += 1
            heads[c] = h
            cnt = len(buf) - h
            k = len(buf) - 1
            while k >= h and buf[k] >= t:
                cnt -= 1
                k -= 1
            if cnt >= caps[c]:
                bits |= 1 << s
        violated[e] = bits
        if bits == 0:
            accepted[e] = 1
        if bits == 0 or count_base:
            for s in range(3):
                c = slots[s]
                if c >= 0:
                    bufs[c].append(t)
    return accepted, violated


def _find(ht, tr):
    # last index with ht[idx] <= tr; ht[0] is -inf
    lo, hi = 0, len(ht)
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if ht[mid] <= tr:
            lo = mid
        else:
            hi = mid
    return lo


def simulate(n, d, ev_time, ev_kind, ev_i, ev_j, ev_tau, ev_cx, ev_cy, ev_acc, ev_energy,
             x0, y0, qa, qc, sigma_half, ydiv, sample_times, gamma, target, out_scale,
             cons_wx, cons_wy, blowup, record_states):
    E = len(ev_time)
    S = len(sample_times)
    use_ewa = gamma > 0.0
    times = ev_time.tolist()
    kinds = ev_kind.tolist()
    evi = ev_i.tolist()
    evj = ev_j.tolist()
    taus = ev_tau.tolist()
    cxs = ev_cx.tolist()
    cys = ev_cy.tolist()
    accs = ev_acc.tolist()
    ens = ev_energy.tolist()
    samples = sample_times.tolist()
    qa_ = qa.tolist()
    qc_ = qc.tolist()
    tgt = target.tolist()

    x = np.array(x0, dtype=np.float64).tolist()
    y = np.array(y0, dtype=np.float64).tolist()
    ht = [[-math.inf] for _ in range(n)]
    hx = [[list(x[i])] for i in range(n)]
    hy = [[list(y[i])] for i in range(n)]

    err2 = np.full(S, np.nan)
    ewa_err2 = np.full(S, np.nan)
    werr2 = np.full(S, np.nan)
    energy = np.full(S, np.nan)
    attempted = np.zeros(S, dtype=np.int64)
    accepted = np.zeros(S, dtype=np.int64)
    conserved = np.full((S, d), np.nan)
    states_x = np.full((S, n, d) if record_states else (0, n, d), np.nan)
    states_y = np.full((S, n, d) if record_states else (0, n, d), np.nan)

    acc_s = [[0.0] * d for _ in range(n)]
    last = [0.0] * n
    t_ref = 0.0
    t_last = 0.0
    w_int = 0.0
    contrib = [0.0] * n
    err_cur = 0.0
    en = 0.0
    n_att = 0
    n_acc = 0
    status = 0
    ns = 0

    def flush(a, t):
        if t > last[a]:
            f = _exp(gamma * (last[a] - t_ref)) * _expm1(gamma * (t - last[a])) / gamma
            xa = x[a]
            sa = acc_s[a]
            for k in range(d):
                sa[k] += (out_scale * xa[k]) * f
        last[a] = t

    def node_err(a):
        v = 0.0
        xa = x[a]
        ta = tgt[a]
        for k in range(d):
            r = out_scale * xa[k] - ta[k]
            v += r * r
        return v

    for i in range(n):
        contrib[i] = node_err(i)
        err_cur += contrib[i]
    err_init = err_cur

    e = 0
    while True:
        while ns < S and (e >= E or samples[ns] < times[e]):
            t = samples[ns]
            if use_ewa:
                if t > t_last:
                    w_int += err_cur * _exp(gamma * (t_last - t_ref)) * _expm1(gamma * (t - t_last)) / gamma
                t_last = t
                for i in range(n):
                    flush(i, t)
                f = _exp(gamma * (t_ref - t))
                for i in range(n):
                    sa = acc_s[i]
                    for k in range(d):
                        sa[k] *= f
                w_int *= f
                t_ref = t
            v = 0.0
            for i in range(n):
                contrib[i] = 0.0
                xi = x[i]
                ti = tgt[i]
                for k in range(d):
                    r = out_scale * xi[k] - ti[k]
                    contrib[i] += r * r
                v += contrib[i]
            err_cur = v
            err2[ns] = v
            if use_ewa:
                if t > 0.0:
                    f = gamma / (-_expm1(-gamma * t))
                    v = 0.0
                    for i in range(n):
                        sa = acc_s[i]
                        ti = tgt[i]
                        for k in range(d):
                            r = sa[k] * f - ti[k]
                            v += r * r
                    ewa_err2[ns] = v
                    werr2[ns] = w_int * f
                else:
                    ewa_err2[ns] = err_cur
                    werr2[ns] = err_cur
            energy[ns] = en
            attempted[ns] = n_att
            accepted[ns] = n_acc
            for k in range(d):
                v = 0.0
                for i in range(n):
                    v += cons_wx * x[i][k] + cons_wy * y[i][k]
                conserved[ns, k] = v
            if record_states:
                states_x[ns] = x
                states_y[ns] = y
            ns += 1
            if blowup > 0.0 and err_init > 0.0 and err_cur > blowup * err_init:
                status = 2
                break
        if status != 0 or e >= E:
            break

        t = times[e]
        n_att += 1
        if accs[e]:
            n_acc += 1
            en += ens[e]
            i = evi[e]
            tr = t - taus[e]
            if use_ewa:
                if t > t_last:
                    w_int += err_cur * _exp(gamma * (t_last - t_ref)) * _expm1(gamma * (t - t_last)) / gamma
                t_last = t
                if gamma * (t - t_ref) > 300.0:
                    for a in range(n):
                        flush(a, t)
                    f = _exp(gamma * (t_ref - t))
                    for a in range(n):
                        sa = acc_s[a]
                        for k in range(d):
                            sa[k] *= f
                    w_int *= f
                    t_ref = t
            cx = cxs[e]
            if kinds[e] == 0:
                j = evj[e]
                ri = hx[i][_find(ht[i], tr)]
                rj = hx[j][_find(ht[j], tr)]
                if use_ewa:
                    flush(i, t)
                    flush(j, t)
                xi = x[i]
                xj = x[j]
                for k in range(d):
                    delta = cx * (ri[k] - rj[k])
                    xi[k] -= delta
                    xj[k] += delta
                    if not (_isfinite(xi[k]) and _isfinite(xj[k])):
                        status = 1
                for a in (i, j):
                    ht[a].append(t)
                    hx[a].append(list(x[a]))
                    hy[a].append(list(y[a]))
                    v = node_err(a)
                    err_cur += v - contrib[a]
                    contrib[a] = v
            else:
                h = _find(ht[i], tr)
                rx = hx[i][h]
                ry = hy[i][h]
                if use_ewa:
                    flush(i, t)
                cy = cys[e]
                xi = x[i]
                yi = y[i]
                a_i = qa_[i]
                c_i = qc_[i]
                for k in range(d):
                    xh = rx[k]
                    yh = ry[k]
                    g = (yh / ydiv + a_i * c_i[k]) / (a_i - sigma_half)
                    dx = xh - g
                    xi[k] -= cx * dx
                    yi[k] -= cy * (g - xh)
                    if not (_isfinite(xi[k]) and _isfinite(yi[k])):
                        status = 1
                ht[i].append(t)
                hx[i].append(list(xi))
                hy[i].append(list(yi))
                v = node_err(i)
                err_cur += v - contrib[i]
                contrib[i] = v
        e += 1
        if status != 0:
            break

    return {
        "err2": err2, "ewa_err2": ewa_err2, "werr2": werr2, "energy": energy,
        "attempted": attempted, "accepted": accepted, "conserved": conserved,
        "states_x": states_x, "states_y": states_y, "status": status,
        "events_done": e, "samples_done": ns,
        "x": np.array(x, dtype=np.float64).reshape(n, d), "y": np.array(y, dtype=np.float64).reshape(n, d),
    }


def _interp(Y, F, y0, nodes, s, dt, cur, hermite):
    """Delayed reads ``y_node(s)`` for arrays of nodes and times."""
    out = np.empty((len(nodes), Y.shape[2]))
    before = s <= 0.0
    out[before] = y0[nodes[before]]
    rest = ~before
    if rest.any():
        sr = s[rest]
        nr = nodes[rest]
        q = np.floor(sr / dt).astype(np.int64)
        at_end = q >= cur
        vals = np.empty((len(sr), Y.shape[2]))
        vals[at_end] = Y[cur, nr[at_end]]
        mid = ~at_end
        if mid.any():
            qm = q[mid]
            nm = nr[mid]
            th = (sr[mid] / dt - qm)[:, None]
            if hermite:
                th2 = th * th
                th3 = th2 * th
                vals[mid] = ((2.0 * th3 - 3.0 * th2 + 1.0) * Y[qm, nm]
                             + (th3 - 2.0 * th2 + th) * dt * F[qm, nm]
                             + (-2.0 * th3 + 3.0 * th2) * Y[qm + 1, nm]
                             + (th3 - th2) * dt * F[qm + 1, nm])
            else:
                vals[mid] = (1.0 - th) * Y[qm, nm] + th * Y[qm + 1, nm]
        out[rest] = vals
    return out


def dde_rk4(ei, ej, K, tau, y0, dt, nsteps, hermite):
    ei = np.asarray(ei, np.int64)
    ej = np.asarray(ej, np.int64)
    K = np.asarray(K, float)
    tau = np.asarray(tau, float)
    y0 = np.asarray(y0, float)
    n, d = y0.shape
    Y = np.zeros((nsteps + 1, n, d))
    F = np.zeros((nsteps + 1, n, d))
    Y[0] = y0
    inst = tau == 0.0
    dl = ~inst
    ii, jj, Kd, td = ei[dl], ej[dl], K[dl][:, None], tau[dl]
    ki, kj, Ki = ei[inst], ej[inst], K[inst][:, None]

    def rhs(ystage, t, cur):
        out = np.zeros((n, d))
        if Ki.size:
            w = Ki * (ystage[ki] - ystage[kj])
            np.add.at(out, ki, -w)
            np.add.at(out, kj, w)
        if Kd.size:
            s = t - td
            w = Kd * (_interp(Y, F, y0, ii, s, dt, cur, hermite) - _interp(Y, F, y0, jj, s, dt, cur, hermite))
            np.add.at(out, ii, -w)
            np.add.at(out, jj, w)
        return out

    for q in range(nsteps):
        t = q * dt
        k1 = rhs(Y[q], t, q)
        F[q] = k1
        k2 = rhs(Y[q] + 0.5 * dt * k1, t + 0.5 * dt, q)
        k3 = rhs(Y[q] + 0.5 * dt * k2, t + 0.5 * dt, q)
        k4 = rhs(Y[q] + dt * k3, t + dt, q)
        Y[q + 1] = Y[q] + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(Y[q + 1]).all():
            return Y[: q + 2], F[: q + 2], 1
    F[nsteps] = rhs(Y[nsteps], nsteps * dt, nsteps)
    return Y, F, 0
