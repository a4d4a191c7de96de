# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. ``_kernels_py`` is the reference implementation; both
must produce bit-identical results."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1, isfinite, floor, INFINITY

cnp.import_array()


def gate(const double[::1] ev_time, const long long[:, ::1] ev_cons, const double[::1] cons_tau,
         const double[::1] cons_cap, bint count_base):
    cdef Py_ssize_t E = ev_time.shape[0]
    cdef Py_ssize_t C = cons_tau.shape[0]
    cdef Py_ssize_t e, s, c, k
    cdef long long[::1] cap_n = np.zeros(C + 1, dtype=np.int64)
    for e in range(E):
        for s in range(3):
            c = ev_cons[e, s]
            if c >= 0:
                cap_n[c + 1] += 1
    for c in range(C):
        cap_n[c + 1] += cap_n[c]
    cdef double[::1] buf = np.empty(max(cap_n[C], 1), dtype=np.float64)
    cdef long long[::1] head = np.empty(C, dtype=np.int64)
    cdef long long[::1] tail = np.empty(C, dtype=np.int64)
    for c in range(C):
        head[c] = cap_n[c]
        tail[c] = cap_n[c]
    accepted = np.zeros(E, dtype=np.uint8)
    violated = np.zeros(E, dtype=np.uint8)
    cdef unsigned char[::1] acc = accepted
    cdef unsigned char[::1] vio = violated
    cdef double t, lo
    cdef long long cnt
    cdef unsigned char bits
    for e in range(E):
        t = ev_time[e]
        bits = 0
        for s in range(3):
            c = ev_cons[e, s]
            if c < 0:
                continue
            lo = t - cons_tau[c]
            while head[c] < tail[c] and buf[head[c]] < lo:
                head[c] += 1
            cnt = tail[c] - head[c]
            k = tail[c] - 1
            while k >= head[c] and buf[k] >= t:
                cnt -= 1
                k -= 1
            if <double>cnt >= cons_cap[c]:
                bits |= <unsigned char>(1 << s)
        vio[e] = bits
        if bits == 0:
            acc[e] = 1
        if bits == 0 or count_base:
            for s in range(3):
                c = ev_cons[e, s]
                if c >= 0:
                    buf[tail[c]] = t
                    tail[c] += 1
    return accepted, violated


cdef inline Py_ssize_t _find(double[::1] ht, Py_ssize_t lo, Py_ssize_t hi, double tr) nogil:
    # last index in [lo, hi) with ht[idx] <= tr; ht[lo] is -inf
    cdef Py_ssize_t mid
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if ht[mid] <= tr:
            lo = mid
        else:
            hi = mid
    return lo


def simulate(int n, int d,
             const double[::1] ev_time, const signed char[::1] ev_kind, const long long[::1] ev_i,
             const long long[::1] ev_j, const double[::1] ev_tau, const double[::1] ev_cx,
             const double[::1] ev_cy, const unsigned char[::1] ev_acc, const double[::1] ev_energy,
             const double[:, ::1] x0, const double[:, ::1] y0,
             const double[::1] qa, const double[:, ::1] qc, double sigma_half, double ydiv,
             const double[::1] sample_times, double gamma, const double[:, ::1] target, double out_scale,
             double cons_wx, double cons_wy, double blowup, bint record_states):
    cdef Py_ssize_t E = ev_time.shape[0]
    cdef Py_ssize_t S = sample_times.shape[0]
    cdef Py_ssize_t e, i, j, k, s, h, hi_, hj_, a, b
    cdef bint use_ewa = gamma > 0.0

    # per-node history, CSR layout, slot 0 holds the initial value at -inf
    cdef long long[::1] off = np.zeros(n + 1, dtype=np.int64)
    for e in range(E):
        if ev_acc[e]:
            off[ev_i[e] + 1] += 1
            if ev_kind[e] == 0:
                off[ev_j[e] + 1] += 1
    for i in range(n):
        off[i + 1] += off[i] + 1
    cdef Py_ssize_t total = off[n] + 0
    cdef double[::1] ht = np.empty(total, dtype=np.float64)
    cdef double[:, ::1] hx = np.empty((total, d), dtype=np.float64)
    cdef double[:, ::1] hy = np.empty((total, d), dtype=np.float64)
    cdef long long[::1] hlen = np.ones(n, dtype=np.int64)

    cdef double[:, ::1] x = np.array(x0, dtype=np.float64, copy=True)
    cdef double[:, ::1] y = np.array(y0, dtype=np.float64, copy=True)
    for i in range(n):
        ht[off[i]] = -INFINITY
        for k in range(d):
            hx[off[i], k] = x[i, k]
            hy[off[i], k] = y[i, k]

    err2 = np.full(S, np.nan)
    ewa_err2 = np.full(S, np.nan)
    werr2 = np.full(S, np.nan)
    energy = np.full(S, np.nan)
    attempted = np.zeros(S, dtype=np.int64)
    accepted = np.zeros(S, dtype=np.int64)
    conserved = np.full((S, d), np.nan)
    cdef double[::1] o_err2 = err2, o_ewa = ewa_err2, o_werr2 = werr2, o_energy = energy
    cdef long long[::1] o_att = attempted, o_acc = accepted
    cdef double[:, ::1] o_cons = conserved
    cdef Py_ssize_t S_rec = S if record_states else 0
    states_x = np.full((S_rec, n, d), np.nan)
    states_y = np.full((S_rec, n, d), np.nan)
    cdef double[:, :, ::1] o_sx = states_x, o_sy = states_y

    # exponential averaging accumulators, referenced at t_ref
    cdef double[:, ::1] acc_s = np.zeros((n, d), dtype=np.float64)
    cdef double[::1] last = np.zeros(n, dtype=np.float64)
    cdef double t_ref = 0.0, t_last = 0.0, w_int = 0.0

    cdef double[::1] contrib = np.zeros(n, dtype=np.float64)
    cdef double err_cur = 0.0, err_init = 0.0, v, r, g, xh, yh, delta, dx, t, tr, f, en = 0.0
    cdef long long n_att = 0, n_acc = 0
    cdef int status = 0
    cdef Py_ssize_t ns = 0

    for i in range(n):
        v = 0.0
        for k in range(d):
            r = out_scale * x[i, k] - target[i, k]
            v += r * r
        contrib[i] = v
        err_cur += v
    err_init = err_cur

    e = 0
    while True:
        # emit every sample strictly before the next event time
        while ns < S and (e >= E or sample_times[ns] < ev_time[e]):
            t = sample_times[ns]
            if use_ewa:
                if t > t_last:
                    w_int += err_cur * exp(gamma * (t_last - t_ref)) * expm1(gamma * (t - t_last)) / gamma
                t_last = t
                for i in range(n):
                    if t > last[i]:
                        f = exp(gamma * (last[i] - t_ref)) * expm1(gamma * (t - last[i])) / gamma
                        for k in range(d):
                            acc_s[i, k] += (out_scale * x[i, k]) * f
                    last[i] = t
                f = exp(gamma * (t_ref - t))
                for i in range(n):
                    for k in range(d):
                        acc_s[i, k] *= f
                w_int *= f
                t_ref = t
            v = 0.0
            for i in range(n):
                contrib[i] = 0.0
                for k in range(d):
                    r = out_scale * x[i, k] - target[i, k]
                    contrib[i] += r * r
                v += contrib[i]
            err_cur = v
            o_err2[ns] = v
            if use_ewa:
                if t > 0.0:
                    f = gamma / (-expm1(-gamma * t))
                    v = 0.0
                    for i in range(n):
                        for k in range(d):
                            r = acc_s[i, k] * f - target[i, k]
                            v += r * r
                    o_ewa[ns] = v
                    o_werr2[ns] = w_int * f
                else:
                    o_ewa[ns] = err_cur
                    o_werr2[ns] = err_cur
            o_energy[ns] = en
            o_att[ns] = n_att
            o_acc[ns] = n_acc
            for k in range(d):
                v = 0.0
                for i in range(n):
                    v += cons_wx * x[i, k] + cons_wy * y[i, k]
                o_cons[ns, k] = v
            if record_states:
                for i in range(n):
                    for k in range(d):
                        o_sx[ns, i, k] = x[i, k]
                        o_sy[ns, i, k] = y[i, k]
            ns += 1
            if blowup > 0.0 and err_init > 0.0 and err_cur > blowup * err_init:
                status = 2
                break
        if status != 0 or e >= E:
            break

        t = ev_time[e]
        n_att += 1
        if ev_acc[e]:
            n_acc += 1
            en += ev_energy[e]
            i = ev_i[e]
            tr = t - ev_tau[e]
            if use_ewa:
                if t > t_last:
                    w_int += err_cur * exp(gamma * (t_last - t_ref)) * expm1(gamma * (t - t_last)) / gamma
                t_last = t
                if gamma * (t - t_ref) > 300.0:
                    for a in range(n):
                        if t > last[a]:
                            f = exp(gamma * (last[a] - t_ref)) * expm1(gamma * (t - last[a])) / gamma
                            for k in range(d):
                                acc_s[a, k] += (out_scale * x[a, k]) * f
                        last[a] = t
                    f = exp(gamma * (t_ref - t))
                    for a in range(n):
                        for k in range(d):
                            acc_s[a, k] *= f
                    w_int *= f
                    t_ref = t
            if ev_kind[e] == 0:
                j = ev_j[e]
                hi_ = _find(ht, off[i], off[i] + hlen[i], tr)
                hj_ = _find(ht, off[j], off[j] + hlen[j], tr)
                if use_ewa:
                    for h in range(2):
                        a = i if h == 0 else j
                        if t > last[a]:
                            f = exp(gamma * (last[a] - t_ref)) * expm1(gamma * (t - last[a])) / gamma
                            for k in range(d):
                                acc_s[a, k] += (out_scale * x[a, k]) * f
                        last[a] = t
                for k in range(d):
                    delta = ev_cx[e] * (hx[hi_, k] - hx[hj_, k])
                    x[i, k] -= delta
                    x[j, k] += delta
                    if not (isfinite(x[i, k]) and isfinite(x[j, k])):
                        status = 1
                for b in range(2):
                    a = i if b == 0 else j
                    h = off[a] + hlen[a]
                    hlen[a] += 1
                    ht[h] = t
                    v = 0.0
                    for k in range(d):
                        hx[h, k] = x[a, k]
                        hy[h, k] = y[a, k]
                        r = out_scale * x[a, k] - target[a, k]
                        v += r * r
                    err_cur += v - contrib[a]
                    contrib[a] = v
            else:
                hi_ = _find(ht, off[i], off[i] + hlen[i], tr)
                if use_ewa:
                    if t > last[i]:
                        f = exp(gamma * (last[i] - t_ref)) * expm1(gamma * (t - last[i])) / gamma
                        for k in range(d):
                            acc_s[i, k] += (out_scale * x[i, k]) * f
                    last[i] = t
                for k in range(d):
                    xh = hx[hi_, k]
                    yh = hy[hi_, k]
                    g = (yh / ydiv + qa[i] * qc[i, k]) / (qa[i] - sigma_half)
                    dx = xh - g
                    x[i, k] -= ev_cx[e] * dx
                    y[i, k] -= ev_cy[e] * (g - xh)
                    if not (isfinite(x[i, k]) and isfinite(y[i, k])):
                        status = 1
                h = off[i] + hlen[i]
                hlen[i] += 1
                ht[h] = t
                v = 0.0
                for k in range(d):
                    hx[h, k] = x[i, k]
                    hy[h, k] = y[i, k]
                    r = out_scale * x[i, k] - target[i, k]
                    v += r * r
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
        "x": np.asarray(x), "y": np.asarray(y),
    }


cdef inline double _interp(double[:, :, ::1] Y, double[:, :, ::1] F, const double[:, ::1] y0,
                           Py_ssize_t node, Py_ssize_t k, double s, double dt,
                           Py_ssize_t cur, bint hermite) nogil:
    cdef double th, th2, th3
    cdef Py_ssize_t q
    if s <= 0.0:
        return y0[node, k]
    q = <Py_ssize_t>floor(s / dt)
    if q >= cur:
        return Y[cur, node, k]
    th = s / dt - <double>q
    if hermite:
        th2 = th * th
        th3 = th2 * th
        return ((2.0 * th3 - 3.0 * th2 + 1.0) * Y[q, node, k]
                + (th3 - 2.0 * th2 + th) * dt * F[q, node, k]
                + (-2.0 * th3 + 3.0 * th2) * Y[q + 1, node, k]
                + (th3 - th2) * dt * F[q + 1, node, k])
    return (1.0 - th) * Y[q, node, k] + th * Y[q + 1, node, k]


cdef void _rhs(double[:, :, ::1] Y, double[:, :, ::1] F, const double[:, ::1] y0,
               const long long[::1] ei, const long long[::1] ej, const double[::1] K, const double[::1] tau,
               double[:, ::1] ystage, double t, double dt, Py_ssize_t cur, bint hermite,
               double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t e, k, i, j
    cdef Py_ssize_t n = out.shape[0], d = out.shape[1], m = ei.shape[0]
    cdef double a, b, s, w
    for i in range(n):
        for k in range(d):
            out[i, k] = 0.0
    for e in range(m):
        i = ei[e]
        j = ej[e]
        s = t - tau[e]
        for k in range(d):
            if tau[e] == 0.0:
                a = ystage[i, k]
                b = ystage[j, k]
            else:
                a = _interp(Y, F, y0, i, k, s, dt, cur, hermite)
                b = _interp(Y, F, y0, j, k, s, dt, cur, hermite)
            w = K[e] * (a - b)
            out[i, k] -= w
            out[j, k] += w


def dde_rk4(const long long[::1] ei, const long long[::1] ej, const double[::1] K, const double[::1] tau,
            const double[:, ::1] y0, double dt, Py_ssize_t nsteps, bint hermite):
    cdef Py_ssize_t n = y0.shape[0], d = y0.shape[1]
    Yarr = np.zeros((nsteps + 1, n, d))
    Farr = np.zeros((nsteps + 1, n, d))
    cdef double[:, :, ::1] Y = Yarr, F = Farr
    cdef double[:, ::1] k1 = np.zeros((n, d)), k2 = np.zeros((n, d))
    cdef double[:, ::1] k3 = np.zeros((n, d)), k4 = np.zeros((n, d)), tmp = np.zeros((n, d))
    cdef Py_ssize_t q, i, k
    cdef double t
    cdef int status = 0
    for i in range(n):
        for k in range(d):
            Y[0, i, k] = y0[i, k]
    for q in range(nsteps):
        t = q * dt
        _rhs(Y, F, y0, ei, ej, K, tau, Y[q], t, dt, q, hermite, k1)
        for i in range(n):
            for k in range(d):
                F[q, i, k] = k1[i, k]
                tmp[i, k] = Y[q, i, k] + 0.5 * dt * k1[i, k]
        _rhs(Y, F, y0, ei, ej, K, tau, tmp, t + 0.5 * dt, dt, q, hermite, k2)
        for i in range(n):
            for k in range(d):
                tmp[i, k] = Y[q, i, k] + 0.5 * dt * k2[i, k]
        _rhs(Y, F, y0, ei, ej, K, tau, tmp, t + 0.5 * dt, dt, q, hermite, k3)
        for i in range(n):
            for k in range(d):
                tmp[i, k] = Y[q, i, k] + dt * k3[i, k]
        _rhs(Y, F, y0, ei, ej, K, tau, tmp, t + dt, dt, q, hermite, k4)
        for i in range(n):
            for k in range(d):
                Y[q + 1, i, k] = Y[q, i, k] + dt / 6.0 * (k1[i, k] + 2.0 * k2[i, k] + 2.0 * k3[i, k] + k4[i, k])
                if not isfinite(Y[q + 1, i, k]):
                    status = 1
        if status:
            return Yarr[: q + 2], Farr[: q + 2], status
    _rhs(Y, F, y0, ei, ej, K, tau, Y[nsteps], nsteps * dt, dt, nsteps, hermite, k1)
    for i in range(n):
        for k in range(d):
            F[nsteps, i, k] = k1[i, k]
    return Yarr, Farr, status
