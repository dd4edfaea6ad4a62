# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Same signatures and semantics as ``_pykernels``.

Loops are written for the small shapes the re-ranker sees (a few dozen rows,
widths of 8 to 64), where per-call numpy overhead dominates the arithmetic.
"""
import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.math cimport exp, sqrt

cnp.import_array()

BACKEND = "cython"


def smelu_forward(floating[:, ::1] x, double beta):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    out = np.empty((n, d), dtype=np.asarray(x).dtype)
    cdef floating[:, ::1] y = out
    cdef double t, inv4b = 1.0 / (4.0 * beta)
    for i in range(n):
        for j in range(d):
            t = x[i, j]
            if t >= beta:
                y[i, j] = <floating>t
            elif t <= -beta:
                y[i, j] = 0
            else:
                y[i, j] = <floating>((t + beta) * (t + beta) * inv4b)
    return out


def smelu_backward(floating[:, ::1] x, floating[:, ::1] dy, double beta):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    out = np.empty((n, d), dtype=np.asarray(x).dtype)
    cdef floating[:, ::1] dx = out
    cdef double t, inv2b = 1.0 / (2.0 * beta)
    for i in range(n):
        for j in range(d):
            t = x[i, j]
            if t >= beta:
                dx[i, j] = dy[i, j]
            elif t <= -beta:
                dx[i, j] = 0
            else:
                dx[i, j] = <floating>(dy[i, j] * ((t + beta) * inv2b))
    return out


def layer_norm_forward(floating[:, ::1] x, floating[::1] gain, floating[::1] bias, double eps):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    dt = np.asarray(x).dtype
    y_arr = np.empty((n, d), dtype=dt)
    xhat_arr = np.empty((n, d), dtype=dt)
    rstd_arr = np.empty(n, dtype=dt)
    cdef floating[:, ::1] y = y_arr
    cdef floating[:, ::1] xhat = xhat_arr
    cdef floating[::1] rstd = rstd_arr
    cdef double mu, var, r, c
    for i in range(n):
        mu = 0.0
        for j in range(d):
            mu += x[i, j]
        mu /= d
        var = 0.0
        for j in range(d):
            c = x[i, j] - mu
            var += c * c
        var /= d
        r = 1.0 / sqrt(var + eps)
        rstd[i] = <floating>r
        for j in range(d):
            c = (x[i, j] - mu) * r
            xhat[i, j] = <floating>c
            y[i, j] = <floating>(gain[j] * c + bias[j])
    return y_arr, xhat_arr, rstd_arr


def layer_norm_backward(floating[:, ::1] dy, floating[:, ::1] xhat, floating[::1] rstd,
                        floating[::1] gain):
    cdef Py_ssize_t n = dy.shape[0], d = dy.shape[1], i, j
    dt = np.asarray(dy).dtype
    dx_arr = np.empty((n, d), dtype=dt)
    dg_arr = np.zeros(d, dtype=dt)
    db_arr = np.zeros(d, dtype=dt)
    cdef floating[:, ::1] dx = dx_arr
    cdef floating[::1] dg = dg_arr
    cdef floating[::1] db = db_arr
    cdef double m1, m2, g
    for i in range(n):
        m1 = 0.0
        m2 = 0.0
        for j in range(d):
            g = dy[i, j] * gain[j]
            m1 += g
            m2 += g * xhat[i, j]
            dg[j] += dy[i, j] * xhat[i, j]
            db[j] += dy[i, j]
        m1 /= d
        m2 /= d
        for j in range(d):
            dx[i, j] = <floating>(rstd[i] * (dy[i, j] * gain[j] - m1 - xhat[i, j] * m2))
    return dx_arr, dg_arr, db_arr


def attention_forward(floating[:, ::1] q, floating[:, ::1] k, floating[:, ::1] v, int heads):
    cdef Py_ssize_t m = q.shape[0], d = q.shape[1], dh = d // heads
    cdef Py_ssize_t h, i, j, t, off
    dt = np.asarray(q).dtype
    out_arr = np.zeros((m, d), dtype=dt)
    p_arr = np.empty((heads, m, m), dtype=dt)
    cdef floating[:, ::1] out = out_arr
    cdef floating[:, :, ::1] p = p_arr
    cdef double scale = 1.0 / sqrt(<double>dh)
    cdef double s, mx, tot, acc
    for h in range(heads):
        off = h * dh
        for i in range(m):
            mx = -1e300
            for j in range(m):
                s = 0.0
                for t in range(dh):
                    s += q[i, off + t] * k[j, off + t]
                s *= scale
                p[h, i, j] = <floating>s
                if s > mx:
                    mx = s
            tot = 0.0
            for j in range(m):
                s = exp(p[h, i, j] - mx)
                p[h, i, j] = <floating>s
                tot += p[h, i, j]
            for j in range(m):
                p[h, i, j] = <floating>(p[h, i, j] / tot)
            for t in range(dh):
                acc = 0.0
                for j in range(m):
                    acc += p[h, i, j] * v[j, off + t]
                out[i, off + t] = <floating>acc
    return out_arr, p_arr


def attention_backward(floating[:, ::1] dout, floating[:, ::1] q, floating[:, ::1] k,
                       floating[:, ::1] v, floating[:, :, ::1] probs, int heads):
    cdef Py_ssize_t m = q.shape[0], d = q.shape[1], dh = d // heads
    cdef Py_ssize_t h, i, j, t, off
    dt = np.asarray(q).dtype
    dq_arr = np.zeros((m, d), dtype=dt)
    dk_arr = np.zeros((m, d), dtype=dt)
    dv_arr = np.zeros((m, d), dtype=dt)
    ds_arr = np.empty(m, dtype=np.float64)
    cdef floating[:, ::1] dq = dq_arr
    cdef floating[:, ::1] dk = dk_arr
    cdef floating[:, ::1] dv = dv_arr
    cdef double[::1] ds = ds_arr
    cdef double scale = 1.0 / sqrt(<double>dh)
    cdef double dp, dot, pij, acc
    for h in range(heads):
        off = h * dh
        for i in range(m):
            dot = 0.0
            for j in range(m):
                dp = 0.0
                for t in range(dh):
                    dp += dout[i, off + t] * v[j, off + t]
                ds[j] = dp
                dot += dp * probs[h, i, j]
            for j in range(m):
                pij = probs[h, i, j]
                ds[j] = pij * (ds[j] - dot) * scale
                for t in range(dh):
                    dv[j, off + t] += <floating>(pij * dout[i, off + t])
                    dk[j, off + t] += <floating>(ds[j] * q[i, off + t])
            for t in range(dh):
                acc = 0.0
                for j in range(m):
                    acc += ds[j] * k[j, off + t]
                dq[i, off + t] = <floating>acc
    return dq_arr, dk_arr, dv_arr
