# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: orbit iteration, QR frame propagation, direction pushes."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, log, sqrt, floor, fabs, round as cround

cnp.import_array()

cdef double TWO_PI = 6.283185307179586


cdef inline double _wrap(double v) noexcept nogil:
    cdef double w = v - floor(v)
    if w >= 1.0:
        w = 0.0
    return w


def affine_orbit(double[:, ::1] M, x, Py_ssize_t n):
    cdef Py_ssize_t d = M.shape[0], i, a, b
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_arr = np.empty((n + 1, d))
    cdef double[:, ::1] out = out_arr
    cdef double acc
    for a in range(d):
        out[0, a] = x[a]
    with nogil:
        for i in range(n):
            for a in range(d):
                acc = 0.0
                for b in range(d):
                    acc = acc + M[a, b] * out[i, b]
                out[i + 1, a] = _wrap(acc)
    return out_arr


def skew_orbit(double[:, ::1] A, double alpha, double eps, double[:, ::1] modes,
               double[::1] ca, double[::1] sa, x, Py_ssize_t n):
    cdef Py_ssize_t i, j, J = modes.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_arr = np.empty((n + 1, 3))
    cdef double[:, ::1] out = out_arr
    cdef double x0, x1, th, c, ph
    out[0, 0] = x[0]
    out[0, 1] = x[1]
    out[0, 2] = x[2]
    with nogil:
        for i in range(n):
            x0 = out[i, 0]
            x1 = out[i, 1]
            th = out[i, 2]
            c = 0.0
            for j in range(J):
                ph = TWO_PI * (modes[j, 0] * x0 + modes[j, 1] * x1)
                c = c + cos(ph) * ca[j] + sin(ph) * sa[j]
            out[i + 1, 0] = _wrap(A[0, 0] * x0 + A[0, 1] * x1)
            out[i + 1, 1] = _wrap(A[1, 0] * x0 + A[1, 1] * x1)
            out[i + 1, 2] = _wrap(th + alpha + c + eps * sin(TWO_PI * th))
    return out_arr


def da_orbit(double[:, ::1] M, double[::1] c, double r, double s, double[::1] lc,
             double[::1] ec, x, Py_ssize_t n):
    cdef Py_ssize_t i, a, b
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_arr = np.empty((n + 1, 3))
    cdef double[:, ::1] out = out_arr
    cdef double w[3]
    cdef double y[3]
    cdef double rho2, r2 = r * r, u, proj, acc
    for a in range(3):
        out[0, a] = x[a]
    with nogil:
        for i in range(n):
            rho2 = 0.0
            proj = 0.0
            for a in range(3):
                w[a] = out[i, a] - c[a]
                w[a] = w[a] - cround(w[a])
                rho2 = rho2 + w[a] * w[a]
                proj = proj + lc[a] * w[a]
            for a in range(3):
                acc = 0.0
                for b in range(3):
                    acc = acc + M[a, b] * out[i, b]
                y[a] = acc
            if rho2 < r2:
                u = 1.0 - rho2 / r2
                for a in range(3):
                    y[a] = y[a] - s * u * u * u * proj * ec[a]
            for a in range(3):
                out[i + 1, a] = _wrap(y[a])
    return out_arr


def qr_log_diagonals(double[:, :, ::1] J, double[:, ::1] Q0):
    """Modified Gram-Schmidt frame propagation; (sums of log|R_ii|, final frame)."""
    cdef Py_ssize_t n = J.shape[0], d = J.shape[1], k, a, b, j, l
    cdef double Q[3][3]
    cdef double Z[3][3]
    cdef double acc[3]
    cdef double dot, nrm
    if d > 3:
        raise ValueError("dimension > 3 not supported")
    for a in range(d):
        acc[a] = 0.0
        for b in range(d):
            Q[a][b] = Q0[a, b]
    with nogil:
        for k in range(n):
            # Z = J[k] @ Q (columns are frame vectors)
            for a in range(d):
                for b in range(d):
                    dot = 0.0
                    for l in range(d):
                        dot = dot + J[k, a, l] * Q[l][b]
                    Z[a][b] = dot
            for j in range(d):
                for l in range(j):
                    dot = 0.0
                    for a in range(d):
                        dot = dot + Q[a][l] * Z[a][j]
                    for a in range(d):
                        Z[a][j] = Z[a][j] - dot * Q[a][l]
                nrm = 0.0
                for a in range(d):
                    nrm = nrm + Z[a][j] * Z[a][j]
                nrm = sqrt(nrm)
                acc[j] = acc[j] + log(nrm)
                for a in range(d):
                    Q[a][j] = Z[a][j] / nrm
    out = np.empty(d)
    Qout = np.empty((d, d))
    for a in range(d):
        out[a] = acc[a]
        for b in range(d):
            Qout[a, b] = Q[a][b]
    return out, Qout


def push_direction(double[:, :, ::1] J, v):
    cdef Py_ssize_t n = J.shape[0], d = J.shape[1], k, a, l
    cdef cnp.ndarray[cnp.float64_t, ndim=1] logs_arr = np.empty(n)
    cdef double[::1] logs = logs_arr
    cdef double cur[3]
    cdef double nxt[3]
    cdef double nrm, dot
    if d > 3:
        raise ValueError("dimension > 3 not supported")
    nrm = 0.0
    for a in range(d):
        cur[a] = v[a]
        nrm = nrm + cur[a] * cur[a]
    nrm = sqrt(nrm)
    for a in range(d):
        cur[a] = cur[a] / nrm
    with nogil:
        for k in range(n):
            nrm = 0.0
            for a in range(d):
                dot = 0.0
                for l in range(d):
                    dot = dot + J[k, a, l] * cur[l]
                nxt[a] = dot
                nrm = nrm + dot * dot
            nrm = sqrt(nrm)
            logs[k] = log(nrm)
            for a in range(d):
                cur[a] = nxt[a] / nrm
    out = np.empty(d)
    for a in range(d):
        out[a] = cur[a]
    return out, logs_arr


def push_path(double[:, :, ::1] J, v):
    cdef Py_ssize_t n = J.shape[0], d = J.shape[1], k, a, l
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_arr = np.empty((n + 1, d))
    cdef double[:, ::1] out = out_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=1] logs_arr = np.empty(n)
    cdef double[::1] logs = logs_arr
    cdef double nrm, dot
    if d > 3:
        raise ValueError("dimension > 3 not supported")
    nrm = 0.0
    for a in range(d):
        out[0, a] = v[a]
        nrm = nrm + out[0, a] * out[0, a]
    nrm = sqrt(nrm)
    for a in range(d):
        out[0, a] = out[0, a] / nrm
    with nogil:
        for k in range(n):
            nrm = 0.0
            for a in range(d):
                dot = 0.0
                for l in range(d):
                    dot = dot + J[k, a, l] * out[k, l]
                out[k + 1, a] = dot
                nrm = nrm + dot * dot
            nrm = sqrt(nrm)
            logs[k] = log(nrm)
            for a in range(d):
                out[k + 1, a] = out[k + 1, a] / nrm
    return out_arr, logs_arr


def cyclic_qr_factor(double[:, :, ::1] J, double[:, ::1] b):
    """Householder elimination of J_i x_i - x_{i+1} = b_i (cyclic) down to a d x d system in x_0."""
    cdef Py_ssize_t P = J.shape[0], d = J.shape[1], k, i, j, col, rows, ncol
    cdef double W[6][10]
    cdef double v[6]
    cdef double alpha, vn, s
    if d > 3:
        raise ValueError("dimension > 3 not supported")
    rows = 2 * d
    ncol = 3 * d + 1
    Rs_a = np.zeros((P, d, d)); Gs_a = np.zeros((P, d, d)); Bs_a = np.zeros((P, d, d)); cs_a = np.zeros((P, d))
    G_a = np.empty((d, d)); H_a = np.empty((d, d)); c_a = np.empty(d)
    cdef double[:, :, ::1] Rs = Rs_a, Gs = Gs_a, Bs = Bs_a
    cdef double[:, ::1] cs = cs_a, G = G_a, H = H_a
    cdef double[::1] c = c_a
    for i in range(d):
        c[i] = b[0, i]
        for j in range(d):
            G[i, j] = J[0, i, j]
            H[i, j] = -1.0 if i == j else 0.0
    with nogil:
        for k in range(1, P):
            for i in range(d):
                for j in range(d):
                    W[i][j] = H[i, j]
                    W[i][d + j] = G[i, j]
                    W[i][2 * d + j] = 0.0
                    W[d + i][j] = J[k, i, j]
                    W[d + i][d + j] = 0.0
                    W[d + i][2 * d + j] = -1.0 if i == j else 0.0
                W[i][3 * d] = c[i]
                W[d + i][3 * d] = b[k, i]
            for j in range(d):
                vn = 0.0
                for i in range(j, rows):
                    v[i] = W[i][j]
                    vn = vn + v[i] * v[i]
                if vn == 0.0:
                    continue
                alpha = -sqrt(vn) if v[j] >= 0 else sqrt(vn)
                vn = vn - v[j] * v[j]
                v[j] = v[j] - alpha
                vn = vn + v[j] * v[j]
                for col in range(j, ncol):
                    s = 0.0
                    for i in range(j, rows):
                        s = s + v[i] * W[i][col]
                    s = 2.0 * s / vn
                    for i in range(j, rows):
                        W[i][col] = W[i][col] - s * v[i]
            for i in range(d):
                for j in range(d):
                    Rs[k, i, j] = W[i][j]
                    Gs[k, i, j] = W[i][d + j]
                    Bs[k, i, j] = W[i][2 * d + j]
                    G[i, j] = W[d + i][d + j]
                    H[i, j] = W[d + i][2 * d + j]
                cs[k, i] = W[i][3 * d]
                c[i] = W[d + i][3 * d]
    return Rs_a, Gs_a, Bs_a, cs_a, G_a, H_a, c_a


def cyclic_back_substitute(double[:, :, ::1] Rs, double[:, :, ::1] Gs, double[:, :, ::1] Bs,
                           double[:, ::1] cs, double[::1] x0):
    cdef Py_ssize_t P = Rs.shape[0], d = Rs.shape[1], k, i, j
    cdef double r
    X_a = np.zeros((P, d))
    cdef double[:, ::1] X = X_a
    for i in range(d):
        X[0, i] = x0[i]
    with nogil:
        for k in range(P - 1, 0, -1):
            for i in range(d - 1, -1, -1):
                r = cs[k, i]
                for j in range(d):
                    r = r - Gs[k, i, j] * x0[j] - Bs[k, i, j] * X[(k + 1) % P, j]
                for j in range(i + 1, d):
                    r = r - Rs[k, i, j] * X[k, j]
                X[k, i] = r / Rs[k, i, i]
    return X_a
