"""Pure-Python/numpy versions of the hot loops; same signatures as ``_ckernels``."""
from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi


def _wrap1(v):
    w = v % 1.0
    w[w >= 1.0] = 0.0
    return w


def affine_orbit(M, x, n):
    d = M.shape[0]
    out = np.empty((n + 1, d))
    out[0] = x
    cur = np.array(x, dtype=float)
    for i in range(n):
        cur = _wrap1(M @ cur)
        out[i + 1] = cur
    return out


def skew_orbit(A, alpha, eps, modes, ca, sa, x, n):
    out = np.empty((n + 1, 3))
    out[0] = x
    cur = np.array(x, dtype=float)
    for i in range(n):
        b = cur[:2]
        th = cur[2]
        ph = TWO_PI * (modes @ b)
        c = float(np.cos(ph) @ ca + np.sin(ph) @ sa)
        nxt = np.empty(3)
        nxt[:2] = A @ b
        nxt[2] = th + alpha + c + eps * np.sin(TWO_PI * th)
        cur = _wrap1(nxt)
        out[i + 1] = cur
    return out


def da_orbit(M, c, r, s, lc, ec, x, n):
    out = np.empty((n + 1, 3))
    out[0] = x
    cur = np.array(x, dtype=float)
    r2 = r * r
    for i in range(n):
        w = cur - c
        w -= np.round(w)
        rho2 = float(w @ w)
        nxt = M @ cur
        if rho2 < r2:
            u = 1.0 - rho2 / r2
            nxt -= s * u * u * u * float(lc @ w) * ec
        cur = _wrap1(nxt)
        out[i + 1] = cur
    return out


def qr_log_diagonals(J, Q0):
    """Propagate the orthonormal frame Q0 through J[0], J[1], ...; returns (sum log|R_ii|, final frame)."""
    Q = np.array(Q0, dtype=float)
    acc = np.zeros(J.shape[1])
    for k in range(J.shape[0]):
        Q, R = np.linalg.qr(J[k] @ Q)
        dg = np.diag(R)
        acc += np.log(np.abs(dg))
        Q = Q * np.sign(dg)  # positive diagonal convention, as in Gram-Schmidt
    return acc, Q


def push_direction(J, v):
    """Push v through J[0], J[1], ... renormalizing; returns final unit vector and log growths."""
    n = J.shape[0]
    logs = np.empty(n)
    cur = np.array(v, dtype=float)
    cur /= np.linalg.norm(cur)
    for k in range(n):
        nxt = J[k] @ cur
        nrm = np.linalg.norm(nxt)
        logs[k] = np.log(nrm)
        cur = nxt / nrm
    return cur, logs


def push_path(J, v):
    """Like ``push_direction`` but keeps every intermediate unit vector, shape (n+1, d)."""
    n = J.shape[0]
    out = np.empty((n + 1, J.shape[1]))
    logs = np.empty(n)
    cur = np.array(v, dtype=float)
    cur /= np.linalg.norm(cur)
    out[0] = cur
    for k in range(n):
        nxt = J[k] @ cur
        nrm = np.linalg.norm(nxt)
        logs[k] = np.log(nrm)
        cur = nxt / nrm
        out[k + 1] = cur
    return out, logs


def cyclic_qr_factor(J, b):
    """Orthogonal elimination of J_i x_i - x_{i+1} = b_i (indices mod P) down to one d x d system in x_0.

    Returns the per-step rows (R, G, B, c) with R_k x_k + G_k x_0 + B_k x_{k+1} = c_k
    and the reduced relation Gf x_0 + Hf x_0 = cf.
    """
    P, d, _ = J.shape
    Rs = np.zeros((P, d, d))
    Gs = np.zeros((P, d, d))
    Bs = np.zeros((P, d, d))
    cs = np.zeros((P, d))
    G = J[0].copy()
    H = -np.eye(d)
    c = b[0].copy()
    W = np.zeros((2 * d, 3 * d + 1))
    for k in range(1, P):
        W[:] = 0.0
        W[:d, :d] = H
        W[:d, d:2 * d] = G
        W[:d, 3 * d] = c
        W[d:, :d] = J[k]
        W[d:, 2 * d:3 * d] = -np.eye(d)
        W[d:, 3 * d] = b[k]
        Q, _ = np.linalg.qr(W[:, :d], mode="complete")
        T = Q.T @ W
        Rs[k], Gs[k], Bs[k], cs[k] = T[:d, :d], T[:d, d:2 * d], T[:d, 2 * d:3 * d], T[:d, 3 * d]
        G, H, c = T[d:, d:2 * d].copy(), T[d:, 2 * d:3 * d].copy(), T[d:, 3 * d].copy()
    return Rs, Gs, Bs, cs, G, H, c


def cyclic_back_substitute(Rs, Gs, Bs, cs, x0):
    P, d, _ = Rs.shape
    X = np.zeros((P, d))
    X[0] = x0
    nxt = x0
    for k in range(P - 1, 0, -1):
        rhs = cs[k] - Gs[k] @ x0 - Bs[k] @ nxt
        for i in range(d - 1, -1, -1):
            rhs[i] = (rhs[i] - Rs[k, i, i + 1:] @ X[k, i + 1:]) / Rs[k, i, i]
            X[k, i] = rhs[i]
        nxt = X[k]
    return X
