"""Compiled loops for the NHWC ops whose numpy form is dominated by short
inner loops over the channel axis (pooling, instance norm, bias add)."""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def pool_forward(x):
    n, h, w, c = x.shape
    out = np.empty((n, h // 2, w // 2, c), x.dtype)
    code = np.empty((n, h // 2, w // 2, c), np.uint8)
    for i in range(n):
        for y in range(h // 2):
            for u in range(w // 2):
                for k in range(c):
                    best = x[i, 2 * y, 2 * u, k]
                    bc = 0
                    v = x[i, 2 * y, 2 * u + 1, k]
                    if v > best:
                        best = v
                        bc = 1
                    v = x[i, 2 * y + 1, 2 * u, k]
                    if v > best:
                        best = v
                        bc = 2
                    v = x[i, 2 * y + 1, 2 * u + 1, k]
                    if v > best:
                        best = v
                        bc = 3
                    out[i, y, u, k] = best
                    code[i, y, u, k] = bc
    return out, code


@njit(cache=True)
def pool_backward(g, code):
    n, h2, w2, c = g.shape
    gx = np.zeros((n, 2 * h2, 2 * w2, c), g.dtype)
    for i in range(n):
        for y in range(h2):
            for u in range(w2):
                for k in range(c):
                    bc = code[i, y, u, k]
                    gx[i, 2 * y + bc // 2, 2 * u + bc % 2, k] = g[i, y, u, k]
    return gx


@njit(cache=True)
def norm_forward(x, gamma, beta, eps):
    """Returns (out, xhat, inv_std); statistics accumulate in float64."""
    n, h, w, c = x.shape
    hw = h * w
    xhat = np.empty_like(x)
    out = np.empty_like(x)
    inv = np.empty((n, c), np.float64)
    for i in range(n):
        mu = np.zeros(c)
        sq = np.zeros(c)
        for y in range(h):
            for u in range(w):
                for k in range(c):
                    mu[k] += x[i, y, u, k]
        for k in range(c):
            mu[k] /= hw
        for y in range(h):
            for u in range(w):
                for k in range(c):
                    d = x[i, y, u, k] - mu[k]
                    sq[k] += d * d
        for k in range(c):
            inv[i, k] = 1.0 / np.sqrt(sq[k] / hw + eps)
        for y in range(h):
            for u in range(w):
                for k in range(c):
                    v = (x[i, y, u, k] - mu[k]) * inv[i, k]
                    xhat[i, y, u, k] = v
                    out[i, y, u, k] = v * gamma[k] + beta[k]
    return out, xhat, inv


@njit(cache=True)
def norm_backward(g, xhat, inv, gamma):
    n, h, w, c = g.shape
    hw = h * w
    gx = np.empty_like(g)
    dgamma = np.zeros(c)
    dbeta = np.zeros(c)
    for i in range(n):
        m1 = np.zeros(c)
        m2 = np.zeros(c)
        for y in range(h):
            for u in range(w):
                for k in range(c):
                    gv = g[i, y, u, k]
                    xv = xhat[i, y, u, k]
                    dbeta[k] += gv
                    dgamma[k] += gv * xv
                    m1[k] += gv * gamma[k]
                    m2[k] += gv * gamma[k] * xv
        for k in range(c):
            m1[k] /= hw
            m2[k] /= hw
        for y in range(h):
            for u in range(w):
                for k in range(c):
                    gh = g[i, y, u, k] * gamma[k]
                    gx[i, y, u, k] = inv[i, k] * (gh - m1[k] - xhat[i, y, u, k] * m2[k])
    return gx, dgamma, dbeta


@njit(cache=True)
def add_bias(a, b):
    """In place ``a[r, :] += b`` for a 2D array."""
    rows, c = a.shape
    for r in range(rows):
        for k in range(c):
            a[r, k] += b[k]
