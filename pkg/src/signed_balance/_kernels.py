"""Fused pairwise loops for the fitters.

Each kernel walks the unordered pairs once and returns the objective value
(sum over ``i < j``) together with gradients in the symmetric ``i != j``
convention used throughout ``objective``.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _softplus_sigmoid(x):
    e = math.exp(-abs(x))
    sp = max(x, 0.0) + math.log1p(e)
    if x >= 0:
        return sp, 1.0 / (1.0 + e), e / ((1.0 + e) * (1.0 + e))
    return sp, e / (1.0 + e), e / ((1.0 + e) * (1.0 + e))


@njit(cache=True)
def edge_pass(alpha, Z, abs_a, mask):
    """Edge NLL, ``g_alpha = 2 R 1`` and ``g_Z = 2 R Z`` over pairs with ``mask != 0``."""
    n, k = Z.shape
    value = 0.0
    g_alpha = np.zeros(n)
    g_Z = np.zeros((n, k))
    for i in range(n):
        for j in range(i + 1, n):
            if mask[i, j] == 0:
                continue
            t = alpha[i] + alpha[j]
            for c in range(k):
                t += Z[i, c] * Z[j, c]
            y = abs_a[i, j]
            sp, s, _ = _softplus_sigmoid(t)
            value += sp - y * t
            r = 2.0 * (s - y)
            g_alpha[i] += r
            g_alpha[j] += r
            for c in range(k):
                g_Z[i, c] += r * Z[j, c]
                g_Z[j, c] += r * Z[i, c]
    return value, g_alpha, g_Z


@njit(cache=True)
def edge_value(alpha, Z, abs_a, mask):
    n, k = Z.shape
    value = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            if mask[i, j] == 0:
                continue
            t = alpha[i] + alpha[j]
            for c in range(k):
                t += Z[i, c] * Z[j, c]
            value += max(t, 0.0) + math.log1p(math.exp(-abs(t))) - abs_a[i, j] * t
    return value


@njit(cache=True)
def sign_pass(v, ei, ej, target):
    """Sign NLL over the listed edges and ``g_v = 2 S v``."""
    n = v.size
    value = 0.0
    g_v = np.zeros(n)
    for e in range(ei.size):
        i = ei[e]
        j = ej[e]
        t = v[i] * v[j]
        sp, s, _ = _softplus_sigmoid(t)
        value += sp - target[e] * t
        r = 2.0 * (s - target[e])
        g_v[i] += r * v[j]
        g_v[j] += r * v[i]
    return value, g_v


@njit(cache=True)
def sign_value(v, ei, ej, target):
    value = 0.0
    for e in range(ei.size):
        t = v[ei[e]] * v[ej[e]]
        value += max(t, 0.0) + math.log1p(math.exp(-abs(t))) - target[e] * t
    return value


@njit(cache=True)
def polar_newton_pass(X, v, ei, ej, target):
    """Value, gradient and Hessian of the sign NLL in ``theta`` where ``v = X theta``.

    Uses the ``i < j`` convention throughout (value, gradient and Hessian agree).
    """
    n, p = X.shape
    value = 0.0
    Sv = np.zeros(n)
    CX = np.zeros((n, p))
    q = np.zeros(n)
    for e in range(ei.size):
        i = ei[e]
        j = ej[e]
        t = v[i] * v[j]
        sp, s, d = _softplus_sigmoid(t)
        value += sp - target[e] * t
        s = s - target[e]
        Sv[i] += s * v[j]
        Sv[j] += s * v[i]
        c = s + d * t
        for a in range(p):
            CX[i, a] += c * X[j, a]
            CX[j, a] += c * X[i, a]
        q[i] += d * v[j] * v[j]
        q[j] += d * v[i] * v[i]
    grad = X.T @ Sv
    H = X.T @ CX + X.T @ (X * q.reshape(-1, 1))
    return value, grad, H
