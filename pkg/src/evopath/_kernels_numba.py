"""Numba-jitted kernel implementations (default backend).

Layer zoo math, in one place:

  linear      y = x @ w + b
  residual    y = x + tanh(x @ w1 + b1) @ w2 + b2        (width-preserving)
  norm        y = gain * (x - mean) / sqrt(var + eps) + bias   (per row)

All kernels are loop-based so they specialize for float32 (production)
and float64 (gradient checking) alike.  fastmath stays off: kernel output
must be bitwise reproducible for identical inputs.
"""

import math

import numpy as np
from numba import njit

_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def linear_fwd(x, w, b):
    m, n_in = x.shape
    n_out = w.shape[1]
    y = np.empty((m, n_out), x.dtype)
    for r in range(m):
        for c in range(n_out):
            acc = 0.0
            for i in range(n_in):
                acc += x[r, i] * w[i, c]
            y[r, c] = acc + b[c]
    return y


@njit(**_JIT)
def linear_bwd(x, w, gy):
    m, n_in = x.shape
    n_out = w.shape[1]
    gx = np.empty((m, n_in), x.dtype)
    gw = np.empty((n_in, n_out), x.dtype)
    gb = np.empty(n_out, x.dtype)
    for r in range(m):
        for i in range(n_in):
            acc = 0.0
            for c in range(n_out):
                acc += gy[r, c] * w[i, c]
            gx[r, i] = acc
    for i in range(n_in):
        for c in range(n_out):
            acc = 0.0
            for r in range(m):
                acc += x[r, i] * gy[r, c]
            gw[i, c] = acc
    for c in range(n_out):
        acc = 0.0
        for r in range(m):
            acc += gy[r, c]
        gb[c] = acc
    return gx, gw, gb


@njit(**_JIT)
def _tanh_affine(x, w, b):
    m, n_in = x.shape
    n_out = w.shape[1]
    h = np.empty((m, n_out), x.dtype)
    for r in range(m):
        for c in range(n_out):
            acc = 0.0
            for i in range(n_in):
                acc += x[r, i] * w[i, c]
            h[r, c] = math.tanh(acc + b[c])
    return h


@njit(**_JIT)
def residual_fwd(x, w1, b1, w2, b2):
    m, d = x.shape
    h = _tanh_affine(x, w1, b1)
    y = np.empty((m, d), x.dtype)
    for r in range(m):
        for c in range(d):
            acc = 0.0
            for i in range(d):
                acc += h[r, i] * w2[i, c]
            y[r, c] = x[r, c] + acc + b2[c]
    return y


@njit(**_JIT)
def residual_bwd(x, w1, b1, w2, b2, gy):
    m, d = x.shape
    h = _tanh_affine(x, w1, b1)
    gw2 = np.empty((d, d), x.dtype)
    gb2 = np.empty(d, x.dtype)
    for i in range(d):
        for c in range(d):
            acc = 0.0
            for r in range(m):
                acc += h[r, i] * gy[r, c]
            gw2[i, c] = acc
    for c in range(d):
        acc = 0.0
        for r in range(m):
            acc += gy[r, c]
        gb2[c] = acc
    # gh = (gy @ w2.T) * (1 - h^2)
    gh = np.empty((m, d), x.dtype)
    for r in range(m):
        for i in range(d):
            acc = 0.0
            for c in range(d):
                acc += gy[r, c] * w2[i, c]
            gh[r, i] = acc * (1.0 - h[r, i] * h[r, i])
    gw1 = np.empty((d, d), x.dtype)
    gb1 = np.empty(d, x.dtype)
    for i in range(d):
        for c in range(d):
            acc = 0.0
            for r in range(m):
                acc += x[r, i] * gh[r, c]
            gw1[i, c] = acc
    for c in range(d):
        acc = 0.0
        for r in range(m):
            acc += gh[r, c]
        gb1[c] = acc
    gx = np.empty((m, d), x.dtype)
    for r in range(m):
        for i in range(d):
            acc = 0.0
            for c in range(d):
                acc += gh[r, c] * w1[i, c]
            gx[r, i] = gy[r, i] + acc
    return gx, gw1, gb1, gw2, gb2


@njit(**_JIT)
def norm_fwd(x, gain, bias, eps):
    m, d = x.shape
    y = np.empty((m, d), x.dtype)
    for r in range(m):
        mu = 0.0
        for i in range(d):
            mu += x[r, i]
        mu /= d
        var = 0.0
        for i in range(d):
            delta = x[r, i] - mu
            var += delta * delta
        var /= d
        inv = 1.0 / math.sqrt(var + eps)
        for i in range(d):
            y[r, i] = gain[i] * ((x[r, i] - mu) * inv) + bias[i]
    return y


@njit(**_JIT)
def norm_bwd(x, gain, bias, eps, gy):
    m, d = x.shape
    gx = np.empty((m, d), x.dtype)
    ggain = np.zeros(d, x.dtype)
    gbias = np.zeros(d, x.dtype)
    for r in range(m):
        mu = 0.0
        for i in range(d):
            mu += x[r, i]
        mu /= d
        var = 0.0
        for i in range(d):
            delta = x[r, i] - mu
            var += delta * delta
        var /= d
        inv = 1.0 / math.sqrt(var + eps)
        m1 = 0.0
        m2 = 0.0
        for i in range(d):
            xhat = (x[r, i] - mu) * inv
            gxhat = gy[r, i] * gain[i]
            m1 += gxhat
            m2 += gxhat * xhat
            ggain[i] += gy[r, i] * xhat
            gbias[i] += gy[r, i]
        m1 /= d
        m2 /= d
        for i in range(d):
            xhat = (x[r, i] - mu) * inv
            gxhat = gy[r, i] * gain[i]
            gx[r, i] = inv * (gxhat - m1 - xhat * m2)
    return gx, ggain, gbias


@njit(**_JIT)
def sgd_update(param, grad, vel, lr, momentum, decay):
    p = param.ravel()
    g = grad.ravel()
    v = vel.ravel()
    for i in range(p.size):
        v[i] = momentum * v[i] + (g[i] + decay * p[i])
        p[i] -= lr * v[i]


@njit(**_JIT)
def wta_displacement(pred, fut):
    m, k, t, _ = pred.shape
    gpred = np.zeros_like(pred)
    loss = 0.0
    for r in range(m):
        best = 0
        best_val = np.inf
        for kk in range(k):
            acc = 0.0
            for tt in range(t):
                dx = pred[r, kk, tt, 0] - fut[r, tt, 0]
                dy = pred[r, kk, tt, 1] - fut[r, tt, 1]
                acc += math.sqrt(dx * dx + dy * dy)
            val = acc / t
            if val < best_val:
                best_val = val
                best = kk
        loss += best_val
        for tt in range(t):
            dx = pred[r, best, tt, 0] - fut[r, tt, 0]
            dy = pred[r, best, tt, 1] - fut[r, tt, 1]
            dd = math.sqrt(dx * dx + dy * dy)
            if dd > 0.0:
                scale = 1.0 / (dd * t * m)
                gpred[r, best, tt, 0] = dx * scale
                gpred[r, best, tt, 1] = dy * scale
    return loss / m, gpred
