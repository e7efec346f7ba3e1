"""Pure-numpy kernel implementations (fallback backend).

Same signatures and semantics as ``_kernels_numba``; see that module for
the layer math.  Kept free of any numba import so it loads everywhere.
"""

import numpy as np


def linear_fwd(x, w, b):
    return x @ w + b


def linear_bwd(x, w, gy):
    gx = gy @ w.T
    gw = x.T @ gy
    gb = gy.sum(axis=0)
    return gx, gw, gb


def residual_fwd(x, w1, b1, w2, b2):
    h = np.tanh(x @ w1 + b1)
    return x + h @ w2 + b2


def residual_bwd(x, w1, b1, w2, b2, gy):
    h = np.tanh(x @ w1 + b1)
    gw2 = h.T @ gy
    gb2 = gy.sum(axis=0)
    gh = (gy @ w2.T) * (1.0 - h * h)
    gw1 = x.T @ gh
    gb1 = gh.sum(axis=0)
    gx = gy + gh @ w1.T
    return gx, gw1, gb1, gw2, gb2


def norm_fwd(x, gain, bias, eps):
    # Internals in float64 on both backends; result cast back to x dtype.
    x64 = x.astype(np.float64)
    mu = x64.mean(axis=1, keepdims=True)
    var = ((x64 - mu) ** 2).mean(axis=1, keepdims=True)
    xhat = (x64 - mu) / np.sqrt(var + eps)
    y = gain.astype(np.float64) * xhat + bias.astype(np.float64)
    return y.astype(x.dtype)


def norm_bwd(x, gain, bias, eps, gy):
    x64 = x.astype(np.float64)
    gy64 = gy.astype(np.float64)
    mu = x64.mean(axis=1, keepdims=True)
    var = ((x64 - mu) ** 2).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x64 - mu) * inv
    gxhat = gy64 * gain.astype(np.float64)
    m1 = gxhat.mean(axis=1, keepdims=True)
    m2 = (gxhat * xhat).mean(axis=1, keepdims=True)
    gx = inv * (gxhat - m1 - xhat * m2)
    ggain = (gy64 * xhat).sum(axis=0)
    gbias = gy64.sum(axis=0)
    return gx.astype(x.dtype), ggain.astype(x.dtype), gbias.astype(x.dtype)


def sgd_update(param, grad, vel, lr, momentum, decay):
    vel *= momentum
    vel += grad + decay * param
    param -= lr * vel


def wta_displacement(pred, fut):
    """Winner-take-all displacement loss and its gradient.

    pred: [M, K, T, 2], fut: [M, T, 2].  Loss is the mean over rows of the
    min over modes of the time-averaged euclidean displacement; the
    gradient flows only into each row's winning mode.
    """
    m, k, t, _ = pred.shape
    diff = pred - fut[:, None]
    dist = np.sqrt((diff * diff).sum(axis=3))
    per_mode = dist.mean(axis=2, dtype=np.float64)
    best = per_mode.argmin(axis=1)
    rows = np.arange(m)
    loss = float(per_mode[rows, best].mean())
    gpred = np.zeros_like(pred)
    d = diff[rows, best]
    dd = dist[rows, best][..., None].astype(np.float64)
    scale = np.where(dd > 0.0, 1.0 / (dd * t * m), 0.0)
    gpred[rows, best] = d * scale
    return loss, gpred
