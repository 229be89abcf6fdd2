"""Forward/backward pairs for the dense primitives used by the exposure head.

Feature maps are single-sample arrays of shape (C, H, W). Convolutions are
3x3 cross-correlations with zero padding 1. Each ``*_fwd`` returns
``(out, cache)``; the matching ``*_bwd`` takes ``(dout, cache)`` and returns
gradients in the order of the forward's differentiable arguments.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

GN_EPS = 1e-5


def _windows(x: np.ndarray, stride: int) -> np.ndarray:
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # (C, H, W, 3, 3)
    return win[:, ::stride, ::stride]


def conv2d_fwd(x, w, b, stride=1):
    if stride not in (1, 2):
        raise ValueError(f"stride must be 1 or 2, got {stride}")
    if w.ndim != 4 or w.shape[2:] != (3, 3):
        raise ValueError(f"conv weights must be (Cout, Cin, 3, 3), got {w.shape}")
    if x.ndim != 3 or x.shape[0] != w.shape[1]:
        raise ValueError(f"input {x.shape} does not match weights {w.shape}")
    if b.shape != (w.shape[0],):
        raise ValueError(f"bias shape {b.shape} does not match {w.shape[0]} outputs")
    cols = np.ascontiguousarray(_windows(x, stride))
    c_in, ho, wo = cols.shape[:3]
    cols2 = cols.transpose(0, 3, 4, 1, 2).reshape(c_in * 9, ho * wo)
    out = (w.reshape(w.shape[0], -1) @ cols2).reshape(w.shape[0], ho, wo) + b[:, None, None]
    return out, (x.shape, w, cols2, stride)


def conv2d_bwd(dout, cache):
    x_shape, w, cols2, stride = cache
    c_out = w.shape[0]
    c_in, h, wd = x_shape
    ho, wo = dout.shape[1:]
    d2 = dout.reshape(c_out, ho * wo)
    dw = (d2 @ cols2.T).reshape(w.shape)
    db = d2.sum(axis=1)
    dcols = (w.reshape(c_out, -1).T @ d2).reshape(c_in, 3, 3, ho, wo)
    dxp = np.zeros((c_in, h + 2, wd + 2))
    for ki in range(3):
        for kj in range(3):
            dxp[:, ki:ki + stride * ho:stride, kj:kj + stride * wo:stride] += dcols[:, ki, kj]
    return dxp[:, 1:-1, 1:-1], dw, db


def groupnorm_fwd(x, gamma, beta, groups):
    c = x.shape[0]
    if groups < 1 or c % groups:
        raise ValueError(f"{groups} groups do not divide {c} channels")
    xg = x.reshape(groups, -1)
    mean = xg.mean(axis=1, keepdims=True)
    var = xg.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + GN_EPS)
    xhat = ((xg - mean) * inv).reshape(x.shape)
    out = xhat * gamma[:, None, None] + beta[:, None, None]
    return out, (xhat, inv, gamma, groups)


def groupnorm_bwd(dout, cache):
    xhat, inv, gamma, groups = cache
    dgamma = np.sum(dout * xhat, axis=(1, 2))
    dbeta = dout.sum(axis=(1, 2))
    dxhat = (dout * gamma[:, None, None]).reshape(groups, -1)
    xh = xhat.reshape(groups, -1)
    dx = inv * (dxhat - dxhat.mean(axis=1, keepdims=True)
                - xh * np.mean(dxhat * xh, axis=1, keepdims=True))
    return dx.reshape(xhat.shape), dgamma, dbeta


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def silu_fwd(x):
    s = sigmoid(x)
    return x * s, (x, s)


def silu_bwd(dout, cache):
    x, s = cache
    return (dout * s * (1.0 + x * (1.0 - s)),)


def upsample_nearest2x_fwd(x):
    return x.repeat(2, axis=1).repeat(2, axis=2), None


def upsample_nearest2x_bwd(dout, cache=None):
    c, h, w = dout.shape
    return (dout.reshape(c, h // 2, 2, w // 2, 2).sum(axis=(2, 4)),)


def concat_fwd(a, b):
    if a.shape[1:] != b.shape[1:]:
        raise ValueError(f"cannot concatenate {a.shape} and {b.shape}")
    return np.concatenate([a, b], axis=0), a.shape[0]


def concat_bwd(dout, split):
    return dout[:split], dout[split:]


def linear_fwd(x, w, b):
    """y = w @ x + b for a vector x; w has shape (out, in)."""
    if w.ndim != 2 or x.shape != (w.shape[1],) or b.shape != (w.shape[0],):
        raise ValueError(f"linear shapes: x {x.shape}, w {w.shape}, b {b.shape}")
    return w @ x + b, (x, w)


def linear_bwd(dout, cache):
    x, w = cache
    return w.T @ dout, np.outer(dout, x), dout


def film_fwd(x, gamma, beta):
    """Per-channel affine modulation gamma[c] * x[c] + beta[c]."""
    if gamma.shape != (x.shape[0],) or beta.shape != (x.shape[0],):
        raise ValueError(f"FiLM vectors {gamma.shape}/{beta.shape} do not match {x.shape[0]} channels")
    return gamma[:, None, None] * x + beta[:, None, None], (x, gamma)


def film_bwd(dout, cache):
    x, gamma = cache
    return dout * gamma[:, None, None], np.sum(dout * x, axis=(1, 2)), dout.sum(axis=(1, 2))
