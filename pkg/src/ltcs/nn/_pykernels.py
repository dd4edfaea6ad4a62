"""Pure-numpy reference kernels.

Every function here has a twin of identical signature in ``_ckernels.pyx``.
Arrays are C-contiguous, 2-D, float32 or float64.
"""
import math

import numpy as np

BACKEND = "python"


def smelu_forward(x, beta):
    c = np.clip(x + beta, 0.0, 2.0 * beta)
    y = np.where(x >= beta, x, c * c / (4.0 * beta))
    return y.astype(x.dtype, copy=False)


def smelu_backward(x, dy, beta):
    slope = np.clip(x + beta, 0.0, 2.0 * beta) / (2.0 * beta)
    return (dy * slope).astype(x.dtype, copy=False)


def layer_norm_forward(x, gain, bias, eps):
    d = x.shape[1]
    mu = x.sum(axis=1, keepdims=True) / d
    xc = x - mu
    var = (xc * xc).sum(axis=1, keepdims=True) / d
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    return gain * xhat + bias, xhat, rstd[:, 0]


def layer_norm_backward(dy, xhat, rstd, gain):
    dxhat = dy * gain
    d = xhat.shape[1]
    m1 = dxhat.sum(axis=1, keepdims=True) / d
    m2 = (dxhat * xhat).sum(axis=1, keepdims=True) / d
    dx = rstd[:, None] * (dxhat - m1 - xhat * m2)
    return dx, (dy * xhat).sum(axis=0), dy.sum(axis=0)


def _split(a, heads):
    m, d = a.shape
    return a.reshape(m, heads, d // heads).transpose(1, 0, 2)


def _merge(a):
    h, m, dh = a.shape
    return a.transpose(1, 0, 2).reshape(m, h * dh)


def attention_forward(q, k, v, heads):
    dh = q.shape[1] // heads
    scale = 1.0 / math.sqrt(dh)
    qh, kh, vh = _split(q, heads), _split(k, heads), _split(v, heads)
    s = (qh @ kh.transpose(0, 2, 1)) * scale
    s = s - s.max(axis=2, keepdims=True)
    p = np.exp(s)
    p /= p.sum(axis=2, keepdims=True)
    out = _merge(p @ vh)
    return np.ascontiguousarray(out), p.astype(q.dtype, copy=False)


def attention_backward(dout, q, k, v, probs, heads):
    dh = q.shape[1] // heads
    scale = 1.0 / math.sqrt(dh)
    qh, kh, vh = _split(q, heads), _split(k, heads), _split(v, heads)
    do = _split(dout, heads)
    dv = probs.transpose(0, 2, 1) @ do
    dp = do @ vh.transpose(0, 2, 1)
    ds = probs * (dp - (dp * probs).sum(axis=2, keepdims=True))
    dq = (ds @ kh) * scale
    dk = (ds.transpose(0, 2, 1) @ qh) * scale
    return (np.ascontiguousarray(_merge(dq)), np.ascontiguousarray(_merge(dk)),
            np.ascontiguousarray(_merge(dv)))
