"""Dense, MLP and pre-norm transformer encoder layers with hand-written backward.

Modules hold only shape configuration; all state lives in a ``ParamStore``.
``forward`` returns ``(output, cache)`` and ``backward`` consumes the cache,
accumulates parameter gradients into the store and returns the input gradient.
"""
import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, InvalidArgumentError
from . import kernels


@dataclass
class OpCounter:
    """Instrumentation for compute accounting."""

    attention_scores: int = 0
    embeddings: int = 0
    mlp_rows: int = 0

    def reset(self):
        self.attention_scores = 0
        self.embeddings = 0
        self.mlp_rows = 0


def _uniform(rng, fan_in, shape, dtype):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Dense:
    def __init__(self, name, fan_in, fan_out, bias=True):
        self.name = name
        self.fan_in = fan_in
        self.fan_out = fan_out
        self.bias = bias

    def init(self, params, rng):
        params.add(f"{self.name}.W", _uniform(rng, self.fan_in, (self.fan_in, self.fan_out),
                                              params.dtype))
        if self.bias:
            params.add(f"{self.name}.b", np.zeros(self.fan_out, dtype=params.dtype))

    def forward(self, params, x):
        y = x @ params[f"{self.name}.W"]
        if self.bias:
            y += params[f"{self.name}.b"]
        return y, x

    def backward(self, params, x, dy, need_dx=True):
        params.accumulate(f"{self.name}.W", x.T @ dy)
        if self.bias:
            params.accumulate(f"{self.name}.b", dy.sum(axis=0))
        if need_dx:
            return dy @ params[f"{self.name}.W"].T
        return None


class MLP:
    """Stack of Dense layers with SmeLU.

    With ``activate_last=False`` the last layer is a plain linear map (a
    scoring head); otherwise every layer is followed by SmeLU. ``last_bias``
    controls whether that final layer has a bias.
    """

    def __init__(self, name, sizes, beta, activate_last=True, last_bias=True):
        if len(sizes) < 2 or min(sizes) < 1:
            raise ConfigError(f"invalid MLP sizes {sizes}")
        self.name = name
        self.sizes = list(sizes)
        self.beta = beta
        self.activate_last = activate_last
        n = len(sizes) - 1
        self.layers = [Dense(f"{name}.{i}", a, b, bias=last_bias or i < n - 1)
                       for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))]

    def init(self, params, rng):
        for layer in self.layers:
            layer.init(params, rng)

    def _activated(self, i):
        return self.activate_last or i < len(self.layers) - 1

    def forward(self, params, x):
        caches = []
        for i, layer in enumerate(self.layers):
            pre, c = layer.forward(params, x)
            if self._activated(i):
                x = kernels.smelu_forward(pre, self.beta)
            else:
                x = pre
            caches.append((c, pre))
        return x, caches

    def backward(self, params, caches, dy, need_dx=True):
        for i in range(len(self.layers) - 1, -1, -1):
            c, pre = caches[i]
            if self._activated(i):
                dy = kernels.smelu_backward(pre, np.ascontiguousarray(dy), self.beta)
            dy = self.layers[i].backward(params, c, dy, need_dx=need_dx or i > 0)
        return dy


class LayerNorm:
    def __init__(self, name, dim, eps):
        self.name = name
        self.dim = dim
        self.eps = eps

    def init(self, params, rng):
        params.add(f"{self.name}.g", np.ones(self.dim, dtype=params.dtype))
        params.add(f"{self.name}.b", np.zeros(self.dim, dtype=params.dtype))

    def forward(self, params, x):
        y, xhat, rstd = kernels.layer_norm_forward(
            np.ascontiguousarray(x), params[f"{self.name}.g"], params[f"{self.name}.b"],
            self.eps)
        return y, (xhat, rstd)

    def backward(self, params, cache, dy):
        xhat, rstd = cache
        dx, dg, db = kernels.layer_norm_backward(np.ascontiguousarray(dy), xhat, rstd,
                                                 params[f"{self.name}.g"])
        params.accumulate(f"{self.name}.g", dg)
        params.accumulate(f"{self.name}.b", db)
        return dx


@dataclass
class AttentionLayerParams:
    """Weights of one encoder layer, as plain arrays.

    Query/key/value projections are ``d x d``; head ``h`` owns columns
    ``h*d/heads : (h+1)*d/heads`` of each.
    """

    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray
    ff1_w: np.ndarray
    ff1_b: np.ndarray
    ff2_w: np.ndarray
    ff2_b: np.ndarray
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray
    heads: int

    def __post_init__(self):
        d = self.wq.shape[0]
        if self.heads < 1 or d % self.heads:
            raise ConfigError(f"model width {d} is not divisible by {self.heads} heads")
        for w in (self.wq, self.wk, self.wv, self.wo):
            if w.shape != (d, d):
                raise ConfigError(f"projection shape {w.shape} incompatible with width {d}")


class EncoderLayer:
    """Pre-norm encoder layer: ``h = x + MHA(LN1 x)``, ``y = h + FFN(LN2 h)``.

    No positional signal and no mask: the layer is equivariant under any
    permutation of its input rows.
    """

    _PROJ = ("q", "k", "v", "o")

    def __init__(self, name, dim, heads, ffn_dim, beta, eps=1e-5):
        if heads < 1 or dim % heads:
            raise ConfigError(f"model width {dim} is not divisible by {heads} heads")
        self.name = name
        self.dim = dim
        self.heads = heads
        self.ln1 = LayerNorm(f"{name}.ln1", dim, eps)
        self.ln2 = LayerNorm(f"{name}.ln2", dim, eps)
        # a key bias only shifts each score row by a constant, which softmax ignores
        self.proj = {p: Dense(f"{name}.{p}", dim, dim, bias=(p != "k")) for p in self._PROJ}
        self.ffn = MLP(f"{name}.ffn", [dim, ffn_dim, dim], beta, activate_last=False)

    def init(self, params, rng):
        self.ln1.init(params, rng)
        for p in self._PROJ:
            self.proj[p].init(params, rng)
        self.ln2.init(params, rng)
        self.ffn.init(params, rng)

    def view(self, params):
        n = self.name
        return AttentionLayerParams(
            wq=params[f"{n}.q.W"], bq=params[f"{n}.q.b"],
            wk=params[f"{n}.k.W"],
            wv=params[f"{n}.v.W"], bv=params[f"{n}.v.b"],
            wo=params[f"{n}.o.W"], bo=params[f"{n}.o.b"],
            ff1_w=params[f"{n}.ffn.0.W"], ff1_b=params[f"{n}.ffn.0.b"],
            ff2_w=params[f"{n}.ffn.1.W"], ff2_b=params[f"{n}.ffn.1.b"],
            ln1_g=params[f"{n}.ln1.g"], ln1_b=params[f"{n}.ln1.b"],
            ln2_g=params[f"{n}.ln2.g"], ln2_b=params[f"{n}.ln2.b"],
            heads=self.heads,
        )

    def forward(self, params, x, counter=None):
        m = x.shape[0]
        z, c_ln1 = self.ln1.forward(params, x)
        q, _ = self.proj["q"].forward(params, z)
        k, _ = self.proj["k"].forward(params, z)
        v, _ = self.proj["v"].forward(params, z)
        a, probs = kernels.attention_forward(q, k, v, self.heads)
        if counter is not None:
            counter.attention_scores += self.heads * m * m
        o, _ = self.proj["o"].forward(params, a)
        h = x + o
        z2, c_ln2 = self.ln2.forward(params, h)
        f, c_ffn = self.ffn.forward(params, z2)
        y = h + f
        return y, (c_ln1, z, q, k, v, a, probs, c_ln2, z2, c_ffn)

    def backward(self, params, cache, dy):
        c_ln1, z, q, k, v, a, probs, c_ln2, z2, c_ffn = cache
        dz2 = self.ffn.backward(params, c_ffn, dy)
        dh = dy + self.ln2.backward(params, c_ln2, dz2)
        da = self.proj["o"].backward(params, a, dh)
        dq, dk, dv = kernels.attention_backward(np.ascontiguousarray(da), q, k, v, probs,
                                                self.heads)
        dz = (self.proj["q"].backward(params, z, dq)
              + self.proj["k"].backward(params, z, dk)
              + self.proj["v"].backward(params, z, dv))
        return dh + self.ln1.backward(params, c_ln1, dz)


class Encoder:
    """Stack of encoder layers followed by an optional final layer norm."""

    def __init__(self, name, dim, layers, heads, ffn_dim, beta, eps=1e-5, final_norm=True):
        if layers < 0:
            raise ConfigError("encoder depth must be non-negative")
        self.name = name
        self.layers = [EncoderLayer(f"{name}.{i}", dim, heads, ffn_dim, beta, eps)
                       for i in range(layers)]
        self.final = LayerNorm(f"{name}.final", dim, eps) if final_norm else None

    def init(self, params, rng):
        for layer in self.layers:
            layer.init(params, rng)
        if self.final is not None:
            self.final.init(params, rng)

    def forward(self, params, x, counter=None):
        caches = []
        for layer in self.layers:
            x, c = layer.forward(params, x, counter)
            caches.append(c)
        c_final = None
        if self.final is not None:
            x, c_final = self.final.forward(params, x)
        return x, (caches, c_final)

    def backward(self, params, cache, dy):
        caches, c_final = cache
        if self.final is not None:
            dy = self.final.backward(params, c_final, dy)
        for layer, c in zip(reversed(self.layers), reversed(caches)):
            dy = layer.backward(params, c, dy)
        return dy


def multi_head_self_attention(x, p: AttentionLayerParams, beta=1.0, eps=1e-5, counter=None):
    """Apply one pre-norm encoder layer given explicit weights.

    ``x`` is ``K x d``. Returns a ``K x d`` array.
    """
    x = np.ascontiguousarray(x, dtype=p.wq.dtype)
    if x.ndim != 2 or x.shape[0] < 1:
        raise InvalidArgumentError("attention input must be a non-empty K x d matrix")
    if x.shape[1] != p.wq.shape[0]:
        raise ConfigError(f"input width {x.shape[1]} does not match layer width {p.wq.shape[0]}")
    m, d = x.shape
    z, _, _ = kernels.layer_norm_forward(x, p.ln1_g, p.ln1_b, eps)
    q = z @ p.wq + p.bq
    k = z @ p.wk
    v = z @ p.wv + p.bv
    a, _ = kernels.attention_forward(q, k, v, p.heads)
    if counter is not None:
        counter.attention_scores += p.heads * m * m
    h = x + (a @ p.wo + p.bo)
    z2, _, _ = kernels.layer_norm_forward(np.ascontiguousarray(h), p.ln2_g, p.ln2_b, eps)
    f = kernels.smelu_forward(np.ascontiguousarray(z2 @ p.ff1_w + p.ff1_b), beta)
    return h + (f @ p.ff2_w + p.ff2_b)
