"""Layers with hand-written reverse-mode gradients.

Feature maps are NCHW.  Each layer caches what its backward pass needs on
the instance during ``forward``; a layer instance therefore appears at most
once per network evaluation.  ``backward`` accumulates into ``self.grads``
and returns one gradient per input (``None`` for non-differentiable inputs).
"""

from __future__ import annotations

import math

import numpy as np

from ..core import Rng
from ..errors import ContractViolationError, InvalidArgumentError, StateError


def truncated_normal(rng: Rng, shape, std=0.02, dtype=np.float64):
    """Normal(0, std) resampled until every value lies within two std."""
    out = rng.randn(shape)
    bad = np.abs(out) > 2.0
    while np.any(bad):
        out[bad] = rng.randn((int(bad.sum()),))
        bad = np.abs(out) > 2.0
    return (out * std).astype(dtype)


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def _init_grads(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def _cached(self):
        if self._cache is None:
            raise StateError(f"{self.kind}: backward called before forward")
        return self._cache

    def __repr__(self):
        shapes = ", ".join(f"{k}{tuple(v.shape)}" for k, v in self.params.items())
        return f"{type(self).__name__}({shapes})"


def _expect(cond, layer, msg):
    if not cond:
        raise ContractViolationError(f"{layer.kind}: {msg}")


class Conv2d(Layer):
    kind = "conv2d"

    def __init__(self, in_ch, out_ch, k, stride=1, pad=0, *, rng: Rng, std=0.02, zero=False, bias=True):
        super().__init__()
        self.in_ch, self.out_ch, self.k, self.stride, self.pad = in_ch, out_ch, k, stride, pad
        shape = (out_ch, in_ch, k, k)
        self.params["w"] = np.zeros(shape) if zero else truncated_normal(rng, shape, std)
        if bias:
            self.params["b"] = np.zeros(out_ch)
        self._init_grads()

    def _out_hw(self, h, w):
        k, s, p = self.k, self.stride, self.pad
        return (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1

    def forward(self, x):
        _expect(x.ndim == 4 and x.shape[1] == self.in_ch, self,
                f"expected (N, {self.in_ch}, H, W), got {x.shape}")
        n, c, h, w = x.shape
        k, s, p = self.k, self.stride, self.pad
        ho, wo = self._out_hw(h, w)
        _expect(ho >= 1 and wo >= 1, self, f"input {h}x{w} too small for kernel {k}")
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        cols = np.empty((c, k, k, n, ho, wo), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                cols[:, i, j] = xp[:, :, i:i + s * ho:s, j:j + s * wo:s].transpose(1, 0, 2, 3)
        cols = cols.reshape(c * k * k, n * ho * wo)
        wmat = self.params["w"].reshape(self.out_ch, -1)
        out = wmat @ cols
        if "b" in self.params:
            out += self.params["b"][:, None]
        self._cache = (cols, x.shape, xp.shape)
        return out.reshape(self.out_ch, n, ho, wo).transpose(1, 0, 2, 3)

    def backward(self, g):
        cols, xshape, xpshape = self._cached()
        n, c, h, w = xshape
        k, s, p = self.k, self.stride, self.pad
        ho, wo = g.shape[2], g.shape[3]
        g2 = g.transpose(1, 0, 2, 3).reshape(self.out_ch, -1)
        self.grads["w"] += (g2 @ cols.T).reshape(self.params["w"].shape)
        if "b" in self.params:
            self.grads["b"] += g2.sum(axis=1)
        dcols = (self.params["w"].reshape(self.out_ch, -1).T @ g2).reshape(c, k, k, n, ho, wo)
        dxp = np.zeros(xpshape, dtype=g.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + s * ho:s, j:j + s * wo:s] += dcols[:, i, j].transpose(1, 0, 2, 3)
        dx = dxp[:, :, p:p + h, p:p + w] if p else dxp
        return (dx,)


class Linear(Layer):
    kind = "linear"

    def __init__(self, in_f, out_f, *, rng: Rng, std=0.02, zero=False):
        super().__init__()
        self.in_f, self.out_f = in_f, out_f
        self.params["w"] = np.zeros((out_f, in_f)) if zero else truncated_normal(rng, (out_f, in_f), std)
        self.params["b"] = np.zeros(out_f)
        self._init_grads()

    def forward(self, x):
        _expect(x.ndim == 2 and x.shape[1] == self.in_f, self, f"expected (N, {self.in_f}), got {x.shape}")
        self._cache = x
        return x @ self.params["w"].T + self.params["b"]

    def backward(self, g):
        x = self._cached()
        self.grads["w"] += g.T @ x
        self.grads["b"] += g.sum(axis=0)
        return (g @ self.params["w"],)


class SiLU(Layer):
    kind = "silu"

    def forward(self, x):
        sig = 1.0 / (1.0 + np.exp(-x))
        self._cache = (x, sig)
        return x * sig

    def backward(self, g):
        x, sig = self._cached()
        return (g * sig * (1.0 + x * (1.0 - sig)),)


class GroupNorm(Layer):
    kind = "group_norm"

    def __init__(self, groups, channels, eps=1e-5):
        super().__init__()
        if channels % groups:
            raise InvalidArgumentError(f"{channels} channels not divisible into {groups} groups")
        self.groups, self.channels, self.eps = groups, channels, eps
        self.params["gamma"] = np.ones(channels)
        self.params["beta"] = np.zeros(channels)
        self._init_grads()

    def forward(self, x):
        _expect(x.ndim == 4 and x.shape[1] == self.channels, self,
                f"expected (N, {self.channels}, H, W), got {x.shape}")
        n, c, h, w = x.shape
        xg = x.reshape(n, self.groups, -1)
        mu = xg.mean(axis=2, keepdims=True)
        xc = xg - mu
        var = np.mean(xc * xc, axis=2, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (xc * inv).reshape(x.shape)
        self._cache = (xhat, inv)
        return xhat * self.params["gamma"][None, :, None, None] + self.params["beta"][None, :, None, None]

    def backward(self, g):
        xhat, inv = self._cached()
        n, c, h, w = g.shape
        self.grads["gamma"] += np.sum(g * xhat, axis=(0, 2, 3))
        self.grads["beta"] += np.sum(g, axis=(0, 2, 3))
        dxhat = (g * self.params["gamma"][None, :, None, None]).reshape(n, self.groups, -1)
        xh = xhat.reshape(n, self.groups, -1)
        dx = inv * (dxhat - dxhat.mean(axis=2, keepdims=True) - xh * np.mean(dxhat * xh, axis=2, keepdims=True))
        return (dx.reshape(g.shape),)


class PixelShuffle(Layer):
    """(N, C r^2, H, W) -> (N, C, rH, rW); out[c, h r + i, w r + j] = in[c r^2 + i r + j, h, w]."""

    kind = "pixel_shuffle_up"

    def __init__(self, factor):
        super().__init__()
        self.r = factor

    def forward(self, x):
        r = self.r
        n, c, h, w = x.shape
        _expect(c % (r * r) == 0, self, f"{c} channels not divisible by {r * r}")
        out = x.reshape(n, c // (r * r), r, r, h, w).transpose(0, 1, 4, 2, 5, 3)
        self._cache = x.shape
        return out.reshape(n, c // (r * r), h * r, w * r)

    def backward(self, g):
        n, c, h, w = self._cached()
        r = self.r
        dx = g.reshape(n, c // (r * r), h, r, w, r).transpose(0, 1, 3, 5, 2, 4)
        return (dx.reshape(n, c, h, w),)


class SelfAttention(Layer):
    """Multi-head self-attention over the H*W positions of a feature map."""

    kind = "self_attention"

    def __init__(self, channels, heads, *, rng: Rng, std=0.02):
        super().__init__()
        if channels % heads:
            raise InvalidArgumentError(f"{channels} channels not divisible by {heads} heads")
        self.channels, self.heads = channels, heads
        self.params["w_qkv"] = truncated_normal(rng, (3 * channels, channels), std)
        self.params["b_qkv"] = np.zeros(3 * channels)
        self.params["w_out"] = truncated_normal(rng, (channels, channels), std)
        self.params["b_out"] = np.zeros(channels)
        self._init_grads()

    def forward(self, x):
        _expect(x.ndim == 4 and x.shape[1] == self.channels, self,
                f"expected (N, {self.channels}, H, W), got {x.shape}")
        n, c, h, w = x.shape
        hd, d = self.heads, c // self.heads
        tok = x.reshape(n, c, h * w).transpose(0, 2, 1)
        qkv = tok @ self.params["w_qkv"].T + self.params["b_qkv"]
        q, k, v = (qkv[..., i * c:(i + 1) * c].reshape(n, -1, hd, d).transpose(0, 2, 1, 3) for i in range(3))
        scale = 1.0 / math.sqrt(d)
        s = (q @ k.transpose(0, 1, 3, 2)) * scale
        s = s - s.max(axis=-1, keepdims=True)
        p = np.exp(s)
        p /= p.sum(axis=-1, keepdims=True)
        o = (p @ v).transpose(0, 2, 1, 3).reshape(n, h * w, c)
        out = o @ self.params["w_out"].T + self.params["b_out"]
        self._cache = (tok, q, k, v, p, o, x.shape, scale)
        return out.transpose(0, 2, 1).reshape(x.shape)

    def backward(self, g):
        tok, q, k, v, p, o, shape, scale = self._cached()
        n, c, h, w = shape
        hd, d = self.heads, c // self.heads
        gy = g.reshape(n, c, h * w).transpose(0, 2, 1)
        self.grads["w_out"] += np.einsum("nlc,nld->cd", gy, o)
        self.grads["b_out"] += gy.sum(axis=(0, 1))
        go = (gy @ self.params["w_out"]).reshape(n, -1, hd, d).transpose(0, 2, 1, 3)
        gp = go @ v.transpose(0, 1, 3, 2)
        gv = p.transpose(0, 1, 3, 2) @ go
        gs = p * (gp - np.sum(gp * p, axis=-1, keepdims=True)) * scale
        gq = gs @ k
        gk = gs.transpose(0, 1, 3, 2) @ q
        gqkv = np.concatenate([t.transpose(0, 2, 1, 3).reshape(n, -1, c) for t in (gq, gk, gv)], axis=-1)
        self.grads["w_qkv"] += np.einsum("nlc,nld->cd", gqkv, tok)
        self.grads["b_qkv"] += gqkv.sum(axis=(0, 1))
        dtok = gqkv @ self.params["w_qkv"]
        return (dtok.transpose(0, 2, 1).reshape(shape),)


class TimestepEmbed(Layer):
    """Sinusoidal embedding of integer timesteps; no gradient flows to t."""

    kind = "timestep_embed"

    def __init__(self, dim, max_period=10000.0):
        super().__init__()
        if dim % 2:
            raise InvalidArgumentError(f"embedding dim must be even, got {dim}")
        self.dim, self.max_period = dim, max_period

    def forward(self, t):
        t = np.asarray(t, dtype=np.float64).reshape(-1)
        half = self.dim // 2
        freqs = np.exp(-math.log(self.max_period) * np.arange(half) / half)
        ang = t[:, None] * freqs[None, :]
        self._cache = True
        return np.concatenate([np.cos(ang), np.sin(ang)], axis=1)

    def backward(self, g):
        self._cached()
        return (None,)


class Add(Layer):
    """Weighted sum of same-shaped inputs; ``add_skip`` is coeffs (1, 1)."""

    kind = "add"

    def __init__(self, coeffs=(1.0, 1.0)):
        super().__init__()
        self.coeffs = tuple(float(c) for c in coeffs)

    def forward(self, *xs):
        _expect(len(xs) == len(self.coeffs), self, f"expected {len(self.coeffs)} inputs, got {len(xs)}")
        shape = xs[0].shape
        for x in xs[1:]:
            _expect(x.shape == shape, self, f"shape mismatch {x.shape} vs {shape}")
        out = self.coeffs[0] * xs[0]
        for c, x in zip(self.coeffs[1:], xs[1:]):
            out = out + c * x
        self._cache = True
        return out

    def backward(self, g):
        self._cached()
        return tuple(c * g for c in self.coeffs)


class AddChannelBias(Layer):
    """Add a per-sample channel vector (N, C) to a feature map (N, C, H, W)."""

    kind = "add_channel_bias"

    def forward(self, x, v):
        _expect(v.shape == x.shape[:2], self, f"bias {v.shape} does not match map {x.shape}")
        self._cache = True
        return x + v[:, :, None, None]

    def backward(self, g):
        self._cached()
        return g, g.sum(axis=(2, 3))


class Concat(Layer):
    kind = "concat_channels"

    def forward(self, *xs):
        for x in xs[1:]:
            _expect(x.shape[0] == xs[0].shape[0] and x.shape[2:] == xs[0].shape[2:], self,
                    f"cannot concatenate {x.shape} with {xs[0].shape}")
        self._cache = [x.shape[1] for x in xs]
        return np.concatenate(xs, axis=1)

    def backward(self, g):
        splits = np.cumsum(self._cached())[:-1]
        return tuple(np.split(g, splits, axis=1))


class GlobalAvgPool(Layer):
    kind = "global_avg_pool"

    def forward(self, x):
        self._cache = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, g):
        shape = self._cached()
        return (np.broadcast_to(g[:, :, None, None] / (shape[2] * shape[3]), shape).copy(),)


LAYER_KINDS = {cls.kind: cls for cls in (Conv2d, Linear, SiLU, GroupNorm, PixelShuffle, SelfAttention,
                                          TimestepEmbed, Add, AddChannelBias, Concat, GlobalAvgPool)}
