"""Layer building blocks shared by the learned modules.

Sequence layers act on (T, D) arrays; convolutional layers act on (C, T).
Every layer takes an explicit rng for initialization, so module construction
is deterministic given a seed.
"""

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class Module:
    """Base class: parameter discovery by attribute walk, insertion-ordered."""

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def named_parameters(self, prefix=""):
        out = []
        for name, value in vars(self).items():
            out.extend(_collect_params(f"{prefix}{name}", value))
        return out

    def freeze(self):
        """Mark every parameter as non-trainable (frozen provider contract)."""
        for _, p in self.named_parameters():
            p.requires_grad = False
        return self


def _collect_params(key, value):
    """Walk Tensors, Modules, and arbitrarily nested lists/tuples of them."""
    if isinstance(value, Tensor):
        return [(key, value)] if value.requires_grad else []
    if isinstance(value, Module):
        return value.named_parameters(f"{key}.")
    if isinstance(value, (list, tuple)):
        out = []
        for i, item in enumerate(value):
            out.extend(_collect_params(f"{key}.{i}", item))
        return out
    return []


def _normal(rng, shape, scale):
    return rng.standard_normal(shape) * scale


class Linear(Module):
    def __init__(self, d_in, d_out, rng, bias=True, zero_init=False):
        scale = 0.0 if zero_init else 1.0 / np.sqrt(d_in)
        self.w = Tensor(_normal(rng, (d_in, d_out), scale), requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True) if bias else None

    def forward(self, x):
        out = ad.matmul(x, self.w)
        if self.b is not None:
            out = ad.add(out, self.b)
        return out

    __call__ = forward


class Conv1d(Module):
    """Cross-correlation layer on (C, T) data."""

    def __init__(self, c_in, c_out, kernel_size, rng, stride=1, padding=0, zero_init=False):
        scale = 0.0 if zero_init else 1.0 / np.sqrt(c_in * kernel_size)
        self.w = Tensor(_normal(rng, (c_out, c_in, kernel_size), scale), requires_grad=True)
        self.b = Tensor(np.zeros(c_out), requires_grad=True)
        self.stride = stride
        self.padding = padding

    def forward(self, x):
        return ad.conv1d(x, self.w, self.b, stride=self.stride, padding=self.padding)

    __call__ = forward


class LayerNorm(Module):
    """Per-frame normalization over the last axis of (T, D)."""

    def __init__(self, dim, eps=1e-5):
        self.g = Tensor(np.ones(dim), requires_grad=True)
        self.b = Tensor(np.zeros(dim), requires_grad=True)
        self.eps = eps

    def forward(self, x):
        mu = ad.mean(x, axis=-1, keepdims=True)
        centered = ad.add(x, ad.mul(mu, -1.0))
        var = ad.mean(ad.mul(centered, centered), axis=-1, keepdims=True)
        inv = ad.power(ad.add(var, self.eps), -0.5)
        return ad.add(ad.mul(ad.mul(centered, inv), self.g), self.b)

    __call__ = forward


class GroupNormSeq(Module):
    """Group normalization for (T, D) sequences.

    Statistics are taken over time and the channels of each group, so the
    layer is equivariant under frame permutations.
    """

    def __init__(self, dim, groups=8, eps=1e-5):
        if dim % groups:
            raise ValueError("dim must be divisible by groups")
        self.g = Tensor(np.ones(dim), requires_grad=True)
        self.b = Tensor(np.zeros(dim), requires_grad=True)
        self.groups = groups
        self.eps = eps

    def forward(self, x):
        t, d = x.shape
        xg = ad.reshape(x, (t, self.groups, d // self.groups))
        mu = ad.mean(xg, axis=(0, 2), keepdims=True)
        centered = ad.add(xg, ad.mul(mu, -1.0))
        var = ad.mean(ad.mul(centered, centered), axis=(0, 2), keepdims=True)
        inv = ad.power(ad.add(var, self.eps), -0.5)
        normed = ad.reshape(ad.mul(centered, inv), (t, d))
        return ad.add(ad.mul(normed, self.g), self.b)

    __call__ = forward


class GroupNormConv(Module):
    """Group normalization for (C, T) feature maps, affine per channel."""

    def __init__(self, channels, groups=8, eps=1e-5):
        if channels % groups:
            raise ValueError("channels must be divisible by groups")
        self.g = Tensor(np.ones((channels, 1)), requires_grad=True)
        self.b = Tensor(np.zeros((channels, 1)), requires_grad=True)
        self.groups = groups
        self.eps = eps

    def forward(self, x):
        c, t = x.shape
        xg = ad.reshape(x, (self.groups, c // self.groups, t))
        mu = ad.mean(xg, axis=(1, 2), keepdims=True)
        centered = ad.add(xg, ad.mul(mu, -1.0))
        var = ad.mean(ad.mul(centered, centered), axis=(1, 2), keepdims=True)
        inv = ad.power(ad.add(var, self.eps), -0.5)
        normed = ad.reshape(ad.mul(centered, inv), (c, t))
        return ad.add(ad.mul(normed, self.g), self.b)

    __call__ = forward


def scaled_dot_attention(q, k, v, n_heads):
    """Multi-head scaled dot-product attention on (T, D) sequences.

    Returns (output (T_q, D), weights ndarray (H, T_q, T_k)). Softmax is over
    the key axis; per-head scale is 1/sqrt(d_head). No positional encoding,
    so the map is permutation-equivariant over keys/values.
    """
    t_q, d = q.shape
    t_k = k.shape[0]
    if d % n_heads:
        raise ValueError("model dim must be divisible by head count")
    if t_k == 0:
        raise ValueError("attention requires a non-empty key sequence")
    dh = d // n_heads

    def split(x, t_len):
        return ad.transpose(ad.reshape(x, (t_len, n_heads, dh)), (1, 0, 2))

    qh = split(q, t_q)
    kh = split(k, t_k)
    vh = split(v, t_k)
    scores = ad.mul(ad.matmul(qh, ad.transpose(kh, (0, 2, 1))), 1.0 / np.sqrt(dh))
    attn = ad.softmax(scores, axis=-1)
    out = ad.matmul(attn, vh)  # (H, T_q, dh)
    merged = ad.reshape(ad.transpose(out, (1, 0, 2)), (t_q, d))
    return merged, attn.data


class MultiHeadAttention(Module):
    """Projections + scaled dot attention + output projection."""

    def __init__(self, dim, n_heads, rng):
        self.wq = Linear(dim, dim, rng)
        self.wk = Linear(dim, dim, rng)
        self.wv = Linear(dim, dim, rng)
        self.wo = Linear(dim, dim, rng)
        self.n_heads = n_heads

    def forward(self, q_seq, kv_seq, return_weights=False):
        merged, weights = scaled_dot_attention(
            self.wq(q_seq), self.wk(kv_seq), self.wv(kv_seq), self.n_heads
        )
        out = self.wo(merged)
        return (out, weights) if return_weights else out

    __call__ = forward


def linear_interp_matrix(t_in, t_out):
    """Endpoint-aligned linear interpolation operator, shape (t_out, t_in).

    Row i holds the weights resampling a length-t_in track to length t_out:
    position i maps to coordinate i*(t_in-1)/(t_out-1).
    """
    if t_in < 1 or t_out < 1:
        raise ValueError("interpolation lengths must be >= 1")
    m = np.zeros((t_out, t_in))
    if t_in == 1:
        m[:, 0] = 1.0
        return m
    if t_out == 1:
        m[0, 0] = 1.0
        return m
    pos = np.arange(t_out) * (t_in - 1) / (t_out - 1)
    lo = np.minimum(pos.astype(np.int64), t_in - 2)
    frac = pos - lo
    m[np.arange(t_out), lo] = 1.0 - frac
    m[np.arange(t_out), lo + 1] = frac
    return m


def interp_time(x, t_out):
    """Linearly resample a (T, D) Tensor to (t_out, D) along time."""
    m = Tensor(linear_interp_matrix(x.shape[0], t_out))
    return ad.matmul(m, x)


def sinusoidal_embedding(t, dim):
    """Sinusoidal embedding of a scalar in [0, 1], as a plain ndarray."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = 1000.0 * float(t) * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)])
