"""Optimal-transport conditional flow matching: path, loss, Euler sampler.

Orientation: t=0 is standard normal noise, t=1 is data.  The path
phi_t = (1 - (1 - sigma_min) t) x0 + t x1 has the constant velocity
u = x1 - (1 - sigma_min) x0, which the vector-field net regresses
under random (t, x0).  Sampling integrates the learned field forward
with K explicit Euler steps at t_k = k/K, optionally combining the
conditional and null branches by classifier-free guidance.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import Conv1d, GroupNormConv, Linear, Module, sinusoidal_embedding
from .timbre import TimbreCondition


@dataclass(frozen=True)
class FlowPathParams:
    sigma_min: float = 0.0001

    def __post_init__(self):
        if not (0.0 <= self.sigma_min < 1.0):
            raise ValueError("sigma_min must be in [0, 1)")


@dataclass(frozen=True)
class SamplerConfig:
    n_steps: int = 10
    cfg_gamma: float = 0.7

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.cfg_gamma < 0.0:
            raise ValueError("cfg_gamma must be >= 0")


@dataclass
class ConditionSet:
    fused: object  # (T_mel, D_f) frames or FusedSequence
    timbre: TimbreCondition
    cond_active: bool = True


# -- path and target -----------------------------------------------------------


def ot_path(x0, x1, t, p: FlowPathParams = FlowPathParams()):
    """Path point at time t; phi_0 = x0 (noise), phi_1 = sigma_min x0 + x1."""
    x0, x1 = np.asarray(x0, float), np.asarray(x1, float)
    if x0.shape != x1.shape:
        raise ValueError(f"shape mismatch: {x0.shape} vs {x1.shape}")
    if not (0.0 <= t <= 1.0):
        raise ValueError(f"t must lie in [0, 1], got {t}")
    return (1.0 - (1.0 - p.sigma_min) * t) * x0 + t * x1


def ot_target(x0, x1, p: FlowPathParams = FlowPathParams()):
    """Constant regression target u = x1 - (1 - sigma_min) x0 = d(path)/dt."""
    x0, x1 = np.asarray(x0, float), np.asarray(x1, float)
    if x0.shape != x1.shape:
        raise ValueError(f"shape mismatch: {x0.shape} vs {x1.shape}")
    return x1 - (1.0 - p.sigma_min) * x0


def cfg_combine(v_cond, v_uncond, gamma):
    """Guided field (1 + gamma) v_cond - gamma v_uncond."""
    v_cond, v_uncond = np.asarray(v_cond, float), np.asarray(v_uncond, float)
    if v_cond.shape != v_uncond.shape:
        raise ValueError("guidance branches must share a shape")
    return (1.0 + gamma) * v_cond - gamma * v_uncond


# -- training loss ---------------------------------------------------------------


def cfm_loss(x1, h, net, p: FlowPathParams = FlowPathParams(), rng=None,
             p_drop: float = 0.2):
    """MSE between the path velocity and the net's field at a random (t, x0).

    Draw order is fixed (t, then x0, then the condition-dropout uniform)
    so a reseeded rng reproduces the sample exactly.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    frames = x1.frames if hasattr(x1, "frames") else np.asarray(x1, float)
    t = float(rng.uniform())
    x0 = rng.standard_normal(frames.shape)
    u_drop = float(rng.uniform())
    if h is not None and u_drop < p_drop:
        h = replace(h, cond_active=False)
    xt = ot_path(x0, frames, t, p)
    u = ot_target(x0, frames, p)
    v = net(xt, t, h)
    if isinstance(v, Tensor):
        diff = v - Tensor(u, requires_grad=False)
        return (diff * diff).mean()
    return float(np.mean((np.asarray(v, float) - u) ** 2))


# -- sampler ----------------------------------------------------------------------


def _field(net, x, t, h):
    with ad.no_grad():
        v = net(x, t, h)
    return v.data if isinstance(v, Tensor) else np.asarray(v, float)


def euler_sample(h, net, cfg: SamplerConfig = SamplerConfig(),
                 p: FlowPathParams = FlowPathParams(), rng=None,
                 t_mel: int = 1, n_mels: int = 80) -> np.ndarray:
    """K plain Euler steps from x0 ~ N(0, I); returns the predicted frames."""
    if rng is None:
        rng = np.random.default_rng(0)
    x = rng.standard_normal((t_mel, n_mels))
    k_steps = cfg.n_steps
    for k in range(k_steps):
        t_k = k / k_steps
        v = _field(net, x, t_k, h)
        if cfg.cfg_gamma > 0.0 and h is not None and h.cond_active:
            v_null = _field(net, x, t_k, replace(h, cond_active=False))
            v = cfg_combine(v, v_null, cfg.cfg_gamma)
        x = x + v / k_steps
    return x


# -- vector field net ---------------------------------------------------------------


class ResBlock(Module):
    """Two norm/FiLM/conv passes with a time-embedding bias and shortcut."""

    def __init__(self, channels, temb_dim, rng):
        self.norm1 = GroupNormConv(channels)
        self.conv1 = Conv1d(channels, channels, 3, rng, padding=1)
        self.temb = Linear(temb_dim, channels, rng)
        self.norm2 = GroupNormConv(channels)
        self.conv2 = Conv1d(channels, channels, 3, rng, padding=1, zero_init=True)
        self.channels = channels

    def forward(self, x, temb, gamma, beta):
        h = self._film(self.norm1(x), gamma, beta)
        h = self.conv1(ad.silu(h))
        h = h + ad.reshape(self.temb(temb), (self.channels, 1))
        h = self._film(self.norm2(h), gamma, beta)
        h = self.conv2(ad.silu(h))
        return x + h

    @staticmethod
    def _film(h, gamma, beta):
        c = h.shape[0]
        return h * ad.reshape(gamma, (c, 1)) + ad.reshape(beta, (c, 1))

    __call__ = forward


class VectorFieldNet(Module):
    """1-D U-Net over time: state + fused channels in, velocity out.

    Fused content enters by channel concatenation, the timbre condition
    by FiLM after every group norm, and t by a sinusoidal embedding fed
    through a small MLP into every residual block.  Time length is
    zero-padded to a multiple of 2**(levels-1) and cropped after.
    """

    def __init__(self, n_mels=80, d_f=128, hidden=128, cond_dim=128,
                 temb_dim=128, levels=3, res_per_level=2, rng=None):
        if rng is None:
            rng = np.random.default_rng(0)
        if levels < 1:
            raise ValueError("levels must be >= 1")
        if cond_dim != hidden:
            raise ValueError("cond_dim must equal hidden: FiLM acts on hidden channels")
        self.n_mels = n_mels
        self.d_f = d_f
        self.cond_dim = cond_dim
        self.temb_dim = temb_dim
        self.levels = levels

        self.stem = Conv1d(n_mels + d_f, hidden, 3, rng, padding=1)
        self.temb1 = Linear(temb_dim, temb_dim, rng)
        self.temb2 = Linear(temb_dim, temb_dim, rng)

        self.down_blocks = []
        self.downs = []
        for lv in range(levels):
            self.down_blocks.append(
                [ResBlock(hidden, temb_dim, rng) for _ in range(res_per_level)])
            if lv < levels - 1:
                self.downs.append(Conv1d(hidden, hidden, 3, rng, stride=2, padding=1))

        self.merges = []
        self.up_blocks = []
        for _ in range(levels - 1):
            self.merges.append(Conv1d(2 * hidden, hidden, 3, rng, padding=1))
            self.up_blocks.append(
                [ResBlock(hidden, temb_dim, rng) for _ in range(res_per_level)])

        self.head_norm = GroupNormConv(hidden)
        self.head = Conv1d(hidden, n_mels, 3, rng, padding=1, zero_init=True)

        self.null_fused = Tensor(np.zeros(d_f), requires_grad=True)
        self.null_gamma = Tensor(np.ones(cond_dim), requires_grad=True)
        self.null_beta = Tensor(np.zeros(cond_dim), requires_grad=True)

    def _resolve(self, h, t_mel):
        """Condition tensors for the active or the learned-null branch."""
        if h is not None and h.cond_active:
            f = h.fused.frames if hasattr(h.fused, "frames") else h.fused
            fused = f if isinstance(f, Tensor) else Tensor(np.asarray(f, float))
            if fused.shape != (t_mel, self.d_f):
                raise ValueError(f"fused shape {fused.shape} != ({t_mel}, {self.d_f})")
            return fused, h.timbre.gamma, h.timbre.beta
        ones = Tensor(np.ones((t_mel, 1)), requires_grad=False)
        return ones @ ad.reshape(self.null_fused, (1, self.d_f)), \
            self.null_gamma, self.null_beta

    def forward(self, x, t, h=None) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, float))
        t_mel = x.shape[0]
        if x.shape[1] != self.n_mels:
            raise ValueError(f"state dim {x.shape[1]} != n_mels {self.n_mels}")
        fused, gamma, beta = self._resolve(h, t_mel)

        temb = Tensor(sinusoidal_embedding(t, self.temb_dim)[None, :],
                      requires_grad=False)
        temb = self.temb2(ad.silu(self.temb1(temb)))

        z = ad.transpose(ad.concat([x, fused], axis=1))  # (n_mels + d_f, T)
        mult = 1 << (self.levels - 1)
        pad = (-t_mel) % mult
        if pad:
            z = ad.pad_axis(z, 1, 0, pad)
        z = self.stem(z)

        skips = []
        for lv in range(self.levels):
            for block in self.down_blocks[lv]:
                z = block(z, temb, gamma, beta)
            if lv < self.levels - 1:
                skips.append(z)
                z = self.downs[lv](z)

        for i in range(self.levels - 1):
            z = ad.repeat_interleave(z, 2, axis=1)  # nearest x2 upsample
            z = ad.concat([z, skips.pop()], axis=0)
            z = self.merges[i](z)
            for block in self.up_blocks[i]:
                z = block(z, temb, gamma, beta)

        z = self.head(ad.silu(self.head_norm(z)))
        if pad:
            z = z[:, :t_mel]
        return ad.transpose(z)

    __call__ = forward
