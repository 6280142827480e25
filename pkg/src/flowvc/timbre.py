"""Timbre branch: reference statistics, memory module, cross-attention fusion.

A reference utterance is cut to a random 2-4 s segment, analyzed to mel,
frame-shuffled to destroy linguistic order, and tagged per frame with a
frozen speaker embedding.  The memory module compresses that sequence to
a single FiLM (gamma, beta) pair; the context module aligns it to the
source content by cross-attention.  Neither module uses positional
information, so both are invariant to reference frame order.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import dsp
from .autodiff import Tensor
from .nn import (Conv1d, GroupNormSeq, LayerNorm, Linear, Module,
                 MultiHeadAttention, interp_time)

SPK_DIM = 192


@dataclass
class TimbreSequence:
    frames: np.ndarray  # (T_r, n_mels + SPK_DIM)


@dataclass
class TimbreCondition:
    gamma: Tensor
    beta: Tensor


@dataclass
class FusedSequence:
    frames: np.ndarray  # (T_mel, D_f)


# -- frozen speaker embedding --------------------------------------------------


def speaker_embed(w: dsp.Waveform, seed: int = 11,
                  cfg: dsp.MelConfig = dsp.MelConfig()) -> np.ndarray:
    """Mel mean+std projected by a fixed seeded matrix; unit L2 norm."""
    mel = dsp.mel_spectrogram(w, cfg).frames
    stats = np.concatenate([mel.mean(axis=0), mel.std(axis=0)])
    proj = np.random.default_rng(seed).standard_normal((SPK_DIM, stats.size))
    proj /= np.sqrt(stats.size)
    e = proj @ stats
    return e / np.linalg.norm(e)


def build_reference_timbre(ref: dsp.Waveform, seed: int,
                           cfg: dsp.MelConfig = dsp.MelConfig(),
                           spk_seed: int = 11,
                           min_seconds: float = 2.0,
                           max_seconds: float = 4.0) -> TimbreSequence:
    """Random 2-4 s segment -> mel -> shuffle -> concat speaker embedding."""
    rng = np.random.default_rng(seed)
    n = len(ref.samples)
    lo = int(min_seconds * ref.sample_rate)
    if n < lo:
        raise ValueError(f"reference too short: {n} samples, need {lo}")
    seg_len = min(n, int(rng.uniform(min_seconds, max_seconds) * ref.sample_rate))
    start = int(rng.integers(0, n - seg_len + 1))
    seg = dsp.Waveform(ref.samples[start : start + seg_len], ref.sample_rate)
    mel = dsp.shuffle_frames(dsp.mel_spectrogram(seg, cfg), int(rng.integers(1 << 31)))
    emb = speaker_embed(seg, spk_seed, cfg)
    suffix = np.broadcast_to(emb, (mel.frames.shape[0], SPK_DIM))
    return TimbreSequence(frames=np.concatenate([mel.frames, suffix], axis=1))


# -- memory-augmented timbre module --------------------------------------------


class SelfAttentionBlock(Module):
    """Pre-norm residual block: x + Conv1d(MHSA(GroupNorm(x))).

    The conv is kernel-1 (pointwise) so the block stays permutation
    equivariant over frames.
    """

    def __init__(self, dim, n_heads, rng):
        self.norm = GroupNormSeq(dim)
        self.attn = MultiHeadAttention(dim, n_heads, rng)
        self.conv = Conv1d(dim, dim, 1, rng)

    def forward(self, x):
        h = self.norm(x)
        h = self.attn(h, h)
        h = ad.transpose(self.conv(ad.transpose(h)))
        return x + h

    __call__ = forward


class MemoryModule(Module):
    """Shuffled timbre frames -> 4 SA blocks -> time mean -> (gamma, beta)."""

    def __init__(self, d_in, hidden=128, cond_dim=128, n_heads=4, n_blocks=4,
                 rng=None):
        if rng is None:
            rng = np.random.default_rng(0)
        self.proj = Conv1d(d_in, hidden, 1, rng)
        self.blocks = [SelfAttentionBlock(hidden, n_heads, rng)
                       for _ in range(n_blocks)]
        # gamma starts at identity so early training leaves activations alone
        self.to_gamma = Linear(hidden, cond_dim, rng, zero_init=True)
        self.to_beta = Linear(hidden, cond_dim, rng, zero_init=True)

    def forward(self, timbre) -> TimbreCondition:
        frames = timbre.frames if isinstance(timbre, TimbreSequence) else timbre
        x = frames if isinstance(frames, Tensor) else Tensor(frames)
        h = ad.transpose(self.proj(ad.transpose(x)))
        for block in self.blocks:
            h = block(h)
        pooled = ad.mean(h, axis=0, keepdims=True)
        d = self.to_gamma.w.shape[1]
        return TimbreCondition(gamma=ad.reshape(self.to_gamma(pooled), (d,)) + 1.0,
                               beta=ad.reshape(self.to_beta(pooled), (d,)))

    __call__ = forward


def memory_augment(x: TimbreSequence, module: MemoryModule) -> TimbreCondition:
    return module(x)


def film_apply(h: Tensor, cond: TimbreCondition) -> Tensor:
    """gamma * h + beta on the last axis, broadcast over leading axes."""
    d = cond.gamma.shape[-1]
    if h.shape[-1] != d:
        raise ValueError(f"feature dim {h.shape[-1]} != condition dim {d}")
    return h * cond.gamma + cond.beta


# -- context-aware cross-attention module ---------------------------------------


class CrossAttentionBlock(Module):
    """Post-norm cross-attention: content queries, timbre keys/values."""

    def __init__(self, dim, n_heads, rng, ffn_mult=4):
        self.attn = MultiHeadAttention(dim, n_heads, rng)
        self.norm1 = LayerNorm(dim)
        self.ffn1 = Linear(dim, ffn_mult * dim, rng)
        self.ffn2 = Linear(ffn_mult * dim, dim, rng)
        self.norm2 = LayerNorm(dim)

    def forward(self, q_seq, kv_seq, return_weights=False):
        if return_weights:
            attn, weights = self.attn(q_seq, kv_seq, return_weights=True)
        else:
            attn = self.attn(q_seq, kv_seq)
        x = self.norm1(q_seq + attn)
        x = self.norm2(x + self.ffn2(ad.silu(self.ffn1(x))))
        return (x, weights) if return_weights else x

    __call__ = forward


def cross_attention(q_seq: Tensor, kv_seq: Tensor, block: CrossAttentionBlock):
    """One block plus its first-layer attention weights (H, T_q, T_k)."""
    return block(q_seq, kv_seq, return_weights=True)


class ContextModule(Module):
    """Project, cross-attend (content as query), resample to T_mel."""

    def __init__(self, d_content, d_timbre, dim=128, n_heads=4, n_blocks=2,
                 rng=None):
        if rng is None:
            rng = np.random.default_rng(0)
        self.proj_content = Linear(d_content, dim, rng)
        self.proj_timbre = Linear(d_timbre, dim, rng)
        self.blocks = [CrossAttentionBlock(dim, n_heads, rng)
                       for _ in range(n_blocks)]
        self.dim = dim

    def forward(self, content: Tensor, timbre: Tensor, t_mel: int) -> Tensor:
        if t_mel < 1:
            raise ValueError("t_mel must be >= 1")
        q = self.proj_content(content)
        kv = self.proj_timbre(timbre)
        for block in self.blocks:
            q = block(q, kv)
        return interp_time(q, t_mel)

    __call__ = forward


def context_aware_fuse(content, timbre: TimbreSequence, t_mel: int,
                       module: ContextModule) -> FusedSequence:
    """Inference wrapper returning plain frames of length exactly t_mel."""
    c = content.frames if hasattr(content, "frames") else content
    with ad.no_grad():
        out = module(Tensor(np.asarray(c, dtype=np.float64)),
                     Tensor(timbre.frames), t_mel)
    return FusedSequence(frames=out.data)
