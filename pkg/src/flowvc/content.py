"""Content branch: frozen feature stand-ins, RVQ, and adaptive fusion.

Two frozen providers feed the branch: per-frame symbol posteriors from
corpus alignments (the linguistic track) and a seeded random conv
encoder over mel (the self-supervised track).  The SSL track is
discretized by residual vector quantization against a shared EMA
codebook, projected through a small conv stack, interpolated to the
posterior track's length, and multiplied element-wise into it.  Only
the fusion stack trains by gradient; the codebook learns by EMA.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import kernels
from .autodiff import Tensor
from .nn import Conv1d, Module, interp_time


@dataclass
class FeatureSequence:
    frames: np.ndarray  # (T_f, D)
    frame_rate: float


@dataclass
class ContentSequence:
    frames: np.ndarray  # (T_p, D_p)


def _frames_of(x):
    return x.frames if hasattr(x, "frames") else np.asarray(x, dtype=np.float64)


# -- frozen providers ---------------------------------------------------------


class PPGProvider:
    """Posterior rows from ground-truth frame alignments; frozen."""

    frozen = True

    def __init__(self, n_symbols: int, eps: float = 0.0):
        if n_symbols < 2:
            raise ValueError("need at least 2 symbols")
        if not (0.0 <= eps < 0.5):
            raise ValueError("smoothing eps must be in [0, 0.5)")
        self.n_symbols = n_symbols
        self.eps = eps

    def provide(self, labels, frame_rate: float = 62.5) -> FeatureSequence:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.size == 0:
            raise ValueError("empty label sequence")
        if labels.min() < 0 or labels.max() >= self.n_symbols:
            raise ValueError("label outside symbol inventory")
        rows = np.full((labels.size, self.n_symbols), self.eps / (self.n_symbols - 1))
        rows[np.arange(labels.size), labels] = 1.0 - self.eps
        return FeatureSequence(frames=rows, frame_rate=frame_rate)


class SSLProvider:
    """Frozen seeded 2-layer conv encoder over log-mel; halves the length."""

    frozen = True

    def __init__(self, n_mels: int = 80, d_out: int = 64, seed: int = 7):
        rng = np.random.default_rng(seed)
        self.d_out = d_out
        self.w1 = rng.standard_normal((d_out, n_mels, 5)) / np.sqrt(n_mels * 5)
        self.w2 = rng.standard_normal((d_out, d_out, 3)) / np.sqrt(d_out * 3)

    def provide(self, m) -> FeatureSequence:
        frames = _frames_of(m)
        x = np.ascontiguousarray(((frames + 4.0) / 4.0).T)  # fixed input affine
        x = np.pad(x, ((0, 0), (2, 2)))
        h = np.tanh(kernels.conv1d_forward(np.ascontiguousarray(x), self.w1, 2))
        h = np.pad(h, ((0, 0), (1, 1)))
        h = np.tanh(kernels.conv1d_forward(np.ascontiguousarray(h), self.w2, 1))
        rate = getattr(m, "frame_rate", None)
        if rate is None:
            cfg = getattr(m, "config", None)
            rate = cfg.sample_rate / cfg.hop_length if cfg else 62.5
        return FeatureSequence(frames=h.T.copy(), frame_rate=rate / 2.0)


# -- residual vector quantization ---------------------------------------------


@dataclass
class Codebook:
    entries: np.ndarray  # (V, D)
    ema_counts: np.ndarray  # (V,)
    ema_sums: np.ndarray  # (V, D)


@dataclass
class QuantizedSequence:
    codes: np.ndarray  # (N, T_f) one row per stage
    vectors: np.ndarray  # (T_f, D) final reconstruction
    stage_vectors: np.ndarray  # (N, T_f, D) cumulative reconstruction per stage


def init_codebook(n_entries: int, dim: int, rng) -> Codebook:
    if n_entries < 2:
        raise ValueError("codebook needs at least 2 entries")
    entries = rng.standard_normal((n_entries, dim)) / np.sqrt(dim)
    # counts 1 / sums = entries keeps entries a fixed point of the EMA rule
    return Codebook(entries=entries, ema_counts=np.ones(n_entries),
                    ema_sums=entries.copy())


def rvq_quantize(x, book: Codebook, n_stages: int = 1) -> QuantizedSequence:
    """Nearest-entry search per stage on the running residual."""
    frames = _frames_of(x)
    if n_stages < 1:
        raise ValueError("n_stages must be >= 1")
    if frames.shape[1] != book.entries.shape[1]:
        raise ValueError(f"dim mismatch: x {frames.shape}, book {book.entries.shape}")
    entries = np.ascontiguousarray(book.entries)
    residual = np.ascontiguousarray(frames.copy())
    codes = np.zeros((n_stages, frames.shape[0]), dtype=np.int64)
    stage_vectors = np.zeros((n_stages,) + frames.shape)
    recon = np.zeros_like(frames)
    for i in range(n_stages):
        codes[i] = kernels.nearest_codebook(residual, entries)
        chosen = entries[codes[i]]
        recon = recon + chosen
        stage_vectors[i] = recon
        residual = np.ascontiguousarray(residual - chosen)
    return QuantizedSequence(codes=codes, vectors=recon, stage_vectors=stage_vectors)


def rvq_straight_through(x: Tensor, book: Codebook, n_stages: int = 1):
    """Forward the reconstruction, route gradients straight to x."""
    q = rvq_quantize(x.data, book, n_stages)
    out = x + Tensor(q.vectors - x.data, requires_grad=False)
    return out, q


def rvq_commit_loss(x, q: QuantizedSequence):
    """Sum over stages of ||x - x_hat_i||^2, averaged over frames."""
    if isinstance(x, Tensor):
        t_f = x.data.shape[0]
        total = None
        for i in range(q.stage_vectors.shape[0]):
            diff = x - Tensor(q.stage_vectors[i], requires_grad=False)
            term = (diff * diff).sum()
            total = term if total is None else total + term
        return total * (1.0 / t_f)
    frames = _frames_of(x)
    diffs = frames[None, :, :] - q.stage_vectors
    return float(np.sum(diffs**2) / frames.shape[0])


def codebook_update_ema(book: Codebook, frames, codes, decay: float = 0.99,
                        dead_threshold: float = 1e-2, rng=None) -> Codebook:
    """EMA counts/sums update; dead entries reseed from batch vectors."""
    if not (0.0 < decay < 1.0):
        raise ValueError("decay must be in (0, 1)")
    frames = _frames_of(frames)
    codes = np.asarray(codes, dtype=np.int64).reshape(-1)
    v = book.entries.shape[0]
    counts = decay * book.ema_counts + np.bincount(codes, minlength=v)
    sums = decay * book.ema_sums.copy()
    np.add.at(sums, codes, frames.reshape(-1, frames.shape[-1]))
    entries = sums / (counts[:, None] + 1e-5)
    dead = counts < dead_threshold
    if dead.any():
        if rng is None:
            rng = np.random.default_rng(0)
        picks = rng.integers(0, frames.shape[0], size=int(dead.sum()))
        entries[dead] = frames[picks]
        sums[dead] = entries[dead]
        counts[dead] = 1.0
    return Codebook(entries=entries, ema_counts=counts, ema_sums=sums)


# -- adaptive fusion ----------------------------------------------------------


class FusionModule(Module):
    """Conv stack over the quantized track, gating the posterior track.

    Each conv (kernel 3, padding 1) is followed by LeakyReLU(0.2); the
    projected coefficients are linearly interpolated to the posterior
    length and multiplied element-wise into it.
    """

    def __init__(self, d_in: int, d_out: int, hidden: int = 64, rng=None):
        if rng is None:
            rng = np.random.default_rng(0)
        self.conv1 = Conv1d(d_in, hidden, 3, rng, padding=1)
        self.conv2 = Conv1d(hidden, d_out, 3, rng, padding=1)
        self.slope = 0.2

    def coefficients(self, xs: Tensor) -> Tensor:
        h = ad.leaky_relu(self.conv1(ad.transpose(xs)), self.slope)
        h = ad.leaky_relu(self.conv2(h), self.slope)
        return ad.transpose(h)  # (T_ssl, d_out)

    def forward(self, xs: Tensor, ppg: Tensor) -> Tensor:
        coef = self.coefficients(xs)
        if coef.shape[1] != ppg.shape[1]:
            raise ValueError(f"projection dim {coef.shape[1]} != ppg dim {ppg.shape[1]}")
        coef = interp_time(coef, ppg.shape[0])
        return coef * ppg

    __call__ = forward


def adaptive_fuse(q: QuantizedSequence, ppg, fusion: FusionModule) -> ContentSequence:
    """Inference wrapper: fused content at the posterior frame rate."""
    ppg_frames = _frames_of(ppg)
    with ad.no_grad():
        out = fusion.forward(Tensor(q.vectors), Tensor(ppg_frames))
    return ContentSequence(frames=out.data)
