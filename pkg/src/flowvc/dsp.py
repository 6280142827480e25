"""Waveform I/O, mel analysis, frame shuffling, mel inversion, pitch.

The analysis front end is fixed-convention: Hann window, no padding,
T = 1 + floor((len - win) / hop), Slaney-style area-normalized mel
filterbank, natural log with a hard floor.  Griffin-Lim plus an NNLS
mel pseudo-inverse stands in for a neural vocoder; audio fidelity is
not a target, mel-domain metrics are.
"""

import wave
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls


class FileFormatError(Exception):
    """Raised for malformed or unsupported audio and artifact files."""


@dataclass(frozen=True)
class MelConfig:
    sample_rate: int = 16000
    n_fft: int = 1024
    win_length: int = 1024
    hop_length: int = 256
    n_mels: int = 80
    f_min: float = 0.0
    f_max: float = 8000.0
    log_floor: float = 1e-5

    def __post_init__(self):
        if not (0 < self.hop_length <= self.win_length <= self.n_fft):
            raise ValueError("need 0 < hop <= win <= n_fft")
        if not (0.0 <= self.f_min < self.f_max <= self.sample_rate / 2):
            raise ValueError("need 0 <= f_min < f_max <= sample_rate/2")
        if self.log_floor <= 0.0:
            raise ValueError("log_floor must be positive")


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int


@dataclass
class MelSpectrogram:
    frames: np.ndarray  # (T, n_mels) log-mel energies
    config: MelConfig


# -- wav i/o -----------------------------------------------------------------


def load_wav(path) -> Waveform:
    """Read a PCM16 mono WAV file into float64 samples in [-1, 1]."""
    try:
        with wave.open(str(path), "rb") as f:
            n_channels = f.getnchannels()
            sampwidth = f.getsampwidth()
            comptype = f.getcomptype()
            sample_rate = f.getframerate()
            raw = f.readframes(f.getnframes())
    except (wave.Error, EOFError, OSError) as exc:
        raise FileFormatError(f"not a readable WAV file: {path}: {exc}") from exc
    if comptype != "NONE" or sampwidth != 2:
        raise FileFormatError(f"unsupported encoding in {path}: need PCM16")
    if n_channels != 1:
        raise FileFormatError(f"{path} has {n_channels} channels, need mono")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples=samples, sample_rate=sample_rate)


def save_wav(path, w: Waveform):
    """Write samples as PCM16 mono, clipping to the representable range."""
    q = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(w.sample_rate)
        f.writeframes(q.tobytes())


# -- mel analysis ------------------------------------------------------------


def hz_to_mel(hz):
    """Slaney scale: linear below 1 kHz, logarithmic above."""
    hz = np.asarray(hz, dtype=np.float64)
    mel = hz * 3.0 / 200.0
    log_region = hz >= 1000.0
    logstep = np.log(6.4) / 27.0
    mel = np.where(log_region, 15.0 + np.log(np.maximum(hz, 1e-12) / 1000.0) / logstep, mel)
    return mel


def mel_to_hz(mel):
    mel = np.asarray(mel, dtype=np.float64)
    hz = mel * 200.0 / 3.0
    logstep = np.log(6.4) / 27.0
    return np.where(mel >= 15.0, 1000.0 * np.exp(logstep * (mel - 15.0)), hz)


def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """(n_mels, n_fft//2 + 1) triangular filters, each area-normalized."""
    n_bins = cfg.n_fft // 2 + 1
    fft_freqs = np.linspace(0.0, cfg.sample_rate / 2.0, n_bins)
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max), cfg.n_mels + 2))
    fb = np.zeros((cfg.n_mels, n_bins))
    for m in range(cfg.n_mels):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (fft_freqs - lo) / (center - lo)
        down = (hi - fft_freqs) / (hi - center)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
        fb[m] *= 2.0 / (hi - lo)  # unit triangle area
    return fb


def frame_count(n_samples: int, cfg: MelConfig) -> int:
    return 1 + (n_samples - cfg.win_length) // cfg.hop_length


def stft_magnitude(samples: np.ndarray, cfg: MelConfig) -> np.ndarray:
    """(T, n_fft//2 + 1) magnitudes; periodic Hann, no boundary padding."""
    if len(samples) < cfg.win_length:
        raise ValueError("waveform shorter than one analysis window")
    t = frame_count(len(samples), cfg)
    window = np.hanning(cfg.win_length + 1)[:-1]
    idx = np.arange(cfg.win_length)[None, :] + cfg.hop_length * np.arange(t)[:, None]
    frames = samples[idx] * window
    return np.abs(np.fft.rfft(frames, n=cfg.n_fft, axis=1))


def mel_spectrogram(w: Waveform, cfg: MelConfig = MelConfig()) -> MelSpectrogram:
    """Log-mel analysis; digital silence maps every cell to log(log_floor)."""
    if w.sample_rate != cfg.sample_rate:
        raise ValueError(f"waveform rate {w.sample_rate} != config {cfg.sample_rate}")
    mag = stft_magnitude(np.asarray(w.samples, dtype=np.float64), cfg)
    mel = mag @ mel_filterbank(cfg).T
    return MelSpectrogram(frames=np.log(np.maximum(mel, cfg.log_floor)), config=cfg)


def shuffle_frames(m: MelSpectrogram, seed: int) -> MelSpectrogram:
    """Seeded uniform permutation of time frames; row multiset unchanged."""
    perm = np.random.default_rng(seed).permutation(m.frames.shape[0])
    return MelSpectrogram(frames=m.frames[perm].copy(), config=m.config)


# -- mel inversion -----------------------------------------------------------


def mel_to_linear(m: MelSpectrogram) -> np.ndarray:
    """Per-frame NNLS pseudo-inverse of the filterbank; (T, n_bins) >= 0."""
    fb = mel_filterbank(m.config)
    mel = np.exp(m.frames)
    out = np.zeros((mel.shape[0], fb.shape[1]))
    for t in range(mel.shape[0]):
        out[t], _ = nnls(fb, mel[t])
    return out


def _istft(spec: np.ndarray, cfg: MelConfig) -> np.ndarray:
    window = np.hanning(cfg.win_length + 1)[:-1]
    t = spec.shape[0]
    n = cfg.win_length + (t - 1) * cfg.hop_length
    x = np.zeros(n)
    wsum = np.zeros(n)
    segs = np.fft.irfft(spec, n=cfg.n_fft, axis=1)[:, : cfg.win_length]
    for i in range(t):
        start = i * cfg.hop_length
        x[start : start + cfg.win_length] += segs[i] * window
        wsum[start : start + cfg.win_length] += window**2
    # divide only well-covered samples; zero the thin overlap at the edges
    # so 1/wsum cannot amplify them into clicks
    covered = wsum > 0.5 * wsum.max()
    x[covered] /= wsum[covered]
    x[~covered] = 0.0
    return x


def griffin_lim(m: MelSpectrogram, n_iters: int = 60) -> Waveform:
    """Phase retrieval from the NNLS linear magnitude; zero-phase init."""
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    cfg = m.config
    target = mel_to_linear(m)
    phase = np.zeros_like(target)
    x = np.zeros(cfg.win_length + (target.shape[0] - 1) * cfg.hop_length)
    for _ in range(n_iters):
        x = _istft(target * np.exp(1j * phase), cfg)
        phase = np.angle(np.fft.rfft(
            x[np.arange(cfg.win_length)[None, :]
              + cfg.hop_length * np.arange(target.shape[0])[:, None]]
            * np.hanning(cfg.win_length + 1)[:-1], n=cfg.n_fft, axis=1))
    peak = np.max(np.abs(x))
    if peak > 1.0:
        x = x / peak
    return Waveform(samples=x, sample_rate=cfg.sample_rate)


def spectral_convergence(w: Waveform, m: MelSpectrogram) -> float:
    """|| |STFT(w)| - target ||_F / ||target||_F against the NNLS magnitude."""
    target = mel_to_linear(m)
    mag = stft_magnitude(w.samples, m.config)[: target.shape[0]]
    return float(np.linalg.norm(mag - target) / max(np.linalg.norm(target), 1e-12))


# -- pitch -------------------------------------------------------------------


def estimate_f0(w: Waveform, f_lo: float = 50.0, f_hi: float = 500.0) -> float:
    """Median autocorrelation pitch over 40 ms frames; 0.0 if all unvoiced."""
    if not (0.0 < f_lo < f_hi < w.sample_rate / 2):
        raise ValueError("need 0 < f_lo < f_hi < sample_rate/2")
    sr = w.sample_rate
    frame = int(round(0.040 * sr))
    lag_lo = int(np.floor(sr / f_hi))
    lag_hi = int(np.ceil(sr / f_lo))
    if lag_hi >= frame:
        raise ValueError("f_lo too low for a 40 ms analysis frame")
    voiced = []
    for start in range(0, len(w.samples) - frame + 1, frame):
        seg = w.samples[start : start + frame]
        seg = seg - seg.mean()
        r0 = float(seg @ seg)
        if r0 <= 0.0:
            continue
        lags = np.arange(lag_lo, lag_hi + 1)
        r = np.array([seg[lag:] @ seg[:-lag] for lag in lags])
        best = int(np.argmax(r))
        if r[best] / r0 >= 0.3:  # voicing threshold
            voiced.append(sr / lags[best])
    return float(np.median(voiced)) if voiced else 0.0
