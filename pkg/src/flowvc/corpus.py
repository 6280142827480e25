"""Synthetic speech corpus with exact frame-level symbol alignment.

Each of the 12 symbols is a vowel-like spectral envelope (two formant
bumps on a fixed F1 x F2 grid, shared by every speaker).  A speaker is a
voice profile: base f0, spectral tilt, one high speaker resonance, and a
vibrato.  Utterances are random symbol strings rendered by additive
harmonic synthesis with a phase-continuous vibrato, so content (formant
pattern) and timbre (f0, tilt, resonance) are controlled independently
and both an oracle content classifier and an f0 check are available.

Directory layout written by save_corpus:
    DIR/speaker_00/utt_000.wav ...
    DIR/manifest.tsv    tab-separated records: meta / speaker / utt rows,
                        utt rows carry the symbol string and per-symbol
                        frame durations as CSV fields; per-frame labels
                        are their expansion.
"""

import os
from dataclasses import dataclass

import numpy as np

from . import dsp
from .config import RunConfig

# shared symbol inventory: F1 x F2 grid, in Hz
_F1_GRID = (400.0, 750.0, 1100.0)
_F2_GRID = (1900.0, 2900.0, 4200.0, 5800.0)
SYMBOL_FORMANTS = tuple((f1, f2) for f2 in _F2_GRID for f1 in _F1_GRID)

_BW1 = 150.0  # formant bump widths, Hz
_BW2 = 220.0
_GLIDE_SECONDS = 0.02  # formant track smoothing across symbol boundaries
_FADE_SECONDS = 0.01


@dataclass
class SpeakerProfile:
    base_f0: float
    tilt: float
    formant_hz: float
    vib_rate: float
    vib_depth: float


@dataclass
class Utterance:
    speaker: int
    symbols: np.ndarray  # (n_syms,)
    durations: np.ndarray  # (n_syms,) mel frames
    labels: np.ndarray  # (T,) per-mel-frame symbol ids
    wave: dsp.Waveform


@dataclass
class SyntheticCorpus:
    n_symbols: int
    sample_rate: int
    speakers: list
    utterances: list

    def by_speaker(self, idx: int) -> list:
        return [u for u in self.utterances if u.speaker == idx]


def _gauss(f, center, width):
    return np.exp(-0.5 * ((f - center) / width) ** 2)


def symbol_envelope(symbol: int, freqs, f1_track=None, f2_track=None):
    """Shared vowel envelope at the given frequencies.

    Pass explicit formant tracks to evaluate time-varying (glide) targets;
    otherwise the symbol's grid formants are used.
    """
    if f1_track is None:
        f1_track, f2_track = SYMBOL_FORMANTS[symbol]
    freqs = np.asarray(freqs, dtype=np.float64)
    return (_gauss(freqs, f1_track, _BW1)
            + 0.7 * _gauss(freqs, f2_track, _BW2)
            + 0.02 * np.exp(-freqs / 4000.0))


def speaker_filter(profile: SpeakerProfile, freqs):
    """Per-speaker coloring: spectral tilt plus one high resonance."""
    freqs = np.asarray(freqs, dtype=np.float64)
    tilt = (1.0 + freqs / 1000.0) ** (-profile.tilt)
    return tilt * (1.0 + 0.8 * _gauss(freqs, profile.formant_hz, 300.0))


def _smooth_track(track, width):
    if width <= 1:
        return track
    kernel = np.ones(width) / width
    pad = np.pad(track, (width // 2, width - 1 - width // 2), mode="edge")
    return np.convolve(pad, kernel, mode="valid")


def render_utterance(profile: SpeakerProfile, symbols, durations,
                     mel_cfg: dsp.MelConfig) -> dsp.Waveform:
    """Additive harmonic synthesis of a symbol string, exactly aligned.

    Symbol k occupies mel frames [sum(d[:k]), sum(d[:k+1])); the sample
    count is chosen so the analysis produces exactly sum(durations) frames.
    """
    symbols = np.asarray(symbols, dtype=np.int64)
    durations = np.asarray(durations, dtype=np.int64)
    sr = mel_cfg.sample_rate
    t_frames = int(durations.sum())
    n = (t_frames - 1) * mel_cfg.hop_length + mel_cfg.win_length

    # per-sample formant targets, smoothed into short glides
    frame_f1 = np.repeat([SYMBOL_FORMANTS[s][0] for s in symbols], durations)
    frame_f2 = np.repeat([SYMBOL_FORMANTS[s][1] for s in symbols], durations)
    starts = np.arange(t_frames) * mel_cfg.hop_length
    sample_frame = np.clip(np.searchsorted(starts, np.arange(n), "right") - 1,
                           0, t_frames - 1)
    width = int(_GLIDE_SECONDS * sr)
    f1_t = _smooth_track(frame_f1[sample_frame], width)
    f2_t = _smooth_track(frame_f2[sample_frame], width)

    t = np.arange(n) / sr
    r, depth = profile.vib_rate, profile.vib_depth
    # phase of f0 (1 + depth sin(2 pi r t)) integrated in closed form
    phase = 2.0 * np.pi * profile.base_f0 * (
        t + depth / (2.0 * np.pi * r) * (1.0 - np.cos(2.0 * np.pi * r * t)))
    inst_f0 = profile.base_f0 * (1.0 + depth * np.sin(2.0 * np.pi * r * t))

    f_ceiling = sr / 2.0 - 200.0
    k_max = min(60, int(f_ceiling / (profile.base_f0 * (1.0 + depth))))
    out = np.zeros(n)
    for k in range(1, k_max + 1):
        fk = k * inst_f0
        amp = (symbol_envelope(0, fk, f1_t, f2_t)
               * speaker_filter(profile, fk))
        out += amp * np.sin(k * phase)

    fade = int(_FADE_SECONDS * sr)
    ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(fade) / fade)
    out[:fade] *= ramp
    out[-fade:] *= ramp[::-1]
    out *= 0.5 / np.max(np.abs(out))
    return dsp.Waveform(samples=out, sample_rate=sr)


def _default_f0s(n_speakers):
    return [110.0 * 1.3**i for i in range(n_speakers)]


def synth_corpus(cfg: RunConfig, n_speakers: int, n_utts: int, seed: int,
                 base_f0s=None) -> SyntheticCorpus:
    """Deterministic corpus of n_speakers x n_utts aligned utterances."""
    if n_speakers < 2:
        raise ValueError("need at least 2 speakers")
    if n_utts < 1:
        raise ValueError("need at least 1 utterance per speaker")
    if not (2 <= cfg.n_symbols <= len(SYMBOL_FORMANTS)):
        raise ValueError(f"n_symbols must lie in [2, {len(SYMBOL_FORMANTS)}]")
    if base_f0s is None:
        base_f0s = _default_f0s(n_speakers)
    if len(base_f0s) != n_speakers:
        raise ValueError("base_f0s length must equal n_speakers")

    rng = np.random.default_rng(seed)
    mel_cfg = cfg.mel()
    lo, hi = 6200.0, 7600.0
    speakers = []
    for i in range(n_speakers):
        speakers.append(SpeakerProfile(
            base_f0=float(base_f0s[i]),
            tilt=float(rng.uniform(0.2, 0.8)),
            formant_hz=float(lo + (hi - lo) * (i + 0.5 * rng.uniform())
                             / n_speakers),
            vib_rate=float(rng.uniform(4.5, 6.5)),
            vib_depth=float(rng.uniform(0.010, 0.020)),
        ))

    utterances = []
    for spk in range(n_speakers):
        for _ in range(n_utts):
            n_syms = int(rng.integers(8, 13))
            symbols = rng.integers(0, cfg.n_symbols, n_syms)
            durations = rng.integers(18, 25, n_syms)
            labels = np.repeat(symbols, durations)
            wave = render_utterance(speakers[spk], symbols, durations, mel_cfg)
            utterances.append(Utterance(speaker=spk, symbols=symbols,
                                        durations=durations, labels=labels,
                                        wave=wave))
    return SyntheticCorpus(n_symbols=cfg.n_symbols,
                           sample_rate=cfg.sample_rate,
                           speakers=speakers, utterances=utterances)


def interior_mask(labels, margin: int = 4) -> np.ndarray:
    """True for frames at least `margin` frames from any label change.

    Analysis windows span several hops, so frames near a symbol boundary
    mix two symbols; metrics and templates use interior frames only.
    """
    labels = np.asarray(labels)
    t = labels.size
    mask = np.ones(t, dtype=bool)
    change = np.flatnonzero(labels[1:] != labels[:-1]) + 1  # segment starts
    edges = np.concatenate([[0], change, [t]])
    for e in edges:
        mask[max(0, e - margin):min(t, e + margin)] = False
    return mask


# -- directory round-trip -------------------------------------------------------

_MANIFEST = "manifest.tsv"


def save_corpus(corpus: SyntheticCorpus, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    lines = ["meta\tversion\t1",
             f"meta\tn_symbols\t{corpus.n_symbols}",
             f"meta\tsample_rate\t{corpus.sample_rate}"]
    for i, s in enumerate(corpus.speakers):
        lines.append(f"speaker\t{i}\t{s.base_f0!r}\t{s.tilt!r}\t"
                     f"{s.formant_hz!r}\t{s.vib_rate!r}\t{s.vib_depth!r}")
    counters = {}
    for u in corpus.utterances:
        k = counters.get(u.speaker, 0)
        counters[u.speaker] = k + 1
        rel = os.path.join(f"speaker_{u.speaker:02d}", f"utt_{k:03d}.wav")
        os.makedirs(os.path.join(out_dir, f"speaker_{u.speaker:02d}"),
                    exist_ok=True)
        dsp.save_wav(os.path.join(out_dir, rel), u.wave)
        symbols_csv = ",".join(str(int(x)) for x in u.symbols)
        durations_csv = ",".join(str(int(x)) for x in u.durations)
        lines.append(f"utt\t{rel}\t{u.speaker}\t{symbols_csv}\t{durations_csv}")
    with open(os.path.join(out_dir, _MANIFEST), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_corpus(in_dir) -> SyntheticCorpus:
    path = os.path.join(in_dir, _MANIFEST)
    if not os.path.isfile(path):
        raise dsp.FileFormatError(f"no corpus manifest at {path}")
    meta, speakers, utts = {}, [], []
    with open(path, "r", encoding="utf-8") as fh:
        for ln, raw in enumerate(fh, 1):
            parts = raw.rstrip("\n").split("\t")
            kind = parts[0]
            try:
                if kind == "meta":
                    meta[parts[1]] = parts[2]
                elif kind == "speaker":
                    speakers.append(SpeakerProfile(*map(float, parts[2:7])))
                elif kind == "utt":
                    rel, spk = parts[1], int(parts[2])
                    symbols = np.array([int(x) for x in parts[3].split(",")],
                                       dtype=np.int64)
                    durations = np.array([int(x) for x in parts[4].split(",")],
                                         dtype=np.int64)
                    if symbols.size != durations.size:
                        raise ValueError("symbols/durations length mismatch")
                    wave = dsp.load_wav(os.path.join(in_dir, rel))
                    utts.append(Utterance(speaker=spk, symbols=symbols,
                                          durations=durations,
                                          labels=np.repeat(symbols, durations),
                                          wave=wave))
                else:
                    raise ValueError(f"unknown record kind {kind!r}")
            except (IndexError, ValueError) as exc:
                raise dsp.FileFormatError(
                    f"{path}:{ln}: bad manifest record: {exc}") from exc
    if meta.get("version") != "1":
        raise dsp.FileFormatError(f"unsupported corpus version {meta.get('version')!r}")
    return SyntheticCorpus(n_symbols=int(meta["n_symbols"]),
                           sample_rate=int(meta["sample_rate"]),
                           speakers=speakers, utterances=utts)
