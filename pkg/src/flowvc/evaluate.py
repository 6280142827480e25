"""Objective metrics for conversion runs.

Four quality axes plus throughput: speaker similarity (cosine between
stand-in embeddings of converted audio and the actual reference used),
reconstruction error (per-frame mel L2 on same-speaker runs), pitch
transfer (median-f0 ratio converted/target), and content preservation
(oracle nearest-template symbol accuracy on interior frames against the
source alignment).  Real-time factors are reported separately for the
field-sampling and the phase-reconstruction stages.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import dsp, timbre
from .checkpoint import Checkpoint
from .corpus import SyntheticCorpus, Utterance, interior_mask
from .pipeline import ConversionResult, classify_frames, convert, restore_modules


@dataclass
class EvalItem:
    result: ConversionResult
    source: Utterance
    reference: dsp.Waveform
    target_speaker: int
    truth: np.ndarray = None  # (T, n_mels) mel frames for reconstruction runs


@dataclass
class EvalReport:
    secs_proxy: float
    mel_l2: float
    f0_ratio: float
    content_acc: float
    rtf_field: float
    rtf_vocoder: float

    def __post_init__(self):
        if not math.isnan(self.secs_proxy) and not -1.0 <= self.secs_proxy <= 1.0:
            raise ValueError("secs_proxy must lie in [-1, 1]")
        if not math.isnan(self.content_acc) and not 0.0 <= self.content_acc <= 1.0:
            raise ValueError("content_acc must lie in [0, 1]")

    def to_text(self) -> str:
        lines = [f"{k}\t{getattr(self, k)!r}"
                 for k in ("secs_proxy", "mel_l2", "f0_ratio", "content_acc",
                           "rtf_field", "rtf_vocoder")]
        return "\n".join(lines) + "\n"


def embed_cosine(a: dsp.Waveform, b: dsp.Waveform, spk_seed: int,
                 mel_cfg: dsp.MelConfig) -> float:
    ea = timbre.speaker_embed(a, spk_seed, mel_cfg)
    eb = timbre.speaker_embed(b, spk_seed, mel_cfg)
    return float(ea @ eb)  # both unit norm


def speaker_median_f0(corpus: SyntheticCorpus, speaker: int) -> float:
    values = [dsp.estimate_f0(u.wave) for u in corpus.by_speaker(speaker)]
    return float(np.median(values))


def evaluate(items, corpus: SyntheticCorpus, ckpt: Checkpoint) -> EvalReport:
    if not items:
        raise ValueError("no conversions to evaluate")
    cfg = ckpt.config
    mel_cfg = cfg.mel()
    templates = ckpt.params["templates"]

    target_f0 = {s: speaker_median_f0(corpus, s)
                 for s in sorted({it.target_speaker for it in items})}
    cosines, ratios, accs, l2s = [], [], [], []
    field_s = vocoder_s = audio_s = 0.0
    for it in items:
        cosines.append(embed_cosine(it.result.wave, it.reference,
                                    cfg.spk_seed, mel_cfg))
        ratios.append(dsp.estimate_f0(it.result.wave)
                      / target_f0[it.target_speaker])
        pred = classify_frames(it.result.mel.frames, templates)
        mask = interior_mask(it.source.labels)
        accs.append(float(np.mean(pred[mask] == it.source.labels[mask])))
        if it.truth is not None:
            diff = it.result.mel.frames - it.truth
            l2s.append(float(np.mean(np.linalg.norm(diff, axis=1))))
        field_s += it.result.field_seconds
        vocoder_s += it.result.vocoder_seconds
        audio_s += it.result.audio_seconds
    return EvalReport(
        secs_proxy=float(np.mean(cosines)),
        mel_l2=float(np.mean(l2s)) if l2s else float("nan"),
        f0_ratio=float(np.median(ratios)),
        content_acc=float(np.mean(accs)),
        rtf_field=field_s / audio_s,
        rtf_vocoder=vocoder_s / audio_s)


def evaluate_pairs(corpus: SyntheticCorpus, ckpt: Checkpoint, seed: int = 0,
                   n_steps: int = None, cfg_gamma: float = None,
                   max_pairs: int = None, include_recon: bool = True):
    """Deterministic pair schedule: speaker i -> i+1, plus recon runs.

    Returns (EvalReport, items).  Cross-speaker sources are each speaker's
    first utterance; references are the target's second utterance.
    """
    mods, _ = restore_modules(ckpt)
    mel_cfg = ckpt.config.mel()
    speakers = sorted({u.speaker for u in corpus.utterances})
    if len(speakers) < 2:
        raise ValueError("need at least 2 speakers to evaluate")
    items = []
    n_cross = len(speakers) if max_pairs is None else min(max_pairs,
                                                          len(speakers))
    for k in range(n_cross):
        src_spk = speakers[k]
        tgt_spk = speakers[(k + 1) % len(speakers)]
        source = corpus.by_speaker(src_spk)[0]
        refs = corpus.by_speaker(tgt_spk)
        reference = refs[1 % len(refs)].wave
        result = convert(source.wave, reference, ckpt, n_steps=n_steps,
                         cfg_gamma=cfg_gamma, seed=seed + k, mods=mods)
        items.append(EvalItem(result=result, source=source,
                              reference=reference, target_speaker=tgt_spk))
    if include_recon:
        for k in range(min(2, len(speakers))):
            spk = speakers[k]
            utts = corpus.by_speaker(spk)
            source, reference = utts[0], utts[1 % len(utts)]
            result = convert(source.wave, reference.wave, ckpt,
                             n_steps=n_steps, cfg_gamma=cfg_gamma,
                             seed=seed + 1000 + k, mods=mods)
            truth = dsp.mel_spectrogram(source.wave, mel_cfg).frames
            items.append(EvalItem(result=result, source=source,
                                  reference=reference.wave,
                                  target_speaker=spk, truth=truth))
    return evaluate(items, corpus, ckpt), items
