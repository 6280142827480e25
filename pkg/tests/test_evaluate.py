import math

import numpy as np
import pytest

from flowvc import dsp, evaluate, pipeline
from flowvc.evaluate import EvalItem, EvalReport


def test_report_validates_ranges():
    with pytest.raises(ValueError, match="secs_proxy"):
        EvalReport(secs_proxy=1.5, mel_l2=1.0, f0_ratio=1.0, content_acc=0.5,
                   rtf_field=0.1, rtf_vocoder=0.1)
    with pytest.raises(ValueError, match="content_acc"):
        EvalReport(secs_proxy=0.5, mel_l2=1.0, f0_ratio=1.0, content_acc=-0.1,
                   rtf_field=0.1, rtf_vocoder=0.1)
    r = EvalReport(secs_proxy=float("nan"), mel_l2=float("nan"), f0_ratio=1.0,
                   content_acc=float("nan"), rtf_field=0.1, rtf_vocoder=0.1)
    assert math.isnan(r.secs_proxy)


def test_report_text_round_trippable():
    r = EvalReport(secs_proxy=0.25, mel_l2=3.0, f0_ratio=1.1,
                   content_acc=0.75, rtf_field=0.01, rtf_vocoder=2.0)
    lines = r.to_text().strip().split("\n")
    assert len(lines) == 6
    parsed = dict(line.split("\t") for line in lines)
    assert float(parsed["secs_proxy"]) == 0.25
    assert float(parsed["rtf_vocoder"]) == 2.0


def test_embed_cosine_self_is_one(tiny_corpus, tiny_cfg):
    w = tiny_corpus.utterances[0].wave
    c = evaluate.embed_cosine(w, w, tiny_cfg.spk_seed, tiny_cfg.mel())
    assert c == pytest.approx(1.0, abs=1e-12)


def test_embedder_separates_speakers(tiny_corpus, tiny_cfg):
    a0, a1 = tiny_corpus.by_speaker(0)
    b0, _ = tiny_corpus.by_speaker(1)
    args = (tiny_cfg.spk_seed, tiny_cfg.mel())
    same = evaluate.embed_cosine(a0.wave, a1.wave, *args)
    cross = evaluate.embed_cosine(a0.wave, b0.wave, *args)
    assert same > cross


def test_speaker_median_f0_tracks_base(tiny_corpus):
    for k, base in enumerate([120.0, 220.0]):
        med = evaluate.speaker_median_f0(tiny_corpus, k)
        assert abs(med - base) / base < 0.05


def _identity_item(corpus, ckpt, speaker=0):
    """Pretend conversion whose output is the reference itself."""
    utts = corpus.by_speaker(speaker)
    source, reference = utts[0], utts[1].wave
    mel = dsp.mel_spectrogram(source.wave, ckpt.config.mel())
    result = pipeline.ConversionResult(
        wave=source.wave, mel=mel, field_seconds=0.5, vocoder_seconds=1.0,
        audio_seconds=len(source.wave.samples) / source.wave.sample_rate)
    return EvalItem(result=result, source=source, reference=source.wave,
                    target_speaker=speaker, truth=mel.frames)


def test_identity_conversion_scores_perfectly(tiny_corpus, tiny_trained):
    # converted audio equal to the reference: cosine exactly 1, ground-truth
    # content accuracy 1 on interior frames, f0 ratio near 1, zero mel error
    ckpt = tiny_trained.checkpoint
    items = [_identity_item(tiny_corpus, ckpt, speaker=k) for k in (0, 1)]
    report = evaluate.evaluate(items, tiny_corpus, ckpt)
    assert abs(report.secs_proxy - 1.0) <= 1e-6
    assert report.content_acc == 1.0
    assert report.mel_l2 == 0.0
    assert 0.9 < report.f0_ratio < 1.1
    assert report.rtf_field == pytest.approx(1.0 / sum(
        it.result.audio_seconds for it in items))


def test_evaluate_rejects_empty(tiny_corpus, tiny_trained):
    with pytest.raises(ValueError, match="no conversions"):
        evaluate.evaluate([], tiny_corpus, tiny_trained.checkpoint)


def test_evaluate_pairs_smoke(tiny_corpus, tiny_trained):
    report, items = evaluate.evaluate_pairs(tiny_corpus,
                                            tiny_trained.checkpoint,
                                            seed=0, n_steps=2)
    # 2 speakers -> 2 cross pairs + 2 reconstruction runs
    assert len(items) == 4
    assert sum(it.truth is not None for it in items) == 2
    assert -1.0 <= report.secs_proxy <= 1.0
    assert 0.0 <= report.content_acc <= 1.0
    assert np.isfinite(report.mel_l2)
    assert report.rtf_field > 0 and report.rtf_vocoder > 0
    cross = [it for it in items if it.truth is None]
    assert [it.target_speaker for it in cross] == [1, 0]


def test_evaluate_pairs_needs_two_speakers(tiny_cfg, tiny_trained):
    from flowvc.corpus import SyntheticCorpus
    one = SyntheticCorpus(n_symbols=tiny_cfg.n_symbols,
                          sample_rate=tiny_cfg.sample_rate,
                          speakers=[], utterances=[])
    with pytest.raises(ValueError, match="2 speakers"):
        evaluate.evaluate_pairs(one, tiny_trained.checkpoint)
