"""End-to-end wiring: module assembly, training loop, and conversion.

Training regresses the vector field on normalized source mel crops,
conditioned on fused source content and a same-speaker reference; the
codebook learns by EMA on the side.  Every step is a pure function of
(corpus, config, step index): the per-step generator is reseeded as
default_rng([train_seed, step]), so a run resumed from a checkpoint
reproduces the original loss stream bit for bit.

At conversion time no alignment exists, so per-frame symbol posteriors
come from a nearest-template classifier over log-mel smoothed along
both axes (the frequency blur removes the speaker's harmonic comb) and
centered per frame; the templates are fit on the training corpus and
stored in the checkpoint.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import cfm, content, dsp, timbre
from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import Checkpoint, CheckpointError, save_checkpoint
from .config import RunConfig
from .content import Codebook
from .corpus import interior_mask
from .optim import AdamW

_STD_FLOOR = 1e-3


@dataclass
class Modules:
    ppg: content.PPGProvider
    ssl: content.SSLProvider
    fusion: content.FusionModule
    memory: timbre.MemoryModule
    context: timbre.ContextModule
    vfield: cfm.VectorFieldNet
    codebook: Codebook
    mel_mean: np.ndarray  # (n_mels,)
    mel_std: np.ndarray  # (n_mels,)
    templates: np.ndarray  # (n_symbols, n_mels) classifier templates


def build_modules(cfg: RunConfig) -> Modules:
    """Deterministic assembly; one init stream consumed in fixed order."""
    rng = np.random.default_rng(cfg.init_seed)
    d_timbre = cfg.n_mels + timbre.SPK_DIM
    fusion = content.FusionModule(cfg.d_ssl, cfg.n_symbols,
                                  hidden=cfg.fusion_hidden, rng=rng)
    memory = timbre.MemoryModule(d_timbre, hidden=cfg.model_dim,
                                 cond_dim=cfg.unet_hidden,
                                 n_heads=cfg.n_heads,
                                 n_blocks=cfg.n_memory_blocks, rng=rng)
    context = timbre.ContextModule(cfg.n_symbols, d_timbre,
                                   dim=cfg.model_dim, n_heads=cfg.n_heads,
                                   n_blocks=cfg.n_context_blocks, rng=rng)
    vfield = cfm.VectorFieldNet(n_mels=cfg.n_mels, d_f=cfg.model_dim,
                                hidden=cfg.unet_hidden,
                                cond_dim=cfg.unet_hidden,
                                temb_dim=cfg.time_dim,
                                levels=cfg.unet_levels,
                                res_per_level=cfg.res_per_level, rng=rng)
    book = content.init_codebook(cfg.codebook_size, cfg.d_ssl, rng)
    return Modules(
        ppg=content.PPGProvider(cfg.n_symbols),
        ssl=content.SSLProvider(cfg.n_mels, cfg.d_ssl, cfg.ssl_seed),
        fusion=fusion, memory=memory, context=context, vfield=vfield,
        codebook=book,
        mel_mean=np.zeros(cfg.n_mels), mel_std=np.ones(cfg.n_mels),
        templates=np.zeros((cfg.n_symbols, cfg.n_mels)))


def trainable_named(mods: Modules):
    out = []
    for prefix, mod in (("fusion", mods.fusion), ("memory", mods.memory),
                        ("context", mods.context), ("vfield", mods.vfield)):
        out.extend(mod.named_parameters(f"{prefix}."))
    return out


# -- mel statistics and the symbol classifier ----------------------------------


def fit_mel_stats(mels):
    """Per-bin mean/std over all frames of all utterances."""
    stacked = np.concatenate([np.asarray(m) for m in mels], axis=0)
    return stacked.mean(axis=0), np.maximum(stacked.std(axis=0), _STD_FLOOR)


def smooth_frames(frames, radius: int = 2) -> np.ndarray:
    """Moving average over time with edge clipping."""
    frames = np.asarray(frames, dtype=np.float64)
    if radius < 1:
        return frames.copy()
    cum = np.cumsum(np.vstack([np.zeros((1, frames.shape[1])), frames]), axis=0)
    t = frames.shape[0]
    lo = np.maximum(np.arange(t) - radius, 0)
    hi = np.minimum(np.arange(t) + radius + 1, t)
    return (cum[hi] - cum[lo]) / (hi - lo)[:, None]


_FREQ_RADIUS = 3  # blurs the harmonic comb, keeps broad formant bumps


def _classifier_space(frames):
    sm = smooth_frames(frames)
    sm = smooth_frames(sm.T, radius=_FREQ_RADIUS).T
    return sm - sm.mean(axis=1, keepdims=True)


_UNSEEN_TEMPLATE = 1e6  # sentinel rows lose every nearest-template contest


def fit_templates(mels, labels_list, n_symbols: int) -> np.ndarray:
    """Mean classifier-space vector per symbol over interior frames.

    Symbols without any interior frame in the corpus get a sentinel
    template far from all real frames, so they are never predicted.
    """
    sums = np.zeros((n_symbols, np.asarray(mels[0]).shape[1]))
    counts = np.zeros(n_symbols)
    for frames, labels in zip(mels, labels_list):
        x = _classifier_space(frames)
        mask = interior_mask(labels)
        np.add.at(sums, labels[mask], x[mask])
        counts += np.bincount(labels[mask], minlength=n_symbols)
    out = np.full((n_symbols, sums.shape[1]), _UNSEEN_TEMPLATE)
    seen = counts > 0
    out[seen] = sums[seen] / counts[seen, None]
    return out


def classify_frames(frames, templates) -> np.ndarray:
    """Nearest-template symbol id per frame."""
    x = _classifier_space(frames)
    d2 = ((x[:, None, :] - templates[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


# -- training -------------------------------------------------------------------


@dataclass
class TrainItem:
    x1: np.ndarray  # (T, n_mels) normalized target frames
    cond: cfm.ConditionSet
    ssl_frames: np.ndarray  # (T_s, d_ssl) pre-quantization features
    quantized: content.QuantizedSequence
    vq: float


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log: list  # per-step "step\tL_total\tL_cfm\tL_vq" lines


def normalize_timbre_frames(tseq: timbre.TimbreSequence, mean, std,
                            n_mels: int) -> np.ndarray:
    frames = tseq.frames.copy()
    frames[:, :n_mels] = (frames[:, :n_mels] - mean) / std
    return frames


def _prepare(corpus, mods: Modules, cfg: RunConfig):
    """Per-utterance cache of mel, frozen SSL features, and labels."""
    mel_cfg = cfg.mel()
    out = []
    for u in corpus.utterances:
        mel = dsp.mel_spectrogram(u.wave, mel_cfg)
        if mel.frames.shape[0] != u.labels.size:
            raise ValueError("utterance labels do not align with mel frames")
        ssl = mods.ssl.provide(mel)
        out.append({"utt": u, "mel": mel.frames, "ssl": ssl.frames,
                    "labels": u.labels})
    return out


def build_train_item(prep, ref_prep, mods: Modules, cfg: RunConfig,
                     rng) -> TrainItem:
    """One source crop conditioned on a same-speaker reference segment."""
    mel = prep["mel"]
    t = mel.shape[0]
    c = min(cfg.crop_frames, t)
    a = 2 * int(rng.integers(0, (t - c) // 2 + 1)) if t > c else 0
    labels = prep["labels"][a:a + c]
    ssl_crop = prep["ssl"][a // 2: a // 2 + (c + 1) // 2]

    q = content.rvq_quantize(ssl_crop, mods.codebook, cfg.rvq_stages)
    vq = content.rvq_commit_loss(ssl_crop, q)
    ppg = mods.ppg.provide(labels)
    fused_content = mods.fusion(Tensor(q.vectors), Tensor(ppg.frames))

    ref_seed = int(rng.integers(1 << 31))
    tseq = timbre.build_reference_timbre(
        ref_prep["utt"].wave, ref_seed, cfg.mel(), spk_seed=cfg.spk_seed,
        min_seconds=cfg.ref_min_seconds, max_seconds=cfg.ref_max_seconds)
    t_frames = Tensor(normalize_timbre_frames(tseq, mods.mel_mean,
                                              mods.mel_std, cfg.n_mels))
    fused = mods.context(fused_content, t_frames, c)
    cond = cfm.ConditionSet(fused=fused, timbre=mods.memory(t_frames))

    x1 = (mel[a:a + c] - mods.mel_mean) / mods.mel_std
    return TrainItem(x1=x1, cond=cond, ssl_frames=ssl_crop, quantized=q,
                     vq=vq)


def combine_losses(l_cfm, l_vq: float, commit_weight: float):
    """Weighted total; works for Tensor or float first component."""
    return l_cfm + commit_weight * l_vq


def total_loss(batch, mods: Modules, cfg: RunConfig, rng=None):
    """Mean flow-matching loss plus weighted mean commitment loss.

    Returns (total Tensor, l_cfm float, l_vq float).  The rng drives the
    per-item (t, x0, dropout) draws in batch order.
    """
    if not batch:
        raise ValueError("empty batch")
    if rng is None:
        rng = np.random.default_rng(0)
    p = cfm.FlowPathParams(cfg.sigma_min)
    acc = None
    for item in batch:
        term = cfm.cfm_loss(item.x1, item.cond, mods.vfield, p, rng=rng,
                            p_drop=cfg.cond_dropout)
        acc = term if acc is None else acc + term
    l_cfm_t = acc * (1.0 / len(batch))
    l_vq = float(np.mean([item.vq for item in batch]))
    total = combine_losses(l_cfm_t, l_vq, cfg.commit_weight)
    return total, float(l_cfm_t.data), l_vq


def _ema_update(mods: Modules, batch, cfg: RunConfig, rng):
    """One codebook EMA step from the batch's per-stage residuals."""
    frames, codes = [], []
    for item in batch:
        x = item.ssl_frames
        sv = item.quantized.stage_vectors
        for i in range(sv.shape[0]):
            residual = x if i == 0 else x - sv[i - 1]
            frames.append(residual)
            codes.append(item.quantized.codes[i])
    mods.codebook = content.codebook_update_ema(
        mods.codebook, np.concatenate(frames), np.concatenate(codes),
        decay=cfg.ema_decay, rng=rng)


def snapshot(mods: Modules, opt: AdamW, cfg: RunConfig,
             step: int) -> Checkpoint:
    params = {}
    named = trainable_named(mods)
    for name, tensor in named:
        params[f"param.{name}"] = tensor.data.copy()
    params["codebook.entries"] = mods.codebook.entries.copy()
    params["codebook.ema_counts"] = mods.codebook.ema_counts.copy()
    params["codebook.ema_sums"] = mods.codebook.ema_sums.copy()
    t, ms, vs = opt.state_arrays()
    params["optim.t"] = np.float64(t)
    for (name, _), m, v in zip(named, ms, vs):
        params[f"optim.m.{name}"] = m.copy()
        params[f"optim.v.{name}"] = v.copy()
    params["stats.mel_mean"] = mods.mel_mean.copy()
    params["stats.mel_std"] = mods.mel_std.copy()
    params["templates"] = mods.templates.copy()
    return Checkpoint(config=cfg, step=step, params=params)


def restore_modules(ckpt: Checkpoint):
    """Rebuild modules from a checkpoint; returns (mods, optimizer)."""
    cfg = ckpt.config
    mods = build_modules(cfg)
    named = trainable_named(mods)
    try:
        for name, tensor in named:
            arr = ckpt.params[f"param.{name}"]
            if arr.shape != tensor.data.shape:
                raise CheckpointError(
                    f"record param.{name} has shape {arr.shape}, "
                    f"expected {tensor.data.shape}")
            tensor.data[...] = arr
        mods.codebook = Codebook(
            entries=ckpt.params["codebook.entries"].copy(),
            ema_counts=ckpt.params["codebook.ema_counts"].copy(),
            ema_sums=ckpt.params["codebook.ema_sums"].copy())
        mods.mel_mean = ckpt.params["stats.mel_mean"].copy()
        mods.mel_std = ckpt.params["stats.mel_std"].copy()
        mods.templates = ckpt.params["templates"].copy()
        opt = AdamW([t for _, t in named], lr=cfg.lr,
                    weight_decay=cfg.weight_decay)
        opt.load_state_arrays(float(ckpt.params["optim.t"]),
                              [ckpt.params[f"optim.m.{n}"] for n, _ in named],
                              [ckpt.params[f"optim.v.{n}"] for n, _ in named])
    except KeyError as exc:
        raise CheckpointError(f"checkpoint missing record {exc}") from exc
    return mods, opt


def lr_at(cfg: RunConfig, step: int) -> float:
    """Linear warmup, then cosine decay to lr_floor * lr over cfg.steps.

    A pure function of the step index, so resumed runs see the same
    schedule as uninterrupted ones; steps past cfg.steps stay at the
    floor.
    """
    if cfg.warmup_steps > 0 and step < cfg.warmup_steps:
        return cfg.lr * (step + 1) / cfg.warmup_steps
    span = max(cfg.steps - cfg.warmup_steps, 1)
    u = min(max((step - cfg.warmup_steps) / span, 0.0), 1.0)
    w = 0.5 * (1.0 + np.cos(np.pi * u))
    return cfg.lr * (cfg.lr_floor + (1.0 - cfg.lr_floor) * w)


def sample_batch(speakers, by_speaker, mods: Modules, cfg: RunConfig, rng):
    """One batch of same-speaker (source, reference) crops."""
    batch = []
    for _ in range(cfg.batch_size):
        spk = speakers[int(rng.integers(len(speakers)))]
        pool = by_speaker[spk]
        src = pool[int(rng.integers(len(pool)))]
        ref = pool[int(rng.integers(len(pool)))]
        batch.append(build_train_item(src, ref, mods, cfg, rng))
    return batch


def train(cfg: RunConfig, corpus, out_path=None, log_path=None,
          resume: Checkpoint = None, steps: int = None,
          progress=None) -> TrainResult:
    """Run (or resume) training; returns the final checkpoint and log."""
    if resume is not None:
        mods, opt = restore_modules(resume)
        cfg = resume.config
        start = resume.step
    else:
        mods = build_modules(cfg)
        opt = AdamW([t for _, t in trainable_named(mods)], lr=cfg.lr,
                    weight_decay=cfg.weight_decay)
        start = 0
    n_steps = cfg.steps if steps is None else steps
    speakers = sorted({u.speaker for u in corpus.utterances})
    per_speaker = {s: [u for u in corpus.utterances if u.speaker == s]
                   for s in speakers}
    if not speakers or min(len(v) for v in per_speaker.values()) < 2:
        raise ValueError("corpus too small: need >= 2 utterances per speaker")

    prepared = _prepare(corpus, mods, cfg)
    by_speaker = {s: [p for p in prepared if p["utt"].speaker == s]
                  for s in speakers}
    if resume is None:
        mods.mel_mean, mods.mel_std = fit_mel_stats(
            [p["mel"] for p in prepared])
        mods.templates = fit_templates([p["mel"] for p in prepared],
                                       [p["labels"] for p in prepared],
                                       cfg.n_symbols)

    log = []
    for step in range(start, n_steps):
        rng = np.random.default_rng([cfg.train_seed, step])
        try:
            batch = sample_batch(speakers, by_speaker, mods, cfg, rng)
            opt.zero_grad()
            total, l_cfm, l_vq = total_loss(batch, mods, cfg, rng=rng)
        except ad.NonFiniteError as exc:
            raise RuntimeError(f"non-finite loss at step {step}") from exc
        ad.backward(total)
        opt.lr = lr_at(cfg, step)
        opt.step()
        _ema_update(mods, batch, cfg, rng)
        line = f"{step}\t{float(total.data)!r}\t{l_cfm!r}\t{l_vq!r}"
        log.append(line)
        if progress is not None:
            progress(step, float(total.data), l_cfm, l_vq)
        if out_path and (step + 1) % cfg.ckpt_every == 0:
            save_checkpoint(snapshot(mods, opt, cfg, step + 1), out_path)

    ckpt = snapshot(mods, opt, cfg, n_steps)
    if out_path:
        save_checkpoint(ckpt, out_path)
    if log_path:
        with open(log_path, "a", encoding="utf-8", newline="\n") as fh:
            for line in log:
                fh.write(line + "\n")
    return TrainResult(checkpoint=ckpt, log=log)


# -- conversion -----------------------------------------------------------------


@dataclass
class ConversionResult:
    wave: dsp.Waveform
    mel: dsp.MelSpectrogram
    field_seconds: float
    vocoder_seconds: float
    audio_seconds: float


def convert(source: dsp.Waveform, reference: dsp.Waveform, ckpt: Checkpoint,
            n_steps: int = None, cfg_gamma: float = None, seed: int = 0,
            ref_seconds: float = None, gl_iters: int = None,
            mods: Modules = None) -> ConversionResult:
    """Content from source, timbre from reference, audio out.

    Sampler overrides fall back to the checkpointed config.  Pass `mods`
    to reuse modules already restored from the same checkpoint.
    """
    cfg = ckpt.config
    if mods is None:
        mods, _ = restore_modules(ckpt)
    for name, w in (("source", source), ("reference", reference)):
        if w.sample_rate != cfg.sample_rate:
            raise ValueError(f"{name} sample rate {w.sample_rate} != "
                             f"config {cfg.sample_rate}")
    mel_cfg = cfg.mel()
    sampler = cfm.SamplerConfig(
        n_steps=cfg.sample_steps if n_steps is None else n_steps,
        cfg_gamma=cfg.cfg_gamma if cfg_gamma is None else cfg_gamma)

    mel_src = dsp.mel_spectrogram(source, mel_cfg)
    t_mel = mel_src.frames.shape[0]
    labels = classify_frames(mel_src.frames, mods.templates)
    ppg = mods.ppg.provide(labels)
    ssl = mods.ssl.provide(mel_src)
    q = content.rvq_quantize(ssl.frames, mods.codebook, cfg.rvq_stages)
    fused_content = content.adaptive_fuse(q, ppg, mods.fusion)

    rng = np.random.default_rng([seed])
    ref_seed = int(rng.integers(1 << 31))
    lo = cfg.ref_min_seconds if ref_seconds is None else ref_seconds
    hi = cfg.ref_max_seconds if ref_seconds is None else ref_seconds
    tseq = timbre.build_reference_timbre(reference, ref_seed, mel_cfg,
                                         spk_seed=cfg.spk_seed,
                                         min_seconds=lo, max_seconds=hi)
    t_norm = normalize_timbre_frames(tseq, mods.mel_mean, mods.mel_std,
                                     cfg.n_mels)
    fused = timbre.context_aware_fuse(fused_content,
                                      timbre.TimbreSequence(t_norm),
                                      t_mel, mods.context)
    with ad.no_grad():
        tc = mods.memory(Tensor(t_norm))
    cond = cfm.ConditionSet(fused=fused, timbre=tc)

    t0 = time.perf_counter()
    x = cfm.euler_sample(cond, mods.vfield, sampler,
                         cfm.FlowPathParams(cfg.sigma_min),
                         rng=np.random.default_rng([seed, 1]),
                         t_mel=t_mel, n_mels=cfg.n_mels)
    field_seconds = time.perf_counter() - t0

    frames = np.maximum(x * mods.mel_std + mods.mel_mean,
                        np.log(mel_cfg.log_floor))
    mel_pred = dsp.MelSpectrogram(frames=frames, config=mel_cfg)
    t0 = time.perf_counter()
    wave = dsp.griffin_lim(mel_pred,
                           n_iters=cfg.gl_iters if gl_iters is None
                           else gl_iters)
    vocoder_seconds = time.perf_counter() - t0
    return ConversionResult(wave=wave, mel=mel_pred,
                            field_seconds=field_seconds,
                            vocoder_seconds=vocoder_seconds,
                            audio_seconds=len(wave.samples) / cfg.sample_rate)
