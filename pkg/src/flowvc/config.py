"""Run configuration: one flat record of every knob, plus text round-trip.

The config file format is plain ``key = value`` lines (``#`` comments and
blank lines ignored), one line per field, so configs diff cleanly and
round-trip losslessly: floats are written with ``repr``, which Python
guarantees to parse back to the identical double.
"""

import dataclasses
from dataclasses import dataclass

from .dsp import MelConfig


@dataclass
class RunConfig:
    # analysis frontend
    sample_rate: int = 16000
    n_fft: int = 1024
    win_length: int = 1024
    hop_length: int = 256
    n_mels: int = 80
    f_min: float = 0.0
    f_max: float = 8000.0

    # feature dims
    n_symbols: int = 12
    d_ssl: int = 64
    ssl_seed: int = 7
    spk_seed: int = 11

    # quantizer
    codebook_size: int = 256
    rvq_stages: int = 1
    commit_weight: float = 0.01
    ema_decay: float = 0.99

    # attention modules
    model_dim: int = 128
    n_heads: int = 4
    n_memory_blocks: int = 4
    n_context_blocks: int = 2
    fusion_hidden: int = 64

    # vector field net
    unet_hidden: int = 128
    unet_levels: int = 3
    res_per_level: int = 2
    time_dim: int = 128

    # flow matching
    sigma_min: float = 0.0001
    sample_steps: int = 10
    cfg_gamma: float = 0.7
    cond_dropout: float = 0.2

    # training
    lr: float = 0.0001
    warmup_steps: int = 100
    lr_floor: float = 0.1
    weight_decay: float = 0.0
    batch_size: int = 4
    steps: int = 2000
    crop_frames: int = 96
    ckpt_every: int = 500
    init_seed: int = 0
    train_seed: int = 1

    # reference segment and vocoder
    ref_min_seconds: float = 2.0
    ref_max_seconds: float = 4.0
    gl_iters: int = 60

    def __post_init__(self):
        for name in ("sample_rate", "n_fft", "win_length", "hop_length",
                     "n_mels", "n_symbols", "d_ssl", "codebook_size",
                     "rvq_stages", "model_dim", "n_heads", "n_memory_blocks",
                     "n_context_blocks", "fusion_hidden", "unet_hidden",
                     "unet_levels", "res_per_level", "time_dim",
                     "sample_steps", "batch_size", "steps", "crop_frames",
                     "ckpt_every", "gl_iters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.commit_weight < 0.0:
            raise ValueError("commit_weight must be >= 0")
        if not (0.0 <= self.cond_dropout <= 1.0):
            raise ValueError("cond_dropout must lie in [0, 1]")
        if self.lr <= 0.0:
            raise ValueError("lr must be positive")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")
        if not (0.0 <= self.lr_floor <= 1.0):
            raise ValueError("lr_floor must lie in [0, 1]")
        if not (0.0 < self.ref_min_seconds <= self.ref_max_seconds):
            raise ValueError("need 0 < ref_min_seconds <= ref_max_seconds")

    def mel(self) -> MelConfig:
        return MelConfig(sample_rate=self.sample_rate, n_fft=self.n_fft,
                         win_length=self.win_length, hop_length=self.hop_length,
                         n_mels=self.n_mels, f_min=self.f_min, f_max=self.f_max)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {v!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        fields = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for ln, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {ln}: expected 'key = value', got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in fields:
                raise ValueError(f"line {ln}: unknown key {key!r}")
            caster = int if fields[key] in (int, "int") else float
            try:
                kwargs[key] = caster(value)
            except ValueError:
                raise ValueError(f"line {ln}: bad value for {key}: {value!r}")
        return cls(**kwargs)


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return RunConfig.from_text(fh.read())


def save_config(cfg: RunConfig, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(cfg.to_text())


# Reference values for a full-scale deployment on real speech.  The desk
# defaults above shrink every dimension so the whole system trains and
# samples on one CPU core; these are the sizes the architecture is meant
# to carry in production and are kept here so the scaling intent is explicit.
FULL_SCALE = {
    "codebook_size": 8200,
    "d_ssl": 1024,
    "model_dim": 1024,
    "n_heads": 8,
    "n_context_blocks": 6,
    "unet_hidden": 1280,
    "unet_levels": 10,
    "res_per_level": 3,
    "lr": 0.0001,
    "batch_size": 16,
    "sample_steps": 10,
    "cfg_gamma": 0.7,
    "commit_weight": 0.01,
    "rvq_stages": 1,
}
