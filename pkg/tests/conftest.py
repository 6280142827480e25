import numpy as np
import pytest

from flowvc import corpus as corpus_mod
from flowvc import pipeline
from flowvc.config import RunConfig


def tiny_config(**over):
    """Smallest configuration that exercises every code path."""
    base = dict(model_dim=32, n_heads=4, n_memory_blocks=1,
                n_context_blocks=1, fusion_hidden=16, unet_hidden=32,
                unet_levels=2, res_per_level=1, time_dim=16,
                codebook_size=32, d_ssl=16, crop_frames=48, batch_size=2,
                steps=3, lr=1e-3, gl_iters=4, ckpt_every=1000,
                ref_max_seconds=2.5)
    base.update(over)
    return RunConfig(**base)


@pytest.fixture(scope="session")
def tiny_cfg():
    return tiny_config()


@pytest.fixture(scope="session")
def tiny_corpus(tiny_cfg):
    return corpus_mod.synth_corpus(tiny_cfg, 2, 2, seed=5,
                                   base_f0s=[120.0, 220.0])


@pytest.fixture(scope="session")
def tiny_trained(tiny_cfg, tiny_corpus):
    """Three training steps; shared read-only by the fast tests."""
    return pipeline.train(tiny_cfg, tiny_corpus)
