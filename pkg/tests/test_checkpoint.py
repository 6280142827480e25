import numpy as np
import pytest

from flowvc.checkpoint import (FORMAT_VERSION, MAGIC, Checkpoint,
                               CheckpointError, load_checkpoint,
                               save_checkpoint)
from flowvc.config import RunConfig


def _sample_ckpt():
    rng = np.random.default_rng(3)
    params = {
        "vfield.stem.w": rng.standard_normal((4, 3, 3)),
        "codebook.entries": rng.standard_normal((8, 2)),
        "optim.t": np.float64(17.0),
        "stats.mel_mean": rng.standard_normal(5),
    }
    return Checkpoint(config=RunConfig(lr=2e-4, steps=42), step=9,
                      params=params)


def test_round_trip_values(tmp_path):
    path = tmp_path / "model.ckpt"
    ckpt = _sample_ckpt()
    save_checkpoint(ckpt, path)
    loaded = load_checkpoint(path)
    assert loaded.step == 9
    assert loaded.version == FORMAT_VERSION
    assert loaded.config == ckpt.config
    assert list(loaded.params) == list(ckpt.params)  # order preserved
    for name in ckpt.params:
        assert np.array_equal(loaded.params[name],
                              np.asarray(ckpt.params[name], dtype=np.float64))
        assert loaded.params[name].dtype == np.float64


def test_round_trip_is_byte_identical(tmp_path):
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(_sample_ckpt(), p1)
    save_checkpoint(load_checkpoint(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_scalar_record_round_trip(tmp_path):
    path = tmp_path / "s.ckpt"
    save_checkpoint(Checkpoint(config=RunConfig(), step=0,
                               params={"optim.t": np.float64(5.0)}), path)
    loaded = load_checkpoint(path)
    assert loaded.params["optim.t"].shape == ()
    assert float(loaded.params["optim.t"]) == 5.0


def test_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_rejects_wrong_version(tmp_path):
    path = tmp_path / "v.ckpt"
    save_checkpoint(_sample_ckpt(), path)
    raw = bytearray(path.read_bytes())
    raw[len(MAGIC)] = 99  # little-endian version low byte
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_rejects_truncation(tmp_path):
    path = tmp_path / "t.ckpt"
    save_checkpoint(_sample_ckpt(), path)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) - 7])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_rejects_trailing_bytes(tmp_path):
    path = tmp_path / "g.ckpt"
    save_checkpoint(_sample_ckpt(), path)
    path.write_bytes(path.read_bytes() + b"junk")
    with pytest.raises(CheckpointError, match="trailing"):
        load_checkpoint(path)


def test_rejects_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "absent.ckpt")


def test_rejects_unwritable_version():
    ckpt = _sample_ckpt()
    ckpt.version = 2
    with pytest.raises(CheckpointError, match="version"):
        save_checkpoint(ckpt, "/dev/null")


def test_embedded_config_survives(tmp_path):
    cfg = RunConfig(lr=3.25e-4, unet_hidden=96, cfg_gamma=0.55)
    path = tmp_path / "c.ckpt"
    save_checkpoint(Checkpoint(config=cfg, step=1, params={}), path)
    assert load_checkpoint(path).config == cfg
