"""Content branch tests: providers, RVQ oracles, EMA, fusion gating."""

import numpy as np
import pytest

from flowvc import autodiff as ad
from flowvc import content
from flowvc.autodiff import Tensor, backward
from flowvc.nn import interp_time

# -- posterior provider --------------------------------------------------------


def test_ppg_one_hot():
    p = content.PPGProvider(n_symbols=5, eps=0.0)
    fs = p.provide([2])
    assert fs.frames.tolist() == [[0.0, 0.0, 1.0, 0.0, 0.0]]


def test_ppg_smoothed():
    p = content.PPGProvider(n_symbols=5, eps=0.1)
    fs = p.provide([2])
    assert np.allclose(fs.frames, [[0.025, 0.025, 0.9, 0.025, 0.025]], atol=1e-15)


def test_ppg_rows_normalized():
    p = content.PPGProvider(n_symbols=7, eps=0.3)
    fs = p.provide(np.arange(7))
    assert np.allclose(fs.frames.sum(axis=1), 1.0, atol=1e-12)


def test_ppg_empty_rejected():
    with pytest.raises(ValueError):
        content.PPGProvider(5).provide([])


def test_ppg_is_frozen():
    assert content.PPGProvider(5).frozen


# -- ssl provider ---------------------------------------------------------------


def test_ssl_deterministic():
    rng = np.random.default_rng(0)
    mel = rng.standard_normal((21, 80))
    a = content.SSLProvider(seed=7).provide(mel)
    b = content.SSLProvider(seed=7).provide(mel)
    assert np.array_equal(a.frames, b.frames)


@pytest.mark.parametrize("t", [1, 2, 9, 10, 33])
def test_ssl_halves_length(t):
    mel = np.zeros((t, 80))
    fs = content.SSLProvider().provide(mel)
    assert fs.frames.shape == (-(-t // 2), 64)  # ceil(t / 2)


def test_ssl_distinct_inputs_distinct_means():
    rng = np.random.default_rng(1)
    p = content.SSLProvider()
    a = p.provide(rng.standard_normal((20, 80)))
    b = p.provide(rng.standard_normal((20, 80)) + 2.0)
    assert not np.allclose(a.frames.mean(axis=0), b.frames.mean(axis=0))


def test_ssl_no_trainable_parameters():
    p = content.SSLProvider()
    assert p.frozen
    assert not hasattr(p, "parameters")
    assert isinstance(p.provide(np.zeros((4, 80))).frames, np.ndarray)


# -- rvq -------------------------------------------------------------------------


def make_book(v=8, d=4, seed=3):
    return content.init_codebook(v, d, np.random.default_rng(seed))


def test_rvq_exact_entry_zero_residual():
    book = make_book()
    x = book.entries[7][None, :]
    q = content.rvq_quantize(x, book, n_stages=1)
    assert q.codes.tolist() == [[7]]
    assert np.allclose(q.vectors, x, atol=1e-15)


def test_rvq_matches_brute_force_scan():
    rng = np.random.default_rng(4)
    book = make_book(v=4, d=6, seed=9)
    x = rng.standard_normal((25, 6))
    q = content.rvq_quantize(x, book, n_stages=1)
    for t in range(25):
        dists = [np.sum((x[t] - e) ** 2) for e in book.entries]
        assert q.codes[0, t] == int(np.argmin(dists))


def test_rvq_two_stage_residual_monotone():
    rng = np.random.default_rng(5)
    book = make_book(v=16, d=4, seed=2)
    book.entries[0] = 0.0  # zero entry makes stage-2 improvement guaranteed
    x = rng.standard_normal((10, 4))
    q = content.rvq_quantize(x, book, n_stages=2)
    r1 = np.linalg.norm(x - q.stage_vectors[0])
    r2 = np.linalg.norm(x - q.stage_vectors[1])
    assert r2 <= r1 + 1e-12


def test_rvq_idempotent():
    rng = np.random.default_rng(6)
    book = make_book()
    x = rng.standard_normal((12, 4))
    q = content.rvq_quantize(x, book)
    q2 = content.rvq_quantize(q.vectors, book)
    assert np.array_equal(q.codes, q2.codes)


def test_rvq_dim_mismatch():
    with pytest.raises(ValueError):
        content.rvq_quantize(np.zeros((3, 5)), make_book(d=4))


def test_rvq_straight_through_gradient():
    rng = np.random.default_rng(7)
    book = make_book()
    x = Tensor(rng.standard_normal((6, 4)), requires_grad=True)
    out, _ = content.rvq_straight_through(x, book)
    backward((out * out).sum())
    # straight-through: dL/dx == dL/dout evaluated at the reconstruction
    assert np.allclose(x.grad, 2.0 * out.data, atol=1e-12)


# -- commitment loss --------------------------------------------------------------


def test_commit_loss_zero_at_match():
    book = make_book()
    x = book.entries[[1, 3, 5]]
    q = content.rvq_quantize(x, book)
    assert content.rvq_commit_loss(x, q) == pytest.approx(0.0, abs=1e-20)


def test_commit_loss_hand_value():
    q = content.QuantizedSequence(
        codes=np.zeros((1, 1), dtype=np.int64),
        vectors=np.zeros((1, 2)),
        stage_vectors=np.zeros((1, 1, 2)),
    )
    assert content.rvq_commit_loss(np.array([[1.0, 0.0]]), q) == pytest.approx(1.0)


def test_commit_loss_gradient_matches_formula_and_fd():
    rng = np.random.default_rng(8)
    book = make_book(v=6, d=3, seed=1)
    x = Tensor(rng.standard_normal((5, 3)), requires_grad=True)
    q = content.rvq_quantize(x.data, book)

    loss = content.rvq_commit_loss(x, q)
    backward(loss)
    expected = 2.0 * (x.data - q.vectors) / 5.0
    assert np.allclose(x.grad, expected, atol=1e-12)

    h = 1e-5
    for idx in [(0, 0), (2, 1), (4, 2)]:
        orig = x.data[idx]
        x.data[idx] = orig + h
        lp = content.rvq_commit_loss(x.data, q)
        x.data[idx] = orig - h
        lm = content.rvq_commit_loss(x.data, q)
        x.data[idx] = orig
        assert abs((lp - lm) / (2 * h) - expected[idx]) < 1e-6


# -- ema codebook ------------------------------------------------------------------


def test_ema_own_value_is_fixed_point():
    book = make_book(v=4, d=2, seed=0)
    v0 = book.entries[2].copy()
    updated = content.codebook_update_ema(book, v0[None, :], [2], decay=0.9)
    assert np.allclose(updated.entries[2], v0, atol=1e-5)


def test_ema_converges_to_assigned_vector():
    book = make_book(v=4, d=2, seed=0)
    v = np.array([[0.5, -1.5]])
    for _ in range(1000):
        book = content.codebook_update_ema(book, v, [1], decay=0.99)
    assert np.max(np.abs(book.entries[1] - v[0])) < 1e-3


def test_ema_unassigned_healthy_entries_stable():
    book = make_book(v=4, d=2, seed=0)
    before = book.entries.copy()
    updated = content.codebook_update_ema(book, np.ones((1, 2)), [0], decay=0.99)
    for k in (1, 2, 3):
        assert np.allclose(updated.entries[k], before[k], atol=1e-4)
    assert updated.ema_counts[1] == pytest.approx(0.99)


def test_ema_dead_entry_reseeded_from_batch():
    book = make_book(v=3, d=2, seed=0)
    book.ema_counts[:] = 1e-6  # everything dead except what the batch hits
    frames = np.array([[5.0, 5.0], [5.0, 5.0]])
    updated = content.codebook_update_ema(
        book, frames, [0, 0], rng=np.random.default_rng(0))
    for k in (1, 2):
        assert np.allclose(updated.entries[k], [5.0, 5.0])


def test_ema_bad_decay():
    with pytest.raises(ValueError):
        content.codebook_update_ema(make_book(), np.zeros((1, 4)), [0], decay=1.0)


# -- adaptive fusion ----------------------------------------------------------------


def gated_fusion(d_in=4, d_out=3, bias_value=None):
    fusion = content.FusionModule(d_in, d_out, hidden=5, rng=np.random.default_rng(0))
    if bias_value is not None:
        fusion.conv2.w.data[:] = 0.0
        fusion.conv2.b.data[:] = bias_value
    return fusion


def test_fuse_unit_coefficients_pass_ppg_through():
    fusion = gated_fusion(bias_value=1.0)  # LeakyReLU(1) == 1 everywhere
    rng = np.random.default_rng(1)
    q = content.QuantizedSequence(
        codes=np.zeros((1, 6), dtype=np.int64),
        vectors=rng.standard_normal((6, 4)),
        stage_vectors=np.zeros((1, 6, 4)),
    )
    ppg = rng.standard_normal((11, 3))
    out = content.adaptive_fuse(q, ppg, fusion)
    assert np.allclose(out.frames, ppg, atol=1e-12)


def test_fuse_zero_coefficients_zero_output():
    fusion = gated_fusion(bias_value=0.0)
    rng = np.random.default_rng(2)
    q = content.rvq_quantize(rng.standard_normal((6, 4)), make_book(v=8, d=4))
    out = content.adaptive_fuse(q, rng.standard_normal((9, 3)), fusion)
    assert np.array_equal(out.frames, np.zeros((9, 3)))


def test_fuse_output_length_is_ppg_length():
    fusion = gated_fusion()
    rng = np.random.default_rng(3)
    q = content.rvq_quantize(rng.standard_normal((5, 4)), make_book(v=8, d=4))
    out = content.adaptive_fuse(q, rng.standard_normal((13, 3)), fusion)
    assert out.frames.shape == (13, 3)


def test_interpolation_hand_oracle():
    x = Tensor(np.array([[0.0], [1.0], [2.0]]))
    out = interp_time(x, 5)
    assert np.allclose(out.data[:, 0], [0.0, 0.5, 1.0, 1.5, 2.0], atol=1e-15)


def test_fusion_gradients_only_in_fusion_params():
    fusion = gated_fusion()
    rng = np.random.default_rng(4)
    xs = Tensor(rng.standard_normal((5, 4)))  # frozen upstream: no grad
    ppg = Tensor(rng.standard_normal((9, 3)))  # frozen upstream: no grad
    out = fusion.forward(xs, ppg)
    backward((out * out).mean())
    grads = [np.abs(p.grad).max() for p in fusion.parameters()]
    assert max(grads) > 0
    assert xs.grad is None and ppg.grad is None
