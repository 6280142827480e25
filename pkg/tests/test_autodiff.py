"""Tensor engine tests: hand values, brute-force oracles, finite differences."""

import numpy as np
import pytest

from flowvc import autodiff as ad
from flowvc.autodiff import Tensor, backward
from flowvc.optim import AdamW


def fd_grad(loss_fn, param, idx, h=1e-5):
    """Central finite difference of loss_fn w.r.t. one coordinate of param."""
    orig = param.data.flat[idx]
    param.data.flat[idx] = orig + h
    lp = loss_fn().item()
    param.data.flat[idx] = orig - h
    lm = loss_fn().item()
    param.data.flat[idx] = orig
    return (lp - lm) / (2.0 * h)


def assert_fd_matches(loss_fn, params, rng, n_coords=6, tol=1e-6):
    """Analytic grads vs central differences; error relative to max(|g|, 1)."""
    loss = loss_fn()
    ad.zero_grad(params)
    backward(loss)
    for p in params:
        idxs = rng.choice(p.size, size=min(n_coords, p.size), replace=False)
        for idx in idxs:
            g_an = p.grad.flat[idx]
            g_fd = fd_grad(loss_fn, p, idx)
            denom = max(abs(g_an), abs(g_fd), 1.0)
            assert abs(g_an - g_fd) / denom < tol, (g_an, g_fd)


# -- matmul ------------------------------------------------------------------


def test_matmul_identity():
    eye = Tensor([[1.0, 0.0], [0.0, 1.0]])
    m = Tensor([[3.0, 4.0], [5.0, 6.0]])
    assert np.array_equal((eye @ m).data, m.data)


def test_matmul_hand():
    out = Tensor([[1.0, 2.0]]) @ Tensor([[3.0], [4.0]])
    assert out.data.tolist() == [[11.0]]


def test_matmul_against_triple_loop():
    rng = np.random.default_rng(7)
    a = rng.standard_normal((5, 7))
    b = rng.standard_normal((7, 3))
    expected = np.zeros((5, 3))
    for i in range(5):
        for j in range(3):
            acc = 0.0
            for k in range(7):
                acc += a[i, k] * b[k, j]
            expected[i, j] = acc
    got = (Tensor(a) @ Tensor(b)).data
    assert np.allclose(got, expected, rtol=1e-12, atol=1e-12)


def test_matmul_shape_mismatch():
    with pytest.raises(ValueError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


# -- conv1d ------------------------------------------------------------------


def naive_conv1d(x, w, stride, padding):
    c_in, t = x.shape
    c_out, _, k = w.shape
    xp = np.pad(x, ((0, 0), (padding, padding)))
    t_out = (t + 2 * padding - k) // stride + 1
    y = np.zeros((c_out, t_out))
    for o in range(c_out):
        for ti in range(t_out):
            for i in range(c_in):
                for j in range(k):
                    y[o, ti] += w[o, i, j] * xp[i, ti * stride + j]
    return y


def test_conv1d_identity_kernel():
    x = Tensor([[1.0, 2.0, 3.0]])
    w = Tensor([[[1.0]]])
    assert ad.conv1d(x, w).data.tolist() == [[1.0, 2.0, 3.0]]


def test_conv1d_box_sum():
    x = Tensor([[1.0, 2.0, 3.0, 4.0]])
    w = Tensor([[[1.0, 1.0]]])
    assert ad.conv1d(x, w).data.tolist() == [[3.0, 5.0, 7.0]]


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 2), (2, 1), (3, 2)])
def test_conv1d_against_nested_loop(stride, padding):
    rng = np.random.default_rng(11)
    x = rng.standard_normal((3, 16))
    w = rng.standard_normal((4, 3, 5))
    got = ad.conv1d(Tensor(x), Tensor(w), stride=stride, padding=padding).data
    assert np.allclose(got, naive_conv1d(x, w, stride, padding), rtol=1e-12, atol=1e-12)


def test_conv1d_kernel_too_wide():
    with pytest.raises(ValueError):
        ad.conv1d(Tensor(np.ones((1, 3))), Tensor(np.ones((1, 1, 6))), padding=1)


# -- softmax -----------------------------------------------------------------


def test_softmax_uniform():
    out = ad.softmax(Tensor([0.0, 0.0, 0.0]), axis=0)
    assert np.allclose(out.data, [1 / 3, 1 / 3, 1 / 3], atol=1e-15)


def test_softmax_overflow_safe():
    out = ad.softmax(Tensor([1000.0, 1000.0]), axis=0)
    assert np.allclose(out.data, [0.5, 0.5], atol=1e-15)


def test_softmax_high_precision_values():
    # frozen 20-digit evaluation of exp(x)/sum(exp(x)) for x = [1, 2, 3]
    expected = [
        0.090030573170380458,
        0.24472847105479765,
        0.66524095577482189,
    ]
    out = ad.softmax(Tensor([1.0, 2.0, 3.0]), axis=0)
    assert np.allclose(out.data, expected, atol=1e-12)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(3)
    for _ in range(10):
        x = Tensor(rng.standard_normal((4, 9)) * 50)
        s = ad.softmax(x, axis=-1).data
        assert np.all(s >= 0) and np.all(s <= 1)
        assert np.allclose(s.sum(axis=-1), 1.0, atol=1e-12)


# -- backward ----------------------------------------------------------------


def test_backward_linear():
    x = Tensor([2.0, 5.0])
    w = Tensor([3.0, -1.0], requires_grad=True)
    backward((w * x).sum())
    assert np.array_equal(w.grad, x.data)


def test_backward_quadratic():
    w = Tensor([1.0, -2.0], requires_grad=True)
    backward((w * w).sum())
    assert np.array_equal(w.grad, [2.0, -4.0])


def test_backward_requires_scalar():
    w = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ValueError):
        backward(w * w)


def test_backward_unreachable_param_stays_zero():
    w = Tensor([1.0], requires_grad=True)
    orphan = Tensor([4.0], requires_grad=True)
    ad.zero_grad([w, orphan])
    backward((w * w).sum())
    assert np.array_equal(orphan.grad, [0.0])
    assert np.array_equal(w.grad, [2.0])


def test_backward_shared_node_visits_once():
    w = Tensor([3.0], requires_grad=True)
    y = w * 2.0
    backward((y * y).sum())  # d/dw (2w)^2 = 8w
    assert np.allclose(w.grad, [24.0])


def test_frozen_tensor_gets_no_grad():
    frozen = Tensor([1.0, 2.0], requires_grad=False)
    w = Tensor([1.0, 1.0], requires_grad=True)
    backward((frozen * w).sum())
    assert frozen.grad is None


@pytest.mark.parametrize("seed", range(10))
def test_composite_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    w1 = Tensor(rng.standard_normal((4, 5)), requires_grad=True)
    w2 = Tensor(rng.standard_normal((3, 3, 3)), requires_grad=True)
    g = Tensor(rng.standard_normal(5), requires_grad=True)
    x = Tensor(rng.standard_normal((3, 6)))

    def loss_fn():
        h = ad.conv1d(x, w2, padding=1)  # (3, 6) -> (3, 6)
        h = ad.leaky_relu(h, 0.2)
        h = ad.matmul(ad.transpose(h), ad.transpose(w2[:, 0, :]))  # (6, 3)@(3,3)->(6,3)
        h = ad.matmul(h, w1[:3, :])  # (6, 5)
        h = ad.silu(ad.add(h, g))
        h = ad.softmax(h, axis=-1)
        h = ad.concat([h, ad.tanh(h)], axis=1)
        return ad.mean(ad.mul(h, h))

    assert_fd_matches(loss_fn, [w1, w2, g], rng)


@pytest.mark.parametrize("seed", range(5))
def test_reduction_and_shape_op_gradients(seed):
    rng = np.random.default_rng(100 + seed)
    w = Tensor(rng.standard_normal((4, 6)), requires_grad=True)

    def loss_fn():
        a = ad.pad_axis(w, 1, 2, 1)  # (4, 9)
        b = ad.repeat_interleave(a, 2, axis=0)  # (8, 9)
        c = b[1:5, ::2]
        d = ad.exp(ad.mul(c, 0.1))
        e = ad.log(ad.add(ad.sigmoid(d), 0.5))
        return ad.sum_(ad.power(e, 2.0)) / 7.0

    assert_fd_matches(loss_fn, [w], rng)


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        Tensor([np.nan])
    with pytest.raises(ValueError):
        Tensor([np.inf])


# -- AdamW -------------------------------------------------------------------


def test_adamw_zero_grad_no_decay_keeps_params():
    p = Tensor([1.0, -2.0], requires_grad=True)
    opt = AdamW([p], lr=1e-4, weight_decay=0.0)
    p.zero_grad()
    opt.step()
    assert np.array_equal(p.data, [1.0, -2.0])


def test_adamw_single_step_hand_trace():
    # g=1: m_hat = 1, v_hat = 1 -> step = lr / (1 + eps)
    p = Tensor([0.5], requires_grad=True)
    opt = AdamW([p], lr=1e-4, weight_decay=0.0)
    p.grad = np.array([1.0])
    opt.step()
    expected = 0.5 - 1e-4 / (1.0 + 1e-8)
    assert np.allclose(p.data, [expected], rtol=0, atol=1e-18)


def test_adamw_decoupled_decay():
    p = Tensor([2.0], requires_grad=True)
    opt = AdamW([p], lr=0.1, weight_decay=0.5)
    p.grad = np.array([0.0])
    opt.step()
    # zero gradient: only the decay term acts, p -= lr * wd * p
    assert np.allclose(p.data, [2.0 - 0.1 * 0.5 * 2.0])


def test_adamw_shape_mismatch():
    p = Tensor([1.0, 2.0], requires_grad=True)
    opt = AdamW([p], lr=0.1)
    p.grad = np.array([1.0])
    with pytest.raises(ValueError):
        opt.step()


def test_adamw_default_lr_is_1e_4():
    p = Tensor([1.0], requires_grad=True)
    assert AdamW([p]).lr == 1e-4
