"""Kernel backends must agree with each other and with naive loops."""

import numpy as np
import pytest

from flowvc import kernels


def naive_nearest(x, codebook):
    t, d = x.shape
    codes = np.zeros(t, dtype=np.int64)
    for ti in range(t):
        best, best_d = 0, np.inf
        for v in range(codebook.shape[0]):
            dist = float(np.sum((x[ti] - codebook[v]) ** 2))
            if dist < best_d:
                best, best_d = v, dist
        codes[ti] = best
    return codes


def backends():
    return [kernels.get_backend(name) for name in kernels.available_backends()]


@pytest.mark.parametrize("stride", [1, 2, 3])
def test_conv1d_forward_backends_agree(stride):
    rng = np.random.default_rng(0)
    x = np.ascontiguousarray(rng.standard_normal((3, 20)))
    w = np.ascontiguousarray(rng.standard_normal((5, 3, 4)))
    outs = [b.conv1d_forward(x, w, stride) for b in backends()]
    for o in outs[1:]:
        assert np.allclose(o, outs[0], rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("stride", [1, 2])
def test_conv1d_backward_backends_agree(stride):
    rng = np.random.default_rng(1)
    x = np.ascontiguousarray(rng.standard_normal((2, 17)))
    w = np.ascontiguousarray(rng.standard_normal((4, 2, 3)))
    t_out = (17 - 3) // stride + 1
    gy = np.ascontiguousarray(rng.standard_normal((4, t_out)))
    gw = [b.conv1d_backward_w(x, gy, 3, stride) for b in backends()]
    gx = [b.conv1d_backward_x(w, gy, 17, stride) for b in backends()]
    for g in gw[1:]:
        assert np.allclose(g, gw[0], rtol=1e-12, atol=1e-12)
    for g in gx[1:]:
        assert np.allclose(g, gx[0], rtol=1e-12, atol=1e-12)


def test_nearest_codebook_backends_agree_and_match_naive():
    rng = np.random.default_rng(2)
    x = np.ascontiguousarray(rng.standard_normal((30, 8)))
    cb = np.ascontiguousarray(rng.standard_normal((16, 8)))
    expected = naive_nearest(x, cb)
    for b in backends():
        assert np.array_equal(b.nearest_codebook(x, cb), expected)


def test_nearest_codebook_tie_takes_first_index():
    x = np.array([[1.0, 0.0]])
    cb = np.array([[1.0, 0.5], [1.0, -0.5]])  # equidistant
    for b in backends():
        assert b.nearest_codebook(x, cb).tolist() == [0]


def test_backend_selection_reports_name():
    assert kernels.BACKEND in ("cython", "numpy")
    assert "numpy" in kernels.available_backends()
