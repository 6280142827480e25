"""Pure-numpy kernel implementations (fallback backend).

Same contracts as the compiled backend: inputs are C-contiguous float64
arrays, padding is applied by the caller, stride >= 1. Convolutions use the
cross-correlation convention (no kernel flip).
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND = "numpy"


def conv1d_forward(xp, w, stride):
    """Correlate padded input xp (C_in, Tp) with w (C_out, C_in, K).

    Returns y (C_out, T') with T' = (Tp - K) // stride + 1.
    """
    k = w.shape[2]
    cols = sliding_window_view(xp, k, axis=1)[:, ::stride, :]  # (C_in, T', K)
    return np.tensordot(w, cols, axes=([1, 2], [0, 2]))


def conv1d_backward_w(xp, gy, k, stride):
    """Gradient of conv1d_forward w.r.t. the kernel. Returns (C_out, C_in, K)."""
    cols = sliding_window_view(xp, k, axis=1)[:, ::stride, :]  # (C_in, T', K)
    return np.tensordot(gy, cols, axes=([1], [1]))


def conv1d_backward_x(w, gy, t_padded, stride):
    """Gradient of conv1d_forward w.r.t. the padded input. Returns (C_in, Tp)."""
    c_in, k = w.shape[1], w.shape[2]
    t_out = gy.shape[1]
    gcols = np.tensordot(w, gy, axes=([0], [0]))  # (C_in, K, T')
    gxp = np.zeros((c_in, t_padded), dtype=np.float64)
    for j in range(k):
        gxp[:, j : j + stride * t_out : stride] += gcols[:, j, :]
    return gxp


def nearest_codebook(x, entries):
    """Index of the closest codebook entry (squared Euclidean) per row of x.

    Ties resolve to the lowest index. Returns int64 codes of shape (T,).
    """
    d = (
        np.sum(x * x, axis=1)[:, None]
        - 2.0 * (x @ entries.T)
        + np.sum(entries * entries, axis=1)[None, :]
    )
    return np.argmin(d, axis=1).astype(np.int64)
