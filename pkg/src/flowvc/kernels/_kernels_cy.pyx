# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel implementations (hot inner loops).

Contracts mirror _kernels_np: C-contiguous float64 arrays, caller-applied
padding, cross-correlation convention.  Convolutions pack the input into
an im2col scratch buffer and make a single BLAS dgemm call; the natural
(C_out, C_in, K) weight layout flattens to the (C_out, C_in*K) operand
for free.  Row-major buffers go through Fortran dgemm with the operands
swapped and the flags kept.
"""

import numpy as np

cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

BACKEND = "cython"


cdef inline void _gemm_rm(char ta, char tb, int m, int n, int p,
                          double alpha, double *a, int lda,
                          double *b, int ldb, double beta,
                          double *c, int ldc) noexcept nogil:
    """C_rm(m, n) = alpha * op_A(A) @ op_B(B) + beta * C_rm with
    op_A(A): (m, p), op_B(B): (p, n); ldX is the row length of each
    row-major buffer."""
    dgemm(&tb, &ta, &n, &m, &p, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)


cdef void _pack_cols(double[:, ::1] xp, double[:, ::1] xcol,
                     int k, int stride, int t_out) noexcept nogil:
    """xcol[i*k + j, t] = xp[i, t*stride + j]."""
    cdef int c_in = <int> xp.shape[0]
    cdef int i, j, t, row
    for i in range(c_in):
        for j in range(k):
            row = i * k + j
            for t in range(t_out):
                xcol[row, t] = xp[i, j + t * stride]


def conv1d_forward(double[:, ::1] xp, double[:, :, ::1] w, int stride):
    """Correlate padded input xp (C_in, Tp) with w (C_out, C_in, K).

    Returns y (C_out, T') with T' = (Tp - K) // stride + 1.
    """
    cdef int c_in = <int> xp.shape[0], tp = <int> xp.shape[1]
    cdef int c_out = <int> w.shape[0], k = <int> w.shape[2]
    cdef int t_out = (tp - k) // stride + 1
    xcol_arr = np.empty((c_in * k, t_out), dtype=np.float64)
    cdef double[:, ::1] xcol = xcol_arr
    y_arr = np.empty((c_out, t_out), dtype=np.float64)
    cdef double[:, ::1] y = y_arr
    _pack_cols(xp, xcol, k, stride, t_out)
    _gemm_rm(b'N', b'N', c_out, t_out, c_in * k, 1.0,
             &w[0, 0, 0], c_in * k, &xcol[0, 0], t_out,
             0.0, &y[0, 0], t_out)
    return y_arr


def conv1d_backward_w(double[:, ::1] xp, double[:, ::1] gy, int k, int stride):
    """Gradient of conv1d_forward w.r.t. the kernel. Returns (C_out, C_in, K)."""
    cdef int c_in = <int> xp.shape[0], tp = <int> xp.shape[1]
    cdef int c_out = <int> gy.shape[0], t_out = <int> gy.shape[1]
    xcol_arr = np.empty((c_in * k, t_out), dtype=np.float64)
    cdef double[:, ::1] xcol = xcol_arr
    gw_arr = np.empty((c_out, c_in, k), dtype=np.float64)
    cdef double[:, :, ::1] gw = gw_arr
    _pack_cols(xp, xcol, k, stride, t_out)
    _gemm_rm(b'N', b'T', c_out, c_in * k, t_out, 1.0,
             &gy[0, 0], t_out, &xcol[0, 0], t_out,
             0.0, &gw[0, 0, 0], c_in * k)
    return gw_arr


def conv1d_backward_x(double[:, :, ::1] w, double[:, ::1] gy, int t_padded,
                      int stride):
    """Gradient of conv1d_forward w.r.t. the padded input. Returns (C_in, Tp)."""
    cdef int c_out = <int> w.shape[0], c_in = <int> w.shape[1]
    cdef int k = <int> w.shape[2]
    cdef int t_out = <int> gy.shape[1]
    gcol_arr = np.empty((c_in * k, t_out), dtype=np.float64)
    cdef double[:, ::1] gcol = gcol_arr
    gxp_arr = np.zeros((c_in, t_padded), dtype=np.float64)
    cdef double[:, ::1] gxp = gxp_arr
    cdef int i, j, t, row
    _gemm_rm(b'T', b'N', c_in * k, t_out, c_out, 1.0,
             &w[0, 0, 0], c_in * k, &gy[0, 0], t_out,
             0.0, &gcol[0, 0], t_out)
    with nogil:
        for i in range(c_in):
            for j in range(k):
                row = i * k + j
                for t in range(t_out):
                    gxp[i, j + t * stride] += gcol[row, t]
    return gxp_arr


def nearest_codebook(double[:, ::1] x, double[:, ::1] entries):
    """Index of the closest codebook entry (squared Euclidean) per row of x.

    Ties resolve to the lowest index. Returns int64 codes of shape (T,).
    """
    cdef int t_len = <int> x.shape[0], d = <int> x.shape[1]
    cdef int v = <int> entries.shape[0]
    scores_arr = np.empty((t_len, v), dtype=np.float64)
    cdef double[:, ::1] scores = scores_arr
    codes_arr = np.zeros(t_len, dtype=np.int64)
    cdef long[::1] codes = codes_arr
    enorm_arr = np.empty(v, dtype=np.float64)
    cdef double[::1] enorm = enorm_arr
    cdef int t, e, jj
    cdef double acc, dist, best
    cdef Py_ssize_t best_idx
    with nogil:
        for e in range(v):
            acc = 0.0
            for jj in range(d):
                acc += entries[e, jj] * entries[e, jj]
            enorm[e] = acc
    _gemm_rm(b'N', b'T', t_len, v, d, 1.0, &x[0, 0], d,
             &entries[0, 0], d, 0.0, &scores[0, 0], v)
    with nogil:
        for t in range(t_len):
            best = enorm[0] - 2.0 * scores[t, 0]
            best_idx = 0
            for e in range(1, v):
                dist = enorm[e] - 2.0 * scores[t, e]
                if dist < best:
                    best = dist
                    best_idx = e
            codes[t] = best_idx
    return codes_arr
