# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled 1-D convolution kernels; same contract as ``_kernels_py``.

im2col into a scratch buffer, then one BLAS dgemm per batch row.  Arrays are
row-major, so each product is issued as its column-major transpose.
"""
import numpy as np
from scipy.linalg.cython_blas cimport dgemm


cdef void _im2col(const double[:, :, ::1] x, Py_ssize_t bi, Py_ssize_t nk, Py_ssize_t no,
                  Py_ssize_t stride, Py_ssize_t padding, double[:, ::1] cols) noexcept nogil:
    # cols[c * nk + k, o] = x[bi, c, o * stride + k - padding], zero outside
    cdef Py_ssize_t nc = x.shape[1], nl = x.shape[2]
    cdef Py_ssize_t c, k, o, pos
    for c in range(nc):
        for k in range(nk):
            for o in range(no):
                pos = o * stride + k - padding
                cols[c * nk + k, o] = x[bi, c, pos] if 0 <= pos < nl else 0.0


def conv1d_forward(const double[:, :, ::1] x, const double[:, :, ::1] w,
                   const double[::1] b, Py_ssize_t stride, Py_ssize_t padding):
    cdef Py_ssize_t nb = x.shape[0], nc = x.shape[1], nl = x.shape[2]
    cdef Py_ssize_t nf = w.shape[0], nk = w.shape[2]
    cdef Py_ssize_t no = (nl + 2 * padding - nk) // stride + 1
    out = np.empty((nb, nf, no), dtype=np.float64)
    cdef double[:, :, ::1] y = out
    cdef double[:, ::1] cols = np.empty((nc * nk, no), dtype=np.float64)
    cdef int m = <int>no, n = <int>nf, kk = <int>(nc * nk)
    cdef double one = 1.0
    cdef char tn = b'N'
    cdef Py_ssize_t bi, f, o
    if nb == 0 or no <= 0 or nf == 0:
        return out
    with nogil:
        for bi in range(nb):
            for f in range(nf):
                for o in range(no):
                    y[bi, f, o] = b[f]
            _im2col(x, bi, nk, no, stride, padding, cols)
            # y[bi] (nf x no) += w (nf x K) @ cols (K x no)
            dgemm(&tn, &tn, &m, &n, &kk, &one, &cols[0, 0], &m,
                  <double*>&w[0, 0, 0], &kk, &one, &y[bi, 0, 0], &m)
    return out


def conv1d_backward(const double[:, :, ::1] x, const double[:, :, ::1] w,
                    const double[:, :, ::1] dy, Py_ssize_t stride, Py_ssize_t padding):
    cdef Py_ssize_t nb = x.shape[0], nc = x.shape[1], nl = x.shape[2]
    cdef Py_ssize_t nf = w.shape[0], nk = w.shape[2]
    cdef Py_ssize_t no = dy.shape[2]
    dx_arr = np.zeros((nb, nc, nl), dtype=np.float64)
    dw_arr = np.zeros((nf, nc, nk), dtype=np.float64)
    db_arr = np.zeros(nf, dtype=np.float64)
    cdef double[:, :, ::1] dx = dx_arr
    cdef double[:, :, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    cdef double[:, ::1] cols = np.empty((nc * nk, no), dtype=np.float64)
    cdef double[:, ::1] dcols = np.empty((nc * nk, no), dtype=np.float64)
    cdef int i_no = <int>no, i_nf = <int>nf, i_k = <int>(nc * nk)
    cdef double one = 1.0, zero = 0.0
    cdef char tn = b'N', tt = b'T'
    cdef Py_ssize_t bi, f, c, k, o, pos
    if nb == 0 or no <= 0 or nf == 0:
        return dx_arr, dw_arr, db_arr
    with nogil:
        for bi in range(nb):
            for f in range(nf):
                for o in range(no):
                    db[f] += dy[bi, f, o]
            _im2col(x, bi, nk, no, stride, padding, cols)
            # dw (nf x K) += dy[bi] (nf x no) @ cols^T
            dgemm(&tt, &tn, &i_k, &i_nf, &i_no, &one, &cols[0, 0], &i_no,
                  <double*>&dy[bi, 0, 0], &i_no, &one, &dw[0, 0, 0], &i_k)
            # dcols (K x no) = w^T @ dy[bi]
            dgemm(&tn, &tt, &i_no, &i_k, &i_nf, &one, <double*>&dy[bi, 0, 0], &i_no,
                  <double*>&w[0, 0, 0], &i_k, &zero, &dcols[0, 0], &i_no)
            for c in range(nc):
                for k in range(nk):
                    for o in range(no):
                        pos = o * stride + k - padding
                        if 0 <= pos < nl:
                            dx[bi, c, pos] += dcols[c * nk + k, o]
    return dx_arr, dw_arr, db_arr
