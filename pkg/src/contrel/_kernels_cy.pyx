# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled training kernels; signatures mirror _kernels_py.

Matrix products go through BLAS (SciPy's exported dgemm) and transcendentals
through NumPy's SIMD ufuncs; the bias, softmax bookkeeping, and Adam
arithmetic is fused around them in C loops so a training step avoids the
temporary churn of the pure-NumPy composition.
"""

from libc.math cimport log, pow, sqrt

import numpy as np

from scipy.linalg.cython_blas cimport dgemm


def adam_update(const double[::1] params, const double[::1] grads,
                const double[::1] m, const double[::1] v,
                long t, double beta1, double beta2, double eps, double lr):
    cdef Py_ssize_t n = params.shape[0]
    p_out = np.empty(n)
    m_out = np.empty(n)
    v_out = np.empty(n)
    cdef double[::1] p_o = p_out
    cdef double[::1] m_o = m_out
    cdef double[::1] v_o = v_out
    cdef double c1 = 1.0 - pow(beta1, <double> t)
    cdef double c2 = 1.0 - pow(beta2, <double> t)
    cdef double mi, vi
    cdef Py_ssize_t i
    for i in range(n):
        mi = beta1 * m[i] + (1.0 - beta1) * grads[i]
        vi = beta2 * v[i] + (1.0 - beta2) * (grads[i] * grads[i])
        m_o[i] = mi
        v_o[i] = vi
        p_o[i] = params[i] - lr * ((mi / c1) / (sqrt(vi / c2) + eps))
    return p_out, m_out, v_out


cdef void _mm(bint transa, bint transb,
              const double* a, Py_ssize_t am, Py_ssize_t an,
              const double* b, Py_ssize_t bm, Py_ssize_t bn,
              double* c, double alpha, double beta) noexcept nogil:
    """Row-major C = alpha * op(A) @ op(B) + beta * C via Fortran dgemm.

    (am, an) / (bm, bn) are the stored shapes; the Fortran call swaps the
    operand order to absorb the row-major/column-major mismatch.
    """
    cdef int m = <int> (an if transa else am)
    cdef int n = <int> (bm if transb else bn)
    cdef int k = <int> (am if transa else an)
    cdef int lda = <int> an
    cdef int ldb = <int> bn
    cdef int ldc = n
    cdef char ca = b'T' if transa else b'N'
    cdef char cb = b'T' if transb else b'N'
    # dgemm reads but never writes a/b; scipy's signature just lacks const
    dgemm(&cb, &ca, &n, &m, &k, &alpha, <double*> b, &ldb, <double*> a, &lda,
          &beta, c, &ldc)


cdef void _add_row_bias(double[:, ::1] out, const double[::1] bias) noexcept nogil:
    cdef Py_ssize_t r, j
    for r in range(out.shape[0]):
        for j in range(out.shape[1]):
            out[r, j] += bias[j]


cdef _encode(const double[:, ::1] x, const double[:, ::1] w1, const double[::1] b1,
             const double[:, ::1] w2, const double[::1] b2, bint use_tanh):
    """Returns (a1_arr, h_arr) for the batch; a1 is the post-activation hidden layer."""
    cdef Py_ssize_t n = x.shape[0], f = x.shape[1]
    cdef Py_ssize_t hid = w1.shape[1], d = w2.shape[1]
    a1_arr = np.empty((n, hid))
    h_arr = np.empty((n, d))
    cdef double[:, ::1] a1 = a1_arr
    cdef double[:, ::1] h = h_arr
    _mm(0, 0, &x[0, 0], n, f, &w1[0, 0], f, hid, &a1[0, 0], 1.0, 0.0)
    _add_row_bias(a1, b1)
    if use_tanh:
        np.tanh(a1_arr, out=a1_arr)
    _mm(0, 0, &a1[0, 0], n, hid, &w2[0, 0], hid, d, &h[0, 0], 1.0, 0.0)
    _add_row_bias(h, b2)
    return a1_arr, h_arr


def encode_batch(const double[:, ::1] x, const double[:, ::1] w1, const double[::1] b1,
                 const double[:, ::1] w2, const double[::1] b2, bint use_tanh):
    return _encode(x, w1, b1, w2, b2, use_tanh)[1]


def model_forward_backward(const double[:, ::1] x, const long long[::1] y,
                           const double[:, ::1] w1, const double[::1] b1,
                           const double[:, ::1] w2, const double[::1] b2,
                           const double[:, ::1] wh, bint use_tanh):
    cdef Py_ssize_t n = x.shape[0], f = x.shape[1]
    cdef Py_ssize_t hid = w1.shape[1], d = w2.shape[1], c = wh.shape[1]
    a1_arr, h_arr = _encode(x, w1, b1, w2, b2, use_tanh)
    probs_arr = np.empty((n, c))
    g_arr = np.empty((n, c))
    dh_arr = np.empty((n, d))
    dw1_arr = np.empty((f, hid))
    db1_arr = np.zeros(hid)
    dw2_arr = np.empty((hid, d))
    db2_arr = np.zeros(d)
    dwh_arr = np.empty((d, c))
    cdef double[:, ::1] a1 = a1_arr
    cdef double[:, ::1] h = h_arr
    cdef double[:, ::1] probs = probs_arr
    cdef double[:, ::1] g = g_arr
    cdef double[:, ::1] dh = dh_arr
    cdef double[:, ::1] dw1 = dw1_arr
    cdef double[::1] db1 = db1_arr
    cdef double[:, ::1] dw2 = dw2_arr
    cdef double[::1] db2 = db2_arr
    cdef double[:, ::1] dwh = dwh_arr
    cdef Py_ssize_t r, j, k, cc
    cdef double best, tot, picked, inv, loss = 0.0

    _mm(0, 0, &h[0, 0], n, d, &wh[0, 0], d, c, &probs[0, 0], 1.0, 0.0)
    for r in range(n):
        best = probs[r, 0]
        for cc in range(1, c):
            if probs[r, cc] > best:
                best = probs[r, cc]
        for cc in range(c):
            probs[r, cc] -= best
    np.exp(probs_arr, out=probs_arr)
    for r in range(n):
        tot = 0.0
        for cc in range(c):
            tot += probs[r, cc]
        inv = 1.0 / tot
        for cc in range(c):
            probs[r, cc] *= inv
            g[r, cc] = probs[r, cc]
        g[r, y[r]] -= 1.0
        picked = probs[r, y[r]]
        if picked < 1e-12:
            picked = 1e-12
        loss += -log(picked)

    _mm(1, 0, &h[0, 0], n, d, &g[0, 0], n, c, &dwh[0, 0], 1.0, 0.0)
    _mm(0, 1, &g[0, 0], n, c, &wh[0, 0], d, c, &dh[0, 0], 1.0, 0.0)
    for r in range(n):
        for k in range(d):
            db2[k] += dh[r, k]
    _mm(1, 0, &a1[0, 0], n, hid, &dh[0, 0], n, d, &dw2[0, 0], 1.0, 0.0)
    dz1_arr = np.empty((n, hid))
    cdef double[:, ::1] dz1 = dz1_arr
    _mm(0, 1, &dh[0, 0], n, d, &w2[0, 0], hid, d, &dz1[0, 0], 1.0, 0.0)
    for r in range(n):
        if use_tanh:
            for j in range(hid):
                dz1[r, j] *= 1.0 - a1[r, j] * a1[r, j]
        for j in range(hid):
            db1[j] += dz1[r, j]
    _mm(1, 0, &x[0, 0], n, f, &dz1[0, 0], n, hid, &dw1[0, 0], 1.0, 0.0)

    return loss, probs_arr, dw1_arr, db1_arr, dw2_arr, db2_arr, dwh_arr
