# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled row kernels for the softmax model.

Same contract as ``newton_admm._pykernels``. The CSR Hessian-vector kernel
is fused: each row's logits direction, mix and scatter happen in one pass,
so the only scratch memory is one row of length C-1.
"""
cimport cython
from libc.math cimport exp, log
from libc.stdlib cimport malloc, free

import numpy as np

NAME = "compiled"

ctypedef fused idx_t:
    int
    long long


def stable_softmax(const double[:, ::1] Z, const long long[::1] labels):
    cdef Py_ssize_t n = Z.shape[0], k = Z.shape[1], i, c
    cdef double m, s, e, total = 0.0
    cdef long long b
    M_arr = np.empty(n)
    alpha_arr = np.empty(n)
    H_arr = np.empty((n, k))
    cdef double[::1] M = M_arr
    cdef double[::1] alpha = alpha_arr
    cdef double[:, ::1] H = H_arr
    with nogil:
        for i in range(n):
            m = 0.0
            for c in range(k):
                if Z[i, c] > m:
                    m = Z[i, c]
            s = exp(-m)
            for c in range(k):
                e = exp(Z[i, c] - m)
                H[i, c] = e
                s = s + e
            for c in range(k):
                H[i, c] = H[i, c] / s
            M[i] = m
            alpha[i] = s
            total = total + (m + log(s))
            b = labels[i]
            if b <= k:
                total = total - Z[i, b - 1]
    return total, M_arr, alpha_arr, H_arr


def hvp_mix(const double[:, ::1] V, const double[:, ::1] H):
    cdef Py_ssize_t n = V.shape[0], k = V.shape[1], i, c
    cdef double t
    U_arr = np.empty((n, k))
    cdef double[:, ::1] U = U_arr
    with nogil:
        for i in range(n):
            t = 0.0
            for c in range(k):
                U[i, c] = V[i, c] * H[i, c]
                t = t + U[i, c]
            for c in range(k):
                U[i, c] = U[i, c] - H[i, c] * t
    return U_arr


cdef void _csr_matmul(const idx_t[::1] indptr, const idx_t[::1] indices,
                      const double[::1] data, const double[:, ::1] WT,
                      double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = out.shape[0], k = out.shape[1], i, c, jj, j
    cdef double a
    for i in range(n):
        for c in range(k):
            out[i, c] = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            a = data[jj]
            j = indices[jj]
            for c in range(k):
                out[i, c] = out[i, c] + a * WT[j, c]


cdef void _csr_rmatmul(const idx_t[::1] indptr, const idx_t[::1] indices,
                       const double[::1] data, const double[:, ::1] U,
                       double[:, ::1] outT) noexcept nogil:
    cdef Py_ssize_t n = U.shape[0], k = U.shape[1], i, c, jj, j
    cdef double a
    for i in range(n):
        for jj in range(indptr[i], indptr[i + 1]):
            a = data[jj]
            j = indices[jj]
            for c in range(k):
                outT[j, c] = outT[j, c] + a * U[i, c]


cdef int _csr_hvp(const idx_t[::1] indptr, const idx_t[::1] indices,
                  const double[::1] data, const double[:, ::1] H,
                  const double[:, ::1] VT, double[:, ::1] outT) noexcept nogil:
    cdef Py_ssize_t n = H.shape[0], k = H.shape[1], i, c, jj, j
    cdef double a, t
    cdef double* u = <double*> malloc((k if k > 0 else 1) * sizeof(double))
    if u == NULL:
        return -1
    for i in range(n):
        for c in range(k):
            u[c] = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            a = data[jj]
            j = indices[jj]
            for c in range(k):
                u[c] = u[c] + a * VT[j, c]
        t = 0.0
        for c in range(k):
            u[c] = u[c] * H[i, c]
            t = t + u[c]
        for c in range(k):
            u[c] = u[c] - H[i, c] * t
        for jj in range(indptr[i], indptr[i + 1]):
            a = data[jj]
            j = indices[jj]
            for c in range(k):
                outT[j, c] = outT[j, c] + a * u[c]
    free(u)
    return 0


def _csr_parts(A):
    indptr = A.indptr
    indices = A.indices
    if indptr.dtype != indices.dtype:
        indptr = indptr.astype(np.int64)
        indices = indices.astype(np.int64)
    if indptr.dtype not in (np.int32, np.int64):
        indptr = indptr.astype(np.int64)
        indices = indices.astype(np.int64)
    return (np.ascontiguousarray(indptr), np.ascontiguousarray(indices),
            np.ascontiguousarray(A.data, dtype=np.float64))


def csr_matmul(A, WT):
    indptr, indices, data = _csr_parts(A)
    WT = np.ascontiguousarray(WT, dtype=np.float64)
    out = np.empty((A.shape[0], WT.shape[1]))
    if indptr.dtype == np.int32:
        _csr_matmul[cython.int](indptr, indices, data, WT, out)
    else:
        _csr_matmul[cython.longlong](indptr, indices, data, WT, out)
    return out


def csr_rmatmul(A, U):
    indptr, indices, data = _csr_parts(A)
    U = np.ascontiguousarray(U, dtype=np.float64)
    outT = np.zeros((A.shape[1], U.shape[1]))
    if indptr.dtype == np.int32:
        _csr_rmatmul[cython.int](indptr, indices, data, U, outT)
    else:
        _csr_rmatmul[cython.longlong](indptr, indices, data, U, outT)
    return np.ascontiguousarray(outT.T)


def csr_hvp(A, H, VT):
    indptr, indices, data = _csr_parts(A)
    H = np.ascontiguousarray(H, dtype=np.float64)
    VT = np.ascontiguousarray(VT, dtype=np.float64)
    outT = np.zeros((A.shape[1], H.shape[1]))
    cdef int status
    if indptr.dtype == np.int32:
        status = _csr_hvp[cython.int](indptr, indices, data, H, VT, outT)
    else:
        status = _csr_hvp[cython.longlong](indptr, indices, data, H, VT, outT)
    if status != 0:
        raise MemoryError("csr_hvp scratch allocation failed")
    return np.ascontiguousarray(outT.T)
