# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: wrapping uint64 modular products and gadget digits."""

import numpy as np

cimport numpy as cnp


def mat_vec_mod(A, x, mask):
    """(A @ x) mod (mask+1) for uint64 A (R,C) and x (C,)."""
    cdef cnp.uint64_t[:, ::1] Av = np.ascontiguousarray(A, dtype=np.uint64)
    cdef cnp.uint64_t[::1] xv = np.ascontiguousarray(x, dtype=np.uint64)
    cdef cnp.uint64_t msk = <cnp.uint64_t> mask
    cdef Py_ssize_t R = Av.shape[0], C = Av.shape[1]
    out_arr = np.empty(R, dtype=np.uint64)
    cdef cnp.uint64_t[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef cnp.uint64_t acc
    with nogil:
        for i in range(R):
            acc = 0
            for j in range(C):
                acc += Av[i, j] * xv[j]
            out[i] = acc & msk
    return out_arr


def vec_mat_mod(x, A, mask):
    """(x @ A) mod (mask+1) for uint64 x (R,) and A (R,C)."""
    cdef cnp.uint64_t[::1] xv = np.ascontiguousarray(x, dtype=np.uint64)
    cdef cnp.uint64_t[:, ::1] Av = np.ascontiguousarray(A, dtype=np.uint64)
    cdef cnp.uint64_t msk = <cnp.uint64_t> mask
    cdef Py_ssize_t R = Av.shape[0], C = Av.shape[1]
    out_arr = np.zeros(C, dtype=np.uint64)
    cdef cnp.uint64_t[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef cnp.uint64_t xi
    with nogil:
        for i in range(R):
            xi = xv[i]
            for j in range(C):
                out[j] += xi * Av[i, j]
        for j in range(C):
            out[j] &= msk
    return out_arr


def decompose_u64(x, log2_nu, d):
    """Base-2**log2_nu digits of x (m,), level-major: out[i*m+j] = digit i of x[j]."""
    cdef cnp.uint64_t[::1] xv = np.ascontiguousarray(x, dtype=np.uint64)
    cdef Py_ssize_t m = xv.shape[0]
    cdef Py_ssize_t dd = <Py_ssize_t> d
    cdef cnp.uint64_t shift = <cnp.uint64_t> log2_nu
    cdef cnp.uint64_t digit_mask = (<cnp.uint64_t> 1 << shift) - 1
    out_arr = np.empty(dd * m, dtype=np.uint64)
    cdef cnp.uint64_t[::1] out = out_arr
    cdef Py_ssize_t i, j
    with nogil:
        for j in range(m):
            for i in range(dd):
                out[i * m + j] = (xv[j] >> (shift * <cnp.uint64_t> i)) & digit_mask
    return out_arr
