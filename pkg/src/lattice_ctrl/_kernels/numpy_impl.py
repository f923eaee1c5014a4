"""NumPy fallback kernels.

uint64 products and sums wrap modulo 2**64; masking with q-1 afterwards is
exact because q divides 2**64.
"""

import numpy as np


def mat_vec_mod(A, x, mask):
    """(A @ x) mod (mask+1) for uint64 A (R,C) and x (C,)."""
    return (A @ x) & np.uint64(mask)


def vec_mat_mod(x, A, mask):
    """(x @ A) mod (mask+1) for uint64 x (R,) and A (R,C)."""
    return (x @ A) & np.uint64(mask)


def decompose_u64(x, log2_nu, d):
    """Base-2**log2_nu digits of x (m,), level-major: out[i*m+j] = digit i of x[j]."""
    m = x.shape[0]
    out = np.empty(d * m, dtype=np.uint64)
    digit_mask = np.uint64((1 << log2_nu) - 1)
    for i in range(d):
        out[i * m:(i + 1) * m] = (x >> np.uint64(i * log2_nu)) & digit_mask
    return out
