"""Hot arithmetic kernels with a compiled fast path.

``mat_vec_mod`` / ``vec_mat_mod`` (wrapping 64-bit modular products) and
``decompose_u64`` (gadget digit extraction) are the inner loops of every
encrypted operation.  A Cython extension is compiled at install time when a
C toolchain is available; otherwise, or when ``LATTICE_CTRL_BACKEND=numpy``
is set, the NumPy implementation is used.  Both backends produce
bit-identical results because all arithmetic is exact modulo 2**64 and the
modulus is a power of two dividing 2**64.
"""

import os
from contextlib import contextmanager

from . import numpy_impl

try:
    from . import _cykernels
except ImportError:
    _cykernels = None

_FORCED = os.environ.get("LATTICE_CTRL_BACKEND", "").strip().lower()
if _FORCED in ("numpy", "python") or _cykernels is None:
    _active = numpy_impl
    BACKEND = "numpy"
else:
    _active = _cykernels
    BACKEND = "cython"

mat_vec_mod = _active.mat_vec_mod
vec_mat_mod = _active.vec_mat_mod
decompose_u64 = _active.decompose_u64


def backends():
    """Names and modules of every available backend (for benchmarks)."""
    avail = {"numpy": numpy_impl}
    if _cykernels is not None:
        avail["cython"] = _cykernels
    return avail


@contextmanager
def use_backend(name):
    """Temporarily route the kernel entry points through one backend."""
    global mat_vec_mod, vec_mat_mod, decompose_u64, BACKEND
    impl = backends()[name]
    saved = (mat_vec_mod, vec_mat_mod, decompose_u64, BACKEND)
    mat_vec_mod, vec_mat_mod, decompose_u64 = (
        impl.mat_vec_mod, impl.vec_mat_mod, impl.decompose_u64)
    BACKEND = name
    try:
        yield
    finally:
        mat_vec_mod, vec_mat_mod, decompose_u64, BACKEND = saved
