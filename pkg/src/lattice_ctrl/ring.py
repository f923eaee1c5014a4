"""Exact arithmetic over Z_q for power-of-two q, gadget digits, and randomness.

Every other module stores Z_q elements as canonical uint64 residues in
[0, q).  Because q and the gadget base are powers of two, products and sums
can be evaluated with wrapping 64-bit arithmetic and masked at the end:
q divides 2**64, so the wrapped result is congruent to the exact one.  No
floating point ever touches a residue.
"""

from __future__ import annotations

import math
import secrets
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .errors import DomainError, ParameterError

#: security floor on log2(q) for production parameter sets; small moduli are
#: allowed mechanically so that exhaustive tests over Z_{2**5}..Z_{2**8} work.
SECURITY_FLOOR_LOG2_Q = 16
MAX_LOG2_Q = 62


@dataclass(frozen=True)
class Modulus:
    """Power-of-two ciphertext modulus q = 2**log2_q, 2 <= q <= 2**62."""

    log2_q: int

    def __post_init__(self):
        if not (1 <= self.log2_q <= MAX_LOG2_Q):
            raise ParameterError(
                f"log2(q)={self.log2_q} outside the supported range [1, {MAX_LOG2_Q}]")

    @property
    def q(self) -> int:
        return 1 << self.log2_q

    @property
    def mask(self) -> int:
        return (1 << self.log2_q) - 1

    @property
    def meets_security_floor(self) -> bool:
        return self.log2_q >= SECURITY_FLOOR_LOG2_Q

    def __str__(self):
        return f"2^{self.log2_q}"


@dataclass(frozen=True)
class GadgetSpec:
    """Digit decomposition base nu = 2**log2_nu with d digits, nu**(d-1) < q <= nu**d."""

    log2_nu: int
    d: int

    def __post_init__(self):
        if self.log2_nu < 1 or self.d < 1:
            raise ParameterError("gadget base must be >= 2 with at least one digit")

    @property
    def nu(self) -> int:
        return 1 << self.log2_nu

    @classmethod
    def for_modulus(cls, modulus: Modulus, log2_nu: int = 16) -> "GadgetSpec":
        d = -(-modulus.log2_q // log2_nu)
        return cls(log2_nu=log2_nu, d=d)

    def check_modulus(self, modulus: Modulus) -> None:
        if not ((self.d - 1) * self.log2_nu < modulus.log2_q <= self.d * self.log2_nu):
            raise ParameterError(
                f"gadget (nu=2^{self.log2_nu}, d={self.d}) does not cover q={modulus}")


@dataclass(frozen=True)
class NoiseSpec:
    """Truncated discrete-Gaussian error model: every draw satisfies |e| <= n0*sigma."""

    sigma: float
    n0: int = 6

    def __post_init__(self):
        if self.sigma < 0:
            raise ParameterError("sigma must be >= 0")
        if self.n0 < 1:
            raise ParameterError("n0 must be a positive integer")

    @property
    def bound(self) -> float:
        return self.n0 * self.sigma


def make_rng(seed: int | None = None) -> np.random.Generator:
    """Counter-based RNG stream.

    A fixed 64-bit seed gives a reproducible stream (test mode); ``None``
    seeds from the OS entropy pool.
    """
    if seed is None:
        seed = secrets.randbits(64)
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def _to_int_array(v: Iterable | np.ndarray) -> np.ndarray:
    arr = np.asarray(v)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    return arr


def mod_reduce(v, q: Modulus) -> np.ndarray:
    """Canonical residues of v in [0, q), component-wise.

    Accepts signed/unsigned numpy arrays or (nested) iterables of Python
    ints of any magnitude.
    """
    if isinstance(v, np.ndarray) and v.dtype.kind in "iu":
        arr = v if v.ndim > 0 else v.reshape(1)
        if arr.dtype.kind == "i":
            # two's-complement view is exact mod 2**64, hence exact mod q
            return arr.astype(np.int64).view(np.uint64) & np.uint64(q.mask)
        return arr.astype(np.uint64) & np.uint64(q.mask)
    arr = np.asarray(v, dtype=object)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    flat = np.array([int(x) % q.q for x in arr.ravel()], dtype=np.uint64)
    return flat.reshape(arr.shape)


def biased_mod(v, q: Modulus, v0) -> list[int]:
    """Representative of v mod q constrained to [v0, v0 + q), component-wise.

    ``v0`` may be float, Fraction, or a sequence of them; Fractions keep the
    band arithmetic exact for large scale factors.
    """
    vs = [int(x) for x in _to_int_array(v).ravel()]
    v0s = v0 if isinstance(v0, (list, tuple, np.ndarray)) else [v0] * len(vs)
    if len(v0s) != len(vs):
        raise DomainError(f"biased_mod: {len(vs)} values but {len(v0s)} band offsets")
    out = []
    for x, lo in zip(vs, v0s):
        if isinstance(lo, Fraction):
            k = (x - lo) / q.q
            out.append(x - math.floor(k) * q.q)
        else:
            out.append(x - math.floor((x - float(lo)) / q.q) * q.q)
    return out


def round_nearest(x) -> np.ndarray:
    """Component-wise nearest integer, ties toward +inf: floor(x + 1/2)."""
    arr = np.asarray(x, dtype=np.float64)
    return np.floor(arr + 0.5).astype(np.int64)


def round_half_up(x) -> int:
    """Scalar nearest integer with ties toward +inf; exact for Fractions."""
    if isinstance(x, Fraction):
        return math.floor(x + Fraction(1, 2))
    return math.floor(float(x) + 0.5)


def decompose(x, spec: GadgetSpec, q: Modulus) -> np.ndarray:
    """Base-nu digit vector D(x) of length m*d, level-major blocks.

    Block i (length m) holds digit i of every component, so that
    ``recompose(decompose(x)) == x`` for any x with components in [0, q).
    """
    arr = np.ascontiguousarray(_to_int_array(x), dtype=np.uint64)
    if np.any(arr > np.uint64(q.mask)):
        raise DomainError("decompose: components must lie in [0, q)")
    return _kernels.decompose_u64(arr, spec.log2_nu, spec.d)


def recompose(digits, spec: GadgetSpec, q: Modulus) -> np.ndarray:
    """G @ digits mod q where G = [I, nu*I, ..., nu**(d-1)*I]; left inverse of decompose."""
    arr = np.ascontiguousarray(_to_int_array(digits), dtype=np.uint64)
    if arr.size % spec.d != 0:
        raise DomainError("recompose: digit vector length must be divisible by d")
    m = arr.size // spec.d
    levels = arr.reshape(spec.d, m)
    out = np.zeros(m, dtype=np.uint64)
    for i in range(spec.d):
        out += levels[i] << np.uint64(i * spec.log2_nu)
    return out & np.uint64(q.mask)


def sample_error(noise: NoiseSpec, rng: np.random.Generator) -> int:
    """One rounded-Gaussian error with the truncation |e| <= n0*sigma enforced."""
    return int(sample_errors(noise, rng, 1)[0])


def sample_errors(noise: NoiseSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` independent truncated errors as int64; exact zeros when sigma=0."""
    if noise.sigma == 0:
        return np.zeros(size, dtype=np.int64)
    out = np.empty(size, dtype=np.int64)
    filled = 0
    bound = noise.bound
    while filled < size:
        draw = round_nearest(rng.normal(0.0, noise.sigma, size - filled))
        keep = draw[np.abs(draw) <= bound]
        out[filled:filled + keep.size] = keep
        filled += keep.size
    return out


def uniform_zq(q: Modulus, rng: np.random.Generator, size) -> np.ndarray:
    """Uniform residues over Z_q as uint64."""
    return rng.integers(0, q.q, size=size, dtype=np.uint64)
