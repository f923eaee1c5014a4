"""Symmetric LWE cryptosystem with exact additive homomorphism.

A ciphertext of m in Z_q is the (n+1)-vector [m + sk.a + e, a] mod q: the
message sits in the first component, masked by the key-dependent term sk.a
and a small error e.  Decryption multiplies by [1, -sk], which cancels the
mask exactly, so sums and integer multiples of ciphertexts decrypt to the
corresponding sums and multiples of the messages -- exactly, for *any*
well-formed ciphertexts, not just fresh ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import DomainError, ParameterError
from .ring import (GadgetSpec, Modulus, NoiseSpec, mod_reduce, round_half_up,
                   sample_error, sample_errors, uniform_zq)


@dataclass(frozen=True)
class Params:
    """Cryptosystem parameters: key dimension n plus modulus/gadget/noise specs."""

    n: int
    modulus: Modulus
    gadget: GadgetSpec
    noise: NoiseSpec

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError("key dimension n must be >= 1")
        self.gadget.check_modulus(self.modulus)

    @classmethod
    def create(cls, n: int, log2_q: int, sigma: float,
               n0: int = 6, log2_nu: int = 16) -> "Params":
        modulus = Modulus(log2_q)
        return cls(n=n, modulus=modulus,
                   gadget=GadgetSpec.for_modulus(modulus, log2_nu),
                   noise=NoiseSpec(sigma=sigma, n0=n0))

    @property
    def q(self) -> int:
        return self.modulus.q

    @property
    def mask(self) -> int:
        return self.modulus.mask

    @property
    def ct_dim(self) -> int:
        """Ciphertext dimension n + 1."""
        return self.n + 1


@dataclass
class SecretKey:
    """LWE secret key: n residues drawn from the error distribution.

    Not serialized implicitly; see the container module for explicit export.
    ``destroy()`` zeroes the buffer (best effort -- Python offers no
    guaranteed wipe).
    """

    residues: np.ndarray  # uint64, shape (n,), canonical mod q
    params: Params

    @property
    def dec_row(self) -> np.ndarray:
        """The row [1, -sk] mod q used by decryption."""
        q = self.params.modulus
        row = np.empty(self.params.ct_dim, dtype=np.uint64)
        row[0] = 1
        row[1:] = (np.uint64(0) - self.residues) & np.uint64(q.mask)
        return row

    def destroy(self) -> None:
        self.residues[:] = 0


@dataclass(frozen=True, eq=False)
class LweCiphertext:
    """Vector in Z_q^{n+1}: [message + sk.a + error, a]."""

    body: np.ndarray  # uint64, shape (n+1,)
    params: Params

    def __post_init__(self):
        if self.body.shape != (self.params.ct_dim,):
            raise DomainError(
                f"ciphertext body shape {self.body.shape} != ({self.params.ct_dim},)")


def _check_same_params(a: Params, b: Params) -> None:
    if a != b:
        raise DomainError("operands use different cryptosystem parameters")


def keygen(params: Params, rng: np.random.Generator) -> SecretKey:
    """Sample a length-n key from the error distribution."""
    raw = sample_errors(params.noise, rng, params.n)
    return SecretKey(residues=mod_reduce(raw, params.modulus), params=params)


def encrypt(m: int, sk: SecretKey, params: Params,
            rng: np.random.Generator) -> LweCiphertext:
    """Fresh encryption of m in [0, q); decrypts to m + e with |e| <= n0*sigma."""
    if not 0 <= m < params.q:
        raise DomainError(f"message {m} outside [0, {params.q})")
    _check_same_params(sk.params, params)
    a = uniform_zq(params.modulus, rng, params.n)
    e = sample_error(params.noise, rng)
    body = np.empty(params.ct_dim, dtype=np.uint64)
    body[0] = (m + int(sk.residues @ a) + e) % params.q
    body[1:] = a
    return LweCiphertext(body=body, params=params)


def trivial_encrypt(m: int, params: Params) -> LweCiphertext:
    """Keyless, noiseless ciphertext [m, 0, ..., 0]; decrypts to m under any key."""
    body = np.zeros(params.ct_dim, dtype=np.uint64)
    body[0] = m % params.q
    return LweCiphertext(body=body, params=params)


def decrypt(c: LweCiphertext, sk: SecretKey) -> int:
    """[1, -sk] . c mod q, as a canonical residue."""
    _check_same_params(c.params, sk.params)
    return int((sk.dec_row @ c.body) & np.uint64(c.params.mask))


def decrypt_centered(c: LweCiphertext, sk: SecretKey) -> int:
    """Decryption as the representative in [-q/2, q/2), for error measurement."""
    v = decrypt(c, sk)
    q = c.params.q
    return v - q if v >= q // 2 else v


def encrypt_scaled(m: int, scale: int, sk: SecretKey, params: Params,
                   rng: np.random.Generator) -> LweCiphertext:
    """Encryption of scale*m mod q; scale/2 must exceed the error bound n0*sigma."""
    if scale < 1 or scale / 2 <= params.noise.bound:
        raise ParameterError(
            f"scale {scale} too small for noise bound {params.noise.bound}")
    return encrypt((scale * int(m)) % params.q, sk, params, rng)


def decode_scaled(v: int, scale: int) -> int:
    """Nearest integer to v/scale (ties toward +inf); exact integer arithmetic."""
    if scale < 1:
        raise DomainError("scale must be >= 1")
    return round_half_up(Fraction(int(v), scale))


def add(c1: LweCiphertext, c2: LweCiphertext) -> LweCiphertext:
    """Component-wise modular addition; decrypts to the sum of messages, exactly."""
    _check_same_params(c1.params, c2.params)
    body = (c1.body + c2.body) & np.uint64(c1.params.mask)
    return LweCiphertext(body=body, params=c1.params)


def scalar_mult(k: int, c: LweCiphertext) -> LweCiphertext:
    """Component-wise multiplication by the integer k (reduced mod q)."""
    kq = np.uint64(int(k) % c.params.q)
    body = (c.body * kq) & np.uint64(c.params.mask)
    return LweCiphertext(body=body, params=c.params)


def plain_matrix_mult(K, cs: Sequence[LweCiphertext]) -> list[LweCiphertext]:
    """K @ cs for an integer matrix K: constant multiplications and additions."""
    if not cs:
        raise DomainError("empty ciphertext vector")
    params = cs[0].params
    for c in cs[1:]:
        _check_same_params(params, c.params)
    Kq = mod_reduce(np.asarray(K), params.modulus)
    if Kq.ndim != 2 or Kq.shape[1] != len(cs):
        raise DomainError(f"matrix shape {Kq.shape} incompatible with {len(cs)} ciphertexts")
    bodies = np.stack([c.body for c in cs])  # (len(cs), n+1)
    out = (Kq @ bodies) & np.uint64(params.mask)
    return [LweCiphertext(body=row, params=params) for row in out]


def encrypt_vector(values, sk: SecretKey, params: Params,
                   rng: np.random.Generator) -> list[LweCiphertext]:
    """Component-wise encryption of a vector of residues."""
    return [encrypt(int(v), sk, params, rng) for v in np.asarray(values).ravel()]


def decrypt_vector(cs: Sequence[LweCiphertext], sk: SecretKey) -> np.ndarray:
    """Component-wise decryption to canonical residues."""
    return np.array([decrypt(c, sk) for c in cs], dtype=np.uint64)
