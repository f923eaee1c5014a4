"""GSW encryption of multipliers and the GSW x LWE external product.

A multiplier k is encrypted as the (n+1) x d(n+1) matrix k*G + mask + noise,
where G = [I, nu*I, ..., nu**(d-1)*I] is the gadget matrix.  Multiplying an
LWE ciphertext c by such a matrix is done as Enc'(k) @ D(c): the digit
decomposition D keeps every multiplicand below nu, so the error added per
product is bounded by a constant (delta_mult) independent of the ciphertext
magnitude.  The result is again an LWE ciphertext, so the product can be
iterated without limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import DomainError
from .lwe import LweCiphertext, Params, SecretKey, _check_same_params
from .ring import mod_reduce, sample_errors, uniform_zq


@dataclass(frozen=True, eq=False)
class GswCiphertext:
    """Matrix in Z_q^{(n+1) x d(n+1)} encrypting one multiplier."""

    body: np.ndarray  # uint64, shape (n+1, d*(n+1))
    params: Params

    def __post_init__(self):
        nhat = self.params.ct_dim
        expected = (nhat, self.params.gadget.d * nhat)
        if self.body.shape != expected:
            raise DomainError(f"GSW body shape {self.body.shape} != {expected}")


class GswMatrix:
    """Grid of GSW ciphertexts encrypting a Z_q matrix component-wise.

    ``flat`` lazily stacks the blocks into one (l1*(n+1)) x (l2*d*(n+1))
    matrix so that a whole encrypted matrix-vector product is a single
    modular mat-vec.
    """

    def __init__(self, blocks: list[list[GswCiphertext]], params: Params):
        if not blocks or not blocks[0]:
            raise DomainError("empty GSW matrix")
        l2 = len(blocks[0])
        for row in blocks:
            if len(row) != l2:
                raise DomainError("ragged GSW matrix")
            for blk in row:
                _check_same_params(blk.params, params)
        self.blocks = blocks
        self.params = params
        self._flat: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.blocks), len(self.blocks[0])

    @property
    def flat(self) -> np.ndarray:
        if self._flat is None:
            rows = [np.hstack([blk.body for blk in row]) for row in self.blocks]
            self._flat = np.ascontiguousarray(np.vstack(rows))
        return self._flat


def gadget_times(k: int, params: Params) -> np.ndarray:
    """k * G mod q as a dense (n+1) x d(n+1) uint64 matrix."""
    nhat = params.ct_dim
    spec = params.gadget
    out = np.zeros((nhat, spec.d * nhat), dtype=np.uint64)
    idx = np.arange(nhat)
    for j in range(spec.d):
        out[idx, j * nhat + idx] = (int(k) << (j * spec.log2_nu)) % params.q
    return out


def gsw_encrypt(k: int, sk: SecretKey, params: Params,
                rng: np.random.Generator) -> GswCiphertext:
    """Encrypt the multiplier k in [0, q)."""
    if not 0 <= k < params.q:
        raise DomainError(f"multiplier {k} outside [0, {params.q})")
    _check_same_params(sk.params, params)
    nhat = params.ct_dim
    cols = params.gadget.d * nhat
    mask = np.uint64(params.mask)
    a = uniform_zq(params.modulus, rng, (params.n, cols))
    e = mod_reduce(sample_errors(params.noise, rng, cols), params.modulus)
    body = gadget_times(k, params)
    body[0] += _kernels.vec_mat_mod(sk.residues, a, params.mask) + e
    body[1:] += a
    body &= mask
    return GswCiphertext(body=np.ascontiguousarray(body), params=params)


def gsw_encrypt_matrix(F, sk: SecretKey, params: Params,
                       rng: np.random.Generator) -> GswMatrix:
    """Component-wise GSW encryption of a matrix with entries in [0, q)."""
    Fq = np.atleast_2d(np.asarray(F))
    blocks = [[gsw_encrypt(int(Fq[i, j]), sk, params, rng)
               for j in range(Fq.shape[1])] for i in range(Fq.shape[0])]
    return GswMatrix(blocks, params)


def external_product(C: GswCiphertext, c: LweCiphertext) -> LweCiphertext:
    """Enc'(k) @ D(c) mod q: an LWE encryption of k * Dec(c) with bounded error."""
    _check_same_params(C.params, c.params)
    p = C.params
    digits = _kernels.decompose_u64(c.body, p.gadget.log2_nu, p.gadget.d)
    body = _kernels.mat_vec_mod(C.body, digits, p.mask)
    return LweCiphertext(body=body, params=p)


def decompose_bodies(bodies: np.ndarray, params: Params) -> np.ndarray:
    """Stacked digit vector col{D(c_i)} for ciphertext rows (l2, n+1)."""
    parts = [_kernels.decompose_u64(np.ascontiguousarray(row),
                                    params.gadget.log2_nu, params.gadget.d)
             for row in bodies]
    return np.concatenate(parts)


def matvec_bodies(EF: GswMatrix, bodies: np.ndarray) -> np.ndarray:
    """Encrypted matrix-vector product on raw ciphertext rows (l2, n+1) -> (l1, n+1)."""
    l1, l2 = EF.shape
    p = EF.params
    if bodies.shape != (l2, p.ct_dim):
        raise DomainError(f"ciphertext stack shape {bodies.shape} != ({l2}, {p.ct_dim})")
    digits = decompose_bodies(bodies, p)
    out = _kernels.mat_vec_mod(EF.flat, digits, p.mask)
    return out.reshape(l1, p.ct_dim)


def matvec_mult(EF: GswMatrix, cs: Sequence[LweCiphertext]) -> list[LweCiphertext]:
    """Encrypted matrix times vector of LWE ciphertexts."""
    l1, l2 = EF.shape
    if len(cs) != l2:
        raise DomainError(f"{len(cs)} ciphertexts for a {l1}x{l2} encrypted matrix")
    for c in cs:
        _check_same_params(c.params, EF.params)
    bodies = np.stack([c.body for c in cs])
    out = matvec_bodies(EF, bodies)
    return [LweCiphertext(body=row, params=EF.params) for row in out]


def delta_mult(params: Params) -> int:
    """Per-multiplication error bound d*(n+1)*n0*sigma*nu (ceiling)."""
    exact = (Fraction(params.gadget.d * params.ct_dim * params.noise.n0)
             * Fraction(str(params.noise.sigma)) * params.gadget.nu)
    return math.ceil(exact)
