"""Versioned binary container for keys and ciphertexts.

Layout (little endian):

    magic   4 bytes  b"GLWE"
    version u8       currently 1
    n       u32      key dimension
    log2_q  u8
    d       u8       gadget digit count
    log2_nu u8
    kind    u8       0 = LWE ciphertext stack, 1 = GSW matrix, 2 = secret key
    [kind 1 only] rows u32, cols u32   (grid dimensions)
    payload          uint64 words, row-major

Kind 0 holds one or more LWE ciphertexts stacked; the count is implied by
the payload size.  Loading requires the caller's ``Params`` and verifies the
structural header fields against it.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError
from .gsw import GswCiphertext, GswMatrix
from .lwe import LweCiphertext, Params, SecretKey

MAGIC = b"GLWE"
VERSION = 1
KIND_LWE = 0
KIND_GSW = 1
KIND_KEY = 2

_HEADER = struct.Struct("<4sBIBBBB")
_GRID = struct.Struct("<II")


def _header_bytes(params: Params, kind: int) -> bytes:
    return _HEADER.pack(MAGIC, VERSION, params.n, params.modulus.log2_q,
                        params.gadget.d, params.gadget.log2_nu, kind)


def _payload(words: np.ndarray) -> bytes:
    return np.ascontiguousarray(words, dtype=np.uint64).tobytes()


def save_lwe(path, cts: LweCiphertext | Sequence[LweCiphertext]) -> None:
    if isinstance(cts, LweCiphertext):
        cts = [cts]
    params = cts[0].params
    body = np.vstack([c.body for c in cts])
    Path(path).write_bytes(_header_bytes(params, KIND_LWE) + _payload(body))


def save_gsw(path, m: GswMatrix | GswCiphertext) -> None:
    if isinstance(m, GswCiphertext):
        m = GswMatrix([[m]], m.params)
    rows, cols = m.shape
    blob = [_header_bytes(m.params, KIND_GSW), _GRID.pack(rows, cols)]
    for row in m.blocks:
        for blk in row:
            blob.append(_payload(blk.body))
    Path(path).write_bytes(b"".join(blob))


def save_secret_key(path, sk: SecretKey) -> None:
    """Explicit key export; the CLI additionally demands --export-secret."""
    Path(path).write_bytes(_header_bytes(sk.params, KIND_KEY) + _payload(sk.residues))


def peek_header(path) -> dict:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size or raw[:4] != MAGIC:
        raise DomainError(f"{path}: not a GLWE container")
    magic, version, n, log2_q, d, log2_nu, kind = _HEADER.unpack_from(raw)
    if version != VERSION:
        raise DomainError(f"{path}: unsupported container version {version}")
    return {"n": n, "log2_q": log2_q, "d": d, "log2_nu": log2_nu, "kind": kind}


def _check_params(path, header: dict, params: Params) -> None:
    want = {"n": params.n, "log2_q": params.modulus.log2_q,
            "d": params.gadget.d, "log2_nu": params.gadget.log2_nu}
    got = {k: header[k] for k in want}
    if got != want:
        raise DomainError(f"{path}: header {got} does not match params {want}")


def _words(raw: bytes, offset: int) -> np.ndarray:
    if (len(raw) - offset) % 8:
        raise DomainError("payload is not a whole number of 64-bit words")
    return np.frombuffer(raw, dtype="<u8", offset=offset).astype(np.uint64)


def load_lwe(path, params: Params) -> list[LweCiphertext]:
    raw = Path(path).read_bytes()
    header = peek_header(path)
    if header["kind"] != KIND_LWE:
        raise DomainError(f"{path}: kind {header['kind']} is not an LWE container")
    _check_params(path, header, params)
    words = _words(raw, _HEADER.size)
    nhat = params.ct_dim
    if words.size % nhat:
        raise DomainError(f"{path}: payload not a multiple of ciphertext size")
    return [LweCiphertext(body=row.copy(), params=params)
            for row in words.reshape(-1, nhat)]


def load_gsw(path, params: Params) -> GswMatrix:
    raw = Path(path).read_bytes()
    header = peek_header(path)
    if header["kind"] != KIND_GSW:
        raise DomainError(f"{path}: kind {header['kind']} is not a GSW container")
    _check_params(path, header, params)
    rows, cols = _GRID.unpack_from(raw, _HEADER.size)
    words = _words(raw, _HEADER.size + _GRID.size)
    nhat = params.ct_dim
    block = nhat * params.gadget.d * nhat
    if words.size != rows * cols * block:
        raise DomainError(f"{path}: payload size does not match {rows}x{cols} grid")
    blocks = []
    pos = 0
    for _ in range(rows):
        row = []
        for _ in range(cols):
            body = words[pos:pos + block].reshape(nhat, params.gadget.d * nhat).copy()
            row.append(GswCiphertext(body=body, params=params))
            pos += block
        blocks.append(row)
    return GswMatrix(blocks, params)


def load_secret_key(path, params: Params) -> SecretKey:
    raw = Path(path).read_bytes()
    header = peek_header(path)
    if header["kind"] != KIND_KEY:
        raise DomainError(f"{path}: kind {header['kind']} is not a key container")
    _check_params(path, header, params)
    words = _words(raw, _HEADER.size)
    if words.size != params.n:
        raise DomainError(f"{path}: key length {words.size} != n={params.n}")
    return SecretKey(residues=words.copy(), params=params)
