"""Additive secret sharing and two-party encrypted multiplication.

Secret sharing splits m in Z_q into c1 = m + r mod q and c2 = -r mod q with
r uniform, so each share alone is uniform over Z_q while linear operations
can be carried out share-locally.

The two-party multiplication protocol lets an evaluator holding Enc(x1) and
Enc(x2) (but no key) obtain Enc(x1*x2) with help from the key holder: the
evaluator masks both operands with uniform offsets, the key holder decrypts
the masked values, multiplies, re-encrypts, and the evaluator cancels the
cross terms homomorphically.  It runs over the LWE scheme in errorless
(sigma = 0) demo mode, where additive homomorphism is exact.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParameterError, ProtocolError
from .lwe import (LweCiphertext, Params, SecretKey, add, decrypt, encrypt,
                  keygen, scalar_mult, trivial_encrypt)


# ---------------------------------------------------------------------------
# additive secret sharing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SharePair:
    """Two additive shares with c1 + c2 = m mod q."""

    c1: tuple[int, ...]
    c2: tuple[int, ...]
    q: int

    @property
    def width(self) -> int:
        return len(self.c1)


def _as_residues(m, q: int) -> list[int]:
    vals = np.asarray(m).ravel() if isinstance(m, (list, tuple, np.ndarray)) else [m]
    return [int(v) % q for v in vals]


def share(m, q: int, rng: np.random.Generator | None = None,
          mask=None) -> SharePair:
    """Split m (scalar or vector) into uniform shares; fresh mask per call.

    ``mask`` pins the random offset(s) explicitly, for worked examples.
    """
    vals = _as_residues(m, q)
    if mask is None:
        if rng is None:
            raise DomainError("need an rng (or an explicit mask)")
        mask = [int(r) for r in rng.integers(0, q, size=len(vals))]
    else:
        mask = _as_residues(mask, q)
        if len(mask) != len(vals):
            raise DomainError("mask width does not match message width")
    c1 = tuple((v + r) % q for v, r in zip(vals, mask))
    c2 = tuple((-r) % q for r in mask)
    return SharePair(c1=c1, c2=c2, q=q)


def reconstruct(p: SharePair):
    """m = c1 + c2 mod q; scalar when the pair is scalar."""
    out = [(a + b) % p.q for a, b in zip(p.c1, p.c2)]
    return out[0] if len(out) == 1 else out


def share_add(p: SharePair, p2: SharePair) -> SharePair:
    """Share-local addition: each unit adds only its own shares."""
    if p.q != p2.q or p.width != p2.width:
        raise DomainError("share pairs are incompatible")
    return SharePair(c1=tuple((a + b) % p.q for a, b in zip(p.c1, p2.c1)),
                     c2=tuple((a + b) % p.q for a, b in zip(p.c2, p2.c2)),
                     q=p.q)


def share_matmul(K, p: SharePair) -> SharePair:
    """Share-local integer matrix multiplication: K applied to each share vector."""
    Km = np.atleast_2d(np.asarray(K, dtype=object))
    if Km.shape[1] != p.width:
        raise DomainError(f"matrix shape {Km.shape} incompatible with width {p.width}")
    mult = lambda v: tuple(
        sum(int(Km[i, j]) * v[j] for j in range(Km.shape[1])) % p.q
        for i in range(Km.shape[0]))
    return SharePair(c1=mult(p.c1), c2=mult(p.c2), q=p.q)


# ---------------------------------------------------------------------------
# two-party encrypted multiplication
# ---------------------------------------------------------------------------

def _digest(c: LweCiphertext) -> str:
    return hashlib.sha256(c.body.tobytes()).hexdigest()[:16]


@dataclass
class Transcript:
    """Append-only record of every message and local operation; replayable."""

    entries: list = field(default_factory=list)

    def log(self, sender: str, receiver: str, kind: str, **payload) -> None:
        self.entries.append({"sender": sender, "receiver": receiver,
                             "kind": kind, **payload})

    def operations_by(self, party: str) -> list[str]:
        return [e["kind"] for e in self.entries if e["sender"] == party]

    def to_json(self) -> str:
        return json.dumps(self.entries, indent=2)


class KeyHolderUnit:
    """Unit 1: holds the secret key, sees only masked values."""

    def __init__(self, sk: SecretKey, params: Params):
        self.sk = sk
        self.params = params
        self.observed: list[tuple[int, int]] = []

    def multiply_masked(self, c1m: LweCiphertext, c2m: LweCiphertext,
                        rng: np.random.Generator,
                        transcript: Transcript) -> LweCiphertext:
        m1 = decrypt(c1m, self.sk)
        m2 = decrypt(c2m, self.sk)
        self.observed.append((m1, m2))
        transcript.log("unit1", "unit1", "decrypt_masked", values=[m1, m2])
        z = encrypt((m1 * m2) % self.params.q, self.sk, self.params, rng)
        transcript.log("unit1", "unit2", "send_product", digest=_digest(z))
        return z


class EvaluatorUnit:
    """Unit 2: holds the encrypted operands and never the key."""

    def __init__(self, cx1: LweCiphertext, cx2: LweCiphertext, params: Params):
        self.cx1 = cx1
        self.cx2 = cx2
        self.params = params
        self._masks: tuple[int, int] | None = None

    def mask_operands(self, rng: np.random.Generator,
                      transcript: Transcript) -> tuple[LweCiphertext, LweCiphertext]:
        q = self.params.q
        r1, r2 = (int(v) for v in rng.integers(0, q, size=2))
        self._masks = (r1, r2)
        c1m = add(self.cx1, trivial_encrypt(r1, self.params))
        c2m = add(self.cx2, trivial_encrypt(r2, self.params))
        transcript.log("unit2", "unit1", "send_masked",
                       digests=[_digest(c1m), _digest(c2m)])
        return c1m, c2m

    def unmask_product(self, z: LweCiphertext,
                       transcript: Transcript) -> LweCiphertext:
        if self._masks is None:
            raise ProtocolError("unmask_product called before mask_operands")
        r1, r2 = self._masks
        # z holds (x1+r1)(x2+r2); strip r2*x1, r1*x2, and r1*r2 homomorphically
        out = add(z, scalar_mult(-r2, self.cx1))
        out = add(out, scalar_mult(-r1, self.cx2))
        out = add(out, trivial_encrypt(-(r1 * r2) % self.params.q, self.params))
        transcript.log("unit2", "unit2", "homomorphic_correction",
                       digest=_digest(out))
        self._masks = None
        return out


def make_units(x1: int, x2: int, params: Params, rng: np.random.Generator,
               ) -> tuple[KeyHolderUnit, EvaluatorUnit, SecretKey]:
    """Demo setup: unit 1 gets the key; unit 2 gets fresh encryptions of x1, x2."""
    sk = keygen(params, rng)
    cx1 = encrypt(x1 % params.q, sk, params, rng)
    cx2 = encrypt(x2 % params.q, sk, params, rng)
    return KeyHolderUnit(sk, params), EvaluatorUnit(cx1, cx2, params), sk


def two_party_mult(x1: int, x2: int, unit1: KeyHolderUnit, unit2: EvaluatorUnit,
                   rng: np.random.Generator,
                   transcript: Transcript | None = None) -> LweCiphertext:
    """Run the protocol; the returned ciphertext decrypts to x1*x2 mod q.

    ``x1`` and ``x2`` are the demo inputs already held encrypted by unit 2;
    they are recorded in the transcript, never sent in the clear.  Requires
    sigma = 0: with noise, the masked-decrypt-multiply round trip would
    amplify errors by message-sized factors.
    """
    if unit1.params.noise.sigma != 0:
        raise ParameterError("two-party multiplication runs in sigma=0 demo mode only")
    if transcript is None:
        transcript = Transcript()
    transcript.log("client", "unit2", "inputs",
                   values=[x1 % unit2.params.q, x2 % unit2.params.q])
    c1m, c2m = unit2.mask_operands(rng, transcript)
    z = unit1.multiply_masked(c1m, c2m, rng, transcript)
    return unit2.unmask_product(z, transcript)
