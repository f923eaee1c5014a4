"""Closed-loop execution: reference, integer, modular, and encrypted controllers.

The three controller variants step in lockstep against identical plant
copies.  The integer and modular systems are the exact oracles: the modular
trajectory equals the integer one reduced mod q, and the encrypted
trajectory decrypts to the modular one up to bounded cryptosystem noise.
The actuator object is the trusted side: it holds the secret key, decrypts
the output, recovers the real value, and re-encrypts the requantized output
as the feedback term for the next state update.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .convert import (ConversionResult, ModularController, PlainController,
                      as_fraction, convert_controller)
from .errors import DomainError, ParameterError
from .gsw import GswMatrix, gsw_encrypt_matrix, matvec_bodies
from .lwe import (LweCiphertext, Params, SecretKey, decrypt, encrypt,
                  encrypt_vector)
from .ring import round_half_up


@dataclass
class PlantModel:
    """Discrete-time LTI plant x+ = A x + B (u + w), y = C x.

    ``w`` is an optional deterministic sinusoidal input disturbance that
    keeps the loop signals active over long horizons.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    x0: np.ndarray
    disturbance_amp: float = 0.0
    disturbance_omega: float = 0.0

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=np.float64))
        self.C = np.atleast_2d(np.asarray(self.C, dtype=np.float64))
        self.x0 = np.asarray(self.x0, dtype=np.float64).ravel()

    def disturbance(self, t: int) -> np.ndarray:
        w = self.disturbance_amp * math.sin(self.disturbance_omega * t)
        return np.full(self.B.shape[1], w)


def closed_loop_matrix(plant: PlantModel, ctrl: PlainController) -> np.ndarray:
    """State matrix of the interconnection (plant state stacked over controller state)."""
    top = np.hstack([plant.A + plant.B @ ctrl.J @ plant.C, plant.B @ ctrl.H])
    bot = np.hstack([ctrl.G @ plant.C, ctrl.F])
    return np.vstack([top, bot])


def spectral_radius(M: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def verify_fixture(plant: PlantModel, ctrl: PlainController) -> float:
    """Check the loop is stable; returns the spectral radius."""
    rho = spectral_radius(closed_loop_matrix(plant, ctrl))
    if rho >= 1.0:
        raise ParameterError(f"closed loop is unstable (spectral radius {rho:.4f})")
    return rho


def load_plant(path) -> PlantModel:
    doc = json.loads(Path(path).read_text())
    dist = doc.get("disturbance", {})
    return PlantModel(A=doc["A"], B=doc["B"], C=doc["C"], x0=doc["x0"],
                      disturbance_amp=float(dist.get("amp", 0.0)),
                      disturbance_omega=float(dist.get("omega", 0.0)))


def load_controller(path) -> tuple[PlainController, dict]:
    """Controller JSON plus whatever conversion defaults the file carries."""
    doc = json.loads(Path(path).read_text())
    ctrl = PlainController(F=doc["F"], G=doc["G"], H=doc["H"], J=doc["J"],
                           x0=doc["x0"])
    keys = ("targets", "r", "s", "L", "epsilon", "u_min", "u_max")
    return ctrl, {k: doc[k] for k in keys if k in doc}


# ---------------------------------------------------------------------------
# reference runtimes (the oracles)
# ---------------------------------------------------------------------------

def reference_step(ctrl: PlainController, x: np.ndarray,
                   y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One step of the given real-valued controller."""
    u = ctrl.H @ x + ctrl.J @ y
    return ctrl.F @ x + ctrl.G @ y, u


def plain_integer_step(ic, zbar: Sequence[int],
                       ybar: Sequence[int]) -> tuple[list[int], list[int]]:
    """Exact step of the integer controller (arbitrary-precision arithmetic).

    Returns (next state, output).  The output feedback term is requantized
    through L * round((s^2/L) * u) exactly as the modular runtime does.
    """
    F = ic.Fbar.tolist()
    G = ic.Gbar.tolist()
    R = ic.Rbar.tolist()
    H = ic.Hbar.tolist()
    J = ic.Jbar.tolist()
    ubar = [sum(H[i][j] * zbar[j] for j in range(ic.nx))
            + sum(J[i][j] * ybar[j] for j in range(ic.ny))
            for i in range(ic.nu)]
    s2_over_L = ic.s * ic.s / ic.L
    requant = [ic.L * round_half_up(s2_over_L * u) for u in ubar]
    znext = [sum(F[i][j] * zbar[j] for j in range(ic.nx))
             + sum(G[i][j] * ybar[j] for j in range(ic.ny))
             + sum(R[i][j] * requant[j] for j in range(ic.nu))
             for i in range(ic.nx)]
    return znext, ubar


def plain_modular_step(mc: ModularController, z: np.ndarray,
                       y_q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact step of the modular controller on canonical uint64 residues."""
    mask = np.uint64(mc.modulus.mask)
    u_q = (mc.H @ z + mc.J @ y_q) & mask
    qprime = mc.requantize(u_q)
    z_next = (mc.F @ z + mc.G @ y_q + mc.R @ qprime) & mask
    return z_next, u_q


def integer_quantize_input(y, r, L: int) -> list[int]:
    """Unreduced quantized input L * round(y / r) (the modular Q before mod q)."""
    r = as_fraction(r)
    return [int(L) * round_half_up(Fraction(float(v)) / r)
            for v in np.asarray(y, dtype=np.float64).ravel()]


# ---------------------------------------------------------------------------
# the scaled-up counterexample: why the state matrix must be integer
# ---------------------------------------------------------------------------

def decay_example_reference(horizon: int) -> list[float]:
    """u(1..horizon) of the scalar system x+ = -0.25 x + 1, u = x, x0 = 1."""
    x = 1.0
    out = []
    for _ in range(horizon):
        x = -0.25 * x + 1.0
        out.append(x)
    return out


def decay_example_naive_scaled(horizon: int) -> list[int]:
    """The same system with the state matrix kept as the scaled integer -25.

    Each step multiplies by the scale 100 again, so the integer output
    grows as 100**t and overflows any fixed modulus in finite time.
    """
    z = 1
    out = []
    for t in range(horizon):
        z = -25 * z + 100 ** (t + 1)
        out.append(z)
    return out


def first_overflow_step(q: int, horizon: int = 64) -> int | None:
    """First step at which the naive scaled output leaves (-q, q)."""
    for t, u in enumerate(decay_example_naive_scaled(horizon), start=1):
        if abs(u) >= q:
            return t
    return None


# ---------------------------------------------------------------------------
# encrypted runtime
# ---------------------------------------------------------------------------

class EncryptedController:
    """GSW-encrypted controller matrices plus the LWE-encrypted running state.

    ``output`` computes the encrypted output from the current state;
    ``advance`` folds in the re-encrypted output feedback and steps the
    state.  Both are single modular matrix-vector products on the stacked
    block matrices, so the per-step cost is two mat-vecs regardless of
    dimension split.
    """

    def __init__(self, F_enc: GswMatrix, G_enc: GswMatrix, H_enc: GswMatrix,
                 J_enc: GswMatrix, R_enc: GswMatrix, z_bodies: np.ndarray,
                 mc: ModularController, params: Params):
        self.F_enc, self.G_enc, self.H_enc = F_enc, G_enc, H_enc
        self.J_enc, self.R_enc = J_enc, R_enc
        self.z_bodies = z_bodies
        self.mc = mc
        self.params = params
        self._state_mat = GswMatrix(
            [F_enc.blocks[i] + G_enc.blocks[i] + R_enc.blocks[i]
             for i in range(mc.nx)], params)
        self._out_mat = GswMatrix(
            [H_enc.blocks[i] + J_enc.blocks[i] for i in range(mc.nu)], params)

    def output(self, y_bodies: np.ndarray) -> np.ndarray:
        """Encrypted u(t) from the current encrypted state and input."""
        stacked = np.vstack([self.z_bodies, y_bodies])
        return matvec_bodies(self._out_mat, stacked)

    def advance(self, y_bodies: np.ndarray, u_reenc_bodies: np.ndarray) -> None:
        """Step the encrypted state with input and re-encrypted output feedback."""
        stacked = np.vstack([self.z_bodies, y_bodies, u_reenc_bodies])
        self.z_bodies = matvec_bodies(self._state_mat, stacked)

    def state_ciphertexts(self) -> list[LweCiphertext]:
        return [LweCiphertext(body=row.copy(), params=self.params)
                for row in self.z_bodies]


def encrypt_controller(mc: ModularController, sk: SecretKey, params: Params,
                       rng: np.random.Generator) -> EncryptedController:
    """GSW-encrypt the controller matrices and LWE-encrypt the initial state."""
    if params.modulus != mc.modulus:
        raise ParameterError(
            f"params modulus {params.modulus} != controller modulus {mc.modulus}")
    enc = lambda M: gsw_encrypt_matrix(M, sk, params, rng)
    z_bodies = np.stack([encrypt(int(v), sk, params, rng).body for v in mc.z0])
    return EncryptedController(F_enc=enc(mc.F), G_enc=enc(mc.G), H_enc=enc(mc.H),
                               J_enc=enc(mc.J), R_enc=enc(mc.R),
                               z_bodies=z_bodies, mc=mc, params=params)


def reencrypt_output(u: Sequence[LweCiphertext], sk: SecretKey,
                     mc: ModularController, params: Params,
                     rng: np.random.Generator) -> list[LweCiphertext]:
    """Actuator-side refresh: Enc(Q'(Dec(u))), component-wise."""
    dec = np.array([decrypt(c, sk) for c in u], dtype=np.uint64)
    return encrypt_vector(mc.requantize(dec), sk, params, rng)


def controller_step(ec: EncryptedController, y_enc: Sequence[LweCiphertext],
                    reencrypt: Callable[[list[LweCiphertext]], Sequence[LweCiphertext]],
                    ) -> list[LweCiphertext]:
    """One full encrypted step.

    The output u(t) is computed first, handed to ``reencrypt`` (the
    actuator's decrypt -> requantize -> re-encrypt round trip), and the
    returned u'(t) feeds the state update for t+1.
    """
    y_bodies = np.stack([c.body for c in y_enc])
    u_bodies = ec.output(y_bodies)
    u_cts = [LweCiphertext(body=row.copy(), params=ec.params) for row in u_bodies]
    u_re = reencrypt(u_cts)
    ec.advance(y_bodies, np.stack([c.body for c in u_re]))
    return u_cts


class Actuator:
    """Trusted side of the loop: holds the secret key.

    Decrypts the controller output, recovers the real actuation value
    through the biased-modulo band, and re-encrypts the requantized output
    as feedback.  Band violations are flagged, not fatal: the simulation
    continues so the first violation step can be reported.
    """

    def __init__(self, sk: SecretKey, mc: ModularController, params: Params,
                 rng: np.random.Generator):
        self.sk = sk
        self.mc = mc
        self.params = params
        self.rng = rng

    def process_bodies(self, u_bodies: np.ndarray):
        dec = np.array([(self.sk.dec_row @ row) & np.uint64(self.params.mask)
                        for row in u_bodies], dtype=np.uint64)
        ubar = self.mc.recover_int(dec)
        in_band = self.mc.in_band(ubar)
        scale = self.mc.r * self.mc.s * self.mc.s / self.mc.L
        u_real = np.array([float(scale * v) for v in ubar])
        qprime = self.mc.requantize(dec)
        u_re = np.stack([encrypt(int(v), self.sk, self.params, self.rng).body
                         for v in qprime])
        return u_real, u_re, dec, in_band

    def reencrypt(self, u: Sequence[LweCiphertext]) -> list[LweCiphertext]:
        return reencrypt_output(u, self.sk, self.mc, self.params, self.rng)


# ---------------------------------------------------------------------------
# lockstep closed-loop simulation
# ---------------------------------------------------------------------------

@dataclass
class SimTrace:
    """Per-step records of the lockstep run plus derived summaries."""

    t: list = field(default_factory=list)
    y: list = field(default_factory=list)
    u_ref: list = field(default_factory=list)
    u_modq: list = field(default_factory=list)
    u_enc: list = field(default_factory=list)
    err_modq: list = field(default_factory=list)
    err_enc: list = field(default_factory=list)
    first_band_violation: int | None = None
    params: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "sup_err_modq": max(self.err_modq) if self.err_modq else None,
            "sup_err_enc": max(self.err_enc) if self.err_enc else None,
            "first_band_violation": self.first_band_violation,
            "params": self.params,
        }

    def to_csv(self, path) -> None:
        import csv

        def veccols(name, rows):
            width = len(rows[0]) if rows else 0
            return [f"{name}_{i}" for i in range(width)]

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            header = (["t"] + veccols("y", self.y) + veccols("u_ref", self.u_ref)
                      + veccols("u_modq_recovered", self.u_modq)
                      + veccols("u_enc_recovered", self.u_enc))
            if self.err_modq:
                header.append("err_modq")
            if self.err_enc:
                header.append("err_enc")
            w.writerow(header)
            for i, t in enumerate(self.t):
                row = [t] + list(self.y[i]) + list(self.u_ref[i])
                if self.u_modq:
                    row += list(self.u_modq[i])
                if self.u_enc:
                    row += list(self.u_enc[i])
                if self.err_modq:
                    row.append(self.err_modq[i])
                if self.err_enc:
                    row.append(self.err_enc[i])
                w.writerow(row)


def closed_loop_simulate(plant: PlantModel, ctrl: PlainController,
                         mc: ModularController | None = None,
                         ec: EncryptedController | None = None,
                         actuator: Actuator | None = None,
                         horizon: int = 1000) -> SimTrace:
    """Run the reference (and optionally modular / encrypted) loops in lockstep.

    Each variant drives its own copy of the plant with its own recovered
    output, so the per-step errors measure end-to-end closed-loop deviation
    from the real-valued design.
    """
    if (ec is None) != (actuator is None):
        raise DomainError("encrypted runs need both the controller and the actuator")
    trace = SimTrace()
    xp_ref = plant.x0.copy()
    xc = ctrl.x0.copy()
    if mc is not None:
        xp_mod = plant.x0.copy()
        z = mc.z0.copy()
    if ec is not None:
        xp_enc = plant.x0.copy()

    for t in range(horizon):
        w = plant.disturbance(t)
        y_ref = plant.C @ xp_ref
        xc, u_ref = reference_step(ctrl, xc, y_ref)
        xp_ref = plant.A @ xp_ref + plant.B @ (u_ref + w)

        trace.t.append(t)
        trace.y.append(y_ref)
        trace.u_ref.append(u_ref)

        if mc is not None:
            y_mod = plant.C @ xp_mod
            yq = mc.quantize(y_mod)
            z, u_q = plain_modular_step(mc, z, yq)
            ubar = mc.recover_int(u_q)
            if not mc.in_band(ubar) and trace.first_band_violation is None:
                trace.first_band_violation = t
            scale = mc.r * mc.s * mc.s / mc.L
            u_mod = np.array([float(scale * v) for v in ubar])
            xp_mod = plant.A @ xp_mod + plant.B @ (u_mod + w)
            trace.u_modq.append(u_mod)
            trace.err_modq.append(float(np.max(np.abs(u_mod - u_ref))))

        if ec is not None:
            y_enc_meas = plant.C @ xp_enc
            yq_enc = ec.mc.quantize(y_enc_meas)
            y_bodies = np.stack([encrypt(int(v), actuator.sk, ec.params,
                                         actuator.rng).body for v in yq_enc])
            u_bodies = ec.output(y_bodies)
            u_real, u_re, _, in_band = actuator.process_bodies(u_bodies)
            if not in_band and trace.first_band_violation is None:
                trace.first_band_violation = t
            ec.advance(y_bodies, u_re)
            xp_enc = plant.A @ xp_enc + plant.B @ (u_real + w)
            trace.u_enc.append(u_real)
            trace.err_enc.append(float(np.max(np.abs(u_real - u_ref))))

    return trace


def output_bounds(plant: PlantModel, ctrl: PlainController, horizon: int,
                  margin: float = 0.25) -> tuple[np.ndarray, np.ndarray]:
    """Output band from an un-encrypted reference run, padded by ``margin``."""
    xp = plant.x0.copy()
    xc = ctrl.x0.copy()
    lo = np.full(ctrl.nu, np.inf)
    hi = np.full(ctrl.nu, -np.inf)
    for t in range(horizon):
        y = plant.C @ xp
        xc, u = reference_step(ctrl, xc, y)
        xp = plant.A @ xp + plant.B @ (u + plant.disturbance(t))
        lo = np.minimum(lo, u)
        hi = np.maximum(hi, u)
    span = np.maximum(hi - lo, 1e-6)
    return lo - margin * span, hi + margin * span


def find_scales(plant: PlantModel, ctrl: PlainController, *, epsilon,
                L: int = 1, targets=None, horizon: int = 1000,
                r0=Fraction(1, 100), s0=Fraction(1, 100),
                margin: float = 0.25, max_halvings: int = 12,
                ) -> tuple[Fraction, Fraction, ConversionResult, SimTrace]:
    """Halve r and s from (r0, s0) until the modular loop tracks within epsilon."""
    bounds = output_bounds(plant, ctrl, horizon, margin)
    r, s = as_fraction(r0), as_fraction(s0)
    eps = float(as_fraction(epsilon))
    for _ in range(max_halvings + 1):
        conv = convert_controller(ctrl, u_bounds=bounds, epsilon=epsilon,
                                  r=r, s=s, L=L, targets=targets)
        trace = closed_loop_simulate(plant, ctrl, mc=conv.modular, horizon=horizon)
        sup = trace.summary()["sup_err_modq"]
        if trace.first_band_violation is None and sup is not None and sup <= eps:
            return r, s, conv, trace
        r, s = r / 2, s / 2
    raise ParameterError(
        f"no scales found within {max_halvings} halvings from r0={r0}, s0={s0}")
