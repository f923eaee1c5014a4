"""Conversion of a real linear dynamic controller to a system over Z_q.

Pipeline:

1. ``observable_reduce``    drop unobservable states (same input-output map).
2. ``integer_reparam``      choose R, T so that T(F - R H)T^{-1} is an exact
                            integer matrix; the controller output is treated
                            as an auxiliary input, which leaves the
                            input-output relation unchanged for any R.
3. ``quantize_controller``  scale the remaining matrices and signals by
                            1/r, 1/s and round to integers.
4. ``select_modulus``       size q so the output band fits in one residue
                            window.
5. ``project_mod_q``        reduce everything mod q and attach the
                            quantize / requantize / recover maps.

The message magnifier L multiplies signals only (inputs, state, output
feedback), never the matrices, so cryptosystem noise can later be scaled
away without touching the dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.linalg
import scipy.signal

from .errors import CapacityError, ConditioningError, DomainError, ParameterError
from .gsw import delta_mult
from .lwe import Params
from .ring import (Modulus, biased_mod, mod_reduce, round_half_up,
                   round_nearest)

MAX_LOG2_Q = 62
DEFAULT_COND_THRESHOLD = 1e8
DEFAULT_REPARAM_TOL = 1e-8


def as_fraction(x) -> Fraction:
    """Exact rational from a scale factor given as int, float, str, or Fraction.

    Floats go through their shortest decimal repr, so r=0.01 means exactly
    1/100.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(str(x))


@dataclass(frozen=True)
class PlainController:
    """Real-valued controller x+ = F x + G y, u = H x + J y."""

    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    J: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        F, G, H, J, x0 = (np.atleast_2d(np.asarray(self.F, dtype=np.float64)),
                          np.atleast_2d(np.asarray(self.G, dtype=np.float64)),
                          np.atleast_2d(np.asarray(self.H, dtype=np.float64)),
                          np.atleast_2d(np.asarray(self.J, dtype=np.float64)),
                          np.asarray(self.x0, dtype=np.float64).ravel())
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "x0", x0)
        l = F.shape[0]
        if F.shape != (l, l) or G.shape[0] != l or H.shape[1] != l \
                or J.shape != (H.shape[0], G.shape[1]) or x0.shape != (l,):
            raise DomainError("inconsistent controller dimensions")

    @property
    def nx(self) -> int:
        return self.F.shape[0]

    @property
    def ny(self) -> int:
        return self.G.shape[1]

    @property
    def nu(self) -> int:
        return self.H.shape[0]


def observability_matrix(F: np.ndarray, H: np.ndarray) -> np.ndarray:
    l = F.shape[0]
    rows = [H]
    for _ in range(l - 1):
        rows.append(rows[-1] @ F)
    return np.vstack(rows)


def observability_rank(F, H, tol: float | None = None) -> int:
    """Numerical rank of the observability matrix via pivoted QR."""
    O = observability_matrix(np.atleast_2d(F), np.atleast_2d(H))
    if tol is None:
        tol = 1e-9 * max(np.linalg.norm(O, np.inf), 1.0)
    _, Rf, _ = scipy.linalg.qr(O.T, pivoting=True, mode="economic")
    diag = np.abs(np.diag(Rf))
    return int(np.sum(diag > tol))


def observable_reduce(ctrl: PlainController,
                      tol: float | None = None) -> PlainController:
    """Observable subsystem of the controller (identity when already observable).

    Uses an orthonormal split of the state space: the kernel of the
    observability matrix is dropped; it is F-invariant and invisible at the
    output, so the input-output map is preserved.
    """
    O = observability_matrix(ctrl.F, ctrl.H)
    if tol is None:
        tol = 1e-9 * max(np.linalg.norm(O, np.inf), 1.0)
    Qf, Rf, _ = scipy.linalg.qr(O.T, pivoting=True, mode="full")
    diag = np.abs(np.diag(Rf))
    rank = int(np.sum(diag > tol))
    if rank == ctrl.nx:
        return ctrl
    W1 = Qf[:, :rank].T  # rows: orthonormal basis of the observable subspace
    return PlainController(F=W1 @ ctrl.F @ W1.T, G=W1 @ ctrl.G,
                           H=ctrl.H @ W1.T, J=ctrl.J, x0=W1 @ ctrl.x0)


@dataclass(frozen=True)
class ReparamResult:
    """Similarity transform T and output-injection R making the state matrix integer."""

    T: np.ndarray
    T_inv: np.ndarray
    R: np.ndarray
    Fint: np.ndarray  # int64, exact by construction
    cond_T: float
    targets: tuple[int, ...]


def _companion(k: np.ndarray) -> np.ndarray:
    l = k.size
    M = np.zeros((l, l), dtype=np.int64)
    for i in range(l - 1):
        M[i + 1, i] = 1
    M[:, l - 1] = k
    return M


def integer_reparam(F, H, targets=None, tol: float = DEFAULT_REPARAM_TOL,
                    cond_threshold: float = DEFAULT_COND_THRESHOLD) -> ReparamResult:
    """Find R and T with T(F - R H)T^{-1} an exact integer matrix.

    Single-output pairs go through the observable canonical form: the last
    column of the transformed state matrix is replaced by the integer
    targets (default all zero, i.e. deadbeat).  Multi-output pairs place the
    user-supplied distinct integer eigenvalues on the dual pair and
    diagonalize.  A controller whose F is already integer (and no explicit
    targets) is returned unchanged with R = 0, T = I.
    """
    F = np.atleast_2d(np.asarray(F, dtype=np.float64))
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    l, m = F.shape[0], H.shape[0]

    Fround = np.rint(F)
    if targets is None and np.max(np.abs(F - Fround)) <= tol:
        return ReparamResult(T=np.eye(l), T_inv=np.eye(l),
                             R=np.zeros((l, m)), Fint=Fround.astype(np.int64),
                             cond_T=1.0,
                             targets=tuple(int(v) for v in np.diag(Fround)))

    if observability_rank(F, H) != l:
        raise DomainError("(F, H) is not observable; reduce the controller first")

    if m == 1:
        if targets is None:
            targets = [0] * l
        k = np.asarray([int(t) for t in targets], dtype=np.int64)
        if k.size != l:
            raise DomainError(f"need {l} integer targets, got {k.size}")
        O = observability_matrix(F, H)
        t1 = np.linalg.solve(O, np.eye(l)[:, -1])
        cols = [t1]
        for _ in range(l - 1):
            cols.append(F @ cols[-1])
        T_inv = np.column_stack(cols)
        T = np.linalg.inv(T_inv)
        a = T @ (F @ T_inv[:, -1])  # last column of the canonical state matrix
        R = T_inv @ (a - k)
        R = R.reshape(l, 1)
        Fint = _companion(k)
    else:
        if targets is None:
            raise DomainError(
                "multi-output reparameterization needs explicit distinct integer targets")
        k = np.asarray([int(t) for t in targets], dtype=np.int64)
        if k.size != l or len(set(k.tolist())) != l:
            raise DomainError(f"need {l} distinct integer targets, got {k.tolist()}")
        placed = scipy.signal.place_poles(F.T, H.T, k.astype(np.float64))
        R = placed.gain_matrix.T
        evals, vecs = np.linalg.eig(F - R @ H)
        if np.max(np.abs(evals.imag)) > 1e-9:
            raise ConditioningError("placed eigenvalues are not real")
        order = np.argsort(evals.real)
        korder = np.argsort(k)
        perm = np.empty(l, dtype=int)
        perm[korder] = order
        V = vecs[:, perm].real
        T = np.linalg.inv(V)
        T_inv = V
        Fint = np.diag(k)

    cond_T = float(np.linalg.cond(T))
    if cond_T > cond_threshold:
        raise ConditioningError(
            f"transform condition number {cond_T:.3e} exceeds {cond_threshold:.1e}; "
            "pick different integer eigenvalue targets")
    achieved = T @ (F - R @ H) @ T_inv
    err = float(np.max(np.abs(achieved - Fint)))
    if err > max(tol, 1e-12 * cond_T):
        raise ConditioningError(
            f"integer state matrix off by {err:.3e} (tolerance {tol:.1e})")
    return ReparamResult(T=T, T_inv=T_inv, R=R, Fint=Fint.astype(np.int64),
                         cond_T=cond_T, targets=tuple(int(t) for t in k))


@dataclass(frozen=True)
class IntegerController:
    """Controller over Z after scaling by 1/r, 1/s and rounding.

    Fbar carries no scale factor; all other matrices absorb 1/s (1/s^2 for
    Jbar) and signals are magnified by L.
    """

    Fbar: np.ndarray  # int64
    Gbar: np.ndarray
    Rbar: np.ndarray
    Hbar: np.ndarray
    Jbar: np.ndarray
    z0bar: tuple[int, ...]
    r: Fraction
    s: Fraction
    L: int

    @property
    def nx(self) -> int:
        return self.Fbar.shape[0]

    @property
    def ny(self) -> int:
        return self.Gbar.shape[1]

    @property
    def nu(self) -> int:
        return self.Hbar.shape[0]


def _round_frac_matrix(M: np.ndarray, denom: Fraction) -> np.ndarray:
    out = np.empty(M.shape, dtype=np.int64)
    flat = out.reshape(-1)
    for i, v in enumerate(np.asarray(M, dtype=np.float64).reshape(-1)):
        flat[i] = round_half_up(Fraction(float(v)) / denom)
    return out


def quantize_controller(ctrl: PlainController, rep: ReparamResult,
                        r, s, L: int) -> IntegerController:
    """Scale and round the transformed controller into integers."""
    r, s = as_fraction(r), as_fraction(s)
    if r <= 0 or s <= 0 or int(L) < 1:
        raise ParameterError("need r > 0, s > 0, L >= 1")
    L = int(L)
    T, R = rep.T, rep.R
    Gbar = _round_frac_matrix(T @ (ctrl.G - R @ ctrl.J), s)
    Rbar = _round_frac_matrix(T @ R, s)
    Hbar = _round_frac_matrix(ctrl.H @ rep.T_inv, s)
    Jbar = _round_frac_matrix(ctrl.J, s * s)
    z0 = T @ ctrl.x0
    z0bar = tuple(L * round_half_up(Fraction(float(v)) / (r * s)) for v in z0)
    return IntegerController(Fbar=rep.Fint.astype(np.int64), Gbar=Gbar, Rbar=Rbar,
                             Hbar=Hbar, Jbar=Jbar, z0bar=z0bar, r=r, s=s, L=L)


def select_modulus(u_bounds, epsilon, r, s, L: int) -> Modulus:
    """Smallest power-of-two q with q >= max_i L*(u_i^max - u_i^min + 2*eps)/(r*s^2) + 1."""
    u_min, u_max = u_bounds
    u_min = [as_fraction(float(v)) for v in np.asarray(u_min).ravel()]
    u_max = [as_fraction(float(v)) for v in np.asarray(u_max).ravel()]
    eps, r, s = as_fraction(epsilon), as_fraction(r), as_fraction(s)
    if any(hi < lo for lo, hi in zip(u_min, u_max)):
        raise DomainError("u_max must dominate u_min component-wise")
    worst = max(int(L) * (hi - lo + 2 * eps) / (r * s * s)
                for lo, hi in zip(u_min, u_max))
    bound = worst + 1
    log2_q = 1
    while (1 << log2_q) < bound:
        log2_q += 1
        if log2_q > MAX_LOG2_Q:
            raise CapacityError(
                f"required modulus exceeds 2^{MAX_LOG2_Q}; increase s or reduce L")
    return Modulus(log2_q)


@dataclass(frozen=True)
class ModularController:
    """Controller over Z_q plus the quantization and recovery maps.

    The biased-modulo band [band_bottom_i, band_bottom_i + q) is where the
    scaled outputs live; as long as they stay inside it, the integer output
    is recovered exactly and the real output to within epsilon.
    """

    F: np.ndarray  # uint64 matrices, canonical residues
    G: np.ndarray
    H: np.ndarray
    J: np.ndarray
    R: np.ndarray
    z0: np.ndarray  # uint64 vector
    modulus: Modulus
    r: Fraction
    s: Fraction
    L: int
    epsilon: Fraction
    u_min: tuple[Fraction, ...]
    u_max: tuple[Fraction, ...]

    @property
    def nx(self) -> int:
        return self.F.shape[0]

    @property
    def ny(self) -> int:
        return self.G.shape[1]

    @property
    def nu(self) -> int:
        return self.H.shape[0]

    @property
    def band_bottom(self) -> tuple[Fraction, ...]:
        rs2 = self.r * self.s * self.s
        return tuple(self.L * (lo - self.epsilon) / rs2 for lo in self.u_min)

    @property
    def band_top(self) -> tuple[Fraction, ...]:
        rs2 = self.r * self.s * self.s
        return tuple(self.L * (hi + self.epsilon) / rs2 for hi in self.u_max)

    def quantize(self, y) -> np.ndarray:
        return quantize_input(y, self.r, self.L, self.modulus)

    def requantize(self, u_q) -> np.ndarray:
        return requantize_output(u_q, self)

    def recover(self, u_q) -> np.ndarray:
        return recover_output(u_q, self)

    def recover_int(self, u_q) -> list[int]:
        """The unreduced integer output via the biased modulo band."""
        return biased_mod(u_q, self.modulus, list(self.band_bottom))

    def in_band(self, ubar) -> bool:
        return all(v <= top for v, top in zip(ubar, self.band_top))


def project_mod_q(ic: IntegerController, modulus: Modulus,
                  u_bounds, epsilon) -> ModularController:
    """Reduce the integer controller mod q and attach band metadata."""
    u_min, u_max = u_bounds
    return ModularController(
        F=mod_reduce(ic.Fbar, modulus), G=mod_reduce(ic.Gbar, modulus),
        H=mod_reduce(ic.Hbar, modulus), J=mod_reduce(ic.Jbar, modulus),
        R=mod_reduce(ic.Rbar, modulus),
        z0=mod_reduce(list(ic.z0bar), modulus),
        modulus=modulus, r=ic.r, s=ic.s, L=ic.L,
        epsilon=as_fraction(epsilon),
        u_min=tuple(as_fraction(float(v)) for v in np.asarray(u_min).ravel()),
        u_max=tuple(as_fraction(float(v)) for v in np.asarray(u_max).ravel()))


def quantize_input(y, r, L: int, modulus: Modulus) -> np.ndarray:
    """Q(y) = L * round(y / r) mod q, component-wise."""
    r = as_fraction(r)
    if r <= 0:
        raise ParameterError("r must be > 0")
    vals = np.asarray(y, dtype=np.float64).ravel()
    out = [(int(L) * round_half_up(Fraction(float(v)) / r)) % modulus.q for v in vals]
    return np.array(out, dtype=np.uint64)


def requantize_output(u_q, mc: ModularController) -> np.ndarray:
    """Q'(u) = L * round((s^2/L) * biased_mod(u)) mod q.

    Recovers the unreduced output first (the rounding is not compatible
    with modular arithmetic), rescales by s^2, and re-magnifies by L.
    """
    ubar = mc.recover_int(u_q)
    s2_over_L = mc.s * mc.s / mc.L
    out = [(mc.L * round_half_up(s2_over_L * v)) % mc.modulus.q for v in ubar]
    return np.array(out, dtype=np.uint64)


def recover_output(u_q, mc: ModularController) -> np.ndarray:
    """g(u) = (r*s^2/L) * biased_mod(u): the real-valued controller output."""
    ubar = mc.recover_int(u_q)
    scale = mc.r * mc.s * mc.s / mc.L
    return np.array([float(scale * v) for v in ubar], dtype=np.float64)


def security_estimate(n: int, q: int, sigma: float) -> float:
    """Bit-security lambda for LWE dimension n, modulus q, noise sigma."""
    if not q > sigma > 0:
        raise ParameterError("need q > sigma > 0")
    ratio = math.log(math.sqrt(2 * math.pi) * sigma / q)
    return 7.2 * n * math.log(q) / (ratio * ratio) - 110.0


def min_n(lam: float, q: int, sigma: float) -> int:
    """Smallest key dimension n achieving lambda-bit security."""
    if not q > sigma > 0:
        raise ParameterError("need q > sigma > 0")
    ratio = math.log(math.sqrt(2 * math.pi) * sigma / q)
    need = (lam + 110.0) / 7.2 * ratio * ratio
    return math.ceil(need / math.log(q))


@dataclass(frozen=True)
class ConversionResult:
    original: PlainController
    reduced: PlainController
    reparam: ReparamResult
    integer: IntegerController
    modular: ModularController
    report: dict = field(default_factory=dict)


def convert_controller(ctrl: PlainController, *, u_bounds, epsilon,
                       r, s, L: int = 1, targets=None,
                       log2_q: int | None = None,
                       obs_tol: float | None = None,
                       reparam_tol: float = DEFAULT_REPARAM_TOL,
                       cond_threshold: float = DEFAULT_COND_THRESHOLD) -> ConversionResult:
    """Full conversion pipeline from a real controller to a modular one."""
    reduced = observable_reduce(ctrl, tol=obs_tol)
    rep = integer_reparam(reduced.F, reduced.H, targets=targets,
                          tol=reparam_tol, cond_threshold=cond_threshold)
    ic = quantize_controller(reduced, rep, r, s, L)
    if log2_q is None:
        modulus = select_modulus(u_bounds, epsilon, ic.r, ic.s, ic.L)
    else:
        modulus = Modulus(log2_q)
        needed = select_modulus(u_bounds, epsilon, ic.r, ic.s, ic.L)
        if modulus.q < needed.q:
            raise CapacityError(
                f"requested q={modulus} below the required {needed}")
    mc = project_mod_q(ic, modulus, u_bounds, epsilon)
    report = {
        "state_dim": reduced.nx,
        "reduced_from": ctrl.nx,
        "observability_rank": observability_rank(ctrl.F, ctrl.H, tol=obs_tol),
        "cond_T": rep.cond_T,
        "targets": list(rep.targets),
        "log2_q": modulus.log2_q,
        "r": str(ic.r), "s": str(ic.s), "L": ic.L,
        "epsilon": float(as_fraction(epsilon)),
        "u_min": [float(v) for v in mc.u_min],
        "u_max": [float(v) for v in mc.u_max],
    }
    return ConversionResult(original=ctrl, reduced=reduced, reparam=rep,
                            integer=ic, modular=mc, report=report)


def error_budget(conv: ConversionResult, params: Params, r, s, L: int,
                 M: float, epsilon: float) -> dict:
    """Conservative quantization (alpha) and cryptosystem (beta) error bounds.

    ``M`` bounds the supremum norms of the closed-loop signals; alpha bounds
    the perturbation injected by rounding with steps r and s, beta the
    perturbation injected by encryption noise after scaling back by r/L.
    """
    r, s = float(as_fraction(r)), float(as_fraction(s))
    L = int(L)
    rep, red, ic = conv.reparam, conv.reduced, conv.integer
    l, p, m = red.nx, red.ny, red.nu
    norm = lambda A: float(np.linalg.norm(np.atleast_2d(A), np.inf)) if np.size(A) else 0.0
    T_inv_n, TR_n = norm(rep.T_inv), norm(rep.T @ rep.R)
    My, Mu = float(M), float(M) + float(epsilon)
    Mz = norm(rep.T) * (float(M) + float(epsilon))
    ez = (norm(rep.T @ (red.G - rep.R @ red.J)) / 2 * r + p / 2 * My * s
          + p / 4 * r * s + TR_n / 2 * r + m / 2 * Mu * s + m / 4 * r * s)
    eu = (l / 2 * s * Mz + norm(red.J) / 2 * r + p / 2 * My * s * s
          + p / 4 * r * s * s)
    e0 = r * s / 2
    alpha = max(T_inv_n * ez + TR_n * eu, eu, T_inv_n * e0)
    sG = float(ic.s) * (norm(ic.Gbar) + norm(ic.Rbar))
    s2J = float(ic.s) ** 2 * norm(ic.Jbar)
    noise = params.noise
    beta = (r / L) * max(T_inv_n, TR_n, 1.0) * (
        (max(sG, s2J) + 1.0) * noise.bound + (l + p + m) * delta_mult(params))
    return {"alpha": float(alpha), "beta": float(beta)}
