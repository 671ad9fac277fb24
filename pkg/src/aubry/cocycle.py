"""Transfer-matrix cocycles over toral rotations.

Orbit products are renormalized at every step; the removed scales give the
Lyapunov exponent and the accumulated angle of the first column gives the
fibered rotation number.

Angle lift: for A = R_phi P (polar form), a positive-definite P turns every
direction by less than a quarter turn, so the continuous lift of the
projective increment is phi + wrap(delta - phi) with wrap into (-1/2, 1/2].
For Schrodinger matrices phi = atan2(2, E - v)/2pi lies in (0, 1/2) and is a
continuous function of (x, E), so no branch ever has to be guessed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from numba import njit

from .errors import LiftBranchAmbiguity, ValidationError
from .model import Frequency, TrigPotential, eval_potential, orbit_points, phase_grid
from .parallel import pmap

TWO_PI = 2.0 * math.pi
BRANCH_TOL = 1e-9
MIN_STEPS = 1000


def transfer_matrix(v: TrigPotential, E: float, x) -> np.ndarray:
    return np.array([[E - eval_potential(v, x), -1.0], [1.0, 0.0]])


@dataclass(frozen=True, eq=False)
class Cocycle:
    """(alpha, A): x -> x + alpha, w -> A(x) w.

    ``matrix_map`` takes an array of points (n, d) and returns (n, 2, 2).
    Schrodinger cocycles carry ``potential`` and ``energy`` and use a fast path.
    """

    alpha: Frequency
    matrix_map: Callable
    potential: Optional[TrigPotential] = None
    energy: Optional[float] = None

    @property
    def is_schrodinger(self):
        return self.potential is not None

    def matrices(self, xs):
        return np.asarray(self.matrix_map(np.atleast_2d(xs)), dtype=float)


def schrodinger_cocycle(v: TrigPotential, alpha: Frequency, E: float) -> Cocycle:
    def mats(xs):
        vals = np.atleast_1d(eval_potential(v, xs))
        out = np.zeros((vals.size, 2, 2))
        out[:, 0, 0] = E - vals
        out[:, 0, 1] = -1.0
        out[:, 1, 0] = 1.0
        return out
    return Cocycle(alpha, mats, v, float(E))


@dataclass(frozen=True, eq=False)
class OrbitAccumulator:
    product: np.ndarray  # normalized to Frobenius norm sqrt(2), the norm of the identity
    log_norm_sum: float
    angle_lift: float
    steps: int
    x0: tuple
    ambiguous: int = 0

    def det_drift(self) -> float:
        """|det(product) - exp(-2 log_norm_sum)|, zero in exact arithmetic."""
        return abs(float(np.linalg.det(self.product)) - math.exp(-2.0 * self.log_norm_sum))


# -- kernels ------------------------------------------------------------------

@njit(cache=True)
def _wrap(t):
    # into (-1/2, 1/2]
    return t - np.ceil(t - 0.5)


@njit(cache=True)
def _schrodinger_run(vv, E, M, logs, lift, half, tol):
    """Advance one orbit. vv: potential values along the orbit.

    Returns (log_sum, lift, log_at_half, lift_at_half, ambiguous_count); M updated in place.
    """
    m00 = M[0, 0]
    m01 = M[0, 1]
    m10 = M[1, 0]
    m11 = M[1, 1]
    lh = logs
    ah = lift
    amb = 0
    for j in range(vv.size):
        if j == half:
            lh = logs
            ah = lift
        c = E - vv[j]
        phi = math.atan2(2.0, c) / 6.283185307179586
        n00 = c * m00 - m10
        n01 = c * m01 - m11
        n10 = m00
        n11 = m01
        cross = m00 * n10 - m10 * n00
        dot = m00 * n00 + m10 * n10
        dev = math.atan2(cross, dot) / 6.283185307179586 - phi
        dev = dev - math.ceil(dev - 0.5)
        if abs(dev) >= 0.5 - tol:
            amb += 1
        lift += phi + dev
        s = math.sqrt(0.5 * (n00 * n00 + n01 * n01 + n10 * n10 + n11 * n11))
        logs += math.log(s)
        m00 = n00 / s
        m01 = n01 / s
        m10 = n10 / s
        m11 = n11 / s
    if half >= vv.size:
        lh = logs
        ah = lift
    M[0, 0] = m00
    M[0, 1] = m01
    M[1, 0] = m10
    M[1, 1] = m11
    return logs, lift, lh, ah, amb


@njit(cache=True)
def _generic_run(A, M, logs, lift, half, tol):
    m00 = M[0, 0]
    m01 = M[0, 1]
    m10 = M[1, 0]
    m11 = M[1, 1]
    lh = logs
    ah = lift
    amb = 0
    for j in range(A.shape[0]):
        if j == half:
            lh = logs
            ah = lift
        a = A[j, 0, 0]
        b = A[j, 0, 1]
        c = A[j, 1, 0]
        d = A[j, 1, 1]
        phi = math.atan2(c - b, a + d) / 6.283185307179586
        if abs(abs(phi) - 0.5) < tol:
            amb += 1
        n00 = a * m00 + b * m10
        n01 = a * m01 + b * m11
        n10 = c * m00 + d * m10
        n11 = c * m01 + d * m11
        cross = m00 * n10 - m10 * n00
        dot = m00 * n00 + m10 * n10
        dev = math.atan2(cross, dot) / 6.283185307179586 - phi
        dev = dev - math.ceil(dev - 0.5)
        if abs(dev) >= 0.5 - tol:
            amb += 1
        lift += phi + dev
        s = math.sqrt(0.5 * (n00 * n00 + n01 * n01 + n10 * n10 + n11 * n11))
        logs += math.log(s)
        m00 = n00 / s
        m01 = n01 / s
        m10 = n10 / s
        m11 = n11 / s
    if half >= A.shape[0]:
        lh = logs
        ah = lift
    M[0, 0] = m00
    M[0, 1] = m01
    M[1, 0] = m10
    M[1, 1] = m11
    return logs, lift, lh, ah, amb


@njit(cache=True)
def _sweep(vv_all, energies, burn, half):
    # vv_all: (P, burn + n) potential values; returns per (P, K) log sums and lifts
    P, total = vv_all.shape
    K = energies.size
    out = np.zeros((5, P, K))
    M = np.empty((2, 2))
    for p in range(P):
        for k in range(K):
            M[0, 0] = 1.0
            M[0, 1] = 0.0
            M[1, 0] = 0.0
            M[1, 1] = 1.0
            _schrodinger_run(vv_all[p, :burn], energies[k], M, 0.0, 0.0, burn, 1e-9)
            logs, lift, lh, ah, amb = _schrodinger_run(vv_all[p, burn:], energies[k], M, 0.0, 0.0, half, 1e-9)
            out[0, p, k] = logs
            out[1, p, k] = lift
            out[2, p, k] = lh
            out[3, p, k] = ah
            out[4, p, k] = amb
    return out


# -- single orbits ------------------------------------------------------------

def iterate(c: Cocycle, x0, n: int, start: Optional[OrbitAccumulator] = None) -> OrbitAccumulator:
    """Product A(x0 + (n-1) alpha) ... A(x0) with per-step renormalization.

    Passing ``start`` continues a previous accumulator from where it stopped.
    """
    if n < 1:
        raise ValidationError("need at least one step")
    x0 = np.atleast_1d(np.asarray(x0 if start is None else start.x0, dtype=float))
    offset = 0 if start is None else start.steps
    M = np.eye(2) if start is None else start.product.copy()
    logs = 0.0 if start is None else start.log_norm_sum
    lift = 0.0 if start is None else start.angle_lift
    xs = orbit_points(x0, c.alpha.array, n, start=offset)
    if c.is_schrodinger:
        vv = np.ascontiguousarray(np.atleast_1d(eval_potential(c.potential, xs)))
        logs, lift, _, _, amb = _schrodinger_run(vv, c.energy, M, logs, lift, n, BRANCH_TOL)
    else:
        A = np.ascontiguousarray(c.matrices(xs))
        logs, lift, _, _, amb = _generic_run(A, M, logs, lift, n, BRANCH_TOL)
    prev = 0 if start is None else start.ambiguous
    return OrbitAccumulator(M, logs, lift, offset + n, tuple(x0), prev + amb)


# -- averaged invariants ------------------------------------------------------

class Averaged(NamedTuple):
    value: float
    half: float
    delta: float


def _phase_mean(a):
    # correctly rounded, hence independent of any partition of the phase axis
    return math.fsum(a.tolist()) / len(a)


def _fold(r):
    r = r % 1.0
    return min(r, 1.0 - r)


def _orbit_values(v, alpha, phases, total):
    x0 = phase_grid(phases, alpha.d)
    vv = np.empty((phases, total))
    for p in range(phases):
        vv[p] = np.atleast_1d(eval_potential(v, orbit_points(x0[p], alpha.array, total)))
    return vv


def _sweep_block(args):
    vv, energies, burn, half = args
    return _sweep(vv, energies, burn, half)


def _run_sweep(v, alpha, energies, n, phases, burn, workers=1, block=8):
    energies = np.ascontiguousarray(np.atleast_1d(energies), dtype=float)
    vv = _orbit_values(v, alpha, phases, burn + n)
    blocks = [energies[i:i + block] for i in range(0, energies.size, block)]
    parts = pmap(_sweep_block, [(vv, b, burn, n // 2) for b in blocks], workers)
    return np.concatenate(parts, axis=2) if parts else np.zeros((5, phases, 0))


class SweepResult(NamedTuple):
    energies: np.ndarray
    lyapunov: np.ndarray
    lyapunov_half: np.ndarray
    rotation: np.ndarray
    rotation_half: np.ndarray
    ambiguous: np.ndarray


def sweep(v: TrigPotential, alpha: Frequency, energies, n=100_000, phases=8, burn=None, workers=1) -> SweepResult:
    """Lyapunov exponent and folded rotation number on an energy grid.

    Each value is a phase-grid average; the ``*_half`` arrays are the same
    averages over the first n/2 steps (convergence diagnostic).
    """
    if n < MIN_STEPS:
        raise ValidationError(f"need n >= {MIN_STEPS} iterates, got {n}")
    burn = n // 100 if burn is None else burn
    out = _run_sweep(v, alpha, energies, n, phases, burn, workers)
    K = out.shape[2]
    h = n // 2
    le = np.array([_phase_mean(out[0, :, k]) / n for k in range(K)])
    le_h = np.array([_phase_mean(out[2, :, k]) / h for k in range(K)])
    rho = np.array([_fold(_phase_mean(out[1, :, k]) / n) for k in range(K)])
    rho_h = np.array([_fold(_phase_mean(out[3, :, k]) / h) for k in range(K)])
    amb = out[4].sum(axis=0).astype(int)
    return SweepResult(np.atleast_1d(np.asarray(energies, dtype=float)), le, le_h, rho, rho_h, amb)


def _generic_average(c: Cocycle, n, phases, burn):
    x0 = phase_grid(phases, c.alpha.d)
    logs, lifts, lh, ah = [], [], [], []
    for p in range(phases):
        acc = iterate(c, x0[p], burn) if burn else None
        M = np.eye(2) if acc is None else acc.product.copy()
        xs = orbit_points(x0[p], c.alpha.array, n, start=burn)
        A = np.ascontiguousarray(c.matrices(xs))
        l, a, l2, a2, amb = _generic_run(A, M, 0.0, 0.0, n // 2, BRANCH_TOL)
        if amb:
            raise LiftBranchAmbiguity(f"{amb} steps landed within {BRANCH_TOL} of the lift branch cut")
        logs.append(l)
        lifts.append(a)
        lh.append(l2)
        ah.append(a2)
    return np.array(logs), np.array(lifts), np.array(lh), np.array(ah)


def _check(n):
    if n < MIN_STEPS:
        raise ValidationError(f"need n >= {MIN_STEPS} iterates, got {n}")


def lyapunov_exponent(c: Cocycle, n=100_000, phases=8, burn=None) -> Averaged:
    _check(n)
    burn = n // 100 if burn is None else burn
    if c.is_schrodinger:
        r = sweep(c.potential, c.alpha, [c.energy], n, phases, burn)
        val, half = float(r.lyapunov[0]), float(r.lyapunov_half[0])
    else:
        logs, _, lh, _ = _generic_average(c, n, phases, burn)
        val, half = _phase_mean(logs) / n, _phase_mean(lh) / (n // 2)
    return Averaged(val, half, abs(val - half))


def rotation_number(c: Cocycle, n=100_000, phases=8, burn=None) -> Averaged:
    """Fibered rotation number folded into [0, 1/2]."""
    _check(n)
    burn = n // 100 if burn is None else burn
    if c.is_schrodinger:
        r = sweep(c.potential, c.alpha, [c.energy], n, phases, burn)
        if r.ambiguous[0]:
            raise LiftBranchAmbiguity("lift increment at the branch cut")
        val, half = float(r.rotation[0]), float(r.rotation_half[0])
    else:
        _, lifts, _, ah = _generic_average(c, n, phases, burn)
        val, half = _fold(_phase_mean(lifts) / n), _fold(_phase_mean(ah) / (n // 2))
    return Averaged(val, half, abs(val - half))


def ids_from_rotation(rho):
    """N(E) = 1 - 2 rho(E)."""
    return 1.0 - 2.0 * np.asarray(rho)


__all__ = [
    "Cocycle", "OrbitAccumulator", "Averaged", "SweepResult", "transfer_matrix", "schrodinger_cocycle",
    "iterate", "lyapunov_exponent", "rotation_number", "sweep", "ids_from_rotation",
]

