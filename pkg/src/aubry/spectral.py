"""Integrated density of states, gaps, gap labels and the inverse of 1 - 2 rho."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import NoLabelFound, OutOfRange, ValidationError
from .linalg import band_counts, eigh_hermitian, eigh_tridiagonal, inverse_iteration, sturm_counts_batch
from .model import Frequency, TrigPotential, build_direct_window, build_dual_window, phase_grid
from .parallel import pmap

PLATEAU_FACTOR = 1.5
MAX_K = 50


@dataclass(frozen=True, eq=False)
class IdsCurve:
    energies: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.energies.shape != self.values.shape:
            raise ValidationError("energies and values differ in shape")
        if np.any(np.diff(self.energies) < 0):
            raise ValidationError("energy grid must be sorted")

    @property
    def sites(self) -> int:
        return int(self.meta.get("sites", 1))

    @property
    def tol(self) -> float:
        """Counting tolerance 1.5/N of the underlying windows."""
        return PLATEAU_FACTOR / self.sites

    def __call__(self, E):
        return np.interp(E, self.energies, self.values)

    def sup_distance(self, other: "IdsCurve") -> float:
        if not np.array_equal(self.energies, other.energies):
            raise ValidationError("curves live on different grids")
        return float(np.abs(self.values - other.values).max())


def spectral_bound(v: TrigPotential, coupling=0.0, hopping=2.0) -> float:
    """Radius of a disc containing the spectrum: hopping + sum |vhat| + 2 coupling."""
    return hopping + v.l1_norm + 2.0 * coupling


def energy_grid(v: TrigPotential, count, coupling=0.0, hopping=2.0, pad=0.05):
    r = spectral_bound(v, coupling, hopping) + pad
    return np.linspace(-r, r, count)


def _check_grid(grid):
    grid = np.ascontiguousarray(np.atleast_1d(np.asarray(grid, dtype=float)))
    if grid.size == 0:
        raise ValidationError("empty energy grid")
    if np.any(np.diff(grid) < 0):
        raise ValidationError("energy grid must be sorted")
    return grid


# -- direct windows -------------------------------------------------------------

def _direct_block(args):
    v, alpha, xs, grid, N = args
    D = np.stack([build_direct_window(v, alpha, x, N).diag for x in xs])
    return sturm_counts_batch(D, np.ones(N - 1), grid)


def _reduce(parts, K):
    total = np.zeros(K, dtype=np.int64)
    for p in parts:  # integer sums: exact in any order
        total += p
    return total


def ids_direct(v: TrigPotential, alpha: Frequency, grid, N=2000, phases=64, workers=1, block=8) -> IdsCurve:
    """Phase-averaged eigenvalue counting of Dirichlet windows of H(x)."""
    grid = _check_grid(grid)
    if N < 100:
        raise ValidationError("window must have at least 100 sites")
    xs = phase_grid(phases, alpha.d)
    tasks = [(v, alpha, xs[i:i + block], grid, N) for i in range(0, phases, block)]
    counts = _reduce(pmap(_direct_block, tasks, workers), grid.size)
    vals = counts / float(N * phases)
    return IdsCurve(grid, vals, {"kind": "direct", "sites": N, "phases": phases})


# -- dual windows ---------------------------------------------------------------

def _dual_block(args):
    v, alpha, thetas, grid, box, coupling = args
    out = np.zeros(grid.size, dtype=np.int64)
    if alpha.d == 1 and v.degree <= 1:
        wins = [build_dual_window(v, alpha, th, box, coupling) for th in thetas]
        t0, _ = wins[0].tridiag()
        return sturm_counts_batch(np.stack([w.full_diag() for w in wins]), t0.offdiag, grid)
    for th in thetas:
        w = build_dual_window(v, alpha, th, box, coupling)
        if alpha.d == 1:
            out += band_counts(w.band(), grid)
        else:
            vals = eigh_hermitian(w.dense(), want_vectors=False).values
            out += np.searchsorted(vals, grid, side="left")
    return out


def ids_dual(v: TrigPotential, alpha: Frequency, thetas, grid, box, coupling=1.0, workers=1, block=8) -> IdsCurve:
    """Counting IDS of dual windows averaged over ``thetas`` phases (count or explicit array)."""
    grid = _check_grid(grid)
    if np.isscalar(thetas):
        thetas = phase_grid(int(thetas), 1)[:, 0]
    thetas = np.asarray(thetas, dtype=float)
    shape = tuple(int(s) for s in np.atleast_1d(box))
    S = int(np.prod(shape))
    if alpha.d == 1 and S > 4000:
        raise ValidationError("one-dimensional dual boxes are limited to 4000 sites")
    if alpha.d == 2 and S > 1600:
        raise ValidationError("two-dimensional dual boxes are limited to 40x40")
    if alpha.d > 2:
        raise ValidationError("dual IDS supports d = 1 or 2")
    tasks = [(v, alpha, thetas[i:i + block], grid, shape, coupling) for i in range(0, thetas.size, block)]
    counts = _reduce(pmap(_dual_block, tasks, workers), grid.size)
    vals = counts / float(S * thetas.size)
    return IdsCurve(grid, vals, {"kind": "dual", "sites": S, "phases": int(thetas.size), "box": shape})


# -- gaps and labels ------------------------------------------------------------

class Gap(NamedTuple):
    lo: float
    hi: float
    n_gap: float
    label: Optional[tuple] = None
    mismatch: Optional[float] = None

    @property
    def width(self):
        return self.hi - self.lo


@dataclass(frozen=True)
class GapReport:
    gaps: tuple
    tol: float

    def __len__(self):
        return len(self.gaps)

    def __iter__(self):
        return iter(self.gaps)


def find_gaps(curve: IdsCurve, min_width=0.05, tol=None) -> GapReport:
    """Maximal energy intervals of width >= min_width on which the curve is flat.

    The flat parts below and above the spectrum are not gaps and are dropped.
    """
    tol = curve.tol if tol is None else tol
    E, N = curve.energies, curve.values
    gaps = []
    i, K = 0, E.size
    while i < K:
        # largest j with N[j] - N[i] <= tol (N is nondecreasing)
        j = int(np.searchsorted(N, N[i] + tol, side="right")) - 1
        if j > i and E[j] - E[i] >= min_width:
            lo_bound = N[i] <= tol
            hi_bound = N[j] >= 1.0 - tol
            if not (lo_bound or hi_bound):
                gaps.append(Gap(float(E[i]), float(E[j]), float(np.median(N[i:j + 1]))))
            i = j + 1
        else:
            i += 1
    return GapReport(tuple(gaps), tol)


def _frac_dist(t):
    t = np.mod(t, 1.0)
    return np.minimum(t, 1.0 - t)


def gap_label(n_gap: float, alpha: Frequency, k_max=10, counting_tol=1e-3):
    """Integer vector k with N_gap = k.alpha mod 1 (equivalently 2 rho = -k.alpha mod 1).

    Exhaustive search over |k_i| <= k_max; ties go to the smallest max|k_i|.
    Raises NoLabelFound when the best mismatch exceeds 10 counting tolerances.
    """
    if not 0 <= k_max <= MAX_K:
        raise ValidationError(f"k_max must lie in [0, {MAX_K}]")
    a = alpha.array
    rng = np.arange(-k_max, k_max + 1)
    ks = np.array(list(itertools.product(rng, repeat=alpha.d)), dtype=np.int64)
    mis = _frac_dist(n_gap - ks @ a)
    order = np.lexsort((np.abs(ks).sum(axis=1), np.abs(ks).max(axis=1), np.round(mis, 15)))
    best = order[0]
    k, m = tuple(int(c) for c in ks[best]), float(mis[best])
    if m > 10.0 * counting_tol:
        raise NoLabelFound(f"plateau {n_gap:.6f}: best label {k} misses by {m:.2e}")
    return k, m


def label_gaps(report: GapReport, alpha: Frequency, k_max=10, counting_tol=None) -> GapReport:
    tol = report.tol if counting_tol is None else counting_tol
    out = []
    for g in report:
        k, m = gap_label(g.n_gap, alpha, k_max, tol)
        out.append(g._replace(label=k, mismatch=m))
    return GapReport(tuple(out), report.tol)


# -- inverse rotation number ----------------------------------------------------

class InverseValue(NamedTuple):
    energy: float
    gap_hit: bool


def fold_angle(theta):
    """Even, 1-periodic reduction of theta into [0, 1/2]."""
    t = abs(float(theta)) % 1.0  # abs first so that theta and -theta agree bitwise
    return min(t, 1.0 - t)


def inverse_rotation_number(curve: IdsCurve, theta: float) -> InverseValue:
    """E(theta) solving 1 - 2 theta = N(E), extended evenly and 1-periodically.

    On a plateau wider than two grid cells the plateau midpoint is returned
    with ``gap_hit`` set.
    """
    if not math.isfinite(theta):
        raise OutOfRange("theta must be finite")
    target = 1.0 - 2.0 * fold_angle(theta)
    E, N = curve.energies, curve.values
    if target < N[0] - curve.tol or target > N[-1] + curve.tol:
        raise OutOfRange(f"N = {target:.6f} not covered by the curve")
    tol = curve.tol
    lo = int(np.searchsorted(N, target - tol, side="left"))
    hi = int(np.searchsorted(N, target + tol, side="right")) - 1
    h = (E[-1] - E[0]) / max(E.size - 1, 1)
    if hi >= lo and E[hi] - E[lo] > 2.0 * h and 0.0 < target < 1.0:
        return InverseValue(float(0.5 * (E[lo] + E[hi])), True)
    i = int(np.searchsorted(N, target, side="left"))
    if i == 0:
        return InverseValue(float(E[0]), False)
    if i >= E.size:
        return InverseValue(float(E[-1]), False)
    n0, n1 = N[i - 1], N[i]
    s = 0.0 if n1 == n0 else (target - n0) / (n1 - n0)
    return InverseValue(float(E[i - 1] + s * (E[i] - E[i - 1])), False)


# -- spectra as point sets ------------------------------------------------------

def _edge_mass(Z, frac):
    n = Z.shape[0]
    w = max(1, int(round(frac * n)))
    P = Z * Z
    return np.maximum(P[:w].sum(axis=0), P[-w:].sum(axis=0))


def _spectrum_block(args):
    v, alpha, xs, N, frac, cut = args
    pts = []
    for x in xs:
        t = build_direct_window(v, alpha, x, N).tridiag()
        vals = eigh_tridiagonal(t).values
        if cut is not None:
            Z = inverse_iteration(t, vals)
            vals = vals[_edge_mass(Z, frac) <= cut]
        pts.append(vals)
    return np.concatenate(pts)


def spectrum_points(v: TrigPotential, alpha: Frequency, N=2000, phases=16, edge_fraction=0.1, edge_cut=0.5,
                    workers=1, block=4) -> np.ndarray:
    """Sorted eigenvalues of Dirichlet windows over a phase grid.

    Eigenvectors carrying more than ``edge_cut`` of their mass within
    ``edge_fraction`` of either end are boundary states of the truncation
    and are dropped (pass edge_cut=None to keep everything).
    """
    xs = phase_grid(phases, alpha.d)
    tasks = [(v, alpha, xs[i:i + block], N, edge_fraction, edge_cut) for i in range(0, phases, block)]
    return np.sort(np.concatenate(pmap(_spectrum_block, tasks, workers)))


def hausdorff_distance(a, b) -> float:
    """Hausdorff distance between two finite subsets of R."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValidationError("empty point set")

    def one_sided(p, q):
        i = np.clip(np.searchsorted(q, p), 1, q.size - 1) if q.size > 1 else np.zeros(p.size, int)
        d = np.abs(p - q[i])
        if q.size > 1:
            d = np.minimum(d, np.abs(p - q[i - 1]))
        return float(d.max())

    return max(one_sided(a, b), one_sided(b, a))


def orbit_energy(curve: IdsCurve, theta, alpha: Frequency, ks):
    """E(theta + k alpha) for each integer k (d = 1)."""
    return np.array([inverse_rotation_number(curve, theta + k * alpha.array[0]).energy for k in ks])


__all__ = [
    "IdsCurve", "Gap", "GapReport", "InverseValue", "ids_direct", "ids_dual", "find_gaps", "gap_label",
    "label_gaps", "inverse_rotation_number", "fold_angle", "spectrum_points", "hausdorff_distance",
    "spectral_bound", "energy_grid", "orbit_energy",
]
