"""Potentials, frequencies and finite windows of the direct and dual operators.

The direct operator acts on l^2(Z) as

    (H(x) psi)_n = psi_{n+1} + psi_{n-1} + v(x + n alpha) psi_n,

and the dual one on l^2(Z^d) as

    (Hd(theta) psi)_m = sum_{m'} vhat_{m'} psi_{m-m'} + 2 lam cos 2pi(alpha.m + theta) psi_m.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .errors import BoxTooSmall, InsufficientData, RationalInput, SymmetryViolation, ValidationError

SYMMETRY_TOL = 1e-12
CF_REMAINDER_TOL = 1e-14
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
SILVER = math.sqrt(2.0) - 1.0


# -- potentials ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrigPotential:
    """Real trigonometric polynomial given by its Fourier coefficients.

    ``coeffs`` maps integer vectors k to vhat_k; v(x) = sum_k vhat_k e^{2 pi i k.x}.
    """

    coeffs: dict
    ks: np.ndarray = field(init=False, repr=False)
    amps: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        clean = {}
        dims = set()
        for k, a in dict(self.coeffs).items():
            key = (int(k),) if np.isscalar(k) else tuple(int(c) for c in k)
            dims.add(len(key))
            a = complex(a)
            if a != 0:
                clean[key] = clean.get(key, 0) + a
        if len(dims) > 1:
            raise ValidationError(f"mixed dimensions in potential keys: {sorted(dims)}")
        d = dims.pop() if dims else 1
        for key, a in clean.items():
            mirror = clean.get(tuple(-c for c in key), 0)
            if abs(mirror - a.conjugate()) > SYMMETRY_TOL * max(1.0, abs(a)):
                raise SymmetryViolation(
                    f"vhat{list(key)} = {a} but vhat at -k is {mirror}; v would not be real")
        keys = sorted(clean)
        object.__setattr__(self, "coeffs", {k: clean[k] for k in keys})
        object.__setattr__(self, "ks", np.array(keys, dtype=np.int64).reshape(len(keys), d))
        object.__setattr__(self, "amps", np.array([clean[k] for k in keys], dtype=complex))
        object.__setattr__(self, "_dim", d)

    @classmethod
    def cosine(cls, amplitude=1.0, d=1, axis=0):
        """v(x) = 2 * amplitude * cos(2 pi x_axis)."""
        e = [0] * d
        e[axis] = 1
        return cls({tuple(e): amplitude, tuple(-c for c in e): amplitude})

    @classmethod
    def zero(cls, d=1):
        p = cls({})
        object.__setattr__(p, "_dim", d)
        object.__setattr__(p, "ks", np.zeros((0, d), dtype=np.int64))
        return p

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def degree(self) -> int:
        if not self.coeffs:
            return 0
        return int(np.abs(self.ks).max())

    @property
    def axis_degree(self) -> tuple:
        if not self.coeffs:
            return (0,) * self.dim
        return tuple(int(c) for c in np.abs(self.ks).max(axis=0))

    @property
    def l1_norm(self) -> float:
        """sum |vhat_k|, an upper bound for max |v|."""
        return float(np.abs(self.amps).sum())

    @property
    def is_real_even(self) -> bool:
        return bool(np.all(np.abs(self.amps.imag) == 0.0))

    def __call__(self, x):
        return eval_potential(self, x)

    def __eq__(self, other):
        return isinstance(other, TrigPotential) and self.dim == other.dim and self.coeffs == other.coeffs

    def __hash__(self):
        return hash((self.dim, tuple(self.coeffs.items())))

    def to_config(self):
        return [[list(k), a.real, a.imag] for k, a in self.coeffs.items()]


def _as_points(x, d):
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != d:
        raise ValidationError(f"points have dimension {x.shape[-1]}, potential has {d}")
    return x


def eval_potential(v: TrigPotential, x):
    """Evaluate v at one point or an array of points (trailing axis of length d).

    Returns a float for a single point, an array otherwise.
    """
    pts = _as_points(x, v.dim)
    if not v.coeffs:
        out = np.zeros(pts.shape[:-1])
    else:
        phase = 2.0 * np.pi * (pts @ v.ks.T.astype(float))
        z = np.exp(1j * phase) @ v.amps
        resid = np.max(np.abs(z.imag), initial=0.0)
        if resid > SYMMETRY_TOL * max(1.0, v.l1_norm):
            raise SymmetryViolation(f"imaginary residual {resid:.3e} in potential evaluation")
        out = z.real
    return float(out) if out.ndim == 0 else out


def orbit_points(x, alpha, n, start=0):
    """Points x + j alpha (mod 1) for j = start .. start+n-1, shape (n, d)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    j = np.arange(start, start + n, dtype=float)[:, None]
    return np.mod(x[None, :] + j * a[None, :], 1.0)


def phase_grid(count, d=1):
    """Deterministic equidistributed phases on T^d, shape (count, d).

    d = 1 uses the midpoint lattice (j + 1/2)/count; higher d uses the
    additive recurrence with generator 1/phi_d^i, phi_d the root of
    x^{d+1} = x + 1.
    """
    j = np.arange(count, dtype=float)
    if d == 1:
        return ((j + 0.5) / count)[:, None]
    phi = 2.0
    for _ in range(64):
        phi = (1.0 + phi) ** (1.0 / (d + 1))
    g = np.array([phi ** -(i + 1) for i in range(d)])
    return np.mod(0.5 + j[:, None] * g[None, :], 1.0)


# -- frequencies --------------------------------------------------------------

@dataclass(frozen=True)
class ContinuedFraction:
    """alpha = [0; a_1, a_2, ...] with convergents p_n/q_n, n = 0..M."""

    quotients: tuple
    convergents: tuple
    terminated: bool = False

    @property
    def denominators(self):
        return [q for _, q in self.convergents]


def _convergents(quotients):
    p_prev, q_prev, p, q = 1, 0, 0, 1
    out = [(0, 1)]
    for a in quotients:
        p_prev, p = p, a * p + p_prev
        q_prev, q = q, a * q + q_prev
        out.append((p, q))
    return tuple(out)


def continued_fraction(alpha, M=30) -> ContinuedFraction:
    """Continued fraction of alpha in (0, 1), computed exactly on its binary value."""
    r = Fraction(alpha)
    if not 0 < r < 1:
        raise ValidationError(f"alpha must lie in (0, 1), got {float(alpha)}")
    quotients = []
    terminated = False
    for _ in range(M):
        y = 1 / r
        a = int(y)
        quotients.append(a)
        r = y - a
        if r < CF_REMAINDER_TOL:
            terminated = True
            break
    if terminated and len(quotients) < 3:
        raise RationalInput(f"alpha = {float(alpha)!r} has a terminating expansion {quotients}")
    return ContinuedFraction(tuple(quotients), _convergents(quotients), terminated)


def cf_from_quotients(quotients) -> ContinuedFraction:
    qs = tuple(int(a) for a in quotients)
    if len(qs) < 3 or any(a < 1 for a in qs):
        raise RationalInput(f"need at least 3 positive partial quotients, got {list(qs)}")
    return ContinuedFraction(qs, _convergents(qs), False)


def cf_value(quotients) -> Fraction:
    r = Fraction(0)
    for a in reversed(quotients):
        r = 1 / (a + r)
    return r


class BetaProxy(NamedTuple):
    value: float
    index: int


def beta_profile(cf: ContinuedFraction) -> np.ndarray:
    """Terms log(q_{n+1}) / q_n for n = 1 .. M-1."""
    qs = cf.denominators
    return np.array([math.log(qs[n + 1]) / qs[n] for n in range(1, len(qs) - 1)])


def beta_exponent(cf: ContinuedFraction) -> BetaProxy:
    """Finite-order proxy for the upper exponential growth rate of q_n.

    The max of log(q_{n+1})/q_n over the available n, with the n attaining it.
    This is a diagnostic, not the limsup.
    """
    if len(cf.convergents) < 5:
        raise InsufficientData(f"need >= 5 convergents, have {len(cf.convergents)}")
    terms = beta_profile(cf)
    i = int(np.argmax(terms))
    return BetaProxy(float(terms[i]), i + 1)


@dataclass(frozen=True)
class Frequency:
    components: tuple
    cf: tuple
    exact: bool = False

    def __post_init__(self):
        if len(self.components) != len(self.cf) or not self.components:
            raise ValidationError("frequency needs one continued fraction per component")
        for a, c in zip(self.components, self.cf):
            if c.terminated:
                raise RationalInput(f"alpha = {a!r} is rational at working precision "
                                    f"(expansion {list(c.quotients)} terminates)")

    @classmethod
    def from_values(cls, values, M=30):
        values = [float(a) for a in np.atleast_1d(values)]
        return cls(tuple(values), tuple(continued_fraction(a, M) for a in values))

    @classmethod
    def from_quotients(cls, *quotient_lists):
        cfs = tuple(cf_from_quotients(q) for q in quotient_lists)
        vals = tuple(float(cf_value(c.quotients)) for c in cfs)
        return cls(vals, cfs, exact=True)

    @classmethod
    def golden(cls):
        return cls.from_values([GOLDEN])

    @property
    def d(self) -> int:
        return len(self.components)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.components, dtype=float)

    def dot(self, m):
        return np.asarray(m, dtype=float) @ self.array

    def to_config(self):
        if self.exact:
            return [{"quotients": list(c.quotients)} for c in self.cf]
        return list(self.components)


# -- windows ------------------------------------------------------------------

@dataclass(frozen=True)
class Box:
    """Axis-aligned box of Z^d: lo[i] <= m_i < lo[i] + shape[i]."""

    lo: tuple
    shape: tuple

    @classmethod
    def centered(cls, shape):
        shape = tuple(int(s) for s in np.atleast_1d(shape))
        return cls(tuple(-(s // 2) for s in shape), shape)

    @property
    def d(self):
        return len(self.shape)

    @property
    def size(self):
        return int(np.prod(self.shape))

    def sites(self) -> np.ndarray:
        axes = [np.arange(l, l + s) for l, s in zip(self.lo, self.shape)]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=1)

    def center(self):
        return np.array([l + (s - 1) / 2 for l, s in zip(self.lo, self.shape)])


@dataclass(frozen=True, eq=False)
class DirectWindow:
    potential: TrigPotential
    alpha: Frequency
    phase: tuple
    diag: np.ndarray

    @property
    def size(self):
        return self.diag.size

    @property
    def offdiag(self):
        return np.ones(self.size - 1)

    def tridiag(self):
        from .linalg import Tridiag
        return Tridiag(self.diag, self.offdiag)

    def dense(self):
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)


def build_direct_window(v: TrigPotential, alpha: Frequency, x, N: int) -> DirectWindow:
    """Dirichlet truncation of H(x) to sites 0..N-1."""
    if N < 1:
        raise ValidationError("window needs at least one site")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != alpha.d or v.dim != alpha.d:
        raise ValidationError("phase, potential and frequency dimensions differ")
    diag = eval_potential(v, orbit_points(x, alpha.array, N))
    return DirectWindow(v, alpha, tuple(x), np.atleast_1d(diag))


@dataclass(frozen=True, eq=False)
class DualWindow:
    potential: TrigPotential
    alpha: Frequency
    theta: float
    coupling: float
    box: Box
    sites: np.ndarray
    diag: np.ndarray  # 2 lam cos 2pi(alpha.m + theta), without vhat_0

    @property
    def size(self):
        return self.diag.size

    @property
    def d(self):
        return self.box.d

    @property
    def hopping(self):
        return self.potential.coeffs

    @property
    def is_real(self):
        return self.potential.is_real_even

    @property
    def is_tridiagonal(self):
        return self.d == 1 and self.potential.degree <= 1

    def full_diag(self):
        return self.diag + self.potential.coeffs.get((0,) * self.d, 0).real

    def dense(self) -> np.ndarray:
        """Assembled matrix, rows/cols ordered as ``sites``; real when v is even."""
        S = self.size
        dtype = float if self.is_real else complex
        H = np.zeros((S, S), dtype=dtype)
        H[np.arange(S), np.arange(S)] = self.diag
        strides = np.cumprod((1,) + self.box.shape[::-1][:-1])[::-1]
        rel = self.sites - np.array(self.box.lo)
        flat = rel @ strides
        for k, a in self.potential.coeffs.items():
            k = np.array(k)
            target = rel - k  # column index m - m'
            ok = np.all((target >= 0) & (target < np.array(self.box.shape)), axis=1)
            cols = target[ok] @ strides
            H[flat[ok], cols] += a.real if self.is_real else a
        return H

    def tridiag(self):
        """(Tridiag, gauge) with H = D T D*, D = diag(gauge); d = 1, degree <= 1 only."""
        from .linalg import Tridiag
        if not self.is_tridiagonal:
            raise ValidationError("window is not tridiagonal")
        a = self.potential.coeffs.get((1,), 0j)
        phase = np.angle(a) if a != 0 else 0.0
        gauge = np.exp(1j * phase * self.sites[:, 0])
        return Tridiag(self.full_diag(), np.full(self.size - 1, abs(a))), gauge

    def band(self):
        """Lower band storage: band[j, i] = H[i + j, i]; d = 1 only."""
        b = self.potential.degree
        out = np.zeros((b + 1, self.size), dtype=complex)
        out[0] = self.full_diag()
        for j in range(1, b + 1):
            out[j, : self.size - j] = self.potential.coeffs.get((j,), 0)
        return out


def build_dual_window(v: TrigPotential, alpha: Frequency, theta: float, box, coupling=1.0) -> DualWindow:
    """Finite window of the dual operator on ``box`` (a Box, or per-axis lengths, centered)."""
    if coupling < 0:
        raise ValidationError("coupling must be positive")
    if not isinstance(box, Box):
        box = Box.centered(box)
    if box.d != alpha.d or v.dim != alpha.d:
        raise ValidationError("box, potential and frequency dimensions differ")
    if any(s < 1 for s in box.shape):
        raise BoxTooSmall("empty box")
    for s, deg in zip(box.shape, v.axis_degree):
        if s < 2 * deg + 1:
            raise BoxTooSmall(f"axis of length {s} shorter than 2*degree+1 = {2 * deg + 1}")
    sites = box.sites()
    diag = 2.0 * coupling * np.cos(2.0 * np.pi * (sites @ alpha.array + theta))
    return DualWindow(v, alpha, float(theta), float(coupling), box, sites, diag)


def write_matrix_csv(matrix, path, comment=None):
    """Dense matrix as rows (row, col, re, im)."""
    M = np.asarray(matrix)
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh)
        w.writerow(["row", "col", "re", "im"])
        for i in range(M.shape[0]):
            for j in range(M.shape[1]):
                z = complex(M[i, j])
                w.writerow([i, j, repr(z.real), repr(z.imag)])


# -- config helpers -----------------------------------------------------------

def potential_from_config(entries, d=None) -> TrigPotential:
    """Parse a list of [k-vector, re, im] rows."""
    coeffs = {}
    for row in entries:
        if not isinstance(row, (list, tuple)) or len(row) not in (2, 3):
            raise ValidationError(f"coefficient entry {row!r} is not [k, re, im]")
        k, re = row[0], row[1]
        im = row[2] if len(row) == 3 else 0.0
        key = tuple(int(c) for c in np.atleast_1d(k))
        coeffs[key] = coeffs.get(key, 0) + complex(float(re), float(im))
    if not coeffs:
        return TrigPotential.zero(d or 1)
    return TrigPotential(coeffs)


def frequency_from_config(raw, M=30) -> Frequency:
    """Decimal(s), {"quotients": [...]}, or a list mixing the two."""
    items = raw if isinstance(raw, list) else [raw]
    values, cfs, exact = [], [], False
    for it in items:
        if isinstance(it, dict):
            if "quotients" not in it:
                raise ValidationError(f"frequency entry {it!r} lacks 'quotients'")
            c = cf_from_quotients(it["quotients"])
            values.append(float(cf_value(c.quotients)))
            exact = True
        else:
            values.append(float(it))
            c = continued_fraction(values[-1], M)
        cfs.append(c)
    return Frequency(tuple(values), tuple(cfs), exact=exact)


__all__ = [
    "TrigPotential", "Frequency", "ContinuedFraction", "Box", "DirectWindow", "DualWindow",
    "eval_potential", "build_direct_window", "build_dual_window", "continued_fraction",
    "cf_from_quotients", "beta_exponent", "beta_profile", "orbit_points", "phase_grid",
    "potential_from_config", "frequency_from_config", "write_matrix_csv", "GOLDEN", "SILVER",
]
