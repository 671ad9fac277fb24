"""Duality transform, Bloch solutions, the F-matrix conjugation and completeness checks.

Conventions: Psi(x, n) = sum_k c[k, n] e^{2 pi i k.x}, and the duality unitary is

    (U Psi)(theta, m) = sum_n c[m, n] e^{-2 pi i n (theta + alpha.m)},

with which U H U^{-1} = H~ holds term by term. A dual vector u gives
f(x) = sum_m u_m e^{2 pi i m.x} and Bloch waves psi_n(x) = e^{2 pi i n theta} f(x + n alpha).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import DegenerateConjugation, FitUnreliable, SupportOverflow, ValidationError
from .linalg import dft, eigh_hermitian, eigh_tridiagonal, idft
from .model import DualWindow, Frequency, TrigPotential, eval_potential, phase_grid
from .spectral import IdsCurve, fold_angle, inverse_rotation_number

TWO_PI = 2.0 * math.pi
DET_FLOOR = 1e-6
RESONANCE_TOL = 1e-8
RESONANCE_K = 20
MAX_SUPPORT = 100_000


@dataclass(frozen=True, eq=False)
class FourierVector:
    sites: np.ndarray  # (S, d) integer lattice sites
    amps: np.ndarray  # (S,) complex
    theta: float = 0.0

    def __post_init__(self):
        if self.sites.ndim != 2 or self.sites.shape[0] != self.amps.shape[0]:
            raise ValidationError("sites must be (S, d) matching amps")

    @property
    def d(self):
        return self.sites.shape[1]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def normalized(self) -> "FourierVector":
        return FourierVector(self.sites, self.amps / self.norm, self.theta)

    @property
    def center(self) -> tuple:
        return tuple(int(c) for c in self.sites[int(np.argmax(np.abs(self.amps)))])

    def shifted(self, w) -> "FourierVector":
        """u'_m = u_{m+w}, paired with theta + w.alpha by the caller."""
        return FourierVector(self.sites - np.atleast_1d(w), self.amps, self.theta)

    def conj(self) -> "FourierVector":
        """Coefficients of conj(f): u'_m = conj(u_{-m}), at phase -theta."""
        return FourierVector(-self.sites, self.amps.conj(), -self.theta)

    def __call__(self, x):
        """f(x) at points x (shape (G,) for d = 1 or (G, d))."""
        x = np.asarray(x, dtype=float)
        pts = x[:, None] if x.ndim == 1 else x
        return np.exp(2j * np.pi * pts @ self.sites.T) @ self.amps

    def on_grid(self, G: int, shift=0.0) -> np.ndarray:
        """f(j/G + shift), j = 0..G-1, by inverse DFT (d = 1, span < G)."""
        if self.d != 1:
            raise ValidationError("grid evaluation is one-dimensional")
        m = self.sites[:, 0]
        if m.max() - m.min() >= G:
            raise ValidationError(f"grid of {G} points cannot resolve a support span of {m.max() - m.min() + 1}")
        a = np.zeros(G, dtype=complex)
        np.add.at(a, m % G, self.amps * np.exp(2j * np.pi * m * shift))
        return G * idft(a)


class EigenPair(NamedTuple):
    energy: float
    vector: FourierVector
    center: tuple


# -- duality identity on finite Fourier data ------------------------------------

def _hamiltonian_coeffs(v: TrigPotential, alpha: Frequency, psi: dict, max_support):
    a = alpha.array
    out = {}
    for (k, n), c in psi.items():
        for dn in (1, -1):  # (H Psi)(n) picks up c[k, n + 1] and c[k, n - 1]
            key = (k, n - dn)
            out[key] = out.get(key, 0) + c
        for j, vj in zip(map(tuple, v.ks), v.amps):
            kk = tuple(int(p + q) for p, q in zip(k, j))
            out[(kk, n)] = out.get((kk, n), 0) + vj * np.exp(2j * np.pi * n * np.dot(j, a)) * c
        if len(out) > max_support:
            raise SupportOverflow(f"support of H Psi exceeds {max_support} entries")
    return out


def _transform(psi: dict, alpha: Frequency, thetas, sites):
    """(U Psi)(theta, m) on thetas x sites."""
    a = alpha.array
    idx = {tuple(s): i for i, s in enumerate(sites)}
    out = np.zeros((thetas.size, len(sites)), dtype=complex)
    for (k, n), c in psi.items():
        ph = thetas + np.dot(k, a)
        out[:, idx[k]] += c * np.exp(-2j * np.pi * n * ph)
    return out


def duality_identity_check(v: TrigPotential, alpha: Frequency, psi: dict, thetas=16,
                           max_support=MAX_SUPPORT) -> float:
    """max |U(H Psi) - H~(U Psi)| over a theta grid.

    ``psi`` maps (k, n) -> coefficient, with k a d-tuple (Fourier index in x)
    and n an integer site.
    """
    if v.dim != alpha.d:
        raise ValidationError("potential and frequency dimensions differ")
    psi = {(tuple(int(c) for c in np.atleast_1d(k)), int(n)): complex(c) for (k, n), c in psi.items()}
    th = (np.arange(thetas) + 0.5) / thetas if np.isscalar(thetas) else np.asarray(thetas, dtype=float)
    H_psi = _hamiltonian_coeffs(v, alpha, psi, max_support)

    # every site either side can touch: support of psi plus the hopping range
    base = {k for k, _ in psi}
    sites = sorted(base | {tuple(int(p + q) for p, q in zip(k, j)) for k in base for j in map(tuple, v.ks)}
                   | {k for k, _ in H_psi})
    lhs = _transform(H_psi, alpha, th, sites)

    phi = _transform(psi, alpha, th, sites)
    idx = {s: i for i, s in enumerate(sites)}
    rhs = np.zeros_like(phi)
    S = np.array(sites)
    rhs += 2.0 * np.cos(2.0 * np.pi * (th[:, None] + (S @ alpha.array)[None, :])) * phi
    for j, vj in zip(map(tuple, v.ks), v.amps):
        for s, i in idx.items():
            src = tuple(p - q for p, q in zip(s, j))
            if src in idx:
                rhs[:, i] += vj * phi[:, idx[src]]
    return float(np.abs(lhs - rhs).max()) if lhs.size else 0.0


def random_fourier_data(rng: np.random.Generator, d=1, harmonics=5, sites=5, k_range=4, n_range=4) -> dict:
    """Random finitely supported Psi with the given numbers of harmonics and lattice sites."""
    ks = set()
    while len(ks) < harmonics:
        ks.add(tuple(int(c) for c in rng.integers(-k_range, k_range + 1, size=d)))
    ns = rng.choice(np.arange(-n_range, n_range + 1), size=sites, replace=False)
    return {(k, int(n)): complex(rng.normal(), rng.normal()) for k in sorted(ks) for n in ns}


# -- dual eigenpairs ------------------------------------------------------------

def _is_diagonal(w: DualWindow):
    return all(abs(a) == 0 for k, a in w.potential.coeffs.items() if any(k))


def dual_eigenpairs(w: DualWindow) -> list:
    """All eigenpairs of a dual window, sorted by localization center."""
    S = w.size
    if _is_diagonal(w):
        E = np.asarray(w.full_diag(), dtype=float)
        Z = np.eye(S, dtype=complex)
    elif w.is_tridiagonal:
        t, gauge = w.tridiag()
        r = eigh_tridiagonal(t, want_vectors=True)
        E, Z = r.values, gauge[:, None] * r.vectors
    else:
        r = eigh_hermitian(w.dense(), want_vectors=True)
        E, Z = r.values, r.vectors.astype(complex)
    pairs = []
    for i in range(S):
        u = FourierVector(w.sites, Z[:, i].astype(complex), w.theta)
        pairs.append(EigenPair(float(E[i]), u, u.center))
    pairs.sort(key=lambda p: (p.center, p.energy))
    return pairs


def eigen_residual(w: DualWindow, pair: EigenPair) -> float:
    H = w.dense()
    u = pair.vector.amps
    return float(np.linalg.norm(H @ u - pair.energy * u))


# -- Bloch solutions ------------------------------------------------------------

def bloch_solution_residual(u: FourierVector, E: float, v: TrigPotential, alpha: Frequency, theta: float,
                            probes=16, n_range=range(-10, 11), coupling=1.0) -> float:
    """max over probe x and n of |psi_{n+1} + psi_{n-1} + v(x + n alpha) psi_n - E psi_n| (hopping scaled by coupling)."""
    if u.d != alpha.d:
        raise ValidationError("vector and frequency dimensions differ")
    xs = phase_grid(probes, alpha.d)
    n = np.arange(min(n_range) - 1, max(n_range) + 2)
    pts = (xs[:, None, :] + n[None, :, None] * alpha.array[None, None, :]) % 1.0  # (P, n, d)
    P, L = pts.shape[0], pts.shape[1]
    flat = pts.reshape(P * L, alpha.d)
    f = u(flat if alpha.d > 1 else flat[:, 0]).reshape(P, L)
    psi = np.exp(2j * np.pi * n * theta)[None, :] * f
    vv = np.atleast_1d(eval_potential(v, flat if alpha.d > 1 else flat[:, 0])).reshape(P, L)
    res = coupling * (psi[:, 2:] + psi[:, :-2]) + (vv[:, 1:-1] - E) * psi[:, 1:-1]
    return float(np.abs(res).max())


def tail_bound(u: FourierVector, box_shape, E, v: TrigPotential, inner=0.9) -> float:
    """(2 + |E| + max|v|) times the l1 mass of u outside the inner fraction of the box."""
    sites = u.sites
    lo, hi = sites.min(axis=0), sites.max(axis=0)
    half = (hi - lo) * inner / 2.0
    mid = (hi + lo) / 2.0
    outside = np.any(np.abs(sites - mid) > half, axis=1)
    return float((2.0 + abs(E) + v.l1_norm) * np.abs(u.amps[outside]).sum())


class BlochSolution(NamedTuple):
    theta: float
    samples: np.ndarray  # f(j/G)
    lo: int  # lowest Fourier index carried by f


def bloch_from_dual(u: FourierVector, G=None) -> BlochSolution:
    m = u.sites[:, 0]
    G = G or int(2 ** math.ceil(math.log2(2 * (m.max() - m.min() + 1))))
    return BlochSolution(u.theta, u.on_grid(G), int(m.min()))


def dual_from_bloch(b: BlochSolution, size: int) -> FourierVector:
    """Fourier coefficients u_m of f for m = lo .. lo + size - 1."""
    G = b.samples.size
    c = dft(b.samples) / G
    m = np.arange(b.lo, b.lo + size)
    return FourierVector(m[:, None], c[m % G], b.theta)


def l2_norm_on_grid(samples) -> float:
    return float(np.sqrt(np.mean(np.abs(samples) ** 2)))


# -- F-matrix and conjugation ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class FGrid:
    x: np.ndarray
    F: np.ndarray  # (G, 2, 2)
    det: np.ndarray
    theta: float
    winding: int = 0

    @property
    def det_constancy(self) -> float:
        """Relative standard deviation of det F over the grid."""
        m = np.abs(self.det.mean())
        return float(self.det.std() / m) if m > 0 else math.inf


@dataclass(frozen=True, eq=False)
class ConjugationGrid:
    x: np.ndarray
    B: np.ndarray  # (G, 2, 2), |det B| = 1
    det_profile: np.ndarray
    theta: float


def winding_number(samples) -> int:
    d = np.angle(np.roll(samples, -1) / samples)
    return int(round(d.sum() / TWO_PI))


def build_F(u: FourierVector, theta: float, alpha: Frequency, G=2048, normalize_degree=True) -> FGrid:
    """F(x) = [[f(x), conj f(x)], [e^{-2 pi i theta} f(x - alpha), e^{2 pi i theta} conj f(x - alpha)]].

    With ``normalize_degree`` the pair (u, theta) is first replaced by the
    degree-0 representative (u_{m+w}, theta + w alpha), w the winding of f,
    folded into theta in [0, 1/2] by conjugation if needed.
    """
    if alpha.d != 1 or u.d != 1:
        raise ValidationError("F-matrix is defined for d = 1")
    a = float(alpha.array[0])
    w = 0
    if normalize_degree:
        f0 = u.on_grid(G)
        if np.abs(f0).min() > 0:
            w = winding_number(f0)
        u = u.shifted(w)
        theta = theta + w * a
        t = theta % 1.0
        if t > 0.5:
            u = u.conj()
            theta = -theta
        theta = fold_angle(theta)
    f = u.on_grid(G)
    fm = u.on_grid(G, shift=-a)
    e = np.exp(2j * np.pi * theta)
    F = np.empty((G, 2, 2), dtype=complex)
    F[:, 0, 0] = f
    F[:, 0, 1] = f.conj()
    F[:, 1, 0] = fm / e
    F[:, 1, 1] = e * fm.conj()
    det = F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]
    return FGrid(np.arange(G) / G, F, det, float(theta), w)


def resonant(theta: float, alpha: Frequency, tol=RESONANCE_TOL, k_max=RESONANCE_K):
    """Smallest |k| <= k_max with 2 theta within tol of k.alpha mod 1, or None."""
    a = float(alpha.array[0])
    for k in sorted(range(-k_max, k_max + 1), key=abs):
        r = (2.0 * theta - k * a) % 1.0
        if min(r, 1.0 - r) <= tol:
            return k
    return None


def conjugation_from_F(Fg: FGrid, alpha: Optional[Frequency] = None, source_theta=None) -> ConjugationGrid:
    """B(x) = F(x)^{-1} rescaled to |det B| = 1.

    Raises DegenerateConjugation when min |det F| <= 1e-6, or when (given
    alpha) 2 theta is resonant with the frequency.
    """
    th = Fg.theta if source_theta is None else source_theta
    if alpha is not None:
        k = resonant(th, alpha)
        if k is not None:
            raise DegenerateConjugation(f"2 theta = {k} alpha mod 1 at theta = {th!r}", th)
    dmin = float(np.abs(Fg.det).min())
    if dmin <= DET_FLOOR:
        raise DegenerateConjugation(f"min |det F| = {dmin:.3e} at theta = {th!r}", th)
    F, det = Fg.F, Fg.det
    inv = np.empty_like(F)
    inv[:, 0, 0] = F[:, 1, 1]
    inv[:, 0, 1] = -F[:, 0, 1]
    inv[:, 1, 0] = -F[:, 1, 0]
    inv[:, 1, 1] = F[:, 0, 0]
    inv /= det[:, None, None]
    B = inv * np.sqrt(np.abs(det))[:, None, None]
    dB = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
    return ConjugationGrid(Fg.x, B, dB, Fg.theta)


def shift_on_grid(values, shift):
    """Trigonometric interpolation of periodic samples (axis 0) at x_j + shift."""
    G = values.shape[0]
    k = np.fft.fftfreq(G, 1.0 / G)
    c = np.fft.fft(values, axis=0)
    ph = np.exp(2j * np.pi * k * shift).reshape((G,) + (1,) * (values.ndim - 1))
    if G % 2 == 0:
        # split the Nyquist mode symmetrically so real data stays real
        ph[G // 2] = np.cos(np.pi * G * shift)
    return np.fft.ifft(c * ph, axis=0)


def reducibility_residual(Bg: ConjugationGrid, v: TrigPotential, E: float, alpha: Frequency, rho: float,
                          cocycle_values=None) -> float:
    """sup_x ||B(x + alpha) S(x) B(x)^{-1} - diag(e^{2 pi i rho}, e^{-2 pi i rho})||_2.

    ``cocycle_values`` (G, 2, 2) replaces the Schrodinger matrices S_{v,E} on the grid.
    """
    x = Bg.x
    a = float(alpha.array[0])
    B = Bg.B
    Bs = shift_on_grid(B, a)
    if cocycle_values is not None:
        S = np.asarray(cocycle_values)
    else:
        vv = np.atleast_1d(eval_potential(v, x))
        S = np.zeros((x.size, 2, 2))
        S[:, 0, 0] = E - vv
        S[:, 0, 1] = -1.0
        S[:, 1, 0] = 1.0
    det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
    Binv = np.empty_like(B)
    Binv[:, 0, 0] = B[:, 1, 1]
    Binv[:, 0, 1] = -B[:, 0, 1]
    Binv[:, 1, 0] = -B[:, 1, 0]
    Binv[:, 1, 1] = B[:, 0, 0]
    Binv /= det[:, None, None]
    M = Bs @ S @ Binv
    A = np.diag([np.exp(2j * np.pi * rho), np.exp(-2j * np.pi * rho)])
    return float(np.linalg.norm(M - A[None], ord=2, axis=(1, 2)).max())


# -- localization ----------------------------------------------------------------

class LocalizationFit(NamedTuple):
    decay_rate: float
    ipr: float
    center: tuple


def ipr(u: FourierVector) -> float:
    p = np.abs(u.amps) ** 2
    return float((p * p).sum() / p.sum() ** 2)


def localization_fit(u: FourierVector, floor=1e-12, edge=0.1, min_points=10) -> LocalizationFit:
    """Decay rate from a least-squares fit of log|u_m| against |m - center|_1."""
    a = np.abs(u.amps)
    c = u.sites[int(np.argmax(a))]
    lo, hi = u.sites.min(axis=0), u.sites.max(axis=0)
    margin = np.floor((hi - lo + 1) * edge)
    inner = np.all((u.sites >= lo + margin) & (u.sites <= hi - margin), axis=1)
    use = inner & (a > floor * a.max())
    dist = np.abs(u.sites - c).sum(axis=1)
    P = ipr(u)
    center = tuple(int(t) for t in c)
    if use.sum() < min_points or np.ptp(dist[use]) == 0:
        raise FitUnreliable(f"only {int(use.sum())} usable points for the decay fit")
    slope = np.polyfit(dist[use].astype(float), np.log(a[use]), 1)[0]
    return LocalizationFit(float(-slope), P, center)


# -- completeness and labeling ----------------------------------------------------

@dataclass
class DualityReport:
    bloch_residual: float = math.nan
    conj_residual: float = math.nan
    det_constancy: float = math.nan
    completeness_mass: dict = field(default_factory=dict)
    label_match: float = math.nan
    labels: list = field(default_factory=list)

    def to_dict(self):
        return {
            "bloch_residual": self.bloch_residual,
            "conj_residual": self.conj_residual,
            "det_constancy": self.det_constancy,
            "completeness_mass": {str(k): m for k, m in self.completeness_mass.items()},
            "min_completeness_mass": min(self.completeness_mass.values()) if self.completeness_mass else math.nan,
            "label_match": self.label_match,
        }


def interior_mask(pairs, box_lo, box_shape, edge=0.1):
    lo = np.asarray(box_lo)
    shape = np.asarray(box_shape)
    margin = np.floor(shape * edge)
    return np.array([np.all((np.array(p.center) >= lo + margin) & (np.array(p.center) < lo + shape - margin))
                     for p in pairs])


def completeness_report(pairs, theta, alpha: Frequency, probes, ids: Optional[IdsCurve] = None,
                        k_max=50, edge=0.1) -> DualityReport:
    """Interior eigenvector mass at probe sites and E_k(theta) vs E(theta + k alpha).

    Mass at site l is sum |u_k(l)|^2 over eigenvectors whose localization
    center lies outside the outer ``edge`` fraction of the box.
    """
    sites = pairs[0].vector.sites
    lo = sites.min(axis=0)
    shape = sites.max(axis=0) - lo + 1
    keep = interior_mask(pairs, lo, shape, edge)
    index = {tuple(s): i for i, s in enumerate(sites)}
    U = np.stack([p.vector.amps for p in pairs], axis=1)
    W = np.abs(U) ** 2
    rep = DualityReport()
    for l in probes:
        key = tuple(int(c) for c in np.atleast_1d(l))
        rep.completeness_mass[key] = float(W[index[key], keep].sum())
    if ids is not None and alpha.d == 1:
        a = float(alpha.array[0])
        by_center = {}
        for p in pairs:
            k = p.center[0]
            amp = abs(p.vector.amps[index[p.center]])
            if k not in by_center or amp > by_center[k][1]:
                by_center[k] = (p.energy, amp)
        worst = 0.0
        for k in range(-k_max, k_max + 1):
            if k not in by_center:
                worst = math.inf
                rep.labels.append((k, math.nan, math.nan))
                continue
            Ek = by_center[k][0]
            target = inverse_rotation_number(ids, theta + k * a).energy
            rep.labels.append((k, Ek, target))
            worst = max(worst, abs(Ek - target))
        rep.label_match = worst
    return rep


__all__ = [
    "FourierVector", "EigenPair", "FGrid", "ConjugationGrid", "DualityReport", "LocalizationFit", "BlochSolution",
    "duality_identity_check", "random_fourier_data", "dual_eigenpairs", "eigen_residual", "bloch_solution_residual",
    "tail_bound", "bloch_from_dual", "dual_from_bloch", "l2_norm_on_grid", "build_F", "conjugation_from_F",
    "reducibility_residual", "shift_on_grid", "winding_number", "resonant", "localization_fit", "ipr",
    "completeness_report", "interior_mask",
]
