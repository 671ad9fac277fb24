"""Structured eigenvalue machinery.

Eigenvalue counting by Sturm sequences is the workhorse for densities of
states; full decompositions (implicit QL or bisection for values, inverse
iteration for vectors, Householder reduction for dense Hermitian input) are
used only when eigenvectors are needed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .errors import NoConvergence, NotHermitian, ValidationError

EPS = np.finfo(float).eps
TINY = np.finfo(float).tiny
CLUSTER_TOL = 1e-8
QL_MAX_SWEEPS = 50


@dataclass(frozen=True, eq=False)
class Tridiag:
    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        d = np.ascontiguousarray(np.atleast_1d(self.diag), dtype=float)
        e = np.ascontiguousarray(np.atleast_1d(self.offdiag), dtype=float)
        if d.size < 1:
            raise ValidationError("empty tridiagonal matrix")
        if e.size != d.size - 1:
            raise ValidationError(f"offdiag has {e.size} entries, expected {d.size - 1}")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(e))):
            raise ValidationError("non-finite entries")
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "offdiag", e)

    @property
    def n(self):
        return self.diag.size

    def norm(self) -> float:
        """Max-row-sum norm (bounds the spectral radius)."""
        a = np.abs(self.diag).copy()
        a[:-1] += np.abs(self.offdiag)
        a[1:] += np.abs(self.offdiag)
        return float(a.max())

    def gershgorin(self):
        r = np.zeros(self.n)
        r[:-1] += np.abs(self.offdiag)
        r[1:] += np.abs(self.offdiag)
        return float((self.diag - r).min()), float((self.diag + r).max())

    def dense(self):
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)

    def matvec(self, W):
        W = np.asarray(W)
        out = self.diag[:, None] * W if W.ndim == 2 else self.diag * W
        e = self.offdiag[:, None] if W.ndim == 2 else self.offdiag
        out[:-1] += e * W[1:]
        out[1:] += e * W[:-1]
        return out


@dataclass(frozen=True, eq=False)
class EigResult:
    values: np.ndarray
    vectors: Optional[np.ndarray] = None
    residual: float = 0.0

    def orthogonality(self) -> float:
        if self.vectors is None:
            return 0.0
        G = self.vectors.conj().T @ self.vectors
        return float(np.abs(G - np.eye(G.shape[0])).max())


# -- Sturm counting -------------------------------------------------------------

def _pivmin(e2):
    return TINY * max(1.0, float(e2.max()) if e2.size else 1.0)


@njit(cache=True)
def _sturm_counts(d, e2, energies, pivmin):
    n = d.size
    out = np.zeros(energies.size, dtype=np.int64)
    for k in range(energies.size):
        E = energies[k]
        q = d[0] - E
        if abs(q) < pivmin:
            q = pivmin
        c = 1 if q < 0 else 0
        for i in range(1, n):
            q = d[i] - E - e2[i - 1] / q
            if abs(q) < pivmin:
                q = pivmin
            if q < 0:
                c += 1
        out[k] = c
    return out


@njit(cache=True)
def _sturm_counts_batch(D, e2, energies, pivmin):
    # D: (B, n) diagonals sharing the off-diagonal squares e2; returns summed counts per energy
    B, n = D.shape
    out = np.zeros(energies.size, dtype=np.int64)
    for b in range(B):
        for k in range(energies.size):
            E = energies[k]
            q = D[b, 0] - E
            if abs(q) < pivmin:
                q = pivmin
            c = 1 if q < 0 else 0
            for i in range(1, n):
                q = D[b, i] - E - e2[i - 1] / q
                if abs(q) < pivmin:
                    q = pivmin
                if q < 0:
                    c += 1
            out[k] += c
    return out


def sturm_count(t: Tridiag, E: float) -> int:
    """Number of eigenvalues of t strictly below E."""
    e2 = t.offdiag ** 2
    return int(_sturm_counts(t.diag, e2, np.array([float(E)]), _pivmin(e2))[0])


def sturm_counts(t: Tridiag, energies) -> np.ndarray:
    e2 = t.offdiag ** 2
    E = np.ascontiguousarray(np.atleast_1d(energies), dtype=float)
    return _sturm_counts(t.diag, e2, E, _pivmin(e2))


def sturm_counts_batch(diags, offdiag, energies) -> np.ndarray:
    """Counts summed over a batch of diagonals (rows of ``diags``) with a common off-diagonal."""
    e2 = np.ascontiguousarray(np.asarray(offdiag, dtype=float) ** 2)
    D = np.ascontiguousarray(np.atleast_2d(diags), dtype=float)
    E = np.ascontiguousarray(np.atleast_1d(energies), dtype=float)
    return _sturm_counts_batch(D, e2, E, _pivmin(e2))


@njit(cache=True)
def _band_counts(band, energies, pivmin):
    # inertia of (A - E) from an unpivoted LDL^H of the Hermitian band matrix
    b1, n = band.shape
    b = b1 - 1
    out = np.zeros(energies.size, dtype=np.int64)
    L = np.zeros((b1, n), dtype=np.complex128)  # L[j, i] = L_{i+j, i}
    dd = np.zeros(n)
    for k in range(energies.size):
        E = energies[k]
        c = 0
        for i in range(n):
            s = band[0, i].real - E
            for j in range(1, b1):
                if i - j < 0:
                    break
                l = L[j, i - j]
                s -= (l.real * l.real + l.imag * l.imag) * dd[i - j]
            if abs(s) < pivmin:
                s = pivmin
            dd[i] = s
            if s < 0:
                c += 1
            for r in range(1, b1):
                if i + r >= n:
                    break
                acc = band[r, i]
                # subtract sum_j L[r+i, i-j'] conj(L[i, i-j']) d[i-j']
                for jj in range(1, b1):
                    col = i - jj
                    if col < 0 or r + jj > b:
                        break
                    acc -= L[r + jj, col] * np.conj(L[jj, col]) * dd[col]
                L[r, i] = acc / s
        out[k] = c
    return out


def band_counts(band, energies) -> np.ndarray:
    """Eigenvalue counts below each energy for a Hermitian band matrix in lower band storage."""
    band = np.ascontiguousarray(band, dtype=complex)
    E = np.ascontiguousarray(np.atleast_1d(energies), dtype=float)
    pivmin = TINY * max(1.0, float(np.abs(band[1:]).max() ** 2) if band.shape[0] > 1 else 1.0)
    return _band_counts(band, E, pivmin)


# -- eigenvalues ----------------------------------------------------------------

@njit(cache=True)
def _bisect(d, e2, idx, lo0, hi0, pivmin, abstol):
    n = d.size
    out = np.empty(idx.size)
    for t in range(idx.size):
        target = idx[t]
        lo = lo0
        hi = hi0
        for _ in range(200):
            if hi - lo <= abstol + 2.0 * 2.220446049250313e-16 * max(abs(lo), abs(hi)):
                break
            mid = 0.5 * (lo + hi)
            q = d[0] - mid
            if abs(q) < pivmin:
                q = pivmin
            c = 1 if q < 0 else 0
            for i in range(1, n):
                q = d[i] - mid - e2[i - 1] / q
                if abs(q) < pivmin:
                    q = pivmin
                if q < 0:
                    c += 1
            if c > target:
                hi = mid
            else:
                lo = mid
        out[t] = 0.5 * (lo + hi)
    return out


@njit(cache=True)
def _ql_values(d, e_in, eps):
    # implicit QL with Wilkinson-type shift; returns status 0 on success
    n = d.size
    e = np.zeros(n)
    e[: n - 1] = e_in
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > 50:
                return 1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = np.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + (r if g >= 0 else -r))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            deflated = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = np.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                i -= 1
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return 0


def ql_eigenvalues(t: Tridiag) -> np.ndarray:
    d = t.diag.copy()
    if t.n > 1 and _ql_values(d, t.offdiag.copy(), EPS) != 0:
        raise NoConvergence(f"implicit QL exceeded {QL_MAX_SWEEPS} sweeps for one eigenvalue")
    return np.sort(d)


def bisect_eigenvalues(t: Tridiag, indices=None) -> np.ndarray:
    """Eigenvalues with the given (0-based, ascending) indices by Sturm bisection."""
    idx = np.arange(t.n) if indices is None else np.asarray(indices, dtype=np.int64)
    e2 = t.offdiag ** 2
    lo, hi = t.gershgorin()
    pad = 2 * EPS * max(abs(lo), abs(hi), 1.0)
    return _bisect(t.diag, e2, np.ascontiguousarray(idx), lo - pad, hi + pad, _pivmin(e2), TINY)


# -- eigenvectors ---------------------------------------------------------------

@njit(cache=True)
def _inverse_iteration(d, e, w, start, tnorm, cluster_tol, maxit):
    n = d.size
    k = w.size
    Z = np.zeros((n, k))
    eps = 2.220446049250313e-16
    pivtol = eps * tnorm if tnorm > 0 else 1.0
    sep = 10.0 * eps * tnorm
    dl = np.empty(max(n - 1, 1))
    du = np.empty(max(n - 1, 1))
    du2 = np.zeros(max(n - 2, 1))
    dd = np.empty(n)
    ipiv = np.zeros(max(n - 1, 1), dtype=np.int64)
    b = np.empty(n)
    j0 = 0
    prev = 0.0
    for j in range(k):
        sigma = w[j]
        if j > 0 and w[j] - w[j - 1] < cluster_tol:
            if sigma - prev < sep:
                sigma = prev + sep
        else:
            j0 = j
        prev = sigma
        # LU of T - sigma with partial pivoting
        for i in range(n):
            dd[i] = d[i] - sigma
        for i in range(n - 1):
            dl[i] = e[i]
            du[i] = e[i]
        for i in range(n - 2):
            du2[i] = 0.0
        for i in range(n - 1):
            if abs(dd[i]) >= abs(dl[i]):
                ipiv[i] = i
                fact = dl[i] / dd[i] if dd[i] != 0.0 else 0.0
                dl[i] = fact
                dd[i + 1] -= fact * du[i]
            else:
                ipiv[i] = i + 1
                fact = dd[i] / dl[i]
                dd[i] = dl[i]
                dl[i] = fact
                tmp = du[i]
                du[i] = dd[i + 1]
                dd[i + 1] = tmp - fact * dd[i + 1]
                if i < n - 2:
                    du2[i] = du[i + 1]
                    du[i + 1] = -fact * du[i + 1]
        for i in range(n):
            if abs(dd[i]) < pivtol:
                dd[i] = pivtol if dd[i] >= 0 else -pivtol
        for i in range(n):
            b[i] = start[i, j]
        extra = -1
        for it in range(maxit):
            # forward substitution with the row interchanges
            for i in range(n - 1):
                if ipiv[i] == i:
                    b[i + 1] -= dl[i] * b[i]
                else:
                    tmp = b[i] - dl[i] * b[i + 1]
                    b[i] = b[i + 1]
                    b[i + 1] = tmp
            b[n - 1] /= dd[n - 1]
            if n > 1:
                b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / dd[n - 2]
            for i in range(n - 3, -1, -1):
                b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / dd[i]
            # reorthogonalize inside the cluster
            for jj in range(j0, j):
                s = 0.0
                for i in range(n):
                    s += Z[i, jj] * b[i]
                for i in range(n):
                    b[i] -= s * Z[i, jj]
            nrm = 0.0
            big = 0.0
            for i in range(n):
                nrm += b[i] * b[i]
                if abs(b[i]) > big:
                    big = abs(b[i])
            nrm = np.sqrt(nrm)
            if nrm == 0.0:
                for i in range(n):
                    b[i] = start[(i + it + 1) % n, j]
                continue
            for i in range(n):
                b[i] /= nrm
            if extra < 0 and big >= 1.0 / (np.sqrt(n) * 10.0 * pivtol):
                extra = it + 1
            if extra >= 0 and it >= extra:
                break
        # deterministic sign: largest component positive
        imax = 0
        for i in range(n):
            if abs(b[i]) > abs(b[imax]):
                imax = i
        sgn = 1.0 if b[imax] >= 0 else -1.0
        for i in range(n):
            Z[i, j] = sgn * b[i]
    return Z


def _start_vectors(n, k, seed=20150601):
    return np.random.default_rng(seed).uniform(-1.0, 1.0, size=(n, k))


def inverse_iteration(t: Tridiag, values, maxit=6) -> np.ndarray:
    """Orthonormal eigenvectors for sorted eigenvalues ``values`` of t."""
    w = np.ascontiguousarray(np.sort(np.atleast_1d(values)), dtype=float)
    tnorm = t.norm()
    start = _start_vectors(t.n, w.size)
    Z = _inverse_iteration(t.diag, t.offdiag, w, start, tnorm, CLUSTER_TOL * max(tnorm, TINY), maxit)
    return Z


def eigh_tridiagonal(t: Tridiag, want_vectors=False, select=None, method="auto") -> EigResult:
    """Eigen-decomposition of a real symmetric tridiagonal matrix.

    ``select=(ilo, ihi)`` restricts to ascending indices ilo..ihi (bisection).
    ``method`` is "ql", "bisect" or "auto" (QL, bisection if QL stalls).
    """
    if select is not None:
        ilo, ihi = select
        values = bisect_eigenvalues(t, np.arange(ilo, ihi + 1))
    elif method == "ql":
        values = ql_eigenvalues(t)
    elif method == "auto":
        try:
            values = ql_eigenvalues(t)
        except NoConvergence:
            values = bisect_eigenvalues(t)
    elif method == "bisect":
        values = bisect_eigenvalues(t)
    else:
        raise ValidationError(f"unknown method {method!r}")
    values = np.sort(values)
    if not want_vectors:
        return EigResult(values)
    Z = inverse_iteration(t, values)
    R = t.matvec(Z) - Z * values[None, :]
    return EigResult(values, Z, float(np.linalg.norm(R, axis=0).max()))


# -- dense Hermitian -------------------------------------------------------------

def householder_tridiagonalize(A):
    """Reduce Hermitian A to real symmetric tridiagonal form.

    Returns (Tridiag, reflectors, phases) with A = Q D T D^* Q^*, where Q is the
    product of the Householder reflectors and D = diag(phases).
    """
    A = np.array(A, dtype=complex if np.iscomplexobj(A) else float, copy=True)
    n = A.shape[0]
    real = not np.iscomplexobj(A)
    vs = []
    for k in range(n - 2):
        x = A[k + 1:, k]
        nx = np.linalg.norm(x)
        if nx == 0.0:
            vs.append(None)
            continue
        x0 = x[0]
        ph = (np.sign(x0) if x0 != 0 else 1.0) if real else (x0 / abs(x0) if x0 != 0 else 1.0)
        alpha = -ph * nx
        v = x.copy()
        v[0] -= alpha
        v /= np.linalg.norm(v)
        sub = A[k + 1:, k + 1:]
        p = sub @ v
        K = np.vdot(v, p).real
        w = p - K * v
        sub -= 2.0 * (np.outer(v, w.conj()) + np.outer(w, v.conj()))
        A[k + 1, k] = alpha
        A[k, k + 1] = np.conj(alpha)
        A[k + 2:, k] = 0.0
        A[k, k + 2:] = 0.0
        vs.append(v)
    diag = np.real(np.diag(A)).copy()
    sub = np.diag(A, -1).copy()
    phases = np.ones(n, dtype=complex if not real else float)
    for i in range(n - 1):
        s = sub[i]
        u = s / abs(s) if s != 0 else 1.0
        phases[i + 1] = phases[i] * u
    return Tridiag(diag, np.abs(sub)), vs, phases


def _apply_reflectors(vs, Z):
    Z = Z.astype(complex) if any(v is not None and np.iscomplexobj(v) for v in vs) else Z
    for k in range(len(vs) - 1, -1, -1):
        v = vs[k]
        if v is None:
            continue
        blk = Z[k + 1:, :]
        blk -= 2.0 * np.outer(v, v.conj() @ blk)
    return Z


def eigh_hermitian(A, want_vectors=True, hermitian_tol=1e-12) -> EigResult:
    """Full decomposition of a dense Hermitian matrix via Householder + tridiagonal solvers."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError("matrix must be square")
    if np.abs(A - A.conj().T).max(initial=0.0) > hermitian_tol:
        raise NotHermitian("matrix is not Hermitian within tolerance")
    n = A.shape[0]
    if n == 1:
        vals = np.real(A[0, :1]).astype(float)
        return EigResult(vals, np.ones((1, 1), dtype=A.dtype) if want_vectors else None, 0.0)
    t, vs, phases = householder_tridiagonalize(A)
    res = eigh_tridiagonal(t, want_vectors=want_vectors)
    if not want_vectors:
        return res
    Z = res.vectors * phases[:, None]
    Z = _apply_reflectors(vs, Z)
    if not np.iscomplexobj(A) and np.iscomplexobj(Z):
        Z = Z.real
    R = A @ Z - Z * res.values[None, :]
    return EigResult(res.values, Z, float(np.linalg.norm(R, axis=0).max()))


def matrix_norm(A) -> float:
    """Max-row-sum norm."""
    return float(np.abs(np.asarray(A)).sum(axis=1).max())


# -- Fourier ----------------------------------------------------------------

def dft(seq):
    """Forward DFT with kernel e^{-2 pi i jk/L}, unnormalized."""
    return np.fft.fft(np.asarray(seq, dtype=complex), axis=-1)


def idft(seq):
    """Inverse DFT with kernel e^{+2 pi i jk/L} and the 1/L factor."""
    return np.fft.ifft(np.asarray(seq, dtype=complex), axis=-1)
