import math

import numpy as np
import pytest

from aubry.cocycle import rotation_number, schrodinger_cocycle
from aubry.duality import (
    ConjugationGrid, FourierVector, bloch_from_dual, bloch_solution_residual, build_F, completeness_report,
    conjugation_from_F, dual_eigenpairs, dual_from_bloch, duality_identity_check, eigen_residual, ipr,
    l2_norm_on_grid, localization_fit, random_fourier_data, reducibility_residual, resonant, shift_on_grid,
    tail_bound, winding_number,
)
from aubry.errors import DegenerateConjugation, FitUnreliable, SupportOverflow
from aubry.model import GOLDEN, Box, Frequency, TrigPotential, build_dual_window
from aubry.spectral import energy_grid, ids_direct

from conftest import amo

THETA = 0.13


def delta(m=0, theta=0.0):
    return FourierVector(np.array([[m]]), np.array([1.0 + 0j]), theta)


def central(pairs, count):
    return sorted(pairs, key=lambda p: (abs(p.center[0]), p.center[0]))[:count]


@pytest.fixture(scope="module")
def amo_pairs():
    a = Frequency.golden()
    out = {}
    for L in (250, 500, 1000):
        w = build_dual_window(amo(0.4), a, THETA, L)
        out[L] = (w, dual_eigenpairs(w))
    return out


@pytest.fixture(scope="module")
def amo_ids():
    v = amo(0.4)
    return ids_direct(v, Frequency.golden(), energy_grid(v, 4001), 4000, 32)


# -- duality identity


def test_identity_one_harmonic(golden):
    assert duality_identity_check(amo(1.0), golden, {((1,), 0): 1.0}) < 1e-12


def test_identity_free_delta(golden):
    assert duality_identity_check(TrigPotential.zero(), golden, {((0,), 0): 1.0}) < 1e-14


def test_identity_random_degree_two(golden, rng):
    v = TrigPotential({(1,): 0.3 + 0.2j, (-1,): 0.3 - 0.2j, (2,): 0.5j, (-2,): -0.5j, (0,): 0.7})
    for _ in range(10):
        assert duality_identity_check(v, golden, random_fourier_data(rng, 1, 5, 5)) < 1e-11


def test_identity_two_dimensional(pair, rng):
    v = TrigPotential({(1, 0): 1.0, (-1, 0): 1.0, (1, -2): 0.2 + 0.1j, (-1, 2): 0.2 - 0.1j})
    assert duality_identity_check(v, pair, random_fourier_data(rng, 2, 5, 5)) < 1e-11


def test_identity_detects_wrong_operator(golden, monkeypatch):
    # perturbing the coefficients breaks the identity, so the check is not vacuous
    from aubry import duality
    psi = {((0,), 0): 1.0, ((1,), 2): 0.5}
    good = duality_identity_check(amo(1.0), golden, psi)
    real = duality._hamiltonian_coeffs
    monkeypatch.setattr(duality, "_hamiltonian_coeffs",
                        lambda *a: {k: c * 1.01 for k, c in real(*a).items()})
    assert duality_identity_check(amo(1.0), golden, psi) > 1e-3 > good


def test_support_overflow(golden, rng):
    with pytest.raises(SupportOverflow):
        duality_identity_check(amo(1.0), golden, random_fourier_data(rng, 1, 5, 5), max_support=10)


# -- eigenpairs


def test_diagonal_eigenpairs(golden):
    w = build_dual_window(TrigPotential.zero(), golden, 0.2, Box((-3,), (7,)))
    pairs = dual_eigenpairs(w)
    for p in pairs:
        m = p.center[0]
        assert p.energy == 2 * math.cos(2 * math.pi * (GOLDEN * m + 0.2))
        expect = np.zeros(7)
        expect[m + 3] = 1
        assert np.array_equal(p.vector.amps, expect)
    assert [p.center[0] for p in pairs] == list(range(-3, 4))


def test_amo_eigen_residual(amo_pairs):
    w, pairs = amo_pairs[1000]
    nrm = np.abs(w.dense()).sum(axis=1).max()
    assert max(eigen_residual(w, p) for p in pairs[::10]) <= 1e-9 * nrm


def test_central_centers(amo_pairs):
    _, pairs = amo_pairs[1000]
    mid = pairs[400:600]
    assert all(-200 <= p.center[0] < 200 for p in mid)


def test_complex_banded_pairs(golden):
    v = TrigPotential({(1,): 0.2 + 0.1j, (-1,): 0.2 - 0.1j, (2,): 0.05j, (-2,): -0.05j})
    w = build_dual_window(v, golden, 0.3, 40)
    pairs = dual_eigenpairs(w)
    assert max(eigen_residual(w, p) for p in pairs) < 1e-12
    assert [p.center for p in pairs] == sorted(p.center for p in pairs)


# -- Bloch solutions


def test_plane_wave():
    th = 0.21
    E = 2 * math.cos(2 * math.pi * th)
    assert bloch_solution_residual(delta(0, th), E, TrigPotential.zero(), Frequency.golden(), th) < 1e-12


def test_bloch_amo_central(amo_pairs, golden):
    _, pairs = amo_pairs[1000]
    for p in central(pairs, 20):
        assert bloch_solution_residual(p.vector, p.energy, amo(0.4), golden, THETA) < 1e-6


def test_bloch_tail_bound(golden):
    v = amo(0.4)
    w = build_dual_window(v, golden, THETA, 60)
    for p in dual_eigenpairs(w):
        r = bloch_solution_residual(p.vector, p.energy, v, golden, THETA)
        assert r <= tail_bound(p.vector, w.box.shape, p.energy, v) + 1e-12


def test_parseval_and_round_trip(amo_pairs):
    _, pairs = amo_pairs[250]
    for p in central(pairs, 5):
        b = bloch_from_dual(p.vector)
        assert l2_norm_on_grid(b.samples) == pytest.approx(p.vector.norm, abs=1e-12)
        back = dual_from_bloch(b, p.vector.amps.size)
        assert np.array_equal(back.sites, p.vector.sites)
        assert np.abs(back.amps - p.vector.amps).max() < 1e-12


# -- F matrix and conjugation


def test_free_F_determinant(golden):
    Fg = build_F(delta(0, 0.1), 0.1, golden, 32)
    assert np.abs(Fg.det - 2j * math.sin(2 * math.pi * 0.1)).max() < 1e-15
    assert Fg.det_constancy < 1e-14


def test_real_f_at_zero(golden):
    u = FourierVector(np.array([[-1], [0], [1]]), np.array([0.3, 1.0, 0.3], dtype=complex))
    Fg = build_F(u, 0.0, golden, 32)
    assert np.abs(Fg.det).max() < 1e-15
    with pytest.raises(DegenerateConjugation):
        conjugation_from_F(Fg)


def test_free_conjugation(golden):
    th = 0.125
    Fg = build_F(delta(0, th), th, golden, 64)
    Bg = conjugation_from_F(Fg, golden)
    assert np.abs(Bg.B - Bg.B[0]).max() < 1e-15
    E = 2 * math.cos(2 * math.pi * th)
    assert reducibility_residual(Bg, TrigPotential.zero(), E, golden, th) < 1e-10


def test_free_degenerate(golden):
    with pytest.raises(DegenerateConjugation) as e:
        conjugation_from_F(build_F(delta(0, 0.0), 0.0, golden, 64), golden)
    assert e.value.theta == 0.0


def test_identity_conjugacy(golden):
    G = 64
    rho = 0.17
    A = np.diag([np.exp(2j * np.pi * rho), np.exp(-2j * np.pi * rho)])
    Bg = ConjugationGrid(np.arange(G) / G, np.repeat(np.eye(2, dtype=complex)[None], G, axis=0), np.ones(G), rho)
    res = reducibility_residual(Bg, TrigPotential.zero(), 0.0, golden, rho, cocycle_values=np.repeat(A[None], G, 0))
    assert res == 0.0


def test_amo_F_and_B(amo_pairs, golden):
    _, pairs = amo_pairs[1000]
    for p in central(pairs, 5):
        Fg = build_F(p.vector, THETA, golden, 2048)
        assert Fg.det_constancy < 1e-4
        Bg = conjugation_from_F(Fg, golden, THETA)
        assert np.abs(np.abs(Bg.det_profile) - 1).max() < 1e-6


def _conj_residual(pairs, golden, count=3):
    out = []
    for p in central(pairs, count):
        Bg = conjugation_from_F(build_F(p.vector, THETA, golden, 2048), golden, THETA)
        rho = rotation_number(schrodinger_cocycle(amo(0.4), golden, p.energy), 10**5).value
        out.append(reducibility_residual(Bg, amo(0.4), p.energy, golden, rho))
    return max(out)


def test_amo_reducibility_convergence(amo_pairs, golden):
    res = [_conj_residual(amo_pairs[L][1], golden) for L in (250, 500, 1000)]
    assert res[-1] < 1e-3
    assert res[1] <= 1.5 * res[0] and res[2] <= 1.5 * res[1]


def test_resonance_guard(golden):
    v = amo(0.4)
    for k in list(range(-20, 0)) + list(range(1, 21)):
        th = ((k * GOLDEN) % 1.0) / 2 + 3e-9
        assert resonant(th, golden) == k
        p = central(dual_eigenpairs(build_dual_window(v, golden, th, 200)), 1)[0]
        with pytest.raises(DegenerateConjugation):
            conjugation_from_F(build_F(p.vector, th, golden, 512), golden, th)
    assert resonant(THETA, golden) is None


def test_degree_normalization(golden):
    # an eigenvector centred at site k winds k times; after normalization the winding is 0
    w = build_dual_window(amo(0.4), golden, THETA, 200)
    p = [q for q in dual_eigenpairs(w) if q.center == (7,)][0]
    assert winding_number(p.vector.on_grid(512)) == 7
    Fg = build_F(p.vector, THETA, golden, 512)
    assert Fg.winding == 7
    assert 0 <= Fg.theta <= 0.5


def test_shift_on_grid_exact_for_trig_polynomials():
    G = 32
    x = np.arange(G) / G
    f = np.exp(2j * np.pi * 3 * x) + 0.5 * np.cos(2 * np.pi * 5 * x)
    s = 0.3819
    g = np.exp(2j * np.pi * 3 * (x + s)) + 0.5 * np.cos(2 * np.pi * 5 * (x + s))
    assert np.abs(shift_on_grid(f, s) - g).max() < 1e-13


# -- completeness and labels


def test_completeness_diagonal(golden):
    v = TrigPotential.zero()
    w = build_dual_window(v, golden, THETA, 300)
    pairs = dual_eigenpairs(w)
    ids = ids_direct(v, golden, np.linspace(-2.2, 2.2, 4001), 4000, 32)
    rep = completeness_report(pairs, THETA, golden, [(l,) for l in range(-5, 5)], ids, 50)
    assert all(m == 1.0 for m in rep.completeness_mass.values())
    assert rep.label_match < 2e-3


def test_completeness_amo(amo_pairs, amo_ids, golden):
    _, pairs = amo_pairs[1000]
    rep = completeness_report(pairs, THETA, golden, [(l,) for l in range(-5, 5)], amo_ids, 50)
    assert min(rep.completeness_mass.values()) >= 0.999
    assert max(rep.completeness_mass.values()) <= 1 + 1e-9
    assert rep.label_match < 5e-3


def test_label_match_across_boxes(amo_pairs, amo_ids, golden):
    lm = [completeness_report(amo_pairs[L][1], THETA, golden, [(0,)], amo_ids, 50).label_match
          for L in (250, 500, 1000)]
    assert lm[1] <= 1.5 * lm[0] and lm[2] <= 1.5 * lm[1]


# -- localization


def test_fit_delta():
    u = FourierVector(np.arange(-10, 11)[:, None], np.eye(21)[10].astype(complex))
    assert ipr(u) == 1.0 and u.center == (0,)
    with pytest.raises(FitUnreliable):
        localization_fit(u)


def test_fit_synthetic():
    m = np.arange(-60, 61)
    a = np.exp(-0.9 * np.abs(m))
    u = FourierVector(m[:, None], (a / np.linalg.norm(a)).astype(complex))
    fit = localization_fit(u)
    assert fit.decay_rate == pytest.approx(0.9, abs=1e-3)
    assert fit.center == (0,)


def test_fit_amo(amo_pairs):
    _, pairs = amo_pairs[1000]
    rates = [localization_fit(p.vector).decay_rate for p in central(pairs, 20)]
    assert np.median(rates) == pytest.approx(math.log(1 / 0.4), rel=0.1)
