import math

import numpy as np
import pytest

from aubry.errors import NoLabelFound, OutOfRange, ValidationError
from aubry.model import GOLDEN, SILVER, Frequency, TrigPotential
from aubry.spectral import (
    IdsCurve, energy_grid, find_gaps, fold_angle, gap_label, hausdorff_distance, ids_direct, ids_dual,
    inverse_rotation_number, label_gaps, spectrum_points,
)

from conftest import amo


def free_ids(E):
    return np.where(E < -2, 0.0, np.where(E > 2, 1.0, 1 - np.arccos(np.clip(E / 2, -1, 1)) / np.pi))


@pytest.fixture(scope="module")
def free_curve():
    E = np.linspace(-2.5, 2.5, 801)
    return ids_direct(TrigPotential.zero(), Frequency.golden(), E, 2000, 64)


@pytest.fixture(scope="module")
def amo2_curve():
    v = amo(2.0)
    return ids_direct(v, Frequency.golden(), energy_grid(v, 3001), 2000, 64)


def test_free_ids(free_curve):
    assert np.abs(free_curve.values - free_ids(free_curve.energies)).max() < 5e-3
    assert free_curve.values[0] == 0 and free_curve.values[-1] == 1
    assert np.all(np.diff(free_curve.values) >= 0)


def test_amo_half_filling(golden):
    c = ids_direct(amo(1.0), golden, [0.0], 2000, 64)
    assert c.values[0] == pytest.approx(0.5, abs=5e-3)


def test_dual_free_arcsine(golden):
    E = np.linspace(-2.2, 2.2, 201)
    c = ids_dual(TrigPotential.zero(), golden, 64, E, 2000)
    assert np.abs(c.values - free_ids(E)).max() < 5e-3


def test_self_dual_point(golden):
    v = amo(1.0)
    E = energy_grid(v, 81)
    d = ids_direct(v, golden, E, 2000, 64)
    u = ids_dual(v, golden, 64, E, 2000)
    assert d.sup_distance(u) < 1e-2


def test_dual_banded_matches_direct(golden):
    v = TrigPotential({(1,): 0.3, (-1,): 0.3, (2,): 0.2j, (-2,): -0.2j})
    E = energy_grid(v, 41)
    d = ids_direct(v, golden, E, 1000, 16)
    u = ids_dual(v, golden, 16, E, 1000)
    assert d.sup_distance(u) < 1e-2


def test_dual_two_dimensional(pair):
    v = TrigPotential({(1, 0): 1.0, (-1, 0): 1.0, (0, 1): 1.0, (0, -1): 1.0})
    E = np.linspace(-7, 7, 15)
    c = ids_dual(v, pair, 2, E, (8, 8))
    assert c.values[0] == 0 and c.values[-1] == 1
    assert np.all(np.diff(c.values) >= 0)


def test_grid_validation(golden):
    with pytest.raises(ValidationError):
        ids_direct(amo(1.0), golden, [], 200, 2)
    with pytest.raises(ValidationError):
        ids_direct(amo(1.0), golden, [1.0, 0.0], 200, 2)
    with pytest.raises(ValidationError):
        ids_direct(amo(1.0), golden, [0.0], 99, 2)


def test_no_gaps_free(free_curve):
    assert len(find_gaps(free_curve, 0.05)) == 0


def test_outer_plateaus_excluded():
    E = np.linspace(-3, 3, 61)
    N = np.clip((E + 1) / 2, 0, 1)
    c = IdsCurve(E, N, {"sites": 1000})
    assert len(find_gaps(c, 0.05)) == 0


def test_amo_gap_inventory(amo2_curve, golden):
    gaps = label_gaps(find_gaps(amo2_curve, 0.05), golden, 10)
    lows = [g for g in gaps if g.hi < 0]
    highs = [g for g in gaps if g.lo > 0]
    assert len(lows) >= 2 and len(highs) >= 2
    widest = sorted(gaps, key=lambda g: -g.width)[:2]
    assert sorted(g.label for g in widest) == [(-1,), (1,)]
    assert all(g.mismatch < 2e-3 for g in widest)
    # regression inventory: labels of all gaps wider than 0.05
    assert sorted(g.label[0] for g in gaps) == [-3, -2, -1, 1, 2, 3]


def test_gap_label_examples(pair, golden):
    assert gap_label(0.0, golden, 10) == ((0,), 0.0)
    k, m = gap_label((GOLDEN + SILVER) % 1.0, pair, 5)
    assert k == (1, 1) and m < 1e-10
    with pytest.raises(NoLabelFound):
        gap_label(0.5, golden, 1, counting_tol=1e-4)
    with pytest.raises(ValidationError):
        gap_label(0.3, golden, 51)


def test_inverse_rotation(free_curve):
    assert inverse_rotation_number(free_curve, 1 / 8).energy == pytest.approx(math.sqrt(2), abs=2e-3)
    assert inverse_rotation_number(free_curve, 1 / 4).energy == pytest.approx(0.0, abs=2e-3)
    for th in (0.07, 0.31, 0.44, 1.23):
        assert inverse_rotation_number(free_curve, th) == inverse_rotation_number(free_curve, -th)
    with pytest.raises(OutOfRange):
        inverse_rotation_number(free_curve, math.nan)


def test_inverse_on_plateau(amo2_curve):
    # 1 - 2 theta = 0.618... sits in the widest gap
    r = inverse_rotation_number(amo2_curve, (1 - GOLDEN) / 2)
    assert r.gap_hit and 0.6 < r.energy < 2.7


def test_inverse_roundtrip(amo2_curve):
    # non-plateau points: E -> theta = (1 - N(E))/2 -> E within two grid cells
    E, N = amo2_curve.energies, amo2_curve.values
    h = E[1] - E[0]
    steep = np.where((np.gradient(N) > 3 * amo2_curve.tol) & (N > 0) & (N < 1))[0]
    for i in steep[::25]:
        back = inverse_rotation_number(amo2_curve, (1 - N[i]) / 2)
        assert not back.gap_hit
        assert abs(back.energy - E[i]) <= 2 * h


def test_fold_angle():
    assert fold_angle(0.7) == pytest.approx(0.3)
    assert fold_angle(-0.2) == pytest.approx(0.2)
    assert fold_angle(1.5) == 0.5


def test_window_size_stability(golden):
    v = amo(0.4)
    E = energy_grid(v, 41)
    a = ids_direct(v, golden, E, 2000, 32)
    b = ids_direct(v, golden, E, 4000, 32)
    assert np.abs(a.values - b.values).max() < 2e-3


def test_hausdorff():
    assert hausdorff_distance([0, 1], [0, 1.5]) == 0.5
    assert hausdorff_distance([0.0], [0.0, 2.0]) == 2.0
    with pytest.raises(ValidationError):
        hausdorff_distance([], [1.0])


def test_spectrum_points_filter(golden):
    raw = spectrum_points(amo(2.0), golden, 400, 2, edge_cut=None)
    kept = spectrum_points(amo(2.0), golden, 400, 2)
    assert raw.size == 800 and kept.size < raw.size
    assert np.all(np.isin(kept, raw))
