import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from ising_rg.continuum import pfaffian_combination
from ising_rg.enumeration import EnumerationTooLarge, Enumerator, brute_force_correlation
from ising_rg.geometry import BondObservable, GeometryError, LatticeGeometry, bond_at_site
from ising_rg.lattice_exact import (GeometryTooLarge, H, HB, V, VB, FermionPropagator, betac_exact,
                                    energy_correlation_exact, nn_propagator, pair_correlation_matrix)
from ising_rg.model import Interaction

BC = betac_exact()


def test_betac_identities():
    assert BC == pytest.approx(0.44068679350977151, rel=1e-15)
    assert math.tanh(BC) == pytest.approx(math.sqrt(2) - 1, rel=1e-15)
    assert math.sinh(2 * BC) == pytest.approx(1.0, rel=1e-15)


def test_adjacent_bonds_match_enumeration_at_beta_03():
    g = LatticeGeometry(4, 4)
    bonds = [bond_at_site(g, (0, 0), 1), bond_at_site(g, (1, 0), 1)]
    exact = energy_correlation_exact(g, 0.3, bonds)
    assert exact == pytest.approx(brute_force_correlation(g, 0.3, None, bonds), abs=1e-12)


def test_two_by_two_torus_closed_form():
    # one bond per site and direction: a 4-cycle with coupling 2 beta
    beta = 0.1
    g = LatticeGeometry(2, 2)
    u = math.tanh(2 * beta)
    mean = (u + u ** 3) / (1 + u ** 4)
    opposite = 2 * u ** 2 / (1 + u ** 4)
    bonds = [bond_at_site(g, (0, 0), 1), bond_at_site(g, (0, 1), 1)]
    expected = opposite - mean ** 2
    assert brute_force_correlation(g, beta, None, bonds) == pytest.approx(expected, abs=1e-14)
    assert energy_correlation_exact(g, beta, bonds) == pytest.approx(expected, abs=1e-12)


def test_infinite_temperature_limit():
    g = LatticeGeometry(3, 3)
    bonds = [bond_at_site(g, (0, 0), 1), bond_at_site(g, (0, 0), 2)]
    assert abs(brute_force_correlation(g, 1e-9, None, bonds)) < 1e-8


def test_enumeration_handles_interactions():
    g = LatticeGeometry(3, 3)
    bonds = [bond_at_site(g, (0, 0), 1), bond_at_site(g, (1, 1), 2)]
    v = brute_force_correlation(g, 0.4, Interaction.next_nearest_neighbor(0.1), bonds)
    assert np.isfinite(v)
    assert v != pytest.approx(brute_force_correlation(g, 0.4, None, bonds), abs=1e-6)


def test_enumeration_size_limit():
    with pytest.raises(EnumerationTooLarge):
        Enumerator(LatticeGeometry(5, 5))


def test_batched_enumeration_matches_single_sets():
    g = LatticeGeometry(3, 4, 1.0, "cylinder")
    e = Enumerator(g)
    sets = [[bond_at_site(g, (0, 0), 1), bond_at_site(g, (1, 2), 2)],
            [bond_at_site(g, (2, 1), 1), bond_at_site(g, (0, 0), 1), bond_at_site(g, (1, 1), 2),
             bond_at_site(g, (2, 3), 1)]]
    batched = e.centered_bond_products(0.5, sets)
    assert batched == pytest.approx([e.centered_bond_product(0.5, s) for s in sets], abs=1e-15)


def test_single_bond_rejected():
    g = LatticeGeometry(4, 4)
    with pytest.raises(ValueError):
        energy_correlation_exact(g, BC, [bond_at_site(g, (0, 0), 1)])


def test_coincident_bonds_rejected():
    g = LatticeGeometry(4, 4)
    with pytest.raises(GeometryError):
        energy_correlation_exact(g, BC, [BondObservable((0.1, 0.1), 1), BondObservable((0.2, 0.2), 1)])


def test_bond_outside_interior_rejected():
    g = LatticeGeometry(4, 4, 1.0, "cylinder")
    with pytest.raises(GeometryError):
        energy_correlation_exact(g, BC, [bond_at_site(g, (0, 0), 1), bond_at_site(g, (0, 3), 2)])


def test_memory_budget():
    with pytest.raises(GeometryTooLarge):
        FermionPropagator(LatticeGeometry(64, 64), BC, memory_budget=1000)


def test_large_torus_lazy_mode_matches_dense():
    g = LatticeGeometry(32, 32)
    dense = FermionPropagator(g, BC)
    lazy = FermionPropagator(g, BC, memory_budget=4 * 16 * 32 * 32 - 1)
    assert dense.dense and not lazy.dense
    p, q = ((0, 0), HB), ((5, 3), V)
    assert lazy.kernel(p, q) == pytest.approx(dense.kernel(p, q), abs=1e-14)


@pytest.mark.parametrize("boundary", ["torus", "cylinder"])
def test_kernel_antisymmetry(boundary, rng):
    prop = nn_propagator(LatticeGeometry(6, 6, 1.0, boundary), BC)
    for _ in range(20):
        p = (tuple(int(v) for v in rng.integers(0, 6, 2)), int(rng.integers(4)))
        q = (tuple(int(v) for v in rng.integers(0, 6, 2)), int(rng.integers(4)))
        assert prop.kernel(p, q) + prop.kernel(q, p) == 0


def test_torus_translation_invariance():
    prop = nn_propagator(LatticeGeometry(8, 6), BC)
    base = prop.kernel(((1, 2), H), ((4, 5), VB))
    assert prop.kernel(((3, 0), H), ((6, 3), VB)) == pytest.approx(base, abs=1e-14)
    # the sectors carry different seam signs, so pairs straddling the seam form their own class
    across = prop.kernel(((3, 5), H), ((6, 2), VB))
    assert prop.kernel(((1, 5), H), ((4, 2), VB)) == pytest.approx(across, abs=1e-14)


def test_cylinder_horizontal_invariance_only():
    prop = nn_propagator(LatticeGeometry(8, 6, 1.0, "cylinder"), BC)
    base = prop.kernel(((1, 2), H), ((4, 3), VB))
    assert prop.kernel(((3, 2), H), ((6, 3), VB)) == pytest.approx(base, abs=1e-14)
    assert prop.kernel(((6, 2), H), ((1, 3), VB)) == pytest.approx(-base, abs=1e-14)
    assert abs(prop.kernel(((1, 0), H), ((4, 1), VB)) - base) > 1e-6


def _axis_norms(prop, rs):
    return np.array([max(abs(prop.kernel(((0, 0), c), ((r, 0), c2))) for c in range(4) for c2 in range(4))
                     for r in rs])


def test_critical_propagator_decays_like_inverse_distance():
    prop = nn_propagator(LatticeGeometry(64, 64), BC)
    rs = np.arange(4, 17)
    scaled = _axis_norms(prop, rs) * rs
    assert scaled.min() > 0.1 and scaled.max() < 10.0
    assert scaled.max() / scaled.min() < 1.5


def test_off_critical_propagator_decays_exponentially():
    prop = nn_propagator(LatticeGeometry(64, 64), 0.9 * BC)
    rs = np.arange(4, 20)
    slope = np.polyfit(rs, np.log(_axis_norms(prop, rs)), 1)[0]
    assert slope < 0
    crit = nn_propagator(LatticeGeometry(64, 64), BC)
    assert _axis_norms(prop, [16])[0] < 0.5 * _axis_norms(crit, [16])[0]


def test_horizontal_translation_invariance_of_correlations():
    for boundary in ("torus", "cylinder"):
        g = LatticeGeometry(8, 8, 1.0, boundary)
        prop = nn_propagator(g, BC)
        a = energy_correlation_exact(g, BC, [bond_at_site(g, (0, 2), 1), bond_at_site(g, (3, 4), 2)], prop=prop)
        b = energy_correlation_exact(g, BC, [bond_at_site(g, (5, 2), 1), bond_at_site(g, (0, 4), 2)], prop=prop)
        assert a == pytest.approx(b, abs=1e-13)


def test_vertical_translation_torus_only():
    g = LatticeGeometry(8, 8)
    a = energy_correlation_exact(g, BC, [bond_at_site(g, (0, 0), 1), bond_at_site(g, (2, 1), 1)])
    b = energy_correlation_exact(g, BC, [bond_at_site(g, (0, 5), 1), bond_at_site(g, (2, 6), 1)])
    assert a == pytest.approx(b, abs=1e-13)
    gc = LatticeGeometry(8, 8, 1.0, "cylinder")
    c = energy_correlation_exact(gc, BC, [bond_at_site(gc, (0, 0), 1), bond_at_site(gc, (2, 1), 1)])
    d = energy_correlation_exact(gc, BC, [bond_at_site(gc, (0, 3), 1), bond_at_site(gc, (2, 4), 1)])
    assert abs(c - d) > 1e-4


def test_criticality_marker():
    g = LatticeGeometry(64, 64)
    prop = nn_propagator(g, BC)
    rs = np.arange(2, 17)
    vals = np.array([energy_correlation_exact(g, BC, [bond_at_site(g, (0, 0), 1), bond_at_site(g, (r, 0), 1)],
                                              prop=prop) for r in rs])
    scaled = vals * rs ** 2
    assert scaled.min() > 0.05 and scaled.max() < 0.2


@given(L=st.integers(2, 5), M=st.integers(2, 5), cyl=st.booleans(), n=st.sampled_from([2, 4]),
       factor=st.floats(0.5, 1.5), seed=st.integers(0, 2 ** 32 - 1))
def test_oracle_equivalence_property(L, M, cyl, n, factor, seed):
    assume(L * M <= 20)
    g = LatticeGeometry(L, M, 1.0, "cylinder" if cyl else "torus")
    rng = np.random.default_rng(seed)
    candidates = [(i, j, d) for i in range(L) for j in range(M) for d in (1, 2)
                  if not (cyl and d == 2 and j == M - 1)]
    if L == 2:  # both horizontal bonds at a site coincide
        candidates = [c for c in candidates if not (c[2] == 1 and c[0] == 1)]
    if M == 2 and not cyl:
        candidates = [c for c in candidates if not (c[2] == 2 and c[1] == 1)]
    if len(candidates) < n:
        return
    pick = rng.choice(len(candidates), n, replace=False)
    bonds = [bond_at_site(g, candidates[k][:2], candidates[k][2]) for k in pick]
    beta = factor * BC
    assert energy_correlation_exact(g, beta, bonds) == pytest.approx(
        brute_force_correlation(g, beta, None, bonds), abs=1e-10)


def _wick_defects(n_points):
    pts = [(0.0, 0.0), (1.0, 0.0), (0.25, 0.75), (1.25, -0.5), (-0.5, 1.0), (0.75, -1.25)][:n_points]
    out = []
    for k, a in enumerate((1 / 4, 1 / 8, 1 / 16)):
        side = 16 * 4 ** k  # physical box 4, 8, 16: grows with 1/a
        g = LatticeGeometry(side, side, a)
        bonds = [BondObservable(p, 1) for p in pts]
        prop = nn_propagator(g, BC)
        full = energy_correlation_exact(g, BC, bonds, prop=prop)
        pairs = pair_correlation_matrix(g, BC, bonds, prop=prop)
        out.append(abs(full - pfaffian_combination(pts, pairs)) / abs(full))
    return out


@pytest.mark.parametrize("n_points", [4, 6])
def test_wick_structure_defect_shrinks(n_points):
    d = _wick_defects(n_points)
    assert d[0] > d[1] > d[2]
