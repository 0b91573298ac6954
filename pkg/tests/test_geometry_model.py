import numpy as np
import pytest
from hypothesis import given, strategies as st

from ising_rg.geometry import (BondObservable, GeometryError, LatticeGeometry, bond_at_site,
                               nearest_site)
from ising_rg.model import Interaction, InteractionError


def test_parse_round_trip():
    g = LatticeGeometry.parse("torus:64x32:a=0.0625")
    assert (g.L, g.M, g.a, g.boundary) == (64, 32, 0.0625, "torus")
    assert LatticeGeometry.parse(g.spec()) == g
    assert g.ell1 == pytest.approx(4.0) and g.ell2 == pytest.approx(2.0)


@pytest.mark.parametrize("text", ["torus:64", "torus:ax4", "disk:4x4", "torus:4x4:b=1", "torus:1x4"])
def test_parse_rejects_bad_specs(text):
    with pytest.raises(GeometryError):
        LatticeGeometry.parse(text)


def test_aspect_ratio_bound():
    LatticeGeometry(20, 2)
    with pytest.raises(GeometryError):
        LatticeGeometry(24, 2)


def test_nearest_site_breaks_ties_left_and_bottom():
    g = LatticeGeometry(4, 4, 1.0)
    # sites sit at -1.5, -0.5, 0.5, 1.5; x = 0 is a tie between the middle two
    assert nearest_site(g, (0.0, 0.0)) == (1, 1)
    assert nearest_site(g, (0.01, -0.01)) == (2, 1)


def test_bond_at_site_round_trip():
    g = LatticeGeometry(6, 4, 0.5, "cylinder")
    for site in [(0, 0), (5, 2), (3, 1)]:
        assert bond_at_site(g, site, 1).resolve(g)[0] == site


def test_cylinder_vertical_bond_must_stay_inside():
    g = LatticeGeometry(4, 4, 1.0, "cylinder")
    top = bond_at_site(g, (0, 3), 2)
    with pytest.raises(GeometryError):
        top.resolve(g)
    assert bond_at_site(g, (0, 3), 1).resolve(g) == ((0, 3), (1, 3))


def test_torus_bond_wraps():
    g = LatticeGeometry(4, 4)
    assert bond_at_site(g, (3, 3), 2).resolve(g) == ((3, 3), (3, 0))


def test_point_outside_domain_rejected():
    with pytest.raises(GeometryError):
        BondObservable((3.0, 0.0), 1).resolve(LatticeGeometry(4, 4))


def test_bond_direction_validated():
    with pytest.raises(GeometryError):
        BondObservable((0.0, 0.0), 3)


def test_odd_coupling_key_rejected():
    with pytest.raises(InteractionError):
        Interaction(lam=0.1, couplings={((0, 0),): 1.0})


def test_coupling_range_bound():
    Interaction(lam=0.1, couplings={((0, 0), (3, 0)): 1.0})
    with pytest.raises(InteractionError):
        Interaction(lam=0.1, couplings={((0, 0), (4, 0)): 1.0})


def test_keys_are_translation_classes():
    a = Interaction(lam=0.1, couplings={((2, 3), (3, 4)): -1.0})
    b = Interaction(lam=0.1, couplings={((0, 0), (1, 1)): -1.0})
    assert a.couplings == b.couplings


def test_interaction_dict_round_trip():
    inter = Interaction.next_nearest_neighbor(0.1, J=1.3)
    assert Interaction.from_dict(inter.to_dict()) == inter


def test_nnn_is_ferromagnetic_for_positive_lambda():
    assert Interaction.next_nearest_neighbor(0.1).is_ferromagnetic_pairs()
    assert not Interaction.next_nearest_neighbor(-0.1).is_ferromagnetic_pairs()


@given(seed=st.integers(0, 2 ** 32 - 1))
def test_energy_is_spin_flip_invariant(seed):
    rng = np.random.default_rng(seed)
    g = LatticeGeometry(4, 3)
    inter = Interaction(lam=0.2, couplings={((0, 0), (1, 1)): -1.0,
                                            ((0, 0), (1, 0), (0, 1), (1, 1)): 0.5})
    s = rng.choice([-1, 1], size=g.n_sites)
    assert inter.energy(g, s) == pytest.approx(inter.energy(g, -s))
