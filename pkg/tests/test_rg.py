import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ising_rg.geometry import LatticeGeometry
from ising_rg.lattice_exact import FermionPropagator, betac_exact
from ising_rg.rg import (AntisymmetryError, DecompositionError, FlowError, KernelError, KernelRepresentation,
                         boundary_vanishing, decompose_propagator, edge_coupling_profile, fine_tune,
                         integrate_flow, l1_mass, linear_tuning_closed_form, linearized_spectrum,
                         localize_quadratic, localize_quartic, quartic_local_certificate, random_quartic_kernel,
                         scaling_dimension, t_of_mass, tadpole_kernel, torus_propagator, tree_length,
                         tree_lengths, weighted_norm)
from ising_rg.rg.decomposition import momentum_pieces


def critical(g):
    return FermionPropagator(g, betac_exact())


@pytest.fixture(scope="module")
def torus128():
    return decompose_propagator(critical(LatticeGeometry(128, 128, 1 / 128)), 2)


@pytest.fixture(scope="module")
def kappa(torus128):
    # half the fitted physical decay constant of the single-scale pieces
    k0, _ = torus128.decay_constant()
    return 0.5 * k0 / torus128.geometry.a


# ---------------------------------------------------------------- decomposition
def test_reconstruction_torus(torus128):
    assert torus128.reconstruction_error() <= 1e-9


def test_reconstruction_cylinder():
    dec = decompose_propagator(critical(LatticeGeometry(32, 32, 1 / 32, "cylinder")), 2)
    assert dec.scheme == "mass"
    assert dec.reconstruction_error() <= 1e-9


def test_two_scale_band_matches_direct_shell(torus128):
    N = torus128.N
    mu = torus128.masses[N - 1]
    _, direct, _ = momentum_pieces(128, 128, {N - 1: mu}, N - 1, N - 1)
    assert np.max(np.abs(torus128.band(N, N - 1) - direct[N - 1])) <= 1e-10


def test_two_scale_band_in_mass_scheme():
    g = LatticeGeometry(64, 64, 1 / 64)
    dec = decompose_propagator(critical(g), 2, scheme="mass")
    N = dec.N
    lo, hi = N - 3, N - 2
    direct = torus_propagator(64, 64, t_of_mass(dec.masses[lo])) - torus_propagator(
        64, 64, t_of_mass(dec.masses[hi + 1]))
    assert np.max(np.abs(dec.band(hi, lo) - direct)) <= 1e-10


def test_scaling_defect_shrinks_away_from_lattice_scale():
    dec = decompose_propagator(critical(LatticeGeometry(256, 256, 1 / 256)), 1, top_mass=4.0)
    N = dec.N
    d = [dec.defect[N - k] for k in range(2, 7)]
    assert all(x > y for x, y in zip(d, d[1:])), d


def test_decay_rates_double_per_scale(torus128):
    rates = torus128.decay_rates
    hs = sorted(rates)
    assert len(hs) >= 3
    for h in hs[1:]:
        assert rates[h] / rates[h - 1] == pytest.approx(2.0, rel=0.15)
    _, worst = torus128.decay_constant()
    assert worst <= 0.2


def test_boundary_vanishing_on_cylinder():
    dec = decompose_propagator(critical(LatticeGeometry(32, 32, 1 / 32, "cylinder")), 2)
    for h, ratios in boundary_vanishing(dec).items():
        assert ratios["bottom"] < 1e-10 and ratios["top"] < 1e-10, h


def test_decomposition_errors_and_infrared_flag():
    g = LatticeGeometry(32, 32, 1 / 32)
    with pytest.raises(DecompositionError):
        decompose_propagator(FermionPropagator(g, 0.3), 2)
    with pytest.raises(DecompositionError):
        decompose_propagator(critical(g), 9)
    with pytest.raises(DecompositionError):
        decompose_propagator(critical(LatticeGeometry(16, 16, 1 / 16, "cylinder")), 2, scheme="momentum")
    assert decompose_propagator(critical(g), -2).infrared_flag
    assert not decompose_propagator(critical(g), 4).infrared_flag


# ---------------------------------------------------------------- scaling dimension
@pytest.mark.parametrize("n,p,expected", [(2, 0, (1.0, "relevant")), (4, 0, (0.0, "marginal")),
                                          (4, 1, (-1.0, "irrelevant")), (2, 2, (-1.0, "irrelevant"))])
def test_scaling_dimension(n, p, expected):
    assert scaling_dimension(n, p) == expected


def test_scaling_dimension_rejects_odd_order():
    with pytest.raises(KernelError):
        scaling_dimension(3)


# ---------------------------------------------------------------- quartic localization
def test_quartic_certificate_on_random_kernels():
    rng = np.random.default_rng(1)
    for _ in range(20):
        assert quartic_local_certificate(random_quartic_kernel(rng, density=0.05)) <= 1e-13


def test_broken_antisymmetry_is_caught():
    rng = np.random.default_rng(2)
    k = random_quartic_kernel(rng, density=0.05, antisymmetric=False)
    assert quartic_local_certificate(k) > 1e-13
    with pytest.raises(AntisymmetryError):
        localize_quartic(k)


def test_quartic_remainder_is_exact_rewrite():
    rng = np.random.default_rng(4)
    k = random_quartic_kernel(rng, density=0.05, a=1 / 16)
    loc = localize_quartic(k)
    assert loc.remainder.p == 1
    fields = rng.standard_normal((2, 10, 10))
    local = KernelRepresentation(4, k.omegas, np.zeros_like(k.sites), k.values, a=k.a)
    assert k.evaluate(fields) == pytest.approx(local.evaluate(fields) + loc.remainder.evaluate(fields), abs=1e-9)


def _scaled_kernel(base, h, N):
    s = 2 ** (N - h)
    k = KernelRepresentation(4, base.omegas, base.sites * s, base.values, h=h, a=2.0 ** -N)
    return k.scaled(1.0 / weighted_norm(k, 0.5, h))


REMAINDER_CONSTANT = 2.0  # telescoping spreads each entry over up to three slots


def test_quartic_remainder_contracts_over_scales():
    rng = np.random.default_rng(3)
    base = random_quartic_kernel(rng, density=0.01)
    N = 6
    rel = []
    for h in range(N, N - 4, -1):
        k = _scaled_kernel(base, h, N)
        rem = localize_quartic(k).remainder
        here, below = weighted_norm(rem, 0.5, h), weighted_norm(rem, 0.5, h - 1)
        assert below <= 0.6 * here
        assert below <= 0.5 * REMAINDER_CONSTANT * weighted_norm(k, 0.5, h)
        rel.append(below)
    # one constant serves every scale
    assert max(rel) / min(rel) < 1.1


# ---------------------------------------------------------------- quadratic localization
def _exp_kernel(R=30, a=1.0):
    om, st, vals = [], [], []
    for d1 in range(-R, R + 1):
        for d2 in range(-R, R + 1):
            v = math.exp(-abs(d1) - abs(d2))
            om += [(0, 1), (1, 0)]
            st += [((0, 0), (d1, d2)), ((0, 0), (-d1, -d2))]
            vals += [v, -v]
    return KernelRepresentation(2, om, st, vals, a=a)


def test_quadratic_zeroth_moment_closed_form():
    q = localize_quadratic(_exp_kernel(), window=30)
    closed = (1 + 2 * sum(math.exp(-k) for k in range(1, 31))) ** 2
    assert q.l0[0, 0, 1] == pytest.approx(closed, rel=1e-10)
    assert q.l0[0, 1, 0] == pytest.approx(-closed, rel=1e-10)


def test_quadratic_first_moment_vanishes_for_even_kernel():
    q = localize_quadratic(_exp_kernel(R=12), window=12, tail_tol=1e-4)
    assert np.max(np.abs(q.l1)) <= 1e-12
    assert q.remainder.p == 2


def test_translation_invariant_kernel_gives_constant_fields():
    k = _exp_kernel(R=6)
    q = localize_quadratic({(0, 0): k, (3, 1): k, (5, 7): k}, window=6, tail_tol=1e-2)
    assert np.all(q.l0 == q.l0[0]) and np.all(q.l1 == q.l1[0])


def test_quadratic_window_too_small():
    with pytest.raises(KernelError):
        localize_quadratic(_exp_kernel(R=10), window=2)


# ---------------------------------------------------------------- norms
def test_tree_lengths_agree_with_scalar_version():
    pts = np.random.default_rng(0).integers(-4, 5, (200, 4, 2))
    assert np.allclose(tree_lengths(pts), [tree_length(p) for p in pts], atol=1e-12)


def test_coincident_pairs_norm_is_l1_mass():
    k = KernelRepresentation(2, [(0, 1), (1, 0)], [((0, 0), (0, 0)), ((0, 0), (0, 0))], [0.7, -0.7], h=0)
    assert weighted_norm(k, 1.0, 0) == pytest.approx(l1_mass(k))


@given(kappa=st.floats(0.1, 3.0), h=st.integers(-3, 3))
def test_norm_jacobian_under_refinement(kappa, h):
    rng = np.random.default_rng(5)
    k = random_quartic_kernel(rng, density=0.02, a=1 / 8)
    fine = KernelRepresentation(4, k.omegas, 2 * k.sites, k.values, a=k.a / 2)
    # same physical kernel on a lattice half as coarse: the measure shrinks by a^{2(n-1)}
    assert weighted_norm(fine, kappa, h) == pytest.approx(2.0 ** -6 * weighted_norm(k, kappa, h), rel=1e-12)


def test_norm_rejects_bad_kappa():
    with pytest.raises(KernelError):
        weighted_norm(_exp_kernel(R=1), 0.0, 0)


def test_tadpole_norms_are_order_lambda(torus128, kappa):
    hs = torus128.scales[:5]
    per_unit = []
    for lam in (0.05, 0.1):
        norms = [weighted_norm(tadpole_kernel(torus128, h, lam), kappa, h) for h in hs]
        per_unit.append(np.array(norms) / lam)
    assert np.allclose(per_unit[0], per_unit[1], rtol=1e-12)
    assert np.max(per_unit[0]) <= 1.0


# ---------------------------------------------------------------- spectrum and flows
def test_linearized_spectrum():
    assert linearized_spectrum(6, verify=False)["table"] == [(2, 2.0), (4, 1.0), (6, 0.5)]


def test_zero_trajectory_at_gaussian_fixed_point():
    s = integrate_flow((0.0, 0.0), "one-loop", lam=0.0)
    assert all(v == 0.0 for v in s.nu) and all(v == 0.0 for v in s.zeta)


def test_untuned_linear_flow_doubles():
    s = integrate_flow((1e-8, 0.0), "linear", h_min=-20)
    nu = np.array(s.nu)
    assert np.max(np.abs(nu[1:] / nu[:-1] / 2 - 1)) <= 1e-12
    assert not s.escaped


def test_escape_is_flagged():
    s = integrate_flow((0.01, 0.0), "linear", h_min=-20)
    assert s.escaped and abs(s.nu[-1]) > 1 and len(s.nu) < 21


def test_fine_tune_gaussian_and_closed_form():
    nu, _ = fine_tune(0.0)
    assert nu == 0.0
    for c in (0.01, -0.003):
        nu, st_ = fine_tune(order="linear", forcing=c)
        assert nu == pytest.approx(linear_tuning_closed_form(c, 20), abs=1e-10)
        assert max(abs(v) for v in st_.nu) <= 2 * abs(nu)


def test_one_loop_fine_tuned_flow_is_bounded():
    nu, s = fine_tune(0.1)
    assert not s.escaped and len(s.nu) == 21
    assert max(abs(v) for v in s.nu) <= 2 * abs(nu)
    assert abs(s.nu[-1]) <= 1e-8


def test_flow_argument_errors():
    with pytest.raises(FlowError):
        integrate_flow(order="two-loop")
    with pytest.raises(FlowError):
        integrate_flow(h_min=3, N=0)


# ---------------------------------------------------------------- edge profile
def test_torus_edge_residual_is_zero():
    prof = edge_coupling_profile(LatticeGeometry(32, 32, 1 / 32), 3)
    assert all(r == 0.0 for r in prof["residual"])
    assert len(set(prof["profile"])) == 1


def test_cylinder_edge_profile_decays():
    prof = edge_coupling_profile(LatticeGeometry(32, 32, 1 / 32, "cylinder"), 3)
    assert prof["kappa"] > 0 and prof["r2"] >= 0.9
    assert prof["boundary"]["bottom"] < 1e-10 and prof["boundary"]["top"] < 1e-10
