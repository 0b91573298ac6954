"""Continuum targets, including the certification of the cylinder image rule against lattice data."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ising_rg.continuum import (ContinuumError, ContinuumKernel, correlation_from_kernel,
                                cylinder_energy_correlation, cylinder_kernel, cylinder_pair_kernel,
                                halfplane_energy_correlation, image_sum_terms, plane_energy_correlation,
                                plane_kernel, plane_kernel_matrix, recentre_to_bottom)
from ising_rg.geometry import BondObservable as B
from ising_rg.scaling import cylinder_plan, plane_plan, run_scaling_scan

points_strategy = st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=2, max_size=6).filter(
    lambda ps: min(math.dist(p, q) for i, p in enumerate(ps) for q in ps[i + 1:]) > 0.05)


def test_two_point_plane_value():
    assert plane_energy_correlation([(0, 0), (1, 0)]) == pytest.approx(1 / math.pi ** 2, rel=1e-14)


def test_plane_evaluator_and_antisymmetry():
    k = plane_kernel()
    assert k.evaluator(1 + 2j, 0.5j) == pytest.approx(1 / (1 + 1.5j))
    K = plane_kernel_matrix([(0, 0), (1, 0.5), (-0.3, 2)])
    assert np.array_equal(K, -K.T)


def test_coincident_points_rejected():
    with pytest.raises(ContinuumError):
        plane_energy_correlation([(0, 0), (0, 0)])


@given(points=points_strategy, s=st.floats(0.1, 10))
def test_plane_scale_covariance(points, s):
    v = plane_energy_correlation(points)
    vs = plane_energy_correlation([(s * x, s * y) for x, y in points])
    assert vs == pytest.approx(v * s ** -len(points), rel=1e-8, abs=1e-12 * abs(v) * s ** -len(points))


@given(points=points_strategy)
def test_plane_values_are_real(points):
    K = plane_kernel_matrix(points)
    res = correlation_from_kernel(K)
    assert abs(res.imag_residue) <= 1e-10 * max(abs(res.value), 1e-300)


def test_cylinder_is_horizontally_periodic():
    k = cylinder_pair_kernel(1.0, 1.0)
    z, w = 0.1 + 0.2j, -0.3 - 0.1j
    assert k.same(z + 1.0, w + 1.0) == pytest.approx(k.same(z, w), rel=1e-12)
    assert k.mixed(z + 1.0, w + 1.0) == pytest.approx(k.mixed(z, w), rel=1e-12)


def test_cylinder_reflection_symmetry_about_vertical_midline():
    pts = np.array([[-0.2, -0.1], [0.2, 0.3]])
    mirrored = pts * np.array([-1, 1])
    K = cylinder_kernel(pts, 1.0, 1.0)
    Km = cylinder_kernel(mirrored, 1.0, 1.0)
    v = correlation_from_kernel(K).value
    assert correlation_from_kernel(Km).value == pytest.approx(v, rel=1e-12)


def test_cylinder_recovers_plane_entries_when_unbounded():
    ell = 1e7
    k = cylinder_pair_kernel(ell, ell)
    z, w = 0.3 + 0.1j, -0.2 + 0.4j
    assert abs(k.same(z, w) - 1 / (z - w)) < 1e-8 * abs(1 / (z - w))
    assert abs(k.mixed(z, w)) < 1e-6


def test_image_sum_tail_is_geometric():
    terms = image_sum_terms(0.1 + 0.2j, 1.0, 1.0, 8)
    ratios = terms[1:] / terms[:-1]
    assert np.all(ratios < 0.01)
    # doubling the cutoff moves nothing visible
    assert terms[4:].sum() < 1e-12


def test_cylinder_boundary_and_aspect_checks():
    with pytest.raises(ContinuumError):
        cylinder_kernel([(0, 0.5), (0.1, 0)], 1.0, 1.0)
    with pytest.raises(ContinuumError):
        cylinder_pair_kernel(20.0, 1.0)


def test_halfplane_far_from_boundary_is_plane():
    pts = [(0.0, 1e4), (1.0, 1e4)]
    assert halfplane_energy_correlation(pts) == pytest.approx(plane_energy_correlation(pts), rel=1e-6)


def test_halfplane_near_boundary_differs():
    pts = [(0.0, 0.2), (1.0, 0.2)]
    assert abs(halfplane_energy_correlation(pts) / plane_energy_correlation(pts) - 1) > 0.1


@given(shift=st.floats(-50, 50))
def test_halfplane_translation_along_boundary(shift):
    pts = np.array([[0.0, 0.3], [0.7, 1.1], [-0.4, 0.5], [0.2, 0.9]])
    moved = pts + np.array([shift, 0.0])
    assert halfplane_energy_correlation(moved) == pytest.approx(halfplane_energy_correlation(pts), rel=1e-9)


def test_recentred_cylinder_tends_to_halfplane():
    pts = np.array([[0.0, 0.3], [0.7, 1.1], [-0.4, 0.5]])
    target = halfplane_energy_correlation(pts)
    devs = [abs(cylinder_energy_correlation(recentre_to_bottom(pts, ell), ell, ell) / target - 1)
            for ell in (250.0, 500.0, 1000.0)]
    assert devs[0] > devs[1] > devs[2]
    # corrections fall like ell^-2
    assert devs[0] / devs[1] == pytest.approx(4.0, rel=0.05)


# ---------------------------------------------------------------- image rule certification
CERT_PAIRS = [
    [B((-0.25, 0.0), 1), B((0.25, 0.0), 1)],
    [B((0.0, -0.25), 1), B((0.0, 0.25), 1)],
    [B((-0.25, -0.25), 1), B((0.25, 0.25), 1)],
    [B((-0.25, -0.25), 1), B((0.25, 0.0), 2), B((0.0, 0.25), 1), B((0.25, -0.25), 1)],
]


@pytest.fixture(scope="module")
def fine_cylinder_reports():
    plan = cylinder_plan(CERT_PAIRS, 1.0, 1.0, spacings=(1 / 32, 1 / 64, 1 / 128))
    return run_scaling_scan(plan)


def test_image_rule_matches_lattice_extrapolation(fine_cylinder_reports):
    for rep in fine_cylinder_reports:
        assert rep.relative_deviation < 0.02, rep.label


def _variant_value(points, sign):
    base = cylinder_pair_kernel(1.0, 1.0)
    variant = ContinuumKernel("variant", base.same, lambda z, w: sign * base.mixed(z, w))
    z = np.array([complex(*p) for p in points])
    return correlation_from_kernel(variant.matrix(z), certify=False).value


def test_image_rule_variants_are_excluded(fine_cylinder_reports):
    # a rotated mixed term, or none at all, leaves some observable well off the lattice limit
    for phase in (1j, -1j, 0.0):
        worst = max(abs(_variant_value([b.x for b in obs], phase) / rep.extrapolated - 1)
                    for obs, rep in zip(CERT_PAIRS, fine_cylinder_reports))
        assert worst > 0.05


def test_overall_sign_of_mixed_term_is_unobservable():
    for obs in CERT_PAIRS:
        pts = [b.x for b in obs]
        assert _variant_value(pts, -1.0) == pytest.approx(_variant_value(pts, 1.0), rel=1e-12)


def test_direction_independence_in_the_plane():
    plan = plane_plan([[B((0, 0), 1), B((1, 0), 1)], [B((0, 0), 2), B((1, 0), 2)]],
                      spacings=(1 / 4, 1 / 8, 1 / 16), box=4.0)
    a, b = run_scaling_scan(plan)
    assert a.extrapolated == pytest.approx(b.extrapolated, rel=0.02)
    assert a.relative_deviation < 0.02 and b.relative_deviation < 0.02
