import numpy as np
import pytest
from hypothesis import given, strategies as st

from ising_rg.geometry import LatticeGeometry
from ising_rg.lattice_exact import H, HB, V, VB, betac_exact, nn_propagator, wick_pfaffian
from ising_rg.pfaffian import (AntisymmetryError, PfaffianDimensionError, as_antisymmetric, pfaffian,
                               pfaffian_with_condition)


def random_antisymmetric(rng, n, complex_=False):
    a = rng.standard_normal((n, n))
    if complex_:
        a = a + 1j * rng.standard_normal((n, n))
    return a - a.T


def test_two_by_two():
    assert pfaffian([[0, 3.5], [-3.5, 0]]) == pytest.approx(3.5)


def test_four_by_four_expansion(rng):
    a = random_antisymmetric(rng, 4)
    expected = a[0, 1] * a[2, 3] - a[0, 2] * a[1, 3] + a[0, 3] * a[1, 2]
    assert pfaffian(a) == pytest.approx(expected, rel=1e-13)


def test_empty_matrix_is_one():
    assert pfaffian(np.zeros((0, 0))) == 1


def test_odd_dimension_rejected():
    with pytest.raises(PfaffianDimensionError):
        pfaffian(np.zeros((3, 3)))


def test_asymmetric_input_rejected(rng):
    a = random_antisymmetric(rng, 6)
    a[0, 1] += 1e-6
    with pytest.raises(AntisymmetryError):
        pfaffian(a)


def test_tiny_import_noise_is_tolerated(rng):
    a = random_antisymmetric(rng, 6)
    a[0, 1] *= 1 + 1e-14
    clean = as_antisymmetric(a)
    assert np.all(np.diag(clean) == 0)
    assert np.array_equal(clean, -clean.T)


def test_random_ten_by_ten_squares_to_determinant(rng):
    a = random_antisymmetric(rng, 10)
    pf = pfaffian(a)
    det = np.linalg.det(a)
    assert abs(pf ** 2 - det) / abs(det) < 1e-10


@given(n=st.integers(1, 10), seed=st.integers(0, 2 ** 32 - 1), cplx=st.booleans())
def test_square_equals_determinant(n, seed, cplx):
    a = random_antisymmetric(np.random.default_rng(seed), 2 * n, cplx)
    pf = pfaffian(a)
    det = np.linalg.det(a)
    assert abs(pf ** 2 - det) <= 1e-10 * abs(det)


@given(n=st.integers(1, 6), seed=st.integers(0, 2 ** 32 - 1))
def test_congruence_covariance(n, seed):
    rng = np.random.default_rng(seed)
    a = random_antisymmetric(rng, 2 * n, True)
    b = rng.standard_normal((2 * n, 2 * n)) + 1j * rng.standard_normal((2 * n, 2 * n))
    lhs = pfaffian(b @ a @ b.T)
    rhs = np.linalg.det(b) * pfaffian(a)
    assert abs(lhs - rhs) <= 1e-8 * abs(rhs)


@given(n=st.integers(2, 6), seed=st.integers(0, 2 ** 32 - 1), data=st.data())
def test_transposition_flips_sign(n, seed, data):
    a = random_antisymmetric(np.random.default_rng(seed), 2 * n)
    i = data.draw(st.integers(0, 2 * n - 1))
    j = data.draw(st.integers(0, 2 * n - 1).filter(lambda k: k != i))
    perm = np.arange(2 * n)
    perm[[i, j]] = perm[[j, i]]
    assert pfaffian(a[np.ix_(perm, perm)]) == pytest.approx(-pfaffian(a), rel=1e-10)


def test_singular_input_reports_condition():
    a = np.zeros((4, 4))
    a[0, 1], a[1, 0] = 1.0, -1.0
    res = pfaffian_with_condition(a)
    assert res.value == 0
    assert res.min_pivot_ratio == 0.0


def test_near_singular_is_not_silently_zero(rng):
    a = random_antisymmetric(rng, 6)
    v = rng.standard_normal(6)
    w = rng.standard_normal(6)
    a = np.outer(v, w) - np.outer(w, v)  # rank 2
    a[4, 5] += 1e-9
    a[5, 4] -= 1e-9
    res = pfaffian_with_condition(a)
    assert res.min_pivot_ratio < 1e-8
    assert abs(res.value ** 2 - np.linalg.det(a)) <= 1e-6 * max(abs(np.linalg.det(a)), 1e-300) + 1e-30


def test_wick_two_points_is_the_kernel():
    prop = nn_propagator(LatticeGeometry(8, 8), betac_exact())
    p, q = ((0, 0), HB), ((3, 2), V)
    assert wick_pfaffian([p, q], prop) == pytest.approx(prop.kernel(p, q), rel=1e-12)


def test_wick_four_point_expansion_single_sector():
    # the cylinder has one fermionic sector, so the Pfaffian is of a single kernel matrix
    prop = nn_propagator(LatticeGeometry(8, 8, 1.0, "cylinder"), betac_exact())
    pts = [((0, 0), HB), ((1, 0), H), ((3, 2), VB), ((3, 3), V)]
    k = prop.kernel
    expected = (k(pts[0], pts[1]) * k(pts[2], pts[3]) - k(pts[0], pts[2]) * k(pts[1], pts[3])
                + k(pts[0], pts[3]) * k(pts[1], pts[2]))
    assert wick_pfaffian(pts, prop) == pytest.approx(expected, rel=1e-12)


def test_wick_rejects_odd_point_count():
    prop = nn_propagator(LatticeGeometry(4, 4), 0.3)
    with pytest.raises(ValueError):
        wick_pfaffian([((0, 0), HB)], prop)
