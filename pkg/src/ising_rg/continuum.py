"""Continuum predictions for multipoint energy correlations.

Each energy insertion at ``z`` carries a pair of chiral fields, ``psi(z)`` and
``psibar(z)``.  A kernel is the ``2n x 2n`` antisymmetric matrix of their
pairings, ordered ``(psi_1, psibar_1, psi_2, psibar_2, ...)``.  Pairings of
the two fields of the same insertion are dropped (the observables are mean
subtracted), and the correlation is ``Z^n (i/pi)^n Pf K``.

Domains:

* plane: ``<psi psi> = 1/(z - w)``, ``<psibar psibar> = 1/(zbar - wbar)``, no mixing;
* upper half-plane: as the plane plus a mixed term ``1/(z - wbar)`` from the
  mirror image;
* cylinder ``[-l1/2, l1/2] x [-l2/2, l2/2]``, periodic horizontally: the
  horizontally antiperiodic propagator ``(pi/l1)/sin(pi u/l1)`` summed over
  alternating-sign vertical images, with mixed terms built on the mirror
  image across the bottom edge.

The cylinder rule was selected among the sign variants by comparison with
extrapolated lattice data; see ``tests/test_continuum.py``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .pfaffian import pfaffian

IMAGE_TOLERANCE = 1e-14
MAX_IMAGES = 10_000
REALITY_RTOL = 1e-10


class ContinuumError(ValueError):
    """Bad points for a continuum evaluation."""


class ImageSumNotConverged(ArithmeticError):
    """The image sum did not reach the truncation threshold."""

    def __init__(self, message, partial_sums):
        super().__init__(message)
        self.partial_sums = partial_sums


def _as_complex(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ContinuumError("points must be a sequence of (x1, x2) pairs")
    z = pts[:, 0] + 1j * pts[:, 1]
    if len(np.unique(np.round(z, 14))) != len(z):
        raise ContinuumError("coincident points")
    return z


@dataclass(frozen=True)
class ContinuumKernel:
    """Chiral pair kernels on a domain.

    ``same(z, w)`` is the ``<psi(z) psi(w)>`` entry and ``mixed(z, w)`` the
    ``<psi(z) psibar(w)>`` entry; ``psibar psibar`` is the complex conjugate
    of ``same`` (all domains here are symmetric under reflection ``x2 -> -x2``
    combined with conjugation).
    """

    domain: str
    same: Callable[[complex, complex], complex]
    mixed: Callable[[complex, complex], complex] | None = None

    def evaluator(self, z: complex, w: complex) -> complex:
        return self.same(z, w)

    def matrix(self, z: np.ndarray) -> np.ndarray:
        n = len(z)
        K = np.zeros((2 * n, 2 * n), dtype=complex)
        for i in range(n):
            for j in range(i + 1, n):
                s = self.same(z[i], z[j])
                K[2 * i, 2 * j] = s
                K[2 * i + 1, 2 * j + 1] = np.conj(s)
                if self.mixed is not None:
                    K[2 * i, 2 * j + 1] = self.mixed(z[i], z[j])
                    K[2 * i + 1, 2 * j] = -self.mixed(z[j], z[i])
        return K - K.T


def plane_kernel() -> ContinuumKernel:
    return ContinuumKernel("plane", lambda z, w: 1.0 / (z - w))


def halfplane_kernel() -> ContinuumKernel:
    """Upper half-plane with the boundary on the real axis."""
    return ContinuumKernel("halfplane", lambda z, w: 1.0 / (z - w), lambda z, w: 1.0 / (z - np.conj(w)))


def _strip_propagator(u: complex, l1: float) -> complex:
    return (math.pi / l1) / np.sin(math.pi * u / l1)


def _image_sum(shift: complex, l1: float, l2: float, tol: float = IMAGE_TOLERANCE) -> complex:
    """``sum_n (-1)^n P(shift - 2 i n l2)`` truncated once both tails are below ``tol``."""
    total = _strip_propagator(shift, l1)
    partial = [total]
    for n in range(1, MAX_IMAGES):
        sign = -1.0 if n % 2 else 1.0
        up = _strip_propagator(shift - 2j * n * l2, l1)
        down = _strip_propagator(shift + 2j * n * l2, l1)
        total += sign * (up + down)
        partial.append(total)
        if abs(up) + abs(down) < tol * max(1.0, abs(total)):
            return total
    raise ImageSumNotConverged("cylinder image sum did not converge", partial[-5:])


def image_sum_terms(shift: complex, l1: float, l2: float, n_max: int) -> np.ndarray:
    """Magnitudes of the paired image terms ``n = 1..n_max`` (for the tail certificate)."""
    n = np.arange(1, n_max + 1)
    up = np.abs(_strip_propagator(shift - 2j * n * l2, l1))
    down = np.abs(_strip_propagator(shift + 2j * n * l2, l1))
    return up + down


def cylinder_pair_kernel(l1: float, l2: float, aspect_bound: float = 10.0) -> ContinuumKernel:
    if not (l1 > 0 and l2 > 0):
        raise ContinuumError("cylinder sides must be positive")
    if not 1.0 / aspect_bound <= l1 / l2 <= aspect_bound:
        raise ContinuumError("cylinder aspect ratio outside the configured bound")

    def same(z, w):
        return _image_sum(z - w, l1, l2)

    def mixed(z, w):
        # mirror image of w across the bottom edge x2 = -l2/2
        return _image_sum(z - (np.conj(w) - 1j * l2), l1, l2)

    return ContinuumKernel(f"cylinder({l1:g},{l2:g})", same, mixed)


def _check_cylinder_points(z, l1, l2):
    if np.any(np.abs(z.imag) >= l2 / 2.0):
        raise ContinuumError("points must lie strictly inside the cylinder")


def plane_kernel_matrix(points) -> np.ndarray:
    return plane_kernel().matrix(_as_complex(points))


def cylinder_kernel(points, l1: float, l2: float, aspect_bound: float = 10.0) -> np.ndarray:
    """Antisymmetric ``2n x 2n`` pairing matrix on the cylinder.

    Horizontal coordinates are taken modulo ``l1`` (the kernel is periodic in
    both arguments jointly up to the fermionic sign, which cancels in every
    Pfaffian of an even insertion).

    Raises:
        ContinuumError: a point on or outside the boundary.
        ImageSumNotConverged: carries the last partial sums.
    """
    z = _as_complex(points)
    _check_cylinder_points(z, l1, l2)
    return cylinder_pair_kernel(l1, l2, aspect_bound).matrix(z)


def halfplane_kernel_matrix(points) -> np.ndarray:
    z = _as_complex(points)
    if np.any(z.imag <= 0):
        raise ContinuumError("points must lie strictly inside the upper half-plane")
    return halfplane_kernel().matrix(z)


@dataclass(frozen=True)
class CorrelationValue:
    value: float
    imag_residue: float


def correlation_from_kernel(K: np.ndarray, Z: float = 1.0, certify: bool = True) -> CorrelationValue:
    """``Z^n (i/pi)^n Pf K`` for a ``2n x 2n`` pairing matrix, certified real."""
    n = K.shape[0] // 2
    val = (Z ** n) * (1j / math.pi) ** n * pfaffian(K)
    scale = max(abs(val), 1e-300)
    if certify and abs(val.imag) > REALITY_RTOL * scale:
        raise ArithmeticError(f"correlation not real: imaginary residue {val.imag:g}")
    return CorrelationValue(float(val.real), float(val.imag))


def plane_energy_correlation(points, Z: float = 1.0) -> float:
    """Scaling limit of the ``n``-point energy correlation in the plane.

    >>> round(plane_energy_correlation([(0, 0), (1, 0)]) * math.pi ** 2, 12)
    1.0
    """
    return correlation_from_kernel(plane_kernel_matrix(points), Z).value


def cylinder_energy_correlation(points, l1: float, l2: float, Z: float = 1.0) -> float:
    return correlation_from_kernel(cylinder_kernel(points, l1, l2), Z).value


def halfplane_energy_correlation(points, Z: float = 1.0) -> float:
    """Energy correlation in the upper half-plane (free boundary on the real axis)."""
    return correlation_from_kernel(halfplane_kernel_matrix(points), Z).value


def recentre_to_bottom(points, l2: float) -> np.ndarray:
    """Shift half-plane points so the real axis becomes the bottom edge of a height-``l2`` cylinder."""
    pts = np.asarray(points, dtype=float).copy()
    pts[:, 1] -= l2 / 2.0
    return pts


def pair_kernel_from_values(points, pair_values: np.ndarray) -> np.ndarray:
    """Plane-type pairing matrix with moduli taken from two-point correlations.

    ``pair_values[i, j]`` is a measured ``<e_i e_j>``; the entry for
    ``psi_i psi_j`` is ``pi sqrt(value) * |z_ij| / z_ij``.  When the values
    equal the plane prediction this reproduces :func:`plane_kernel_matrix`.
    """
    z = _as_complex(points)
    n = len(z)
    K = np.zeros((2 * n, 2 * n), dtype=complex)
    for i in range(n):
        for j in range(i + 1, n):
            v = pair_values[i, j]
            if v < 0:
                raise ContinuumError("negative two-point value cannot fix a kernel modulus")
            d = z[i] - z[j]
            m = math.pi * math.sqrt(v)
            K[2 * i, 2 * j] = m * abs(d) / d
            K[2 * i + 1, 2 * j + 1] = m * abs(d) / np.conj(d)
    return K - K.T


def pfaffian_combination(points, pair_values: np.ndarray) -> float:
    """Pfaffian prediction for an ``n``-point value assembled from its pair values."""
    return correlation_from_kernel(pair_kernel_from_values(points, pair_values)).value
