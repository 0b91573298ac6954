"""Pfaffians of complex antisymmetric matrices.

The Pfaffian is computed by a Parlett-Reid style elimination with full
pivoting over the remaining 2x2 blocks.  Everything is double precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ANTISYMMETRY_RTOL = 1e-12


class PfaffianDimensionError(ValueError):
    """Raised when a Pfaffian is requested for an odd-dimensional matrix."""


class AntisymmetryError(ValueError):
    """Raised when a matrix fails the antisymmetry check."""


@dataclass(frozen=True)
class PfaffianResult:
    """Pfaffian value plus a cheap conditioning indicator.

    ``min_pivot_ratio`` is the smallest pivot magnitude divided by the largest
    entry of the input; values near machine epsilon flag near-singular input.
    """

    value: complex
    min_pivot_ratio: float


def as_antisymmetric(a, rtol: float = ANTISYMMETRY_RTOL) -> np.ndarray:
    """Validate ``a`` and return it as a complex array with an exact zero diagonal.

    Args:
        a: square array-like.
        rtol: tolerance on ``|a + a.T|`` relative to ``max |a|``.

    Raises:
        PfaffianDimensionError: odd or non-square input.
        AntisymmetryError: ``a`` is not antisymmetric within ``rtol``.
    """
    arr = np.array(a, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise PfaffianDimensionError(f"expected a square matrix, got shape {arr.shape}")
    n = arr.shape[0]
    if n % 2:
        raise PfaffianDimensionError(f"Pfaffian undefined for odd dimension {n}")
    if n == 0:
        return arr
    scale = np.max(np.abs(arr))
    if scale > 0 and np.max(np.abs(arr + arr.T)) > rtol * scale:
        raise AntisymmetryError("matrix is not antisymmetric within tolerance")
    # symmetrize away tiny import noise so the elimination sees an exact antisymmetric input
    arr = 0.5 * (arr - arr.T)
    return arr


def pfaffian_with_condition(a) -> PfaffianResult:
    """Pfaffian and pivot-based condition indicator of an antisymmetric matrix."""
    A = as_antisymmetric(a)
    n = A.shape[0]
    if n == 0:
        return PfaffianResult(1.0 + 0.0j, 1.0)
    scale = float(np.max(np.abs(A)))
    if scale == 0.0:
        return PfaffianResult(0.0j, 0.0)
    A = A.copy()
    pf = 1.0 + 0.0j
    min_pivot = np.inf
    for k in range(0, n - 1, 2):
        # full pivoting: largest entry of the trailing block moved to (k, k+1)
        sub = np.abs(A[k:, k:])
        i, j = np.unravel_index(np.argmax(sub), sub.shape)
        i += k
        j += k
        if i > j:
            i, j = j, i
        if i != k:
            A[[k, i], :] = A[[i, k], :]
            A[:, [k, i]] = A[:, [i, k]]
            pf = -pf
            if j == k:
                j = i
        if j != k + 1:
            A[[k + 1, j], :] = A[[j, k + 1], :]
            A[:, [k + 1, j]] = A[:, [j, k + 1]]
            pf = -pf
        piv = A[k, k + 1]
        min_pivot = min(min_pivot, abs(piv))
        if piv == 0:
            return PfaffianResult(0.0j, 0.0)
        pf *= piv
        if k + 2 < n:
            # eliminate rows/cols k, k+1 from the trailing block (Schur complement)
            u = A[k, k + 2:] / piv
            v = A[k + 1, k + 2:]
            update = np.outer(v, u)
            A[k + 2:, k + 2:] += update - update.T
    return PfaffianResult(complex(pf), float(min_pivot / scale))


def pfaffian(a) -> complex:
    """Pfaffian of an even-dimensional antisymmetric matrix.

    >>> pfaffian([[0, 2.0], [-2.0, 0]])
    (2+0j)
    """
    return pfaffian_with_condition(a).value


def pfaffian_from_pairs(entry, m: int) -> complex:
    """Pfaffian of the matrix ``M[k, l] = entry(k, l)`` for ``k < l``.

    Only the upper triangle is queried; the lower triangle is filled by
    antisymmetry.
    """
    if m % 2:
        raise PfaffianDimensionError(f"Pfaffian undefined for odd dimension {m}")
    M = np.zeros((m, m), dtype=complex)
    for k in range(m):
        for l in range(k + 1, m):
            M[k, l] = entry(k, l)
            M[l, k] = -M[k, l]
    return pfaffian(M)
