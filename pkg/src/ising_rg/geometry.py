"""Discrete tori and cylinders, and bond observables placed on them.

Sites are labelled by integer pairs ``(i, j)`` with ``0 <= i < L`` (column)
and ``0 <= j < M`` (row).  The lattice is centred at the origin, so site
``(i, j)`` sits at the continuum point ``a * (i - (L - 1) / 2, j - (M - 1) / 2)``.
The continuum domain is ``[-l1/2, l1/2] x [-l2/2, l2/2]`` with ``l1 = a L``,
``l2 = a M``.  Horizontal direction is always periodic; the vertical one is
periodic on the torus and free on the cylinder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

TORUS = "torus"
CYLINDER = "cylinder"
BOUNDARIES = (TORUS, CYLINDER)
DEFAULT_ASPECT_BOUND = 10.0


class GeometryError(ValueError):
    """Invalid geometry, or a site/bond that does not fit in one."""


@dataclass(frozen=True)
class LatticeGeometry:
    """A discrete torus or cylinder ``L`` columns by ``M`` rows with spacing ``a``."""

    L: int
    M: int
    a: float = 1.0
    boundary: str = TORUS
    aspect_bound: float = field(default=DEFAULT_ASPECT_BOUND, compare=False)

    def __post_init__(self):
        if int(self.L) != self.L or int(self.M) != self.M:
            raise GeometryError("L and M must be integers")
        if self.L < 2 or self.M < 2:
            raise GeometryError(f"need L, M >= 2, got {self.L}x{self.M}")
        if not self.a > 0:
            raise GeometryError("lattice spacing must be positive")
        if self.boundary not in BOUNDARIES:
            raise GeometryError(f"boundary must be one of {BOUNDARIES}")
        ratio = self.L / self.M
        if not (1.0 / self.aspect_bound <= ratio <= self.aspect_bound):
            raise GeometryError(
                f"aspect ratio L/M = {ratio:g} outside [1/{self.aspect_bound:g}, {self.aspect_bound:g}]"
            )

    @classmethod
    def parse(cls, text: str) -> "LatticeGeometry":
        """Parse ``torus:64x64:a=0.0625`` (the ``a=`` part is optional)."""
        parts = text.strip().split(":")
        if len(parts) not in (2, 3):
            raise GeometryError(f"cannot parse geometry {text!r}")
        boundary, dims = parts[0].lower(), parts[1].lower()
        try:
            L, M = (int(v) for v in dims.split("x"))
        except ValueError as exc:
            raise GeometryError(f"cannot parse dimensions {dims!r}") from exc
        a = 1.0
        if len(parts) == 3:
            key, _, val = parts[2].partition("=")
            if key.strip() != "a":
                raise GeometryError(f"unknown geometry option {parts[2]!r}")
            a = float(val)
        return cls(L, M, a, boundary)

    def spec(self) -> str:
        return f"{self.boundary}:{self.L}x{self.M}:a={self.a!r}"

    @property
    def ell1(self) -> float:
        return self.a * self.L

    @property
    def ell2(self) -> float:
        return self.a * self.M

    @property
    def n_sites(self) -> int:
        return self.L * self.M

    @property
    def is_torus(self) -> bool:
        return self.boundary == TORUS

    @property
    def lattice_scale(self) -> int:
        """Dyadic index of the lattice spacing, ``floor(log2(1/a))``."""
        return int(math.floor(math.log2(1.0 / self.a) + 1e-12))

    def index(self, site: tuple[int, int]) -> int:
        i, j = site
        return j * self.L + i

    def contains(self, site: tuple[int, int]) -> bool:
        i, j = site
        return 0 <= i < self.L and 0 <= j < self.M

    def position(self, site: tuple[int, int]) -> np.ndarray:
        i, j = site
        return self.a * np.array([i - (self.L - 1) / 2.0, j - (self.M - 1) / 2.0])

    def shift(self, site: tuple[int, int], di: int, dj: int) -> tuple[int, int] | None:
        """Translate a site, wrapping periodic directions; ``None`` if it leaves a cylinder."""
        i, j = site
        i = (i + di) % self.L
        j = j + dj
        if self.is_torus:
            j %= self.M
        elif not 0 <= j < self.M:
            return None
        return (i, j)

    def bonds(self) -> list[tuple[tuple[int, int], tuple[int, int], int]]:
        """Nearest-neighbour bonds as ``(site, neighbour, direction)``.

        One bond per site and direction (to ``site + e_j``).  On a torus with
        ``L = 2`` (or ``M = 2``) this counts the pair twice, which is the
        convention used consistently by every solver in the package.
        """
        out = []
        for j in range(self.M):
            for i in range(self.L):
                out.append(((i, j), ((i + 1) % self.L, j), 1))
                nb = self.shift((i, j), 0, 1)
                if nb is not None:
                    out.append(((i, j), nb, 2))
        return out

    def with_spacing(self, a: float) -> "LatticeGeometry":
        return LatticeGeometry(self.L, self.M, a, self.boundary, self.aspect_bound)


@dataclass(frozen=True)
class BondObservable:
    """Energy observable on the bond from ``[x]`` in direction ``j``.

    ``x`` is a continuum point; the bond is resolved on a geometry by
    :meth:`resolve`.
    """

    x: tuple[float, float]
    j: int

    def __post_init__(self):
        if self.j not in (1, 2):
            raise GeometryError(f"bond direction must be 1 or 2, got {self.j}")
        object.__setattr__(self, "x", (float(self.x[0]), float(self.x[1])))

    def resolve(self, geometry: LatticeGeometry) -> tuple[tuple[int, int], tuple[int, int]]:
        """Return ``([x], [x] + e_j)`` as site labels.

        Raises:
            GeometryError: ``x`` is not in the open domain, or the bond leaves it.
        """
        site = nearest_site(geometry, self.x)
        nb = geometry.shift(site, 1 if self.j == 1 else 0, 1 if self.j == 2 else 0)
        if nb is None:
            raise GeometryError(f"bond at {self.x} in direction {self.j} leaves {geometry.spec()}")
        return site, nb


def _nearest_index(u: float, n: int) -> int:
    # ties go to the smaller index (left / bottom)
    return int(math.ceil(u - 0.5))


def nearest_site(geometry: LatticeGeometry, x: Sequence[float]) -> tuple[int, int]:
    """The site ``[x]`` closest to ``x``; ties are broken to the left/bottom."""
    x1, x2 = float(x[0]), float(x[1])
    h1, h2 = geometry.ell1 / 2.0, geometry.ell2 / 2.0
    if not (-h1 < x1 < h1 and -h2 < x2 < h2):
        raise GeometryError(f"point {tuple(x)} is not in the interior of the domain")
    u1 = x1 / geometry.a + (geometry.L - 1) / 2.0
    u2 = x2 / geometry.a + (geometry.M - 1) / 2.0
    i = _nearest_index(u1, geometry.L)
    j = _nearest_index(u2, geometry.M)
    if geometry.is_torus:
        return (i % geometry.L, j % geometry.M)
    # a point within a/2 of a free edge still snaps onto the outer row
    return (i % geometry.L, min(max(j, 0), geometry.M - 1))


def bond_at_site(geometry: LatticeGeometry, site: tuple[int, int], j: int) -> BondObservable:
    """The bond observable whose ``[x]`` is exactly ``site``."""
    if not geometry.contains(site):
        raise GeometryError(f"site {site} not in {geometry.spec()}")
    pos = geometry.position(site)
    return BondObservable((pos[0], pos[1]), j)


def resolve_bonds(geometry: LatticeGeometry, bonds: Iterable[BondObservable]):
    """Resolve bonds and reject coincident ones."""
    resolved = [b.resolve(geometry) for b in bonds]
    keys = [(s, nb) for s, nb in resolved]
    if len(set(keys)) != len(keys):
        raise GeometryError("coincident bonds")
    return resolved
