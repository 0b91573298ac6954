"""Hamiltonian data: nearest-neighbour coupling plus an even finite-range perturbation.

    H = -J sum_{<x,y>} s_x s_y + lam * sum_X V(X) s_X

``V`` is given per translation class: each key is a set of site offsets with
even cardinality, and the sum over ``X`` runs over all translates that fit in
the geometry (wrapping periodic directions, dropping translates that cross a
free edge).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .geometry import LatticeGeometry

DEFAULT_RANGE_BOUND = 3.0
DEFAULT_LAMBDA_WINDOW = 0.2

Offset = tuple[int, int]


class InteractionError(ValueError):
    """Coupling table violates the even-set / finite-range requirements."""


def _normalize_key(key) -> tuple[Offset, ...]:
    pts = sorted({(int(p[0]), int(p[1])) for p in key})
    if len(pts) != len(list(key)):
        raise InteractionError(f"repeated site in coupling key {key}")
    base = pts[0]
    return tuple((p[0] - base[0], p[1] - base[1]) for p in pts)


def _diameter(key: tuple[Offset, ...]) -> float:
    return max(
        (math.dist(p, q) for p in key for q in key),
        default=0.0,
    )


@dataclass(frozen=True)
class Interaction:
    """Nearest-neighbour coupling ``J`` plus ``lam * V``.

    Attributes:
        J: nearest-neighbour coupling, must be positive.
        lam: perturbation strength.
        couplings: map from offset tuples (translation classes) to ``V(X)``.
        range_bound: maximal allowed diameter of a key, in lattice units.
    """

    J: float = 1.0
    lam: float = 0.0
    couplings: Mapping[tuple[Offset, ...], float] = field(default_factory=dict)
    range_bound: float = DEFAULT_RANGE_BOUND

    def __post_init__(self):
        if not self.J > 0:
            raise InteractionError("J must be positive")
        table = {}
        for key, value in dict(self.couplings).items():
            if len(key) % 2:
                raise InteractionError(f"coupling key {key} is not an even set")
            nk = _normalize_key(key)
            if _diameter(nk) > self.range_bound:
                raise InteractionError(f"coupling key {key} exceeds range bound {self.range_bound}")
            table[nk] = table.get(nk, 0.0) + float(value)
        object.__setattr__(self, "couplings", table)

    @classmethod
    def nearest_neighbor(cls, J: float = 1.0) -> "Interaction":
        return cls(J=J)

    @classmethod
    def next_nearest_neighbor(cls, lam: float, J: float = 1.0) -> "Interaction":
        """Both diagonal pairs with ``V = -1``, so ``lam > 0`` is ferromagnetic."""
        return cls(J=J, lam=lam, couplings={((0, 0), (1, 1)): -1.0, ((0, 0), (1, -1)): -1.0})

    @property
    def range(self) -> float:
        return max((_diameter(k) for k in self.couplings), default=1.0)

    @property
    def is_free(self) -> bool:
        return self.lam == 0.0 or not any(self.couplings.values())

    def is_ferromagnetic_pairs(self) -> bool:
        """True when every perturbation term is a pair with ``lam * V <= 0``."""
        return all(len(k) == 2 and self.lam * v <= 0 for k, v in self.couplings.items())

    def pair_couplings(self, geometry: LatticeGeometry):
        """All pair terms as ``(i, j, K)`` with energy ``-K s_i s_j``.

        Only valid when :meth:`is_ferromagnetic_pairs` or for the bare model;
        multi-spin terms raise.
        """
        out = [(geometry.index(s), geometry.index(nb), self.J) for s, nb, _ in geometry.bonds()]
        for key, value in self.couplings.items():
            if len(key) != 2:
                raise InteractionError("pair_couplings needs a pair-only interaction")
            coef = -self.lam * value
            if coef == 0.0:
                continue
            for sites in translates(geometry, key):
                out.append((sites[0], sites[1], coef))
        return out

    def terms(self, geometry: LatticeGeometry):
        """Every energy term as ``(site_indices, coefficient)``; energy is ``sum coef * s_X``."""
        out = [((geometry.index(s), geometry.index(nb)), -self.J) for s, nb, _ in geometry.bonds()]
        for key, value in self.couplings.items():
            coef = self.lam * value
            if coef == 0.0:
                continue
            for sites in translates(geometry, key):
                out.append((tuple(sites), coef))
        return out

    def energy(self, geometry: LatticeGeometry, spins: np.ndarray) -> float:
        s = np.asarray(spins).reshape(-1)
        return float(sum(c * np.prod(s[list(idx)]) for idx, c in self.terms(geometry)))

    def to_dict(self) -> dict:
        return {
            "J": self.J,
            "lam": self.lam,
            "couplings": [[list(map(list, k)), v] for k, v in self.couplings.items()],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Interaction":
        couplings = {tuple(tuple(p) for p in k): v for k, v in data.get("couplings", [])}
        return cls(J=data.get("J", 1.0), lam=data.get("lam", 0.0), couplings=couplings)


def translates(geometry: LatticeGeometry, key: tuple[Offset, ...]):
    """Site-index tuples of all translates of ``key`` that fit in ``geometry``."""
    out = []
    for j in range(geometry.M):
        for i in range(geometry.L):
            sites = []
            for di, dj in key:
                s = geometry.shift((i, j), di, dj)
                if s is None:
                    break
                sites.append(geometry.index(s))
            else:
                out.append(tuple(sites))
    return out
