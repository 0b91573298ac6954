"""Exact Gibbs expectations by summing over every spin configuration.

This is the test oracle for the exact fermionic solver and the Monte Carlo
estimators.  Configuration ``c`` (an integer) puts spin ``1 - 2 * bit_k(c)``
on site ``k``, so a product of spins over a site set is the parity of the
masked bits.
"""

from __future__ import annotations

from itertools import combinations
from typing import Sequence

import numpy as np

from .geometry import BondObservable, LatticeGeometry, resolve_bonds
from .model import Interaction

MAX_SITES = 24
CHUNK_BITS = 20


class EnumerationTooLarge(ValueError):
    """Raised when full enumeration is requested for more than ``MAX_SITES`` sites."""


def _parity_sign(configs: np.ndarray, mask: int) -> np.ndarray:
    par = np.bitwise_count(configs & np.uint32(mask)) & 1
    return 1 - 2 * par.astype(np.int8)


class Enumerator:
    """All ``2**N`` configurations of a small lattice with their energies.

    Energies are computed once; expectations at any ``beta`` reuse them.
    """

    def __init__(self, geometry: LatticeGeometry, interaction: Interaction | None = None):
        if geometry.n_sites > MAX_SITES:
            raise EnumerationTooLarge(
                f"{geometry.n_sites} sites exceeds the enumeration limit of {MAX_SITES}"
            )
        self.geometry = geometry
        self.interaction = interaction or Interaction()
        self.n = geometry.n_sites
        terms = self.interaction.terms(geometry)
        self._term_masks = []
        for idx, coef in terms:
            mask = 0
            for k in idx:
                mask ^= 1 << k
            self._term_masks.append((mask, coef))
        self.energies = np.concatenate([self._chunk_energy(c) for c in self._chunks()])
        self.e_min = float(self.energies.min())

    def _chunks(self):
        total = 1 << self.n
        step = 1 << min(CHUNK_BITS, self.n)
        for start in range(0, total, step):
            yield np.arange(start, min(start + step, total), dtype=np.uint32)

    def _chunk_energy(self, configs):
        e = np.zeros(configs.shape[0])
        for mask, coef in self._term_masks:
            e += coef * _parity_sign(configs, mask)
        return e

    def weights(self, beta: float) -> np.ndarray:
        return np.exp(-beta * (self.energies - self.e_min))

    def site_mask(self, sites) -> int:
        mask = 0
        for s in sites:
            mask ^= 1 << self.geometry.index(s)
        return mask

    def expectation_of_masks(self, beta: float, masks: Sequence[int]) -> np.ndarray:
        """``<s_X>`` for each site mask."""
        w = self.weights(beta)
        z = w.sum()
        out = np.zeros(len(masks))
        step = 1 << min(CHUNK_BITS, self.n)
        for start, configs in zip(range(0, 1 << self.n, step), self._chunks()):
            wc = w[start:start + configs.shape[0]]
            for m, mask in enumerate(masks):
                out[m] += np.dot(wc, _parity_sign(configs, mask))
        return out / z

    def centered_bond_product(self, beta: float, bonds: Sequence[BondObservable]) -> float:
        """``<prod_b (s s_b - <s s_b>)>`` without the ``1/a`` rescaling."""
        return self.centered_bond_products(beta, [bonds])[0]

    def centered_bond_products(self, beta: float, bond_sets: Sequence[Sequence[BondObservable]]) -> list[float]:
        """:meth:`centered_bond_product` for several bond sets from a single pass over configurations."""
        plans, all_masks = [], {}
        for bonds in bond_sets:
            bond_masks = [self.site_mask(pair) for pair in resolve_bonds(self.geometry, bonds)]
            n = len(bond_masks)
            # raw moments of every subset, then inclusion-exclusion
            subsets = [s for r in range(n + 1) for s in combinations(range(n), r)]
            masks = []
            for sub in subsets:
                m = 0
                for k in sub:
                    m ^= bond_masks[k]
                masks.append(m)
                all_masks.setdefault(m, len(all_masks))
            plans.append((n, subsets, masks))
        values = self.expectation_of_masks(beta, list(all_masks))
        out = []
        for n, subsets, masks in plans:
            moments = {sub: values[all_masks[m]] for sub, m in zip(subsets, masks)}
            means = [moments[(k,)] for k in range(n)]
            total = 0.0
            for sub in subsets:
                coef = 1.0
                for k in range(n):
                    if k not in sub:
                        coef *= -means[k]
                total += coef * moments[sub]
            out.append(float(total))
        return out

    def magnetization_moments(self, beta: float) -> tuple[float, float]:
        """``(<m^2>, <m^4>)`` with ``m`` the magnetization per site."""
        w = self.weights(beta)
        z = w.sum()
        m2 = m4 = 0.0
        step = 1 << min(CHUNK_BITS, self.n)
        for start, configs in zip(range(0, 1 << self.n, step), self._chunks()):
            wc = w[start:start + configs.shape[0]]
            mag = (self.n - 2 * np.bitwise_count(configs).astype(np.float64)) / self.n
            m2 += np.dot(wc, mag**2)
            m4 += np.dot(wc, mag**4)
        return m2 / z, m4 / z


def brute_force_correlation(
    geometry: LatticeGeometry,
    beta: float,
    interaction: Interaction | None,
    bonds: Sequence[BondObservable],
) -> float:
    """Exact mean-subtracted, ``1/a``-rescaled multipoint energy correlation.

    Sums over all ``2**(L*M)`` configurations; limited to 24 sites.
    """
    if len(bonds) < 1:
        raise ValueError("need at least one bond")
    enum = Enumerator(geometry, interaction)
    value = enum.centered_bond_product(beta, bonds)
    return value / geometry.a ** len(bonds)


def susceptibility(geometry: LatticeGeometry, beta: float, interaction: Interaction | None = None) -> float:
    """``N <m^2>`` by enumeration."""
    enum = Enumerator(geometry, interaction)
    m2, _ = enum.magnetization_moments(beta)
    return geometry.n_sites * m2
