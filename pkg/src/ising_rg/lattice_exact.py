"""Exact free-fermion solution of the nearest-neighbour Ising model.

The even-subgraph expansion of the partition function is written as a
Gaussian Grassmann integral with four variables per site, ordered
``(Hb, H, Vb, V)``::

    S = t sum_x (Hb_x H_{x+e1} + Vb_x V_{x+e2})
        + sum_x (Hb H + Vb V + Vb Hb + V H + H Vb + V Hb)_x

with ``t = tanh(beta J)``.  With ``A`` the antisymmetric matrix of ``S`` and
twists ``theta`` on the bonds that wrap around:

* torus:    Z_even = (-1)^N (-Pf A_pp + Pf A_pa + Pf A_ap + Pf A_aa) / 2
* cylinder: Z_even = (-1)^N Pf A_a   (horizontally antiperiodic)

where ``p``/``a`` means theta = +1 / -1 in the horizontal, then vertical,
direction.  A bond insertion ``s_x s_y`` becomes ``t + (1 - t^2) theta E_b``
with ``E_b`` the Grassmann bilinear of the bond, so multipoint energy
correlations reduce to Pfaffians of two-point functions in each sector.

Sector Pfaffians are evaluated in momentum space.  Their magnitude is a
product over momentum blocks; their sign follows because, for ``0 < t < 1``,
the only momentum block that can become singular is ``k = 0`` in the
periodic-periodic sector (exactly at criticality).  That block is kept
separate so the critical point itself is handled without division by zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.linalg import solve_banded

from .geometry import BondObservable, GeometryError, LatticeGeometry, resolve_bonds
from .pfaffian import pfaffian

HB, H, VB, V = 0, 1, 2, 3
COMPONENTS = ("Hb", "H", "Vb", "V")

# (row, col) pairs carrying +1 in the on-site part of the action
_LOCAL_PAIRS = ((HB, H), (VB, V), (VB, HB), (V, H), (H, VB), (V, HB))

# Grassmann two-point function <Phi_i Phi_j> = GRASSMANN_SIGN * (A^{-1})_{ij}
GRASSMANN_SIGN = -1.0

# entries of the propagator arrays (complex128) allowed per object
DEFAULT_MEMORY_BUDGET = 16_000_000

_REFERENCE_Q = np.array(
    [[0.0, 1.0, 0.0, 0.0], [-1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0], [0.0, 0.0, -1.0, 0.0]]
)


class GeometryTooLarge(ValueError):
    """The requested propagator does not fit in the memory budget."""


def betac_exact() -> float:
    """Critical inverse temperature of the nearest-neighbour model, ``artanh(sqrt 2 - 1)``."""
    return float(np.arctanh(np.sqrt(2.0) - 1.0))


def local_block() -> np.ndarray:
    A = np.zeros((4, 4))
    for i, j in _LOCAL_PAIRS:
        A[i, j] += 1.0
        A[j, i] -= 1.0
    return A


LOCAL = local_block()


def symbol(k1, k2, t: float) -> np.ndarray:
    """Fourier symbol ``A(k)`` of the action, shape ``broadcast(k1, k2) + (4, 4)``."""
    k1, k2 = np.broadcast_arrays(np.asarray(k1, float), np.asarray(k2, float))
    A = np.broadcast_to(LOCAL.astype(complex), k1.shape + (4, 4)).copy()
    A[..., HB, H] += t * np.exp(1j * k1)
    A[..., H, HB] -= t * np.exp(-1j * k1)
    A[..., VB, V] += t * np.exp(1j * k2)
    A[..., V, VB] -= t * np.exp(-1j * k2)
    return A


def pf4(A: np.ndarray):
    """Closed-form Pfaffian of (a stack of) 4x4 antisymmetric matrices."""
    return (
        A[..., 0, 1] * A[..., 2, 3]
        - A[..., 0, 2] * A[..., 1, 3]
        + A[..., 0, 3] * A[..., 1, 2]
    )


def pf_times_inverse4(A: np.ndarray) -> np.ndarray:
    """``Pf(A) * A^{-1}`` for a 4x4 antisymmetric matrix; polynomial, so finite when singular."""
    a01, a02, a03 = A[0, 1], A[0, 2], A[0, 3]
    a12, a13, a23 = A[1, 2], A[1, 3], A[2, 3]
    return np.array(
        [
            [0, -a23, a13, -a12],
            [a23, 0, -a03, a02],
            [-a13, a03, 0, -a01],
            [a12, -a02, a01, 0],
        ],
        dtype=A.dtype,
    )


def dispersion(k1, k2, t: float):
    """``det A(k) = (1 + t^2)^2 - 2 t (1 - t^2)(cos k1 + cos k2)``."""
    return (1 + t * t) ** 2 - 2 * t * (1 - t * t) * (np.cos(k1) + np.cos(k2))


def twisted_momenta(n: int, theta: int) -> np.ndarray:
    shift = 0.0 if theta == 1 else np.pi
    return (2 * np.pi * np.arange(n) + shift) / n


Slot = tuple[tuple[int, int], int]


@dataclass
class _TorusSector:
    """One boundary sector of the torus Grassmann integral.

    ``log_abs`` and ``sign`` describe the sector weight ``c_s Pf A_s``
    excluding (for the periodic-periodic sector) the ``k = 0`` block Pfaffian
    ``pf0``, which is stored separately.  The two-point function is either a
    dense array ``g[c, c', r1, r2]`` or, on large tori, a cache of the
    displacements requested so far.
    """

    theta1: int
    theta2: int
    k1: np.ndarray
    k2: np.ndarray
    log_abs: float
    sign: float
    g: np.ndarray | None = None
    cache: dict = field(default_factory=dict)
    pf0: float | None = None  # Pf of the k=0 block (pp sector only)
    q0: np.ndarray | None = None  # Pf(A_0) * A_0^{-1} (pp sector only)
    n_sites: int = 0

    @property
    def has_zero_mode(self) -> bool:
        return self.pf0 is not None


class FermionPropagator:
    """Grassmann two-point function of the nearest-neighbour model.

    On the torus this is the sector mixture weighted by the sector
    Pfaffians, i.e. the two-point function of the full Grassmann
    representation.  On the cylinder there is a single sector.

    Components are indexed ``0..3`` for ``(Hb, H, Vb, V)``.

    Args:
        geometry: torus or cylinder.
        beta: inverse temperature.
        J: nearest-neighbour coupling.
        memory_budget: complex entries allowed for stored propagator arrays.
            Tori whose dense propagator would exceed it switch to evaluating
            the requested displacements only.
    """

    def __init__(self, geometry: LatticeGeometry, beta: float, J: float = 1.0,
                 memory_budget: int = DEFAULT_MEMORY_BUDGET):
        if not beta > 0:
            raise ValueError("beta must be positive")
        self.geometry = geometry
        self.beta = float(beta)
        self.J = float(J)
        self.t = float(np.tanh(beta * J))
        self.memory_budget = int(memory_budget)
        L, M = geometry.L, geometry.M
        if 64 * max(L, M) > self.memory_budget:
            raise GeometryTooLarge(f"{geometry.spec()} exceeds the propagator memory budget")
        if geometry.is_torus:
            self.dense = 4 * 16 * L * M <= self.memory_budget
            self.sectors = [self._torus_sector(t1, t2) for t1 in (1, -1) for t2 in (1, -1)]
            ref = max(s.log_abs for s in self.sectors)
            self._rel = [s.sign * math.exp(s.log_abs - ref) for s in self.sectors]
            self._norm = sum(
                r * (s.pf0 if s.has_zero_mode else 1.0) for r, s in zip(self._rel, self.sectors)
            )
        else:
            self.dense = True
            self.sectors = []
            self._k1 = twisted_momenta(L, -1)
            self._bands = [self._cylinder_band(k) for k in self._k1]
            n_cols = max(1, min(4 * M + 8, self.memory_budget // (16 * L * M)))
            self._columns = lru_cache(maxsize=n_cols)(self._cylinder_column)

    # ------------------------------------------------------------------ torus
    def _torus_sector(self, theta1: int, theta2: int) -> _TorusSector:
        L, M, t = self.geometry.L, self.geometry.M, self.t
        k1 = twisted_momenta(L, theta1)
        k2 = twisted_momenta(M, theta2)
        sc1 = np.isclose(np.sin(k1), 0.0, atol=1e-12)
        sc2 = np.isclose(np.sin(k2), 0.0, atol=1e-12)
        pp = theta1 == 1 and theta2 == 1
        # sector weight c_s Pf_s = (+-1/2) (-1)^{#selfconj} F_s, with F_s the product of
        # Pf A(k) over self-conjugate momenta and of |det A(k)|^(1/2) over the rest
        sc_k = [(a, b) for a in k1[sc1] for b in k2[sc2] if not (pp and a == 0.0 and b == 0.0)]
        pf_sc = np.array([pf4(symbol(a, b, t).real) for a, b in sc_k])
        n_sc = int(sc1.sum() * sc2.sum())
        log_det = 0.0
        for row in np.array_split(np.arange(L), max(1, L * M // 1_000_000 + 1)):
            K1, K2 = np.meshgrid(k1[row], k2, indexing="ij")
            keep = ~np.outer(sc1[row], sc2)
            log_det += float(np.sum(np.log(dispersion(K1[keep], K2[keep], t))))
        log_abs = float(np.sum(np.log(np.abs(pf_sc)))) + 0.5 * log_det
        sign = float(np.prod(np.sign(pf_sc))) * (-1.0) ** n_sc
        sign *= -0.5 if pp else 0.5
        sector = _TorusSector(theta1, theta2, k1, k2, log_abs, sign, n_sites=L * M)
        if pp:
            A0 = symbol(0.0, 0.0, t).real
            sector.pf0 = float(pf4(A0))
            sector.q0 = GRASSMANN_SIGN * pf_times_inverse4(A0)
        if self.dense:
            K1, K2 = np.meshgrid(k1, k2, indexing="ij")
            Ginv = self._symbol_inverse(sector, K1, K2, zero_row=True)
            # g(r) = (1/N) sum_k e^{-i k r} G(k), with the twist carried by k
            g = np.fft.fft2(np.moveaxis(Ginv, (2, 3), (0, 1)), axes=(2, 3)) / (L * M)
            phase1 = np.exp(-1j * (k1[0]) * np.arange(L))
            phase2 = np.exp(-1j * (k2[0]) * np.arange(M))
            sector.g = GRASSMANN_SIGN * g * phase1[None, None, :, None] * phase2[None, None, None, :]
        return sector

    def _symbol_inverse(self, sector, K1, K2, zero_row: bool) -> np.ndarray:
        A = symbol(K1, K2, self.t)
        singular = sector.has_zero_mode and zero_row
        if singular:
            A[0, 0] = np.eye(4)
        Ginv = np.linalg.inv(A)
        if singular:
            Ginv[0, 0] = 0.0
        return Ginv

    def _fill_displacements(self, sector: _TorusSector, keys) -> None:
        """Evaluate ``g(r)`` for displacements ``keys`` by direct momentum summation."""
        keys = [k for k in dict.fromkeys(keys) if k not in sector.cache]
        if not keys:
            return
        L, M = self.geometry.L, self.geometry.M
        r = np.array(keys, dtype=float)
        ph2 = np.exp(-1j * np.outer(sector.k2, r[:, 1]))  # (M, R)
        acc = np.zeros((len(keys), 4, 4), dtype=complex)
        chunk = max(1, min(L, 2_000_000 // (16 * M)))
        for start in range(0, L, chunk):
            rows = np.arange(start, min(L, start + chunk))
            K1, K2 = np.meshgrid(sector.k1[rows], sector.k2, indexing="ij")
            Ginv = self._symbol_inverse(sector, K1, K2, zero_row=start == 0)
            ph1 = np.exp(-1j * np.outer(sector.k1[rows], r[:, 0]))  # (b, R)
            G = Ginv.reshape(len(rows), M, 16).transpose(0, 2, 1)  # (b, 16, M)
            tmp = np.matmul(G, ph2)  # (b, 16, R)
            acc += np.einsum("aR,acR->Rc", ph1, tmp).reshape(-1, 4, 4)
        acc *= GRASSMANN_SIGN / (L * M)
        for key, val in zip(keys, acc):
            sector.cache[key] = val

    @staticmethod
    def _displacement(geometry, p: Slot, q: Slot):
        (i1, j1), _ = p
        (i2, j2), _ = q
        r1, r2 = i2 - i1, j2 - j1
        w1 = r1 < 0
        w2 = r2 < 0
        return (r1 % geometry.L, r2 % geometry.M), w1, w2

    def prefetch(self, slots: Sequence[Slot]) -> None:
        """Precompute every displacement needed for pairings among ``slots``."""
        if not self.geometry.is_torus or self.dense:
            return
        keys = [
            self._displacement(self.geometry, slots[a], slots[b])[0]
            for a in range(len(slots)) for b in range(a + 1, len(slots))
        ]
        for sector in self.sectors:
            self._fill_displacements(sector, keys)

    def _sector_kernel(self, sector: _TorusSector, p: Slot, q: Slot) -> complex:
        (r1, r2), w1, w2 = self._displacement(self.geometry, p, q)
        fac = 1.0
        if w1:
            fac *= sector.theta1
        if w2:
            fac *= sector.theta2
        c1, c2 = p[1], q[1]
        if sector.g is not None:
            return fac * sector.g[c1, c2, r1, r2]
        if (r1, r2) not in sector.cache:
            self._fill_displacements(sector, [(r1, r2)])
        return fac * sector.cache[(r1, r2)][c1, c2]

    def _sector_matrix(self, sector: _TorusSector, slots: Sequence[Slot]) -> np.ndarray:
        m = len(slots)
        out = np.zeros((m, m), dtype=complex)
        for a in range(m):
            for b in range(a + 1, m):
                out[a, b] = self._sector_kernel(sector, slots[a], slots[b])
                out[b, a] = -out[a, b]
        return out

    def _weighted_sector_pfaffian(self, idx: int, slots: Sequence[Slot]) -> complex:
        """Relative sector weight times the sector Wick Pfaffian of ``slots``."""
        sector = self.sectors[idx]
        rel = self._rel[idx]
        B = self._sector_matrix(sector, slots)
        if not sector.has_zero_mode:
            return rel * pfaffian(B)
        # G = G' + Q/(N pf0): pf0 * Pf(B + u C) is a quadratic in u = 1/(N pf0)
        comps = [c for _, c in slots]
        C = _tile(sector.q0, comps)
        n = sector.n_sites
        p0 = pfaffian(B)
        if len(slots) == 0:
            return rel * sector.pf0
        p_plus, p_minus = pfaffian(B + C), pfaffian(B - C)
        c1 = 0.5 * (p_plus - p_minus)
        c2_over_pf0 = 0.0
        if len(slots) >= 4:
            Cr = _tile(GRASSMANN_SIGN * _REFERENCE_Q, comps)
            c2_ref = 0.5 * (pfaffian(B + Cr) + pfaffian(B - Cr)) - p0
            # c2 depends on the zero-mode block only through Pf(q0) = pf0 (GRASSMANN_SIGN^2 = 1)
            c2_over_pf0 = c2_ref / pf4(_REFERENCE_Q)
        return rel * (sector.pf0 * p0 + c1 / n + c2_over_pf0 / n**2)

    # --------------------------------------------------------------- cylinder
    def _cylinder_band(self, k1: float) -> np.ndarray:
        """Banded storage (l = u = 5) of the vertical operator at momentum ``k1``."""
        M, t = self.geometry.M, self.t
        n = 4 * M
        dense_rows = np.zeros((11, n), dtype=complex)
        blk = symbol(k1, 0.0, t)
        blk[VB, V] -= t
        blk[V, VB] += t

        def put(i, j, v):
            dense_rows[5 + i - j, j] += v

        for y in range(M):
            for a in range(4):
                for b in range(4):
                    if blk[a, b] != 0:
                        put(4 * y + a, 4 * y + b, blk[a, b])
            if y + 1 < M:
                put(4 * y + VB, 4 * (y + 1) + V, t)
                put(4 * (y + 1) + V, 4 * y + VB, -t)
        return dense_rows

    def _cylinder_column(self, row: int) -> np.ndarray:
        """``col[c, c', r1, y]`` = two-point function from ``((r1, y), c)`` to ``((0, row), c')``."""
        L, M = self.geometry.L, self.geometry.M
        rhs = np.zeros((4 * M, 4), dtype=complex)
        for c in range(4):
            rhs[4 * row + c, c] = 1.0
        # X_k = B_k^{-1}[:, row block]; G(x, x') = (1/L) sum_k e^{-ik (x'_1 - x_1)} X_k(y, y')
        X = np.stack([solve_banded((5, 5), band, rhs) for band in self._bands])  # (L, 4M, 4)
        X = X.reshape(L, M, 4, 4)  # (k, y, c, c')
        # sum over k of e^{+i k r1} X_k with r1 = x_1 - x'_1 >= 0
        phases = np.exp(1j * np.outer(np.arange(L), self._k1))  # (r1, k)
        col = np.einsum("rk,kycd->cdry", phases, X) / L
        return GRASSMANN_SIGN * col

    def cylinder_rows(self, offsets: Sequence[int]) -> dict[int, np.ndarray]:
        """All row pairs at fixed horizontal offsets (cylinder only).

        Returns ``{r1: G}`` with ``G[y, c, y', c'] = <Phi_c((r1, y)) Phi_c'((0, y'))>``
        for ``0 <= r1 < L``.
        """
        if self.geometry.is_torus:
            raise ValueError("cylinder_rows needs a cylinder geometry")
        L, M = self.geometry.L, self.geometry.M
        offsets = [int(r) % L for r in offsets]
        eye = np.eye(4 * M, dtype=complex)
        out = {r: np.zeros((4 * M, 4 * M), dtype=complex) for r in offsets}
        for k, band in zip(self._k1, self._bands):
            X = solve_banded((5, 5), band, eye)
            for r in offsets:
                out[r] += np.exp(1j * k * r) * X
        return {r: (GRASSMANN_SIGN / L) * G.reshape(M, 4, M, 4) for r, G in out.items()}

    def _cylinder_kernel(self, p: Slot, q: Slot) -> complex:
        (i1, j1), c1 = p
        (i2, j2), c2 = q
        r1 = i1 - i2
        fac = 1.0
        if r1 < 0:
            r1 += self.geometry.L
            fac = -1.0
        return fac * self._columns(j2)[c1, c2, r1, j1]

    # ----------------------------------------------------------------- public
    def _check_slot(self, slot: Slot):
        site, c = slot
        if not self.geometry.contains(site) or c not in (0, 1, 2, 3):
            raise GeometryError(f"slot {slot} not in {self.geometry.spec()}")

    def kernel(self, p: Slot, q: Slot) -> complex:
        """Two-point function ``<Phi_p Phi_q>`` for slots ``((i, j), component)``."""
        self._check_slot(p)
        self._check_slot(q)
        if p == q:
            return 0.0j
        if (p[0][1], p[0][0], p[1]) > (q[0][1], q[0][0], q[1]):
            # canonical order makes kernel(p, q) = -kernel(q, p) hold bit for bit
            return -self.kernel(q, p)
        if not self.geometry.is_torus:
            return complex(self._cylinder_kernel(p, q))
        return complex(self.expectation([p, q]))

    def sector_weights(self) -> np.ndarray:
        """Normalized sector weights (torus); ``[1.0]`` on the cylinder."""
        if not self.geometry.is_torus:
            return np.array([1.0])
        w = [r * (s.pf0 if s.has_zero_mode else 1.0) for r, s in zip(self._rel, self.sectors)]
        return np.array(w) / self._norm

    def expectation(self, slots: Sequence[Slot], twists: Sequence[Sequence[float]] | None = None) -> complex:
        """Sector-weighted Wick Pfaffian of ``slots``.

        ``twists[s]`` is an overall factor applied to sector ``s`` (used for
        bond insertions that cross a seam).
        """
        if len(slots) % 2:
            raise ValueError("odd number of Grassmann slots")
        if not self.geometry.is_torus:
            return pfaffian(self.matrix(slots))
        self.prefetch(slots)
        total = 0.0j
        for idx in range(4):
            fac = 1.0 if twists is None else twists[idx]
            if fac == 0.0:
                continue
            total += fac * self._weighted_sector_pfaffian(idx, slots)
        return total / self._norm

    def matrix(self, slots: Sequence[Slot]) -> np.ndarray:
        """Antisymmetric matrix of pairwise two-point functions (single-sector geometries)."""
        m = len(slots)
        out = np.zeros((m, m), dtype=complex)
        for a in range(m):
            for b in range(a + 1, m):
                if self.geometry.is_torus:
                    out[a, b] = self.kernel(slots[a], slots[b])
                else:
                    out[a, b] = self._cylinder_kernel(slots[a], slots[b])
                out[b, a] = -out[a, b]
        return out

    def dominant_sector(self) -> int:
        return int(np.argmax(np.abs(self.sector_weights()))) if self.geometry.is_torus else 0

    def sector_kernel_array(self, idx: int) -> np.ndarray:
        """``g[c, c', r1, r2]`` of torus sector ``idx`` (zero mode excluded in the pp sector)."""
        return self.sectors[idx].g

    def bond_slots(self, site, neighbour, j) -> tuple[Slot, Slot]:
        if j == 1:
            return (site, HB), (neighbour, H)
        return (site, VB), (neighbour, V)

    def bond_twist(self, site, j) -> list[float]:
        """Per-sector sign carried by the bond starting at ``site`` in direction ``j``."""
        i, y = site
        if not self.geometry.is_torus:
            return [-1.0 if (j == 1 and i == self.geometry.L - 1) else 1.0]
        out = []
        for s in self.sectors:
            if j == 1 and i == self.geometry.L - 1:
                out.append(float(s.theta1))
            elif j == 2 and y == self.geometry.M - 1:
                out.append(float(s.theta2))
            else:
                out.append(1.0)
        return out


def _tile(q: np.ndarray, comps: Sequence[int]) -> np.ndarray:
    idx = np.asarray(comps, dtype=int)
    out = q[np.ix_(idx, idx)].astype(complex)
    np.fill_diagonal(out, 0.0)
    return out


def nn_propagator(geometry: LatticeGeometry, beta: float, J: float = 1.0,
                  memory_budget: int = DEFAULT_MEMORY_BUDGET) -> FermionPropagator:
    """Fermion propagator of the nearest-neighbour model at inverse temperature ``beta``."""
    return FermionPropagator(geometry, beta, J, memory_budget)


def wick_pfaffian(points: Sequence[Slot], prop: FermionPropagator) -> complex:
    """Pfaffian of ``M[k, l] = prop(point_k, point_l)``.

    On the torus the Pfaffian is taken sector by sector and averaged with the
    sector weights, which is the Grassmann expectation of the product of the
    fields.
    """
    if len(points) % 2:
        raise ValueError("wick_pfaffian needs an even number of points")
    for p in points:
        prop._check_slot(p)
    return prop.expectation(list(points))


def centered_bond_product(prop: FermionPropagator, resolved, directions) -> float:
    """``<prod_b (s s_b - <s s_b>)>`` for resolved bonds, unscaled.

    Each insertion is ``t + (1 - t^2) theta_b E_b``; the product is expanded
    over subsets of bonds carrying the Grassmann part.
    """
    t = prop.t
    n = len(resolved)
    n_sec = 4 if prop.geometry.is_torus else 1
    slots, twists = [], []
    for (site, nb), j in zip(resolved, directions):
        slots.append(prop.bond_slots(site, nb, j))
        twists.append(np.asarray(prop.bond_twist(site, j)))

    def sector_moment(subset) -> np.ndarray:
        """Per-sector weighted <prod_{b in subset} E_b>, including twists."""
        sl = [s for b in subset for s in slots[b]]
        fac = np.ones(n_sec)
        for b in subset:
            fac = fac * twists[b]
        if prop.geometry.is_torus:
            vals = np.array(
                [fac[i] * prop._weighted_sector_pfaffian(i, sl) for i in range(4)]
            ) / prop._norm
        else:
            vals = np.array([fac[0] * pfaffian(prop.matrix(sl))])
        return vals

    prop.prefetch([s for pair in slots for s in pair])
    cache = {}

    def moment(subset):
        key = tuple(subset)
        if key not in cache:
            cache[key] = sector_moment(key)
        return cache[key]

    weights = moment(())
    d = 1.0 - t * t
    means = [float(np.real(t * weights.sum() + d * moment((b,)).sum())) for b in range(n)]
    c = [t - m for m in means]
    total = 0.0j
    for r in range(n + 1):
        for subset in combinations(range(n), r):
            coef = d**r
            for b in range(n):
                if b not in subset:
                    coef *= c[b]
            total += coef * moment(subset).sum()
    return float(np.real(total)), total.imag, means


def energy_correlation_exact(geometry: LatticeGeometry, beta: float,
                             bonds: Sequence[BondObservable], J: float = 1.0,
                             prop: FermionPropagator | None = None) -> float:
    """Mean-subtracted, ``1/a``-rescaled multipoint energy correlation at ``lambda = 0``.

    Args:
        geometry: torus or cylinder.
        beta: inverse temperature.
        bonds: at least two distinct bond observables.
        J: nearest-neighbour coupling.
        prop: optional precomputed propagator for the same geometry and beta.
    """
    if len(bonds) < 2:
        raise ValueError("energy correlations need at least two bonds")
    resolved = resolve_bonds(geometry, bonds)
    if prop is None:
        prop = nn_propagator(geometry, beta, J)
    directions = [b.j for b in bonds]
    value, _, _ = centered_bond_product(prop, resolved, directions)
    return value / geometry.a ** len(bonds)


def bond_mean_exact(geometry: LatticeGeometry, beta: float, bond: BondObservable,
                    J: float = 1.0, prop: FermionPropagator | None = None) -> float:
    """Finite-volume mean ``<s s_b>`` of one bond."""
    (site, nb), = resolve_bonds(geometry, [bond])
    if prop is None:
        prop = nn_propagator(geometry, beta, J)
    _, _, means = centered_bond_product(prop, [(site, nb)], [bond.j])
    return means[0]


def bond_slots(geometry: LatticeGeometry, bonds: Sequence[BondObservable]) -> list[Slot]:
    """Grassmann slots touched by the given bonds (for :meth:`FermionPropagator.prefetch`)."""
    out = []
    for b, (site, nb) in zip(bonds, resolve_bonds(geometry, bonds)):
        out.extend([(site, HB), (nb, H)] if b.j == 1 else [(site, VB), (nb, V)])
    return out


def pair_correlation_matrix(geometry: LatticeGeometry, beta: float,
                            bonds: Sequence[BondObservable], J: float = 1.0,
                            prop: FermionPropagator | None = None) -> np.ndarray:
    """Symmetric matrix of two-point energy correlations among ``bonds`` (zero diagonal)."""
    if prop is None:
        prop = nn_propagator(geometry, beta, J)
    prop.prefetch(bond_slots(geometry, bonds))
    n = len(bonds)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = energy_correlation_exact(geometry, beta, [bonds[i], bonds[j]], J, prop)
    return out
