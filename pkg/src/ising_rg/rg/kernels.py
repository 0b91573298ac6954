"""Fermionic kernels, their norms and the localization operators.

A kernel of order ``n`` is a sparse list of entries.  Each entry holds a
chirality tuple (``0`` for ``+``, ``1`` for ``-``), ``n`` lattice sites with
the first one at the origin (kernels are translation invariant), per-slot
forward-difference counts ``(d1, d2)`` and a real value.  Values are in
physical units for a lattice of spacing ``a``: a slot with ``k`` derivatives
multiplies ``k`` physical derivatives of the field, while on the lattice a
forward difference stands for ``a`` times a derivative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np
from scipy.sparse.csgraph import minimum_spanning_tree

QUARTIC_CERTIFICATE_TOL = 1e-13
ANTISYMMETRY_TOL = 1e-12
TAIL_TOL = 0.01


class KernelError(ValueError):
    """Malformed kernel or a failed localization certificate."""


class AntisymmetryError(KernelError):
    pass


def scaling_dimension(n: int, p: int = 0) -> tuple[float, str]:
    """``2 - n/2 - p`` and its class.

    >>> scaling_dimension(4, 0)
    (0.0, 'marginal')
    """
    if n < 2 or n % 2:
        raise KernelError("order must be an even integer >= 2")
    if p < 0:
        raise KernelError("derivative count must be non-negative")
    d = 2.0 - n / 2.0 - p
    kind = "relevant" if d > 0 else "marginal" if d == 0 else "irrelevant"
    return d, kind


@dataclass
class KernelRepresentation:
    """Sparse translation-invariant kernel of order ``n`` at scale ``h``."""

    n: int
    omegas: np.ndarray  # (K, n) int, 0 = plus, 1 = minus
    sites: np.ndarray  # (K, n, 2) int, sites[:, 0] == 0
    values: np.ndarray  # (K,)
    derivs: np.ndarray | None = None  # (K, n, 2) int forward-difference counts
    h: int = 0
    a: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.omegas = np.asarray(self.omegas, dtype=np.int64).reshape(-1, self.n)
        self.sites = np.asarray(self.sites, dtype=np.int64).reshape(-1, self.n, 2)
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.derivs is None:
            self.derivs = np.zeros_like(self.sites)
        self.derivs = np.asarray(self.derivs, dtype=np.int64).reshape(-1, self.n, 2)
        K = len(self.values)
        if not (len(self.omegas) == len(self.sites) == len(self.derivs) == K):
            raise KernelError("entry arrays have different lengths")
        if self.n % 2 or self.n < 2:
            raise KernelError("kernel order must be even")
        if K and np.any(self.sites[:, 0] != 0):
            raise KernelError("first slot must sit at the origin")
        p = self.derivs.sum(axis=(1, 2))
        if K and np.any(p != p[0]):
            raise KernelError("all entries must carry the same derivative count")

    @property
    def p(self) -> int:
        return int(self.derivs[0].sum()) if len(self.values) else 0

    def __len__(self):
        return len(self.values)

    def _keys(self, omegas, sites, derivs):
        return [
            (tuple(o), tuple(map(tuple, s)), tuple(map(tuple, d)))
            for o, s, d in zip(omegas.tolist(), sites.tolist(), derivs.tolist())
        ]

    def as_dict(self) -> dict:
        out: dict = {}
        for key, v in zip(self._keys(self.omegas, self.sites, self.derivs), self.values):
            out[key] = out.get(key, 0.0) + v
        return out

    def permuted(self, perm) -> "KernelRepresentation":
        """Entries with slots reordered by ``perm`` and re-anchored at the new first slot."""
        perm = list(perm)
        om = self.omegas[:, perm]
        st = self.sites[:, perm] - self.sites[:, perm[0]][:, None, :]
        dv = self.derivs[:, perm]
        return KernelRepresentation(self.n, om, st, self.values, dv, self.h, self.a)

    def encoded(self) -> np.ndarray:
        """One integer row per entry (chiralities, sites, derivative counts)."""
        K = len(self.values)
        return np.concatenate(
            [self.omegas, self.sites.reshape(K, -1), self.derivs.reshape(K, -1)], axis=1
        )

    def antisymmetry_defect(self) -> float:
        """Max ``|W + W o (i i+1)|`` over adjacent transpositions, relative to ``max|W|``."""
        base = _merge(self)
        scale = float(np.max(np.abs(base.values))) if len(base) else 0.0
        scale = scale or 1.0
        worst = 0.0
        for i in range(self.n - 1):
            perm = list(range(self.n))
            perm[i], perm[i + 1] = perm[i + 1], perm[i]
            both = _concat([base, self.permuted(perm)], [1.0, 1.0])
            if len(both):
                worst = max(worst, float(np.max(np.abs(both.values))))
        return worst / scale

    def is_antisymmetric(self, tol: float = ANTISYMMETRY_TOL) -> bool:
        return self.antisymmetry_defect() <= tol

    def scaled(self, factor: float) -> "KernelRepresentation":
        return KernelRepresentation(self.n, self.omegas, self.sites, factor * self.values,
                                    self.derivs, self.h, self.a)

    def evaluate(self, fields: np.ndarray) -> float:
        """Sum over all anchor positions of ``W * prod(D^d f)`` with commuting test fields.

        ``fields[omega, x1, x2]`` lives on a periodic box; used to check
        exact identities between kernel representations.
        """
        diffs = {}

        def field_of(o, d):
            key = (o, d)
            if key not in diffs:
                f = fields[o]
                for _ in range(d[0]):
                    f = np.roll(f, -1, axis=0) - f
                for _ in range(d[1]):
                    f = np.roll(f, -1, axis=1) - f
                diffs[key] = f
            return diffs[key]

        total = 0.0
        for o, s, d, v in zip(self.omegas, self.sites, self.derivs, self.values):
            prod = np.full(fields.shape[1:], v)
            for k in range(self.n):
                f = field_of(int(o[k]), (int(d[k, 0]), int(d[k, 1])))
                prod = prod * np.roll(f, (-int(s[k, 0]), -int(s[k, 1])), axis=(0, 1))
            total += prod.sum()
        return float(total / self.a ** self.p)


def antisymmetrize(kernel: KernelRepresentation) -> KernelRepresentation:
    """``(1/n!) sum_pi sign(pi) W o pi``, re-anchored after each permutation."""
    perms = list(permutations(range(kernel.n)))
    signs = [_perm_sign(p) / math.factorial(kernel.n) for p in perms]
    return _concat([kernel.permuted(p) for p in perms], signs)


def _perm_sign(perm) -> int:
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def _concat(kernels, signs) -> KernelRepresentation:
    k0 = kernels[0]
    om = np.concatenate([k.omegas for k in kernels])
    st = np.concatenate([k.sites for k in kernels])
    dv = np.concatenate([k.derivs for k in kernels])
    vals = np.concatenate([s * k.values for k, s in zip(kernels, signs)])
    return _merge(KernelRepresentation(k0.n, om, st, vals, dv, k0.h, k0.a))


def _merge(kernel: KernelRepresentation) -> KernelRepresentation:
    """Combine entries with identical keys."""
    if len(kernel) == 0:
        return kernel
    keys, inverse = np.unique(kernel.encoded(), axis=0, return_inverse=True)
    vals = np.zeros(len(keys))
    np.add.at(vals, inverse.reshape(-1), kernel.values)
    n = kernel.n
    return KernelRepresentation(n, keys[:, :n], keys[:, n:3 * n].reshape(-1, n, 2), vals,
                                keys[:, 3 * n:].reshape(-1, n, 2), kernel.h, kernel.a)


def random_quartic_kernel(rng: np.random.Generator, radius: int = 1, density: float = 0.3,
                          h: int = 0, a: float = 1.0, antisymmetric: bool = True) -> KernelRepresentation:
    """Random quartic kernel with sites in ``[-radius, radius]^2`` around the anchor."""
    offsets = [(i, j) for i in range(-radius, radius + 1) for j in range(-radius, radius + 1)]
    rows = []
    for om in np.ndindex(2, 2, 2, 2):
        for s2 in offsets:
            for s3 in offsets:
                for s4 in offsets:
                    if rng.random() < density:
                        rows.append((om, ((0, 0), s2, s3, s4)))
    om = np.array([r[0] for r in rows])
    st = np.array([r[1] for r in rows])
    vals = rng.standard_normal(len(rows))
    k = KernelRepresentation(4, om, st, vals, h=h, a=a)
    return antisymmetrize(k) if antisymmetric else k


# ----------------------------------------------------------------- localization
def local_coefficients(kernel: KernelRepresentation) -> np.ndarray:
    """Zeroth moment ``sum_{x2..xn} W(omega; 0, x2, .., xn)`` per chirality tuple."""
    idx = np.ravel_multi_index(kernel.omegas.T, (2,) * kernel.n)
    out = np.zeros(2 ** kernel.n)
    np.add.at(out, idx, kernel.values)
    return out.reshape((2,) * kernel.n)


def quartic_local_certificate(kernel: KernelRepresentation) -> float:
    """Largest local quartic coefficient relative to the kernel's L1 mass.

    Every chirality 4-tuple on two values repeats a value, and exchanging the
    two repeated slots flips the sign of an antisymmetric kernel while leaving
    the summed coefficient unchanged, so each coefficient vanishes.
    """
    if kernel.n != 4:
        raise KernelError("quartic certificate needs n = 4")
    mass = float(np.sum(np.abs(kernel.values)))
    if mass == 0.0:
        return 0.0
    return float(np.max(np.abs(local_coefficients(kernel)))) / mass


def _path_steps(d) -> list[tuple[tuple[int, int], int, int]]:
    """Forward-difference steps ``(site, direction, sign)`` from the origin to ``d``.

    Horizontal first, then vertical, so that
    ``f(d) - f(0) = sum sign * (D_dir f)(site)``.
    """
    steps = []
    d1, d2 = int(d[0]), int(d[1])
    if d1 >= 0:
        steps += [((s, 0), 0, 1) for s in range(d1)]
    else:
        steps += [((s, 0), 0, -1) for s in range(d1, 0)]
    if d2 >= 0:
        steps += [((d1, s), 1, 1) for s in range(d2)]
    else:
        steps += [((d1, s), 1, -1) for s in range(d2, 0)]
    return steps


def quartic_remainder(kernel: KernelRepresentation) -> KernelRepresentation:
    """One-derivative telescoped form of ``W`` minus its local value (see :func:`localize_quartic`)."""
    rows = []
    for k in range(1, kernel.n):
        for idx, s in enumerate(kernel.sites):
            for site, direction, sign in _path_steps(s[k]):
                rows.append((idx, k, site, direction, sign))
    if not rows:
        return KernelRepresentation(kernel.n, np.zeros((0, kernel.n)), np.zeros((0, kernel.n, 2)),
                                    np.zeros(0), np.zeros((0, kernel.n, 2)), kernel.h, kernel.a)
    idx = np.array([r[0] for r in rows])
    slot = np.array([r[1] for r in rows])
    site = np.array([r[2] for r in rows])
    direction = np.array([r[3] for r in rows])
    sign = np.array([r[4] for r in rows], dtype=float)
    st = kernel.sites[idx].copy()
    before = np.arange(kernel.n)[None, :] < slot[:, None]
    st[before] = 0
    st[np.arange(len(rows)), slot] = site
    dv = np.zeros_like(st)
    dv[np.arange(len(rows)), slot, direction] = 1
    vals = sign * kernel.values[idx] * kernel.a
    return _merge(KernelRepresentation(kernel.n, kernel.omegas[idx], st, vals, dv, kernel.h, kernel.a))


@dataclass
class QuarticLocalization:
    certificate: float
    local: np.ndarray
    remainder: KernelRepresentation


def localize_quartic(kernel: KernelRepresentation, tol: float = QUARTIC_CERTIFICATE_TOL) -> QuarticLocalization:
    """Local part (certified zero) and interpolated remainder of a quartic kernel.

    The remainder rewrites ``f1(x1) f2(x2) f3(x3) f4(x4)`` minus its local
    value by telescoping: for ``k = 2..4`` the slots before ``k`` sit at
    ``x1``, slot ``k`` carries ``f(xk) - f(x1)`` (a sum of forward
    differences along a lattice path) and the later slots stay put.  Each
    remainder entry therefore has exactly one derivative.

    Raises:
        AntisymmetryError: the kernel is not antisymmetric, or the local
            certificate exceeds ``tol``.
    """
    if kernel.n != 4:
        raise KernelError("localize_quartic needs n = 4")
    if kernel.p != 0:
        raise KernelError("input kernel must be derivative free")
    cert = quartic_local_certificate(kernel)
    if cert > tol:
        raise AntisymmetryError(f"local quartic part does not vanish (certificate {cert:.3g})")
    if not kernel.is_antisymmetric():
        raise AntisymmetryError("kernel is not antisymmetric")
    rem = quartic_remainder(kernel)
    return QuarticLocalization(cert, local_coefficients(kernel), rem)


@dataclass
class QuadraticLocalization:
    """Per-anchor local fields of a quadratic kernel.

    ``l0[x, w1, w2]`` is the zeroth moment and ``l1[x, w1, w2, j]`` the first
    moment (physical units) at anchor ``x``; ``remainder`` holds the second-order
    Taylor remainder (two derivative slots).
    """

    anchors: list
    l0: np.ndarray
    l1: np.ndarray
    remainder: KernelRepresentation | None


def localize_quadratic(kernels, window: int | None = None, tail_tol: float = 1e-10) -> QuadraticLocalization:
    """Zeroth and first moments of quadratic kernels over the second slot.

    Args:
        kernels: one :class:`KernelRepresentation` (translation invariant) or
            a mapping ``anchor -> kernel`` for position-dependent kernels.
        window: if given, entries beyond this ``|x2 - x1|_inf`` are treated as
            the tail; the mass outside it must be below ``tail_tol`` relative.

    Raises:
        KernelError: order other than 2, or a tail above ``tail_tol``.
    """
    if isinstance(kernels, KernelRepresentation):
        kernels = {(0, 0): kernels}
    anchors = list(kernels)
    l0 = np.zeros((len(anchors), 2, 2))
    l1 = np.zeros((len(anchors), 2, 2, 2))
    rem_rows = []
    for i, x in enumerate(anchors):
        k = kernels[x]
        if k.n != 2:
            raise KernelError("localize_quadratic needs n = 2")
        if not k.is_antisymmetric():
            raise AntisymmetryError("kernel is not antisymmetric")
        d = k.sites[:, 1]
        if window is not None:
            outside = np.max(np.abs(d), axis=1) > window
            total = np.sum(np.abs(k.values))
            if total and np.sum(np.abs(k.values[outside])) > tail_tol * total:
                raise KernelError("kernel tail exceeds the moment window")
        np.add.at(l0[i], (k.omegas[:, 0], k.omegas[:, 1]), k.values)
        for j in range(2):
            np.add.at(l1[i, :, :, j], (k.omegas[:, 0], k.omegas[:, 1]), k.values * d[:, j] * k.a)
        rem_rows.append(_quadratic_remainder(k))
    rem = rem_rows[0] if len(rem_rows) == 1 else None
    return QuadraticLocalization(anchors, l0, l1, rem)


def _quadratic_remainder(k: KernelRepresentation) -> KernelRepresentation:
    """Second-order remainder ``f(d) - f(0) - sum_j d_j D_j f(0)`` as double differences."""
    om, st, dv, vals = [], [], [], []
    for o, s, v in zip(k.omegas, k.sites, k.values):
        for site, j, sg in _path_steps(s[1]):
            for site2, j2, sg2 in _path_steps(site):
                d = np.zeros((2, 2), dtype=np.int64)
                d[1, j] += 1
                d[1, j2] += 1
                om.append(o)
                st.append(((0, 0), site2))
                dv.append(d)
                vals.append(sg * sg2 * v * k.a ** 2)
    if not vals:
        return KernelRepresentation(2, np.zeros((0, 2)), np.zeros((0, 2, 2)), np.zeros(0),
                                    np.zeros((0, 2, 2)), k.h, k.a)
    return _merge(KernelRepresentation(2, np.array(om), np.array(st), np.array(vals),
                                       np.array(dv), k.h, k.a))


# ------------------------------------------------------------------------ norms
def tree_length(points: np.ndarray) -> float:
    """Minimum-spanning-tree length of a point tuple (surrogate for the Steiner tree)."""
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) < 2:
        return 0.0
    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    return float(minimum_spanning_tree(dist).sum())


def tree_lengths(points: np.ndarray) -> np.ndarray:
    """:func:`tree_length` for a stack ``(K, n, 2)`` of point tuples, by Prim's algorithm."""
    pts = np.asarray(points, dtype=float)
    K, n = pts.shape[:2]
    dist = np.sqrt(((pts[:, :, None, :] - pts[:, None, :, :]) ** 2).sum(-1))
    best = dist[:, 0, :].copy()
    used = np.zeros((K, n), dtype=bool)
    used[:, 0] = True
    total = np.zeros(K)
    rows = np.arange(K)
    for _ in range(n - 1):
        nxt = np.argmin(np.where(used, np.inf, best), axis=1)
        total += best[rows, nxt]
        used[rows, nxt] = True
        best = np.minimum(best, dist[rows, nxt])
    return total


def l1_mass(kernel: KernelRepresentation) -> float:
    """``a^{2(n-1)} sum |W|`` (per anchor site)."""
    return float(kernel.a ** (2 * (kernel.n - 1)) * np.sum(np.abs(kernel.values)))


def weighted_norm(kernel: KernelRepresentation, kappa: float, h: int, window: int | None = None) -> float:
    """Tree-weighted, dimensionless L1 norm at scale ``h``.

    ``2^{-h (2 - n/2 - p)} a^{2(n-1)} sum |W| exp(kappa 2^h delta)``, with
    ``delta`` the tree length of the physical positions.  The prefactor
    makes a kernel of order ``n`` with ``p`` derivatives dimensionless at
    scale ``h``.

    Raises:
        KernelError: with ``window`` set, when entries beyond it carry more
            than 1% of the norm.
    """
    if kappa <= 0:
        raise KernelError("kappa must be positive")
    dim, _ = scaling_dimension(kernel.n, kernel.p)
    if len(kernel) == 0:
        return 0.0
    deltas = tree_lengths(kernel.sites * kernel.a)
    terms = np.abs(kernel.values) * np.exp(kappa * 2.0 ** h * deltas)
    total = float(terms.sum())
    if window is not None:
        outside = np.max(np.abs(kernel.sites.reshape(len(kernel), -1)), axis=1) > window
        if total and terms[outside].sum() > TAIL_TOL * total:
            raise KernelError("kernel tail exceeds the sampling window")
    return 2.0 ** (-h * dim) * kernel.a ** (2 * (kernel.n - 1)) * total
