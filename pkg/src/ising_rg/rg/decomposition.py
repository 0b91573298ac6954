"""Multiscale splitting of the critical lattice propagator.

Scale ``h`` is tied to the mass ``mu_h = top_mass * 2**(h - N)`` (lattice
units), with ``mu_{N+1} = infinity``.  Two schemes are available.

``momentum`` (tori): the critical propagator is multiplied in momentum space
by ``Phi_{h+1}(k) - Phi_h(k)`` with ``Phi_h = mu_h^2 / (s^2 + mu_h^2)`` and
``s^2 = 4 sin^2(k1/2) + 4 sin^2(k2/2)``.  These weights are a smooth
partition of unity; they are analytic in ``k``, so each piece decays like
``exp(-mu_h |r|)``.

``mass`` (cylinders, and tori on request): scale ``h`` is the difference
``G(mu_h) - G(mu_{h+1})`` of exact massive propagators, the mass coming from
lowering ``t = tanh(beta J)`` below its critical value; ``G(inf)`` is the
on-site ``t = 0`` propagator, kept as the ``local`` piece.  Any field
identity that holds at every temperature, such as the boundary relations
on a cylinder, is inherited by every piece.

In both schemes ``local + sum_h g_h + infrared`` equals the critical
propagator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from ..geometry import LatticeGeometry
from ..lattice_exact import GRASSMANN_SIGN, LOCAL, FermionPropagator, symbol, twisted_momenta

T_CRITICAL = math.sqrt(2.0) - 1.0
RECONSTRUCTION_TOL = 1e-9


class DecompositionError(ValueError):
    """Invalid request for a scale decomposition."""


def mass_of(t: float) -> float:
    """Axis decay rate of the free propagator at ``0 < t < t_c``."""
    if not 0.0 < t <= T_CRITICAL:
        raise ValueError("t must lie in (0, t_c]")
    c = (1 + t * t) ** 2 / (2 * t * (1 - t * t)) - 1.0
    return float(np.arccosh(max(c, 1.0)))


def t_of_mass(mu: float) -> float:
    """Inverse of :func:`mass_of`; ``mu = inf`` maps to ``t = 0``."""
    if mu < 0:
        raise ValueError("mass must be non-negative")
    if mu == 0:
        return T_CRITICAL
    if math.isinf(mu):
        return 0.0
    return float(brentq(lambda t: mass_of(t) - mu, 1e-300, T_CRITICAL, xtol=1e-15, rtol=1e-15))


def torus_propagator(L: int, M: int, t: float, theta=(-1, -1)) -> np.ndarray:
    """Single-sector torus propagator ``g[c, c', r1, r2] = <Phi_c(x) Phi_c'(x + r)>``.

    The default sector is antiperiodic in both directions, which has no zero
    mode even at ``t_c``.
    """
    k1 = twisted_momenta(L, theta[0])
    k2 = twisted_momenta(M, theta[1])
    K1, K2 = np.meshgrid(k1, k2, indexing="ij")
    Ginv = np.linalg.inv(symbol(K1, K2, t))
    g = np.fft.fft2(np.moveaxis(Ginv, (2, 3), (0, 1)), axes=(2, 3)) / (L * M)
    ph1 = np.exp(-1j * k1[0] * np.arange(L))
    ph2 = np.exp(-1j * k2[0] * np.arange(M))
    return GRASSMANN_SIGN * g * ph1[None, None, :, None] * ph2[None, None, None, :]


def momentum_pieces(L: int, M: int, masses: dict, h_min: int, N: int):
    """Momentum-scheme pieces on an antiperiodic torus.

    Returns ``(critical, pieces, infrared)`` as ``[c, c', r1, r2]`` arrays.
    """
    k1 = twisted_momenta(L, -1)
    k2 = twisted_momenta(M, -1)
    K1, K2 = np.meshgrid(k1, k2, indexing="ij")
    Gk = np.linalg.inv(symbol(K1, K2, T_CRITICAL))
    s2 = 4 * np.sin(K1 / 2) ** 2 + 4 * np.sin(K2 / 2) ** 2
    ph1 = np.exp(-1j * k1[0] * np.arange(L))
    ph2 = np.exp(-1j * k2[0] * np.arange(M))

    def to_space(weight):
        G = Gk if weight is None else Gk * weight[..., None, None]
        g = np.fft.fft2(np.moveaxis(G, (2, 3), (0, 1)), axes=(2, 3)) / (L * M)
        return GRASSMANN_SIGN * g * ph1[None, None, :, None] * ph2[None, None, None, :]

    def phi(h):
        if h > N:
            return np.ones_like(s2)
        mu = masses[h]
        return mu * mu / (s2 + mu * mu)

    pieces = {h: to_space(phi(h + 1) - phi(h)) for h in range(h_min, N + 1)}
    return to_space(None), pieces, to_space(phi(h_min))


def _local_torus(L: int, M: int) -> np.ndarray:
    g = np.zeros((4, 4, L, M), dtype=complex)
    g[:, :, 0, 0] = GRASSMANN_SIGN * np.linalg.inv(LOCAL)
    return g


def _local_cylinder(M: int, offsets) -> dict[int, np.ndarray]:
    out = {}
    inv = GRASSMANN_SIGN * np.linalg.inv(LOCAL)
    for r in offsets:
        G = np.zeros((M, 4, M, 4), dtype=complex)
        if r == 0:
            for y in range(M):
                G[y, :, y, :] = inv
        out[r] = G
    return out


@dataclass
class ScaleDecomposition:
    """Single-scale propagators of a critical lattice propagator.

    On a torus each piece is a full array ``[c, c', r1, r2]``; on a cylinder
    it is a dict ``{r1: [y, c, y', c']}`` restricted to the horizontal
    offsets requested at construction.
    """

    geometry: LatticeGeometry
    N: int
    h_min: int
    top_mass: float
    scheme: str
    masses: dict
    critical: object
    local: object
    pieces: dict
    infrared: object
    infrared_flag: bool
    offsets: tuple = ()
    defect: dict = field(default_factory=dict)

    @property
    def scales(self) -> list[int]:
        return sorted(self.pieces, reverse=True)

    def __getitem__(self, h: int):
        return self.pieces[h]

    def reconstruction_error(self) -> float:
        """Max deviation of ``local + sum_h g_h + infrared`` from the critical propagator."""
        if self.geometry.is_torus:
            total = self.local + sum(self.pieces.values()) + self.infrared
            return float(np.max(np.abs(total - self.critical)))
        err = 0.0
        for r in self.offsets:
            total = self.local[r] + sum(p[r] for p in self.pieces.values()) + self.infrared[r]
            err = max(err, float(np.max(np.abs(total - self.critical[r]))))
        return err

    def band(self, h_hi: int, h_lo: int):
        """Sum of the pieces ``h_lo <= h <= h_hi``."""
        sel = [self.pieces[h] for h in range(h_lo, h_hi + 1)]
        if self.geometry.is_torus:
            return sum(sel)
        return {r: sum(p[r] for p in sel) for r in self.offsets}

    @cached_property
    def decay_rates(self) -> dict:
        """Fitted axis decay rate of each torus piece (slope of ``log|g|``).

        The fit window is ``[2, 6] / mu_h`` along the first axis; scales whose
        window does not fit in half the torus are skipped.
        """
        if not self.geometry.is_torus:
            raise DecompositionError("decay rates are fitted on tori")
        out = {}
        half = self.geometry.L // 2
        for h, g in self.pieces.items():
            mu = self.masses[h]
            lo, hi = int(math.ceil(2 / mu)), int(6 / mu)
            if hi >= half or hi - lo < 3:
                continue
            r = np.arange(lo, hi + 1)
            mag = np.max(np.abs(g[:, :, r, 0]), axis=(0, 1))
            slope = np.polyfit(r, np.log(mag), 1)[0]
            out[h] = float(-slope)
        return out

    def decay_constant(self) -> tuple[float, float]:
        """``kappa_0`` with rates ``~ kappa_0 2^h`` and the worst relative deviation from it."""
        rates = self.decay_rates
        ratios = np.array([r / 2.0 ** h for h, r in rates.items()])
        k0 = float(np.exp(np.mean(np.log(ratios))))
        return k0, float(np.max(np.abs(ratios / k0 - 1.0)))


def _check_critical(prop: FermionPropagator):
    if abs(prop.t - T_CRITICAL) > 1e-12 * T_CRITICAL:
        raise DecompositionError("decompose_propagator needs the propagator at beta_c(0)")


def decompose_propagator(prop: FermionPropagator, h_min: int, top_mass: float = 1.0,
                         offsets=(0, 1, -1), scheme: str | None = None) -> ScaleDecomposition:
    """Split the critical propagator of ``prop.geometry`` into dyadic scales.

    Args:
        prop: propagator at the critical point (only its geometry and ``t``
            are used; tori use the antiperiodic sector).
        h_min: lowest scale kept; ``N = floor(log2(1/a))`` is the lattice scale.
        top_mass: decay rate (lattice units) of the scale-``N`` piece.
        offsets: horizontal offsets kept on cylinders.
        scheme: ``"momentum"`` (default on tori) or ``"mass"`` (default and
            only choice on cylinders).

    Returns:
        The decomposition; ``infrared_flag`` is set when ``1/mu_{h_min}``
        exceeds a quarter of the smallest side, i.e. the lowest scale is not
        resolved by the finite lattice.
    """
    _check_critical(prop)
    geom = prop.geometry
    N = int(math.floor(math.log2(1.0 / geom.a) + 1e-12))
    if h_min > N:
        raise DecompositionError("h_min above the lattice scale")
    masses = {h: top_mass * 2.0 ** (h - N) for h in range(h_min, N + 1)}
    flag = 1.0 / masses[h_min] > min(geom.L, geom.M) / 4.0
    if scheme is None:
        scheme = "momentum" if geom.is_torus else "mass"
    if scheme not in ("momentum", "mass"):
        raise DecompositionError(f"unknown scheme {scheme!r}")
    if scheme == "momentum" and not geom.is_torus:
        raise DecompositionError("the momentum scheme needs a torus")

    if scheme == "momentum":
        crit, pieces, infrared = momentum_pieces(geom.L, geom.M, masses, h_min, N)
        dec = ScaleDecomposition(geom, N, h_min, top_mass, scheme, masses, crit,
                                 np.zeros_like(crit), pieces, infrared, bool(flag))
        dec.defect = scaling_defects(dec)
        return dec

    ts = {h: t_of_mass(mu) for h, mu in masses.items()}
    if geom.is_torus:
        L, M = geom.L, geom.M
        crit = torus_propagator(L, M, T_CRITICAL)
        full = {h: torus_propagator(L, M, t) for h, t in ts.items()}
        local = _local_torus(L, M)
        offs = ()
    else:
        offs = tuple(sorted({int(r) % geom.L for r in offsets}))
        crit = prop.cylinder_rows(offs)
        full = {h: FermionPropagator(geom, math.atanh(t)).cylinder_rows(offs) for h, t in ts.items()}
        local = _local_cylinder(geom.M, offs)

    def diff(x, y):
        if geom.is_torus:
            return x - y
        return {r: x[r] - y[r] for r in offs}

    pieces = {}
    for h in range(h_min, N + 1):
        upper = local if h == N else full[h + 1]
        pieces[h] = diff(full[h], upper)
    infrared = diff(crit, full[h_min])
    dec = ScaleDecomposition(geom, N, h_min, top_mass, scheme, masses, crit, local, pieces,
                             infrared, bool(flag), offs)
    if geom.is_torus:
        dec.defect = scaling_defects(dec)
    return dec


def scaling_defects(dec: ScaleDecomposition, window: float = 2.0) -> dict:
    """Relative scaling-covariance defect between consecutive scales.

    ``d(h) = ||g_h(r) - 2 g_{h-1}(2r)|| / ||g_h(r)||`` in the L2 norm over
    the box ``|r|_inf <= window / mu_h`` and all components; the factor 2 is
    the dimension of a fermion propagator.  The few lattice sites around
    ``r = 0`` never rescale, and their weight in the box falls like
    ``mu_h``.  Pieces whose doubled box no longer fits in the torus are
    skipped.
    """
    out = {}
    L, M = dec.geometry.L, dec.geometry.M
    for h in dec.scales:
        if h - 1 not in dec.pieces:
            continue
        R = int(math.ceil(window / dec.masses[h]))
        if 2 * R >= min(L, M) // 2:
            continue
        r = np.arange(-R, R + 1)
        g_h = dec.pieces[h][:, :, r[:, None] % L, r[None, :] % M]
        g_c = dec.pieces[h - 1][:, :, (2 * r)[:, None] % L, (2 * r)[None, :] % M]
        # antiperiodic wrap signs
        s_h = np.where(r < 0, -1.0, 1.0)
        sign = s_h[:, None] * s_h[None, :]
        out[h] = float(np.linalg.norm((g_h - 2.0 * g_c) * sign) / np.linalg.norm(g_h))
    return out


def boundary_vanishing(dec: ScaleDecomposition) -> dict:
    """Boundary diagnostic for every cylinder piece.

    On the bottom row the field combination ``LOCAL[V] . Phi`` and on the
    top row ``LOCAL[Vb] . Phi`` have no bond partner, so their two-point
    functions reduce to an on-site term that is the same at every
    temperature.  Each single-scale piece therefore has them vanishing
    identically; the returned ratios (max over offsets, rows and components,
    divided by the max of the piece) measure how well that holds.
    """
    if dec.geometry.is_torus:
        raise DecompositionError("boundary diagnostic needs a cylinder")
    from ..lattice_exact import V, VB

    M = dec.geometry.M
    bottom, top = LOCAL[V], LOCAL[VB]
    out = {}
    for h, piece in dec.pieces.items():
        scale = max(float(np.max(np.abs(p))) for p in piece.values())
        b = max(float(np.max(np.abs(np.einsum("c,ycz->yz", bottom, p[0:1].reshape(1, 4, -1)))))
                for p in piece.values())
        t = max(float(np.max(np.abs(np.einsum("c,ycz->yz", top, p[M - 1:M].reshape(1, 4, -1)))))
                for p in piece.values())
        out[h] = {"bottom": b / scale, "top": t / scale}
    return out
