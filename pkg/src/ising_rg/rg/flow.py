"""Running couplings of the local quadratic terms.

``nu`` (mass-like, dimension 1) and ``zeta`` (kinetic-like, dimension 0)
are evolved scale by scale:

* linear order: ``nu_{h-1} = 2 nu_h + c`` and ``zeta_{h-1} = zeta_h``, with an
  optional constant forcing ``c``;
* one-loop order: the forcing is ``lam * a_h`` for ``nu`` and ``lam * z_h`` for
  ``zeta``, where ``a_h`` and ``z_h`` are the local parts of the quadratic
  kernel obtained by contracting the seed quartic vertex with the scale-``h``
  propagator (a tadpole), projected on the lattice mass and kinetic terms.

The seed vertex writes each next-nearest-neighbour spin product as the
product of the two nearest-neighbour bond bilinears along a path, so the
coupling ``lam`` multiplies a sum of four-fermion terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..geometry import LatticeGeometry
from ..lattice_exact import HB, H, V, VB, FermionPropagator, betac_exact
from .decomposition import ScaleDecomposition, decompose_propagator, torus_propagator, t_of_mass
from .kernels import KernelRepresentation

ESCAPE = 1.0
TUNE_TARGET = 1e-8
TUNE_BRACKET = 0.5
EDGE_R2_MIN = 0.9
BULK_HEIGHT_FACTOR = 4

# fields of the two seed vertices: (site offset, component)
SEED_VERTICES = (
    (((0, 0), HB), ((1, 0), H), ((1, 0), VB), ((1, 1), V)),  # x -> x+e1 -> x+e1+e2
    (((0, 0), HB), ((1, 0), H), ((0, 0), VB), ((0, 1), V)),  # x+e1 -> x -> x+e2
)
_PAIRS = ((0, 1, 1.0), (0, 2, -1.0), (0, 3, 1.0), (1, 2, 1.0), (1, 3, -1.0), (2, 3, 1.0))


def _bond_matrix(j: int) -> np.ndarray:
    B = np.zeros((4, 4))
    a, b = (HB, H) if j == 1 else (VB, V)
    B[a, b], B[b, a] = 1.0, -1.0
    return B


MASS_DIRECTION = _bond_matrix(1) + _bond_matrix(2)


class FlowError(ValueError):
    pass


# ------------------------------------------------------------------- spectrum
def linearized_spectrum(max_n: int, verify: bool = True, L: int = 128, depth: int = 3) -> dict:
    """Eigenvalues ``2^{2 - n/2}`` of the linearized map, plus a numerical check for ``n = 2``.

    The check inserts a uniform shift ``delta`` of the temperature parameter
    (the lattice mass monomial) into every propagator of a scale
    decomposition and measures the relative response
    ``r_h = ||d g_h / d delta|| / ||g_h||``.  A relevant coupling of
    dimension 1 gives ``r_{h-1} / r_h = 2``; the ratio is evaluated ``depth``
    scales below the lattice scale (the scale whose mass is one inverse
    lattice spacing) on an ``L x L`` torus.

    Returns:
        ``{"table": [(n, eigenvalue)], "numerical": {2: estimate} or {},
        "residual": {2: |estimate - 2| / 2}}``.
    """
    if max_n < 2:
        raise FlowError("max_n must be at least 2")
    table = [(n, 2.0 ** (2 - n / 2)) for n in range(2, max_n + 1, 2)]
    out = {"table": table, "numerical": {}, "residual": {}}
    if verify:
        est = _mass_response_ratio(L, depth)
        out["numerical"][2] = est
        out["residual"][2] = abs(est - 2.0) / 2.0
    return out


def _mass_response_ratio(L: int, depth: int, top_mass: float = 1.0, delta: float = 1e-6) -> float:
    N = int(round(math.log2(L)))

    def response(h):
        mu_hi = top_mass * 2.0 ** (h + 1 - N)
        mu_lo = top_mass * 2.0 ** (h - N)
        t_hi, t_lo = t_of_mass(mu_hi), t_of_mass(mu_lo)
        g0 = torus_propagator(L, L, t_lo) - torus_propagator(L, L, t_hi)
        gp = torus_propagator(L, L, t_lo + delta) - torus_propagator(L, L, t_hi + delta)
        gm = torus_propagator(L, L, t_lo - delta) - torus_propagator(L, L, t_hi - delta)
        return np.linalg.norm((gp - gm) / (2 * delta)) / np.linalg.norm(g0)

    h = N - depth
    return float(response(h - 1) / response(h))


# -------------------------------------------------------------- tadpole pieces
def _torus_pair(g: np.ndarray, p, q) -> complex:
    """``<Phi_p Phi_q>`` from an antiperiodic torus array, slots ``((x1, x2), c)``."""
    (s1, c1), (s2, c2) = p, q
    L, M = g.shape[2], g.shape[3]
    r1, r2 = s2[0] - s1[0], s2[1] - s1[1]
    sign = (-1.0 if r1 < 0 else 1.0) * (-1.0 if r2 < 0 else 1.0)
    return sign * g[c1, c2, r1 % L, r2 % M]


def _cylinder_pair(rows: dict, L: int, y0: int, p, q) -> complex:
    (s1, c1), (s2, c2) = p, q
    r1 = s1[0] - s2[0]
    sign = -1.0 if r1 < 0 else 1.0
    return sign * rows[r1 % L][y0 + s1[1], c1, y0 + s2[1], c2]


def _contract(pair) -> tuple[np.ndarray, np.ndarray]:
    """Local zeroth and first moments of the seed vertices contracted once.

    ``pair(p, q)`` gives the propagator between two vertex fields.  Returns
    ``(Q0, Q1)`` with ``Q0[c, c']`` and ``Q1[j, c, c']`` the antisymmetric
    coefficient matrices of ``Phi_c Phi_c'`` after moving both remaining
    fields to one point (``Q1`` weights by their separation along ``j``).
    """
    Q0 = np.zeros((4, 4))
    Q1 = np.zeros((2, 4, 4))
    for fields in SEED_VERTICES:
        for i, j, sign in _PAIRS:
            rest = [k for k in range(4) if k not in (i, j)]
            coef = sign * pair(fields[i], fields[j]).real
            (sa, ca), (sb, cb) = fields[rest[0]], fields[rest[1]]
            Q0[ca, cb] += coef
            Q0[cb, ca] -= coef
            for d in range(2):
                w = coef * (sb[d] - sa[d])
                Q1[d, ca, cb] += w
                Q1[d, cb, ca] -= w
    return Q0, Q1


def _project(Q0, Q1) -> tuple[float, float]:
    nu = float(np.sum(Q0 * MASS_DIRECTION) / np.sum(MASS_DIRECTION ** 2))
    zeta = 0.5 * sum(float(np.sum(Q1[j] * _bond_matrix(j + 1)) / 2.0) for j in range(2))
    return nu, zeta


def tadpole_local(piece, geometry: LatticeGeometry, row: int | None = None) -> tuple[float, float]:
    """Mass and kinetic projections of the once-contracted seed vertex.

    ``piece`` is a torus array or a cylinder row dict; on a cylinder only the
    vertex whose base sits on ``row`` is used.
    """
    if geometry.is_torus:
        return _project(*_contract(lambda p, q: _torus_pair(piece, p, q)))
    return _project(*_contract(lambda p, q: _cylinder_pair(piece, geometry.L, row, p, q)))


def tadpole_kernel(dec: ScaleDecomposition, h: int, lam: float) -> KernelRepresentation:
    """Quadratic chiral kernel generated at scale ``h`` by the seed vertex (torus).

    The local mass projection at scale ``h`` feeds the ``(+, -)`` entry at
    zero separation and the kinetic projection the nearest-neighbour entries,
    each with its antisymmetric partner.
    """
    nu, zeta = tadpole_local(dec[h], dec.geometry)
    a = dec.geometry.a
    om, st, vals = [], [], []
    for (d, v) in (((0, 0), nu), ((1, 0), zeta), ((0, 1), zeta)):
        om += [(0, 1), (1, 0)]
        st += [((0, 0), d), ((0, 0), (-d[0], -d[1]))]
        vals += [lam * v / a ** 2, -lam * v / a ** 2]
    return KernelRepresentation(2, om, st, vals, h=h, a=a)


@lru_cache(maxsize=8)
def one_loop_coefficients(L: int = 128, top_mass: float = 1.0, levels: int = 5) -> dict:
    """Dimensionless tadpole coefficients ``{N - h: (a_h, z_h)}``.

    Computed on an ``L x L`` antiperiodic torus at the critical point for the
    ``levels`` scales below the lattice scale.  ``a_h`` carries the factor
    ``2^{N-h+1}`` that turns a lattice mass shift at scale ``h`` into the
    dimensionless forcing of ``nu_{h-1}``.  Scales below the computed range
    reuse the last value, an upper bound since the coefficients decrease.
    """
    geom = LatticeGeometry(L, L, 1.0 / L)
    dec = decompose_propagator(FermionPropagator(geom, betac_exact()), geom_level(L) - levels + 1,
                               top_mass=top_mass)
    out = {}
    for h in dec.scales:
        nu, zeta = tadpole_local(dec[h], geom)
        k = dec.N - h
        out[k] = (2.0 ** (k + 1) * nu, zeta)
    return out


def geom_level(L: int) -> int:
    return int(math.floor(math.log2(L) + 1e-12))


def _coeff(table: dict, k: int) -> tuple[float, float]:
    # below the computed range the dimensionless coefficients have converged
    return table[min(k, max(table))]


# ------------------------------------------------------------------------ flow
@dataclass
class FlowState:
    """Trajectory of ``(nu_h, zeta_h)`` from ``h = N`` downwards."""

    scales: list
    nu: list
    zeta: list
    order: str
    lam: float = 0.0
    forcing: float = 0.0
    escaped: bool = False
    profiles: dict = field(default_factory=dict)
    edge: dict = field(default_factory=dict)

    def to_records(self) -> list[dict]:
        return [
            {"h": h, "nu": n, "zeta": z, "order": self.order, "lam": self.lam, "escaped": self.escaped}
            for h, n, z in zip(self.scales, self.nu, self.zeta)
        ]


def integrate_flow(initial=(0.0, 0.0), order: str = "linear", h_min: int = -20, N: int = 0,
                   lam: float = 0.0, forcing: float = 0.0, coefficients: dict | None = None) -> FlowState:
    """Iterate the coupling flow from scale ``N`` down to ``h_min``.

    Args:
        initial: ``(nu_N, zeta_N)``.
        order: ``"linear"`` or ``"one-loop"``.
        lam: interaction strength (one-loop order).
        forcing: constant ``nu`` forcing per step (linear order).
        coefficients: one-loop table ``{N - h: (a_h, z_h)}``; defaults to
            :func:`one_loop_coefficients`.

    The trajectory stops early, with ``escaped`` set, once a coupling exceeds
    1 in magnitude.
    """
    if order not in ("linear", "one-loop"):
        raise FlowError(f"unknown order {order!r}")
    if h_min > N:
        raise FlowError("h_min must not exceed N")
    table = None
    if order == "one-loop":
        table = coefficients if coefficients is not None else one_loop_coefficients()
    nu, zeta = float(initial[0]), float(initial[1])
    state = FlowState([N], [nu], [zeta], order, lam, forcing)
    for h in range(N, h_min, -1):
        if order == "linear":
            bn, bz = forcing, 0.0
        else:
            a_h, z_h = _coeff(table, N - h)
            bn, bz = lam * a_h, lam * z_h
        nu, zeta = 2.0 * nu + bn, zeta + bz
        state.scales.append(h - 1)
        state.nu.append(nu)
        state.zeta.append(zeta)
        if abs(nu) > ESCAPE or abs(zeta) > ESCAPE:
            state.escaped = True
            break
    return state


def linear_tuning_closed_form(forcing: float, n_steps: int) -> float:
    """``nu_N`` that makes the linear flow vanish after ``n_steps``: ``-c sum_{k=1}^{n} 2^{-k}``."""
    return -forcing * (1.0 - 2.0 ** (-n_steps))


def fine_tune(lam: float = 0.0, zeta_N: float = 0.0, h_min: int = -20, N: int = 0,
              order: str = "one-loop", forcing: float = 0.0, coefficients: dict | None = None,
              target: float = TUNE_TARGET) -> tuple[float, FlowState]:
    """Bisect on ``nu_N`` until ``|nu_{h_min}| <= target``.

    The untuned direction is expanded by 2 per step, so the end value is a
    monotone function of ``nu_N`` and bisection converges.

    Raises:
        FlowError: no sign change of the end value in ``|nu_N| <= 0.5``.
    """
    def end_value(nu_N):
        s = integrate_flow((nu_N, zeta_N), order, h_min, N, lam, forcing, coefficients)
        # an escaped trajectory keeps the sign of its last value
        return s.nu[-1], s

    lo, hi = -TUNE_BRACKET, TUNE_BRACKET
    f_lo, _ = end_value(lo)
    f_hi, _ = end_value(hi)
    if f_lo == 0.0:
        return lo, end_value(lo)[1]
    if np.sign(f_lo) == np.sign(f_hi):
        raise FlowError("no stable-manifold bracket in |nu_N| <= 0.5")
    mid, state = 0.0, None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid, state = end_value(mid)
        if abs(f_mid) <= target and not state.escaped:
            break
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        if hi - lo < 1e-300:
            break
    return mid, state


# ------------------------------------------------------------------ edge terms
def edge_coupling_profile(geometry: LatticeGeometry, h: int, lam: float = 1.0, top_mass: float = 1.0,
                          dec: ScaleDecomposition | None = None, bulk: ScaleDecomposition | None = None) -> dict:
    """Row-resolved mass coupling generated at scale ``h`` and its boundary excess.

    On a cylinder the once-contracted seed vertex is evaluated with the
    scale-``h`` cylinder propagator (mass scheme) for every base row; the
    torus value with the same width, spacing and scheme (and a height of
    ``BULK_HEIGHT_FACTOR`` times the cylinder's) is subtracted and ``log|residual|`` is fitted
    linearly (per unit ``lam``) against ``2^{h-N} d`` with ``d`` the distance (rows) of the vertex
    to the nearer boundary.  On a torus the residual is identically zero.

    Returns:
        dict with ``rows``, ``dist``, ``profile``, ``bulk``, ``residual``,
        ``C``, ``kappa``, ``r2``, ``flagged`` (R^2 below 0.9) and the
        boundary-vanishing ratios of the scale-``h`` piece when available.
    """
    N = geom_level(round(1.0 / geometry.a))
    h_min = h
    if dec is None:
        dec = decompose_propagator(FermionPropagator(geometry, betac_exact()), h_min, top_mass=top_mass,
                                   scheme="mass")
    if geometry.is_torus:
        nu, _ = tadpole_local(dec[h], geometry)
        M = geometry.M
        return {"rows": list(range(M)), "dist": [min(y, M - 1 - y) for y in range(M)],
                "profile": [lam * nu] * M, "bulk": lam * nu, "residual": [0.0] * M,
                "C": 0.0, "kappa": float("nan"), "r2": float("nan"), "flagged": False,
                "boundary": {}}
    from .decomposition import boundary_vanishing

    if bulk is None:
        # taller than the cylinder so that its own vertical wrap is negligible
        tg = LatticeGeometry(geometry.L, BULK_HEIGHT_FACTOR * geometry.M, geometry.a)
        bulk = decompose_propagator(FermionPropagator(tg, betac_exact()), h_min, top_mass=top_mass,
                                    scheme="mass")
    nu_bulk, _ = tadpole_local(bulk[h], bulk.geometry)
    M = geometry.M
    rows = list(range(M - 1))
    unit = np.array([tadpole_local(dec[h], geometry, y)[0] for y in rows])
    prof = lam * unit
    res = prof - lam * nu_bulk
    # fitted per unit coupling, so the shape is defined at lam = 0 too
    dist = np.array([min(y, M - 2 - y) for y in rows])
    x = 2.0 ** (h - N) * dist
    mag = np.abs(unit - nu_bulk)
    keep = mag > 1e-12 * max(mag.max(), 1e-300)
    C = kappa = r2 = float("nan")
    if keep.sum() >= 3:
        slope, icpt = np.polyfit(x[keep], np.log(mag[keep]), 1)
        pred = slope * x[keep] + icpt
        y = np.log(mag[keep])
        ss_res = float(np.sum((y - pred) ** 2))
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
        C, kappa = float(math.exp(icpt)), float(-slope)
    flagged = not (r2 >= EDGE_R2_MIN and kappa > 0)
    return {"rows": rows, "dist": dist.tolist(), "profile": prof.tolist(), "bulk": lam * nu_bulk,
            "residual": res.tolist(), "C": C, "kappa": kappa, "r2": r2, "flagged": bool(flagged),
            "boundary": boundary_vanishing(dec).get(h, {})}
