"""Lattice ladders, extrapolation in the lattice spacing, and Z fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from .continuum import (
    cylinder_energy_correlation,
    pfaffian_combination,
    plane_energy_correlation,
)
from .geometry import BondObservable, LatticeGeometry
from .lattice_exact import (
    betac_exact,
    energy_correlation_exact,
    nn_propagator,
    pair_correlation_matrix,
    bond_slots,
)

PLANE = "plane"
FINITE_DOMAIN = "finite-domain"
DOMAIN_TOLERANCE = 0.01


class PlanError(ValueError):
    """Invalid scaling-scan plan."""


@dataclass(frozen=True)
class ScalingScanPlan:
    """A ladder of lattices with ``a`` halving at each rung, plus the observables to follow.

    In ``plane`` mode the tori are meant to be large compared with the
    observables (the box may grow down the ladder); in ``finite-domain`` mode
    ``a L`` and ``a M`` stay at ``(l1, l2)``.
    """

    mode: str
    ladder: tuple[LatticeGeometry, ...]
    observables: tuple[tuple[BondObservable, ...], ...]
    beta: float = field(default_factory=betac_exact)
    lam: float = 0.0
    l1: float | None = None
    l2: float | None = None

    def __post_init__(self):
        if self.mode not in (PLANE, FINITE_DOMAIN):
            raise PlanError(f"unknown mode {self.mode!r}")
        if self.lam != 0.0:
            raise PlanError("exact scans need lambda = 0; interacting data comes from Monte Carlo")
        spacings = [g.a for g in self.ladder]
        if len(set(spacings)) < 3:
            raise PlanError("ladder needs at least 3 distinct lattice spacings")
        for a0, a1 in zip(spacings, spacings[1:]):
            if not math.isclose(a1, a0 / 2.0, rel_tol=1e-12):
                raise PlanError("lattice spacing must halve down the ladder")
        if self.mode == FINITE_DOMAIN:
            if self.l1 is None or self.l2 is None:
                raise PlanError("finite-domain mode needs l1 and l2")
            for g in self.ladder:
                if abs(g.ell1 - self.l1) > DOMAIN_TOLERANCE * self.l1 or \
                        abs(g.ell2 - self.l2) > DOMAIN_TOLERANCE * self.l2:
                    raise PlanError(f"rung {g.spec()} misses the target domain")
            if len({g.boundary for g in self.ladder}) != 1:
                raise PlanError("mixed boundary conditions on one ladder")
        for obs in self.observables:
            if len(obs) < 2:
                raise PlanError("each observable set needs at least two bonds")

    @property
    def spacings(self) -> np.ndarray:
        return np.array([g.a for g in self.ladder])


def plane_plan(configs: Sequence[Sequence[BondObservable]], spacings=(1 / 8, 1 / 16, 1 / 32),
               box: float = 8.0, grow_box: bool = True, beta: float | None = None) -> ScalingScanPlan:
    """Plane-mode ladder of square tori.

    With ``grow_box`` the physical side doubles whenever ``a`` halves, so
    finite-volume corrections shrink together with lattice corrections.
    """
    ladder = []
    for k, a in enumerate(spacings):
        side = box * (spacings[0] / a if grow_box else 1.0)
        n = int(round(side / a))
        ladder.append(LatticeGeometry(n, n, a))
    return ScalingScanPlan(PLANE, tuple(ladder), tuple(tuple(c) for c in configs),
                           betac_exact() if beta is None else beta)


def cylinder_plan(configs: Sequence[Sequence[BondObservable]], l1: float = 1.0, l2: float = 1.0,
                  spacings=(1 / 8, 1 / 16, 1 / 32), beta: float | None = None) -> ScalingScanPlan:
    ladder = [LatticeGeometry(int(round(l1 / a)), int(round(l2 / a)), a, "cylinder") for a in spacings]
    return ScalingScanPlan(FINITE_DOMAIN, tuple(ladder), tuple(tuple(c) for c in configs),
                           betac_exact() if beta is None else beta, l1=l1, l2=l2)


@dataclass
class Extrapolation:
    value: float
    amplitude: float
    order: float
    uncertainty: float
    converged: bool


def extrapolate(spacings, values, p0: float = 1.0) -> Extrapolation:
    """Fit ``v(a) = v0 + c a^p``.

    For a halving ladder the three finest rungs fix ``p`` through the ratio of
    successive differences; more rungs are refined by least squares.  When
    the differences do not shrink geometrically the order falls back to
    ``p0`` and the fit is flagged.  ``uncertainty`` compares the result with
    the order-``p0`` extrapolation from the two finest rungs.
    """
    a = np.asarray(spacings, dtype=float)
    v = np.asarray(values, dtype=float)
    order = np.argsort(-a)
    a, v = a[order], v[order]
    if len(a) < 3:
        raise PlanError("need at least three rungs to extrapolate")
    d1, d2 = v[-3] - v[-2], v[-2] - v[-1]
    ratio_a = a[-3] / a[-2]
    converged = True
    if d1 * d2 > 0 and abs(d1) > abs(d2):
        p = math.log(d1 / d2) / math.log(ratio_a)
        c = d2 / (a[-2] ** p - a[-1] ** p)
        v0 = v[-1] - c * a[-1] ** p
    elif d2 == 0.0 and d1 == 0.0:
        p, c, v0 = p0, 0.0, v[-1]
    else:
        converged = False
        p = p0
        X = np.vstack([np.ones_like(a), a ** p]).T
        (v0, c), *_ = np.linalg.lstsq(X, v, rcond=None)
    if len(a) > 3 and converged:
        from scipy.optimize import curve_fit

        try:
            (v0, c, p), _ = curve_fit(lambda x, v0_, c_, p_: v0_ + c_ * x ** p_, a, v, p0=(v0, c, p))
        except RuntimeError:
            converged = False
    lin = v[-1] - (v[-2] - v[-1]) * a[-1] ** p0 / (a[-2] ** p0 - a[-1] ** p0)
    return Extrapolation(float(v0), float(c), float(p), float(abs(v0 - lin)), converged)


@dataclass
class ConvergenceReport:
    """Per-rung values, extrapolated limit and comparison with a continuum target."""

    label: str
    spacings: list
    values: list
    extrapolated: float
    order: float
    amplitude: float
    uncertainty: float
    residuals: list
    target: float | None
    relative_deviation: float | None
    converged: bool
    monotone: bool

    @property
    def flagged(self) -> bool:
        return not (self.converged and self.monotone)

    def to_records(self) -> list[dict]:
        rows = []
        for a, val, res in zip(self.spacings, self.values, self.residuals):
            rows.append({"label": self.label, "kind": "rung", "a": a, "value": val, "residual": res})
        summary = asdict(self)
        for key in ("spacings", "values", "residuals"):
            summary.pop(key)
        summary.update(kind="summary", flagged=self.flagged)
        rows.append(summary)
        return rows


def build_report(label, spacings, values, target=None) -> ConvergenceReport:
    ex = extrapolate(spacings, values)
    residuals = [float(v - ex.value) for v in values]
    mags = np.abs(residuals)
    monotone = bool(np.all(np.diff(mags) <= 1e-15 * max(1.0, abs(ex.value))))
    rel = None
    if target is not None:
        rel = float(abs(ex.value - target) / abs(target)) if target != 0 else float(abs(ex.value))
    return ConvergenceReport(label, [float(a) for a in spacings], [float(v) for v in values],
                             ex.value, ex.order, ex.amplitude, ex.uncertainty, residuals,
                             target, rel, ex.converged, monotone)


def continuum_target(plan: ScalingScanPlan, bonds: Sequence[BondObservable]) -> float | None:
    points = [b.x for b in bonds]
    if plan.mode == PLANE:
        return plane_energy_correlation(points)
    if plan.ladder[0].is_torus:
        return None
    return cylinder_energy_correlation(points, plan.l1, plan.l2)


def _label(bonds) -> str:
    return ";".join(f"({b.x[0]:g},{b.x[1]:g})j{b.j}" for b in bonds)


def run_scaling_scan(plan: ScalingScanPlan, with_defect: bool = False) -> list[ConvergenceReport]:
    """Evaluate each observable set on every rung, extrapolate in ``a`` and compare.

    With ``with_defect`` an extra report per set of four or more bonds tracks
    the gap between the lattice value and the Pfaffian assembled from the
    lattice pair values at the same rung; its target is zero.
    """
    per_obs = [[] for _ in plan.observables]
    defects = [[] for _ in plan.observables]
    for g in plan.ladder:
        prop = nn_propagator(g, plan.beta)
        all_bonds = list(dict.fromkeys(b for obs in plan.observables for b in obs))
        prop.prefetch(bond_slots(g, all_bonds))
        for k, obs in enumerate(plan.observables):
            value = energy_correlation_exact(g, plan.beta, obs, prop=prop)
            per_obs[k].append(value)
            if with_defect and len(obs) >= 4:
                pairs = pair_correlation_matrix(g, plan.beta, obs, prop=prop)
                defects[k].append(value - pfaffian_combination([b.x for b in obs], pairs))
    reports = []
    for k, obs in enumerate(plan.observables):
        reports.append(build_report(_label(obs), plan.spacings, per_obs[k], continuum_target(plan, obs)))
        if defects[k]:
            reports.append(build_report("defect:" + _label(obs), plan.spacings, defects[k], 0.0))
    return reports


@dataclass
class ZFit:
    Z: float
    stderr: float
    residuals: np.ndarray  # per-entry (y_k - log Z) / sigma_k (or raw when unweighted)

    def __iter__(self):
        return iter((self.Z, self.stderr))


def fit_Z(nn_values, perturbed_values, n_points=2, perturbed_stderr=None, nn_stderr=None) -> ZFit:
    """Least-squares fit of ``log(perturbed / nn) = n log Z``.

    Args:
        nn_values: nearest-neighbour correlations.
        perturbed_values: interacting correlations at the same configurations.
        n_points: number of bonds per entry (scalar or per entry).
        perturbed_stderr, nn_stderr: optional standard errors; with them the
            fit is inverse-variance weighted.

    Returns:
        ``ZFit``; unpacks as ``(Z, stderr)``.
    """
    nn = np.asarray(nn_values, dtype=float)
    pert = np.asarray(perturbed_values, dtype=float)
    if nn.size == 0 or nn.shape != pert.shape:
        raise ValueError("need paired, non-empty value lists")
    if np.any(nn == 0) or np.any(np.sign(nn) != np.sign(pert)):
        raise ValueError("sign-inconsistent pairs")
    n = np.broadcast_to(np.asarray(n_points, dtype=float), nn.shape)
    y = np.log(pert / nn) / n
    if perturbed_stderr is not None or nn_stderr is not None:
        sp = np.zeros_like(nn) if perturbed_stderr is None else np.asarray(perturbed_stderr, float)
        sn = np.zeros_like(nn) if nn_stderr is None else np.asarray(nn_stderr, float)
        sigma = np.sqrt((sp / pert) ** 2 + (sn / nn) ** 2) / n
        if np.any(sigma <= 0):
            raise ValueError("standard errors must be positive")
        w = 1.0 / sigma ** 2
        logZ = float(np.sum(w * y) / np.sum(w))
        err = float(1.0 / math.sqrt(np.sum(w)))
        res = (y - logZ) / sigma
    else:
        logZ = float(np.mean(y))
        err = float(np.std(y, ddof=1) / math.sqrt(len(y))) if len(y) > 1 else 0.0
        res = y - logZ
    Z = math.exp(logZ)
    return ZFit(Z, Z * err, res)
