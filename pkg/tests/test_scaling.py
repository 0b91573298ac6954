import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ising_rg.geometry import BondObservable as B, LatticeGeometry
from ising_rg.lattice_exact import betac_exact, energy_correlation_exact
from ising_rg.scaling import (PlanError, ScalingScanPlan, build_report, cylinder_plan, extrapolate, fit_Z,
                              plane_plan, run_scaling_scan)


@given(v0=st.floats(-5, 5), c=st.floats(0.1, 10), p=st.floats(0.5, 3))
def test_extrapolation_recovers_power_law(v0, c, p):
    a = np.array([1 / 8, 1 / 16, 1 / 32])
    ex = extrapolate(a, v0 + c * a ** p)
    assert ex.converged
    assert ex.value == pytest.approx(v0, abs=1e-9 * (1 + abs(v0)) + 1e-9 * c)
    assert ex.order == pytest.approx(p, rel=1e-7)


def test_extrapolation_flags_non_geometric_sequences():
    ex = extrapolate([0.25, 0.125, 0.0625], [1.0, 1.2, 0.9])
    assert not ex.converged
    assert not build_report("x", [0.25, 0.125, 0.0625], [1.0, 1.2, 0.9]).converged


def test_extrapolation_needs_three_rungs():
    with pytest.raises(PlanError):
        extrapolate([0.5, 0.25], [1.0, 1.1])


def test_report_records_and_flag():
    rep = build_report("pair", [1 / 8, 1 / 16, 1 / 32], [1.4, 1.2, 1.1], target=1.0)
    assert rep.relative_deviation == pytest.approx(0.0)
    assert not rep.flagged
    rows = rep.to_records()
    assert [r["kind"] for r in rows] == ["rung"] * 3 + ["summary"]
    assert rows[-1]["flagged"] is False


def test_plan_rejects_degenerate_ladder():
    obs = [[B((0, 0), 1), B((1, 0), 1)]]
    with pytest.raises(PlanError):
        plane_plan(obs, spacings=(1 / 8, 1 / 8, 1 / 16))
    with pytest.raises(PlanError):
        plane_plan(obs, spacings=(1 / 8, 1 / 16))
    with pytest.raises(PlanError):
        plane_plan(obs, spacings=(1 / 8, 1 / 24, 1 / 32))
    with pytest.raises(PlanError):
        plane_plan([[B((0, 0), 1)]])


def test_plan_rejects_wrong_domain_and_interaction():
    g = [LatticeGeometry(8, 8, 1 / 8, "cylinder"), LatticeGeometry(16, 16, 1 / 16, "cylinder"),
         LatticeGeometry(30, 32, 1 / 32, "cylinder")]
    obs = ((B((0, 0), 1), B((0.25, 0), 1)),)
    with pytest.raises(PlanError):
        ScalingScanPlan("finite-domain", tuple(g), obs, l1=1.0, l2=1.0)
    with pytest.raises(PlanError):
        ScalingScanPlan("plane", tuple(g), obs, lam=0.1)
    with pytest.raises(PlanError):
        ScalingScanPlan("sphere", tuple(g), obs)


def test_rescaling_domain_and_points_rescales_correlation():
    # the same lattice read at spacing 2a: physical points double, the correlation scales by 2^-n
    beta = betac_exact()
    g1 = LatticeGeometry(16, 12, 1 / 16, "cylinder")
    g2 = LatticeGeometry(16, 12, 1 / 8, "cylinder")
    obs1 = [B((-0.125, 0.0625), 1), B((0.25, -0.125), 2)]
    obs2 = [B((2 * b.x[0], 2 * b.x[1]), b.j) for b in obs1]
    v1 = energy_correlation_exact(g1, beta, obs1)
    v2 = energy_correlation_exact(g2, beta, obs2)
    assert v2 == pytest.approx(v1 / 4, rel=1e-12)


def test_plane_two_point_scan_converges():
    (rep,) = run_scaling_scan(plane_plan([[B((0, 0), 1), B((1, 0), 1)]], spacings=(1 / 4, 1 / 8, 1 / 16),
                                         box=4.0))
    assert rep.converged and rep.relative_deviation < 0.02
    assert rep.target == pytest.approx(1 / math.pi ** 2)


def test_cylinder_scan_has_target_and_defect_report():
    four = [B((-0.25, 0), 1), B((0.25, 0), 1), B((-0.25, 0.25), 1), B((0.25, 0.25), 1)]
    reps = run_scaling_scan(cylinder_plan([four], spacings=(1 / 8, 1 / 16, 1 / 32)), with_defect=True)
    assert len(reps) == 2
    assert reps[0].target is not None
    assert reps[1].label.startswith("defect:") and reps[1].target == 0.0


def test_fit_Z_recovers_multiplicative_factor():
    nn = np.array([0.3, 0.1, -0.05])
    Z = 1.1
    fit = fit_Z(nn, nn * Z ** 2)
    assert fit.Z == pytest.approx(Z, rel=1e-12)
    assert np.allclose(fit.residuals, 0.0, atol=1e-12)
    z, err = fit_Z(nn, nn * 1.21, perturbed_stderr=0.01 * np.abs(nn))
    assert z == pytest.approx(1.1, rel=1e-12) and err > 0


def test_fit_Z_identity_and_errors():
    nn = [0.2, 0.3]
    assert fit_Z(nn, nn).Z == 1.0
    with pytest.raises(ValueError):
        fit_Z([0.2], [-0.2])
    with pytest.raises(ValueError):
        fit_Z([], [])
    with pytest.raises(ValueError):
        fit_Z([0.2], [0.3], perturbed_stderr=[0.0])
