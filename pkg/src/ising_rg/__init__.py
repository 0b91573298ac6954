"""Energy correlations of the perturbed 2D Ising model.

Exact lattice evaluation at the free point, continuum targets, lattice-to-
continuum extrapolation, Monte Carlo for the interacting model and a
multiscale (renormalization-group) toolkit.  Submodules are imported on first
attribute access so that thread settings can be applied before numba loads.
"""

from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    "pfaffian": ["pfaffian", "pfaffian_with_condition", "pfaffian_from_pairs", "as_antisymmetric",
                 "PfaffianResult", "PfaffianDimensionError", "AntisymmetryError"],
    "geometry": ["LatticeGeometry", "BondObservable", "GeometryError", "bond_at_site", "nearest_site"],
    "model": ["Interaction", "InteractionError"],
    "enumeration": ["Enumerator", "brute_force_correlation", "EnumerationTooLarge"],
    "lattice_exact": ["FermionPropagator", "betac_exact", "energy_correlation_exact",
                      "pair_correlation_matrix", "nn_propagator", "wick_pfaffian", "GeometryTooLarge"],
    "continuum": ["plane_kernel", "halfplane_kernel", "cylinder_pair_kernel", "plane_energy_correlation",
                  "cylinder_energy_correlation", "halfplane_energy_correlation", "pfaffian_combination",
                  "ImageSumNotConverged", "ContinuumError"],
    "scaling": ["ScalingScanPlan", "plane_plan", "cylinder_plan", "run_scaling_scan", "extrapolate",
                "ConvergenceReport", "fit_Z", "PlanError"],
    "montecarlo": ["Chain", "Schedule", "mc_sample", "block_jackknife", "locate_betac", "estimate_Z",
                   "run_axis_correlations", "split_seed", "MCError", "NoCrossing", "RatioInstability"],
}
_LOOKUP = {name: mod for mod, names in _EXPORTS.items() for name in names}

__all__ = sorted(_LOOKUP) + ["rg", "cli"]


def __getattr__(name):
    if name in ("rg", "cli"):
        return import_module(f".{name}", __name__)
    if name in _LOOKUP:
        return getattr(import_module(f".{_LOOKUP[name]}", __name__), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
