"""Multiscale machinery: propagator decomposition, kernels, localization and coupling flows."""

from .decomposition import (
    DecompositionError,
    ScaleDecomposition,
    boundary_vanishing,
    decompose_propagator,
    mass_of,
    scaling_defects,
    t_of_mass,
    torus_propagator,
)
from .flow import (
    FlowError,
    FlowState,
    edge_coupling_profile,
    fine_tune,
    integrate_flow,
    linear_tuning_closed_form,
    linearized_spectrum,
    one_loop_coefficients,
    tadpole_kernel,
    tadpole_local,
)
from .kernels import (
    AntisymmetryError,
    KernelError,
    KernelRepresentation,
    antisymmetrize,
    l1_mass,
    localize_quadratic,
    localize_quartic,
    quartic_local_certificate,
    quartic_remainder,
    random_quartic_kernel,
    scaling_dimension,
    tree_length,
    tree_lengths,
    weighted_norm,
)

__all__ = [name for name in dir() if not name.startswith("_")]
