"""Discrete reproducing-kernel toolkit: Gram matrices, Dirac-mass membership,
electrical networks, classical continuous kernels and heat semigroups."""

from .errors import *  # noqa: F401,F403
from .rkhs_core import (
    CONVERGED,
    DIVERGED,
    UNDECIDED,
    Exhaustion,
    FiniteKernel,
    MembershipDiagnostic,
    PSDReport,
    finite_laplacian,
    gram_assemble,
    max_diagonal_perturbation,
    membership_diagnostic,
    membership_value,
    point_label,
    projection_coeffs,
    pseudo_inverse,
    psd_check,
    restriction_min_norm,
    rkhs_inner,
)
from .network import (
    DeltaExpansion,
    DipoleSystem,
    ResistanceMatrix,
    WeightedGraph,
    delta_expansion,
    dipole,
    dipole_system,
    energy_inner,
    laplacian_apply,
    ladder_graph,
    ladder_kernel,
    ladder_kernel_value,
    ladder_laplacian_apply,
    load_graph,
    network_kernel,
    resistance_from_kernel,
    resistance_metric,
)
from .continuum import (
    ContinuousKernel,
    PathSample,
    bm_restriction_structure,
    bridge_covariance,
    bridge_second_derivative_check,
    brownian_bridge,
    brownian_motion,
    covariance_diagnostic,
    dirichlet_kernel_checks,
    disk_green,
    eigen_expansion_partial,
    harmonic_refinement_ratio,
    kernel_eval,
    newton_potential,
    point_kernel,
    restrict,
    restriction_resistance,
    sample_bridge_paths,
    self_energy,
)
from .semigroup import (
    SpectralDecomposition,
    green_from_semigroup,
    green_quadrature,
    heat_kernel,
    spectral_decompose,
)

__version__ = "0.1.0"
