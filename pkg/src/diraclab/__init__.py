"""Numerical laboratory for weighted Dirac eigenvalue problems D psi = lambda A psi."""

__version__ = "0.1.0"

from .domain import Geometry, Grid, build_grid, inner_a, inner_l2, norm_h1_discrete
from .weights import (WeightField, WeightFamily, loewner_compare, lp_norm, make_family, sqrt_pair,
                      validate_spd, weak_convergence_residual)
from .assembly import OperatorMatrix, MassMatrix, assemble_dirac, assemble_mass
from .spectral import (WeightedSpectrum, SpectralProjector, cluster_distinct, index_eigenvalues,
                       orthonormalize_a, projector, solve_weighted)
from .variational import (compare_spectra, rayleigh_dual, verify_minmax_negative,
                          verify_minmax_positive)
from .analysis import (apriori_diagnostics, eigenspace_distance, holder_norm,
                       run_continuity_experiment, subspace_gap)
from .wavekernel import Propagator, evolve, kernel_assemble, kernel_matrix_element
