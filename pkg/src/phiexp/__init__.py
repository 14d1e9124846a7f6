"""phi-exponential distribution families.

Deformed logarithms and exponentials generated by an increasing function
``phi``, the two mean/covariance families built from them, their
normalization constants, closed-form Wasserstein geometry, and a
finite-volume testbed for the associated nonlinear drift-diffusion flow.
"""

from .errors import (
    BracketError,
    DegenerateError,
    DomainError,
    GeneratorError,
    InconclusiveError,
    InputError,
    MetadataError,
    NumericError,
    PhiExpError,
    SchemeError,
    StiffnessError,
    TruncationError,
)
from .phi_core import (
    DeformedLogExp,
    OrdReport,
    PhiSpec,
    deformed,
    exp_phi,
    from_config,
    ln_phi,
    log_bounds,
    perturbed_power,
    power,
    scale_phi,
    table,
    table_from_csv,
    validate_ord,
)
from .normalization import NormalizationConstants, big_F, f_integral, solve_constants
from .family import FamilyPoint, coincidence_gap, density, fit_family, make_point, verify_moments
from .transport import GaussianParams, geodesic_point, optimal_matrix, pushforward_check, w2_distance
from .grids import DensityGrid
from .evolution import FlowConfig, initial_density, moment_ode_evolve, pde_evolve, stability_diagnostic

__version__ = "0.1.0"
