"""Simulation toolkit for a driven-dissipative cavity-magnon dimer.

Semiclassical steady states and multistability, saddle-node/Hopf bifurcation
tracking, quench dynamics with critical slowing down, and Gaussian quantum
correlation metrics (fidelity, mutual information) between the two magnon
modes.
"""

__version__ = "0.1.0"

from .errors import ConfigError, SolverError
from .model import (
    HBAR,
    PARITY_PERMUTATION,
    QUADRATURE_ORDER,
    AngularRates,
    FieldState,
    SystemParams,
    amplitude_phase_rhs,
    diffusion_matrix,
    drift_matrix,
    drive_amplitude,
    eom_rhs,
    reference_params,
)
from .steady import (
    BRANCH_CLASSES,
    AsymmetricEffectiveParams,
    FixedPoint,
    SymmetricEffectiveParams,
    asymmetric_cubic_coefficients,
    asymmetric_cubic_residuals,
    asymmetric_effective_params,
    bistability_criterion,
    classify,
    find_all_fixed_points,
    population_imbalance,
    solve_cubic_positive_roots,
    symmetric_effective_params,
    symmetric_steady_states,
)

__all__ = [name for name in dir() if not name.startswith("_")]
