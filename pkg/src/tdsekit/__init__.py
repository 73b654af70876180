"""Precomputed-propagator ("toolkit") integrators for ``i psi' = (H0 - mu eps(t)) psi``."""

from .errors import *  # noqa: F401,F403
from .field import (
    ControlField, PiecewiseConstant, Sampled, Sinusoid, TimeGrid, constant, flat_top,
    midpoint_samples, stencil_alpha, stencil_beta, stencils,
)
from .linalg import HermitianEig, anti_hermitian_exp, herm_eig, l2_error, unitary_exp
from .model import (
    EnsembleSystem, QuantumSystem, build_ensemble, build_linear_rotor, build_two_level,
    load_system, save_system,
)
from .propagate import (
    CALIBRATED_EXPONENTS, LITERAL_EXPONENTS, CorrectorExponents, MethodId, Trajectory,
    propagate, run_ensemble, run_itk_high, run_itk_high_quantified, run_itk_low,
    run_reference, run_strang, run_tk,
)
from .toolkit import (
    AmplitudeGrid, Toolkit, build_correctors, build_quantified_pairs, build_toolkit,
    load_toolkit, save_toolkit,
)

__version__ = "0.1.0"
