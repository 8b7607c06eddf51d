"""Desk-scale simulation of stroboscopic first-passage statistics for a heated
trapped-ion oscillator: heating dynamics, composite step-pulse measurement
model and synthesis, first-passage pipelines, a classical oscillator oracle,
and multinomial estimators for trial data.
"""

__version__ = "0.1.0"

from .classical import (
    ClassicalConfig,
    PhysicalParams,
    classical_moments,
    heating_rate_from_noise,
    simulate_classical_fpt,
)
from .designer import DesignSpec, design_pulse, fidelity_report, objective
from .engine import (
    FptConfig,
    FptdResult,
    SpontEmissionModel,
    TailFit,
    analytic_quantum_moments,
    escape_probability,
    geometric_reference,
    moments,
    qfptd_ideal,
    qfptd_realistic,
    spont_forward,
    spont_reconstruct,
    tail_fit,
)
from .errors import ConfigError, NumericalError, QfptError, TruncationError
from .estimators import (
    EstimatedDistribution,
    TrialCounts,
    compare_distributions,
    escape_with_errors,
    multinomial_estimate,
)
from .fock import (
    FockSpace,
    MotionalDensityMatrix,
    SidebandParams,
    TrajectoryState,
    bsb_coupling,
    make_operators,
    thermal_state,
)
from .heating import (
    HeatingParams,
    absorbing_fptd,
    evolve_heating_dm,
    evolve_heating_trajectory,
)
from .stepgate import (
    IntensityNoise,
    PulseSequence,
    StepMeasurement,
    StepProfile,
    build_measurement,
    kappa,
    kappa_profile,
    mean_step_error,
    perfect_step_measurement,
    reference_sequences,
    sample_rabi_scale,
)

__all__ = [name for name in dir() if not name.startswith("_")]
