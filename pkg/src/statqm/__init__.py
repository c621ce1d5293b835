"""Coupled (rho, S) field dynamics with a pluggable coupling term, and the checks around it."""
from .coupling import Classical, PolynomialFamily, PowerLaw, Quantum, eval_L0, family_member
from .dynamics import EvolutionConfig, Potential, Trajectory, evolve
from .errors import (BadIndex, BlowUp, ConfigError, DivisionByFloor, ExponentOverflow, JetOverflow,
                     NodeError, NormalizationDrift, OutOfRange, StatQMError)
from .fields import FieldState, GridSpec, SampledField, WaveFunction, from_wavefunction, to_wavefunction

__version__ = "0.1.0"

__all__ = [
    "BadIndex", "BlowUp", "Classical", "ConfigError", "DivisionByFloor", "EvolutionConfig",
    "ExponentOverflow", "FieldState", "GridSpec", "JetOverflow", "NodeError", "NormalizationDrift",
    "OutOfRange", "PolynomialFamily", "Potential", "PowerLaw", "Quantum", "SampledField",
    "StatQMError", "Trajectory", "WaveFunction", "eval_L0", "evolve", "family_member",
    "from_wavefunction", "to_wavefunction",
]
