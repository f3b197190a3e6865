"""Relegation normal forms of near-integrable Hamiltonians with explicit estimates."""

from .errors import (
    CertificateRefused,
    ConfigurationError,
    DegenerateError,
    IntegrationError,
    ParameterError,
    RelegationError,
    ResourceError,
    SequencingError,
    SmallDivisorError,
    StructuralError,
)
from .norms import DomainParams, Restriction, weighted_norm
from .relegation_engine import HamiltonianSpec, NormalFormResult, lie_apply, relegate
from .resonance import FrequencyVector, ResonanceModule, resonance_module
from .series_core import PoissonSeries, poisson_bracket

__version__ = "0.1.0"
