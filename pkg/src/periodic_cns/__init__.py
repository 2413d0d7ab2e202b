"""Galerkin solver for time-periodic compressible flow with a hard-sphere
pressure in an inflow/outflow channel."""
from .config import RunConfig
from .discretization import ChannelDomain, GalerkinSpace, State, build_spaces
from .errors import ConfigError, DomainError, NumericError
from .evolution import Problem, StepperConfig, march_period
from .periodic import FixedPointReport, energy_norm, period_map, solve_periodic

__all__ = ["RunConfig", "ChannelDomain", "GalerkinSpace", "State", "build_spaces",
           "ConfigError", "DomainError", "NumericError", "Problem", "StepperConfig",
           "march_period", "FixedPointReport", "energy_norm", "period_map", "solve_periodic"]
