"""Diplexer-based SWIPT receiver simulation and MISO transmit beamforming."""

from .beamforming import InfeasibleProblem, SolverFailure, optimize
from .miso import BeamformerSet, MisoChannel, UserThresholds, feasibility_test
from .signal_chain import LinkConfig, simulate_receiver

__version__ = "0.1.0"

__all__ = [
    "BeamformerSet",
    "InfeasibleProblem",
    "LinkConfig",
    "MisoChannel",
    "SolverFailure",
    "UserThresholds",
    "feasibility_test",
    "optimize",
    "simulate_receiver",
]
