"""Discrete-time quantum trajectories under imperfect measurement.

Simulation of trajectories driven by quantum instruments, certification of
irreducibility / contractivity / primitivity of the averaged channel, and
numerical checks of filter stability and invariant-measure convergence.
"""

from qtraj.config import Tolerances, get_tolerances, set_tolerances, tolerances
from qtraj.errors import QTrajError
from qtraj.linalg import fidelity, op_norm, psd_sqrt, trace_norm
from qtraj.instrument import (
    Instrument,
    OutcomeMap,
    build_imperfect,
    compose_word,
    map_norm,
    outcome_probability,
    total_channel,
)

__version__ = "0.1.0"

__all__ = [
    "Tolerances",
    "get_tolerances",
    "set_tolerances",
    "tolerances",
    "QTrajError",
    "fidelity",
    "op_norm",
    "psd_sqrt",
    "trace_norm",
    "Instrument",
    "OutcomeMap",
    "build_imperfect",
    "compose_word",
    "map_norm",
    "outcome_probability",
    "total_channel",
]
