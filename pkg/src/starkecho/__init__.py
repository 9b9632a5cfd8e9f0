"""Photon echoes in a three-level atomic ensemble with ac Stark phase control."""

__version__ = "0.1.0"

from .ensemble import AtomGroup, Ensemble, EnsembleSpec, build_ensemble, resonant_only
from .sequence import (
    Channel,
    Pulse,
    PulseSequence,
    SequenceError,
    parse_sequence,
    preset,
    serialize_sequence,
    stark_phase,
    validate,
)
from .dynamics import PropagationConfig, TraceSet, propagate_ensemble, propagate_group
from .analysis import compare, detect_echo, efficiency_sweep, oracle_predict, sweep_2d

__all__ = [
    "AtomGroup", "Ensemble", "EnsembleSpec", "build_ensemble", "resonant_only",
    "Channel", "Pulse", "PulseSequence", "SequenceError", "parse_sequence", "preset",
    "serialize_sequence", "stark_phase", "validate",
    "PropagationConfig", "TraceSet", "propagate_ensemble", "propagate_group",
    "compare", "detect_echo", "efficiency_sweep", "oracle_predict", "sweep_2d",
]
