"""Simulation toolkit for a field-independent hyperfine clock qubit in 43Ca+."""
from importlib import metadata as _metadata

try:
    __version__ = _metadata.version("artifact")
except _metadata.PackageNotFoundError:     # running from a source tree
    __version__ = "0.1.0"

from .atomic import (AtomicConstants, DEFAULT_CONSTANTS, HyperfineState, Polarization, QUBIT_DOWN,
                     QUBIT_UP, field_independent_point, state_energy, transition_frequency)
from .benchmarking import ErrorModel, GateSequence, fit_epg, generate_sequence, run_benchmark
from .readout import DetectionModel, classify, simulate_trace
