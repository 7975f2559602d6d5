"""Quantum kicked molecular rotor: pulse-train simulation of dynamical localization."""
from .errors import (
    ConfigError,
    DomainError,
    FitError,
    GenerationError,
    KickRotorError,
    LeakageError,
    NumericalError,
    PoleError,
)
from .rotor import OXYGEN, BasisBlock, RotorSpec, cos2_matrix, rot_energy, thermal_weights
from .propagation import PropagatorCache, RotState, delta_kick, evolve_train, finite_pulse, free_propagator
from .lattice import ResonanceMarker, nearest_resonance_distance, resonance_map
from .pulses import Pulse, PulseTrain, TrainSet, jittered_set, jittered_train, periodic_set, periodic_train
from .ensemble import EnsembleResult, absorbed_energy_curve, initial_ensemble, run_ensemble
from .analysis import FitResult, classify_shape, fit_exponential, fit_gaussian, fit_window, width_vs_strength

__version__ = "0.1.0"
