"""Exact spectra, phase structure and classical dynamics of oscillator chains
with imaginary nearest-neighbour coupling."""

__version__ = "0.1.0"

from .core import ChainSpec, ModeSet, build_coupling_matrix, decoupling_transform, normal_modes
from .phase import Phase, classify_phase
from .spectrum import enumerate_levels, ground_state_energy

__all__ = [
    "ChainSpec", "ModeSet", "Phase", "build_coupling_matrix", "classify_phase",
    "decoupling_transform", "enumerate_levels", "ground_state_energy", "normal_modes",
]
