"""Simulation and inference for ensemble-assisted preparation and optical readout of a Rydberg qubit."""

__version__ = "0.1.0"
