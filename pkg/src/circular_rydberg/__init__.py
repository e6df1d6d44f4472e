"""Simulation toolkit for trapped circular Rydberg atom qubits."""

__version__ = "0.1.0"
