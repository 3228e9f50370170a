"""Rapid purification of a continuously measured qubit with Hamiltonian feedback."""

__version__ = "0.1.0"
