"""Driven-dissipative qubit-resonator dynamics under Lindblad and Bloch-Redfield dissipators."""

__version__ = "0.1.0"
