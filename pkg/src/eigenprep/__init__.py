"""Eigenstate preparation by repeated single-ancilla phase-estimation measurements."""

__version__ = "0.1.0"
