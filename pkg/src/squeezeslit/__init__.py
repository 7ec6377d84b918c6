"""Desk-scale simulation and inference toolkit for a squeezed-slit atom
interferometer: Gaussian phase-space algebra, a truncated-Fock exact oracle,
a truncated-Wigner trajectory engine, quench protocols, visibility inference,
and interferometric Wigner tomography."""

__version__ = "0.1.0"

from . import core, exact_sim, twa, protocol, inference, tomography

__all__ = ["core", "exact_sim", "twa", "protocol", "inference", "tomography"]
