"""Inverse band-structure problems for 1D periodic Schrodinger operators."""

__version__ = "0.1.0"

from .bloch import BandSheet, FiberMatrix, QGrid, assemble_fiber, band_sweep, eigen_lowest  # noqa: E402
from .fourier import ExpCoeffs, MeasurePotential, TrigPotential  # noqa: E402
from .objective import TargetBands, cost, gradient  # noqa: E402
