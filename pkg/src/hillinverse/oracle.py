"""Reference values that do not go through the Galerkin machinery.

* free bands ``(k + q)^2``;
* the q = 0 dispersion relation of the Dirac comb (Kronig-Penney) potential,
  ``1 = cos(2 pi w) + (lam / 2) sin(2 pi w) / w`` with ``eps = w^2``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .bloch import QGrid, assemble_fiber, band_sweep, eigen_lowest
from .fourier import MeasurePotential

__all__ = [
    "BracketError",
    "DispersionRoot",
    "comb_dispersion",
    "dirac_dispersion_q0",
    "free_band",
    "comb_first_band_flatness",
    "write_oracle_csv",
]

FIRST_BAND_BRACKET = (1e-8, 0.5)


class BracketError(ValueError):
    """The supplied bracket does not enclose a sign change."""


@dataclass(frozen=True)
class DispersionRoot:
    lam: float
    q: float
    omega: float
    residual: float

    @property
    def eps(self) -> float:
        return self.omega**2


def comb_dispersion(omega: float, lam: float) -> float:
    """``cos(2 pi w) + (lam/2) sin(2 pi w)/w - 1``; zero on the q = 0 spectrum."""
    t = 2 * math.pi * omega
    return math.cos(t) + 0.5 * lam * math.sin(t) / omega - 1.0


def dirac_dispersion_q0(lam: float, bracket=FIRST_BAND_BRACKET, tol: float = 1e-12) -> DispersionRoot:
    """Solve the comb dispersion relation at q = 0 by bisection.

    Bisection continues until the residual drops below ``tol`` or the bracket
    collapses to adjacent floats.
    """
    if not lam > 0:
        raise ValueError(f"lam must be positive, got {lam}")
    a, b = map(float, bracket)
    fa, fb = comb_dispersion(a, lam), comb_dispersion(b, lam)
    if fa == 0.0:
        return DispersionRoot(lam, 0.0, a, 0.0)
    if fb == 0.0:
        return DispersionRoot(lam, 0.0, b, 0.0)
    if np.sign(fa) == np.sign(fb):
        raise BracketError(f"no sign change of the dispersion function on [{a}, {b}] for lam={lam}")
    mid, fm = a, fa
    for _ in range(200):
        mid = 0.5 * (a + b)
        fm = comb_dispersion(mid, lam)
        if abs(fm) <= tol or mid in (a, b):
            break
        if np.sign(fm) == np.sign(fa):
            a, fa = mid, fm
        else:
            b = mid
    return DispersionRoot(lam, 0.0, mid, abs(fm))


def free_band(q: float, m: int) -> float:
    """m-th smallest value of ``(k + q)^2`` over the integers."""
    if m < 1:
        raise ValueError("band index starts at 1")
    k = np.arange(-(m + 1), m + 2)
    return float(np.sort((k + q) ** 2)[m - 1])


def comb_first_band_flatness(lam: float, grid: QGrid, s: int) -> float:
    """``max_q |eps_{q,1} - eps_{0,1}|`` for the comb of amplitude ``lam``."""
    V = MeasurePotential(lam)
    sheet = band_sweep(V, grid, 1, s)
    eps0 = eigen_lowest(assemble_fiber(V, 0.0, s), 1)[0][0]
    return float(np.max(np.abs(sheet.eps[:, 0] - eps0)))


def write_oracle_csv(path, rows) -> None:
    """``rows``: iterable of ``(lam, omega, eps, flatness)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "omega", "eps", "flatness"])
        for row in rows:
            w.writerow([f"{x:.17g}" for x in row])
