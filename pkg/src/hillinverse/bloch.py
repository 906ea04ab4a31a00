"""Plane-wave Galerkin discretisation of the Bloch fibers of a Hill operator.

For quasi-momentum ``q`` the fiber operator acts on periodic functions as
``|-i d/dx + q|^2 + V``.  In the basis ``e_k = exp(ikx)/sqrt(2 pi)``,
``|k| <= s``, its matrix has diagonal ``(k + q)^2 + v_0`` and off-diagonal
entries ``v_{j-k}``.
"""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .fourier import ExpCoeffs, MeasurePotential, TrigPotential, trig_to_exp

__all__ = [
    "EigenSolverError",
    "FiberMatrix",
    "QGrid",
    "BandSheet",
    "potential_block",
    "assemble_fiber",
    "eigen_lowest",
    "band_sweep",
    "write_bands_csv",
]

RESIDUAL_TOL = 1e-10
DEGENERACY_TOL = 1e-12


class EigenSolverError(ArithmeticError):
    """Dense eigensolve failed or returned an inaccurate eigenpair."""

    def __init__(self, message, q=None, s=None):
        super().__init__(f"{message} (q={q}, s={s})")
        self.q = q
        self.s = s


@dataclass(frozen=True)
class FiberMatrix:
    q: float
    s: int
    entries: np.ndarray

    @property
    def n(self) -> int:
        return 2 * self.s + 1

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.s, self.s + 1)


@dataclass(frozen=True)
class QGrid:
    """Regular grid ``{-1/2 + j/Q : j = 0..Q-1}`` of the Brillouin zone."""

    Q: int
    points: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.Q < 1:
            raise ValueError(f"Q must be >= 1, got {self.Q}")
        pts = -0.5 + np.arange(self.Q) / self.Q
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.Q


@dataclass(frozen=True)
class BandSheet:
    """Lowest ``M`` Galerkin eigenpairs at every grid point.

    ``eps`` has shape ``(Q, M)``; ``vecs`` has shape ``(Q, M, 2s+1)`` with
    unit-norm rows expressed in mode coordinates ``k = -s..s``.
    """

    grid: QGrid
    M: int
    s: int
    eps: np.ndarray
    vecs: np.ndarray


def _as_exp(V) -> ExpCoeffs | MeasurePotential:
    if isinstance(V, TrigPotential):
        return trig_to_exp(V)
    if isinstance(V, (ExpCoeffs, MeasurePotential)):
        return V
    raise TypeError(f"unsupported potential type {type(V).__name__}")


@lru_cache(maxsize=64)
def _lag_index(s: int) -> np.ndarray:
    k = np.arange(-s, s + 1)
    return k[:, None] - k[None, :]


def potential_block(V, s: int) -> np.ndarray:
    """Potential part of the fiber matrix; identical for every ``q``."""
    V = _as_exp(V)
    n = 2 * s + 1
    if isinstance(V, MeasurePotential):
        block = np.full((n, n), V.coefficient, dtype=complex)
        block[np.diag_indices(n)] += V.shift
        return block
    lag = _lag_index(s)
    block = np.zeros((n, n), dtype=complex)
    inside = np.abs(lag) <= V.p
    block[inside] = V.v[lag[inside] + V.p]
    return block


def assemble_fiber(V, q: float, s: int) -> FiberMatrix:
    if s < 1:
        raise ValueError(f"cutoff s must be >= 1, got {s}")
    H = potential_block(V, s)
    k = np.arange(-s, s + 1)
    H[np.diag_indices(k.size)] += (k + q) ** 2
    return FiberMatrix(float(q), s, H)


def _check_residual(H, eps, vecs, q, s):
    # vecs: (..., n, M) columns as returned by eigh
    res = np.linalg.norm(H @ vecs - vecs * eps[..., None, :], axis=-2)
    # backward-stable solvers leave residuals of order n * macheps * |H|
    n = H.shape[-1]
    floor = 10 * n * np.finfo(float).eps * np.max(np.abs(H))
    bound = RESIDUAL_TOL * np.maximum(1.0, np.abs(eps)) + floor
    if not np.all(np.isfinite(eps)) or np.any(res > bound):
        raise EigenSolverError("eigenpair residual above tolerance", q=q, s=s)


def _mix_degenerate(w, U, M):
    """Rotate eigenvectors of exactly degenerate clusters touching the lowest M.

    Inside a degenerate cluster any orthonormal basis is valid; the solver's
    choice for a diagonal matrix is the pure modes, on which every
    Hellmann-Feynman derivative with k != 0 vanishes.  A fixed DFT mixing
    gives a basis whose derivatives see the splitting of the cluster.
    """
    n = w.size
    i = 0
    while i < M:
        j = i + 1
        tol = DEGENERACY_TOL * max(1.0, abs(w[i]))
        while j < n and w[j] - w[j - 1] <= tol:
            j += 1
        r = j - i
        if r > 1:
            a = np.arange(r)
            F = np.exp(-2j * np.pi * np.outer(a, a) / r) / np.sqrt(r)
            if r == 2:
                F = F.real
            U[:, i:j] = U[:, i:j] @ F
        i = j
    return U


def eigen_lowest(Hm: FiberMatrix, M: int):
    """Return the ``M`` smallest eigenvalues (ascending) and eigenvectors.

    Eigenvectors are returned as rows, shape ``(M, 2s+1)``.
    """
    if not 1 <= M <= Hm.n:
        raise ValueError(f"M must lie in 1..{Hm.n}, got {M}")
    try:
        w, U = np.linalg.eigh(Hm.entries)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(f"eigh did not converge: {exc}", q=Hm.q, s=Hm.s) from exc
    U = _mix_degenerate(w, U, M)
    w, U = w[:M], U[:, :M]
    _check_residual(Hm.entries, w, U, Hm.q, Hm.s)
    return w, U.T.copy()


def _sweep_chunk(block, qs, s, M):
    k = np.arange(-s, s + 1)
    H = np.broadcast_to(block, (qs.size,) + block.shape).copy()
    idx = np.arange(k.size)
    H[:, idx, idx] += (k[None, :] + qs[:, None]) ** 2
    try:
        w, U = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(f"eigh did not converge: {exc}", q=list(qs), s=s) from exc
    for i in range(qs.size):
        U[i] = _mix_degenerate(w[i], U[i], M)
    w, U = w[:, :M], U[:, :, :M]
    for i, q in enumerate(qs):
        _check_residual(H[i], w[i], U[i], float(q), s)
    return w, np.swapaxes(U, 1, 2)


def band_sweep(V, grid: QGrid, M: int, s: int, threads: int = 1) -> BandSheet:
    """Lowest ``M`` bands of ``V`` at cutoff ``s`` over every grid point.

    With ``threads > 1`` the grid is split into contiguous chunks solved
    concurrently; results are always assembled in grid order.
    """
    if s < 1:
        raise ValueError(f"cutoff s must be >= 1, got {s}")
    if not 1 <= M <= 2 * s + 1:
        raise ValueError(f"M must lie in 1..{2 * s + 1}, got {M}")
    block = potential_block(V, s)
    qs = np.asarray(grid.points)
    if threads <= 1 or qs.size < 2:
        eps, vecs = _sweep_chunk(block, qs, s, M)
    else:
        chunks = np.array_split(qs, min(threads, qs.size))
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _sweep_chunk(block, c, s, M), chunks))
        eps = np.concatenate([p[0] for p in parts])
        vecs = np.concatenate([p[1] for p in parts])
    return BandSheet(grid, M, s, eps, vecs)


def write_bands_csv(path, points, eps) -> None:
    """Write a ``(Q, M)`` band table as ``q,m,eps`` rows."""
    eps = np.asarray(eps)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["q", "m", "eps"])
        for i, q in enumerate(points):
            for m in range(eps.shape[1]):
                w.writerow([f"{q:.17g}", m + 1, f"{eps[i, m]:.17g}"])
