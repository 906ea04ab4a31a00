"""Band misfit functional and its Hellmann-Feynman gradient.

The misfit at cutoff ``s`` is

    J(V) = (1/Q) sum_q sum_m |b_m(q) - eps_{q,m}(V)|^2

and, since ``d eps / d c_k = <u, cos(k.) u>`` and ``d eps / d d_k = <u, sin(k.) u>``
for a normalised eigenvector ``u``, its gradient only needs the eigenvectors
that were already computed for the cost.

Gradient vectors of degree ``p`` have length ``2p + 1`` and are ordered
``(dJ/dd_p, ..., dJ/dd_1, dJ/dc_0, dJ/dc_1, ..., dJ/dc_p)``, the same layout as
:meth:`TrigPotential.to_vector`.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .bloch import BandSheet, QGrid, band_sweep
from .fourier import TrigPotential

__all__ = [
    "TargetBands",
    "Evaluation",
    "lag_correlation",
    "hf_derivative",
    "evaluate",
    "cost",
    "gradient",
    "split_gradient",
]

EVEN_TOL = 1e-8


@dataclass(frozen=True)
class TargetBands:
    """Target band values sampled on a Brillouin-zone grid, shape ``(Q, M)``."""

    grid: QGrid
    samples: np.ndarray
    source: str = "samples"

    def __post_init__(self):
        b = np.array(self.samples, dtype=float)
        if b.ndim != 2 or b.shape[0] != self.grid.Q or b.shape[1] < 1:
            raise ValueError(f"samples must have shape (Q={self.grid.Q}, M>=1), got {b.shape}")
        if not np.all(np.isfinite(b)):
            raise ValueError("target band samples must be finite")
        b.setflags(write=False)
        object.__setattr__(self, "samples", b)
        _check_even(self.grid, b)
        _warn_if_not_monotone(self.grid, b)

    @property
    def M(self) -> int:
        return self.samples.shape[1]

    @classmethod
    def from_potential(cls, V, grid: QGrid, M: int, s_t: int) -> "TargetBands":
        """Freeze the Galerkin bands of ``V`` at cutoff ``s_t`` as targets."""
        sheet = band_sweep(V, grid, M, s_t)
        return cls(grid, sheet.eps, source=f"potential(s_t={s_t})")

    @classmethod
    def from_functions(cls, funcs: Sequence[Callable[[np.ndarray], np.ndarray]], grid: QGrid) -> "TargetBands":
        q = np.asarray(grid.points)
        b = np.column_stack([np.broadcast_to(f(q), q.shape) for f in funcs])
        return cls(grid, b, source="functions")


def _check_even(grid: QGrid, b: np.ndarray) -> None:
    # grid index j pairs with Q - j (q -> -q); j = 0 (q = -1/2) pairs with itself
    Q = grid.Q
    j = np.arange(1, Q)
    if j.size == 0:
        return
    gap = np.max(np.abs(b[j] - b[Q - j]))
    if gap > EVEN_TOL * max(1.0, float(np.max(np.abs(b)))):
        raise ValueError(f"target bands are not even in q (max asymmetry {gap:.3g})")


def _warn_if_not_monotone(grid: QGrid, b: np.ndarray) -> None:
    q = np.asarray(grid.points)
    neg = np.flatnonzero(q <= 0)
    order = neg[np.argsort(-q[neg])]  # |q| ascending on the mirrored half
    for m in range(b.shape[1]):
        diffs = np.diff(b[order, m])
        tol = 1e-10 * max(1.0, float(np.max(np.abs(b[:, m]))))
        ok = np.all(diffs >= -tol) if m % 2 == 0 else np.all(diffs <= tol)
        if not ok:
            trend = "increasing" if m % 2 == 0 else "decreasing"
            warnings.warn(f"target band {m + 1} is not {trend} on [0, 1/2]", stacklevel=3)


@dataclass(frozen=True)
class Evaluation:
    """Cost, gradient and the band data they were computed from."""

    J: float
    grad: np.ndarray
    sheet: BandSheet
    residual: np.ndarray  # eps - b, shape (Q, M)

    @property
    def gnorm(self) -> float:
        return float(np.linalg.norm(self.grad))


def lag_correlation(U: np.ndarray, k: int) -> np.ndarray:
    """``sum_j conj(u_j) u_{j-k}`` over the last axis (mode index)."""
    n = U.shape[-1]
    if k >= n:
        return np.zeros(U.shape[:-1], dtype=complex)
    if k == 0:
        return np.sum(np.abs(U) ** 2, axis=-1).astype(complex)
    return np.sum(np.conj(U[..., k:]) * U[..., : n - k], axis=-1)


def hf_derivative(u: np.ndarray, k: int, kind: str) -> float:
    """Eigenvalue derivative w.r.t. the ``cos(kx)`` or ``sin(kx)`` coefficient."""
    if kind == "cos":
        if k < 0:
            raise ValueError("cos mode index must be >= 0")
        return float(lag_correlation(np.asarray(u), k).real)
    if kind == "sin":
        if k < 1:
            raise ValueError("sin mode index must be >= 1")
        return float(lag_correlation(np.asarray(u), k).imag)
    raise ValueError(f"kind must be 'cos' or 'sin', got {kind!r}")


def evaluate(V: TrigPotential, T: TargetBands, s: int, p_out: int | None = None, threads: int = 1) -> Evaluation:
    """Cost and gradient (of degree ``p_out``, default ``V.p``) from one band sweep."""
    if p_out is None:
        p_out = V.p
    sheet = band_sweep(V, T.grid, T.M, s, threads=threads)
    resid = sheet.eps - T.samples
    Q = T.grid.Q
    J = float(np.sum(resid**2) / Q)
    weights = 2.0 * resid / Q
    dc = np.empty(p_out + 1)
    ds = np.empty(p_out)
    dc[0] = np.sum(weights)  # <u, u> = 1
    for k in range(1, p_out + 1):
        corr = np.sum(weights * lag_correlation(sheet.vecs, k))
        dc[k] = corr.real
        ds[k - 1] = corr.imag
    grad = np.concatenate([ds[::-1], dc])
    return Evaluation(J, grad, sheet, resid)


def cost(V: TrigPotential, T: TargetBands, s: int) -> float:
    sheet = band_sweep(V, T.grid, T.M, s)
    return float(np.sum((T.samples - sheet.eps) ** 2) / T.grid.Q)


def gradient(V: TrigPotential, T: TargetBands, s: int, p_out: int | None = None) -> np.ndarray:
    if p_out is not None and p_out < 1:
        raise ValueError("p_out must be >= 1")
    return evaluate(V, T, s, p_out).grad


def split_gradient(g: np.ndarray):
    """Return ``(dJ/dc_0..c_p, dJ/dd_1..d_p)`` from an ordered gradient vector."""
    g = np.asarray(g)
    p = g.size // 2
    return g[p:], g[:p][::-1]
