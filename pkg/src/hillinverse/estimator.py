"""A posteriori bounds for Galerkin band errors and the refinement indicators.

For an eigenpair ``(eps_N, u_N)`` computed at cutoff ``s`` and lifted into a
larger reference space ``X_{s_ref}`` with matrix ``A``, the residual
``r = (A - eps_N) u_N`` gives the bound

    eps_N - eps_m <= <r, (A - c)^-1 (A - d) (A - c)^-1 r>,
    c = eps_N + delta,  d = lambda_m + delta,  delta = theta * (eps_N - kappa),

where ``lambda_m`` is a trace-based lower bound on the m-th eigenvalue of
``A``.  The bound is evaluated through the eigendecomposition of ``A``.

``kappa`` is an a priori lower bound on the lowest eigenvalue.  By default it
is the larger of the trace bound of the q = 0 reference fiber and a lower
bound on ``min V`` (the kinetic part is non-negative).  The trace bound alone
sits far below the spectrum at large ``s_ref`` and inflates ``delta``.

``s_estimator`` aggregates these into a bound on the misfit discretisation
error, ``p_estimator`` is the gradient norm on the doubled coefficient space.
"""
from __future__ import annotations

import logging
import threading
from dataclasses import dataclass

import numpy as np

from .bloch import QGrid, band_sweep, potential_block
from .fourier import TrigPotential
from .objective import TargetBands, evaluate

__all__ = [
    "ShiftCollisionError",
    "ApostConfig",
    "DeltaReport",
    "ReferenceCache",
    "default_kappa",
    "lambda_lower_bound",
    "potential_min_bound",
    "lift",
    "delta",
    "delta_report",
    "s_estimator",
    "s_estimator_from",
    "p_estimator",
    "ESTIMATOR_TEST_POTENTIAL",
]

log = logging.getLogger(__name__)

COLLISION_TOL = 1e-12
# eigenvalue differences below this (relative) size are rounding noise
NOISE_TOL = 1e-12


class ShiftCollisionError(ArithmeticError):
    """The shift ``c`` sits on (or within 1e-12 of) a reference eigenvalue."""


@dataclass(frozen=True)
class ApostConfig:
    s_ref: int = 250
    theta: float = 0.01
    kappa: float | None = None  # None: see default_kappa

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"theta must be positive, got {self.theta}")
        if self.s_ref < 1:
            raise ValueError(f"s_ref must be >= 1, got {self.s_ref}")


@dataclass(frozen=True)
class DeltaReport:
    """Per ``(q, m)`` bounds, shape ``(Q, M)`` for every array."""

    delta: np.ndarray
    lambda_m: np.ndarray
    residual_norm: np.ndarray
    eps_s: np.ndarray
    eps_ref: np.ndarray
    gap_ok: np.ndarray
    shift_ok: np.ndarray
    kappa: float

    @property
    def hypothesis_ok(self) -> np.ndarray:
        """Pairs where the bound is guaranteed: gap condition and a small enough shift."""
        return self.gap_ok & self.shift_ok


def lambda_lower_bound(A, m: int) -> float:
    """Trace lower bound ``mu - sqrt((N - m) / m) * sigma`` on the m-th eigenvalue.

    ``mu = tr(A) / N`` and ``sigma^2 = tr(A^2) / N - mu^2``.  Index ``m`` is
    1-based (``m = 1`` is the smallest eigenvalue).
    """
    A = getattr(A, "entries", A)
    N = A.shape[0]
    if m < 1 or N < 2 or m > N:
        raise ValueError(f"need 1 <= m <= N with N >= 2 (m={m}, N={N})")
    mu = float(np.trace(A).real) / N
    sigma2 = float(np.sum(np.abs(A) ** 2)) / N - mu * mu
    if sigma2 < 0:
        if sigma2 < -1e-12 * max(1.0, mu * mu):
            raise ArithmeticError(f"negative trace variance {sigma2:.3g}")
        sigma2 = 0.0
    return mu - np.sqrt((N - m) / m) * np.sqrt(sigma2)


def lift(u, s: int, s_ref: int) -> np.ndarray:
    """Zero-pad mode coefficients ``k = -s..s`` to ``k = -s_ref..s_ref``."""
    u = np.asarray(u)
    if s_ref < s:
        raise ValueError(f"reference cutoff {s_ref} below discretisation cutoff {s}")
    pad = s_ref - s
    return np.pad(u, [(0, 0)] * (u.ndim - 1) + [(pad, pad)])


def _delta_from_spectrum(w, P, r, eps_N, lam, dlt):
    c = eps_N + dlt
    d = lam + dlt
    dist = np.min(np.abs(w - c))
    if dist < COLLISION_TOL:
        raise ShiftCollisionError(f"shift {c:.17g} within {dist:.3g} of a reference eigenvalue")
    a2 = np.abs(P.conj().T @ r) ** 2
    return max(0.0, float(np.sum(a2 * (w - d) / (w - c) ** 2)))


def delta(A_ref, eps_N: float, u_N, m: int, cfg: ApostConfig, kappa: float | None = None, spectrum=None) -> float:
    """Bound on ``eps_N - eps_m`` for one lifted eigenpair.

    ``spectrum`` may carry a precomputed ``(w, P)`` decomposition of ``A_ref``.
    """
    A = getattr(A_ref, "entries", A_ref)
    u = np.asarray(u_N)
    if kappa is None:
        kappa = cfg.kappa if cfg.kappa is not None else lambda_lower_bound(A, 1)
    w, P = spectrum if spectrum is not None else np.linalg.eigh(A)
    r = A @ u - eps_N * u
    lam = lambda_lower_bound(A, m)
    dlt = max(0.0, cfg.theta * (eps_N - kappa))
    return _delta_from_spectrum(w, P, r, eps_N, lam, dlt)


def potential_min_bound(V) -> float:
    """Lower bound on ``min_x V(x)``, hence on the lowest eigenvalue of every fiber."""
    if isinstance(V, TrigPotential):
        return float(V.c[0] - np.sum(np.hypot(V.c[1:], V.d)))
    if hasattr(V, "v"):
        p = V.p
        return float(V.v[p].real - 2 * np.sum(np.abs(V.v[p + 1:])))
    return float(V.shift)  # the comb itself is a non-negative measure


def default_kappa(V, A0) -> float:
    """Larger of two a priori lower bounds on the lowest eigenvalue."""
    return max(lambda_lower_bound(A0, 1), potential_min_bound(V))


class ReferenceCache:
    """Reference-cutoff spectra for one potential at a time.

    A lookup for a different potential (or cutoff) drops every stored entry.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._key = None
        self._data = {}

    def get(self, V, q: float, s_ref: int):
        key = (_potential_key(V), s_ref)
        with self._lock:
            if key != self._key:
                self._key = key
                self._data = {}
            hit = self._data.get(float(q))
        if hit is not None:
            return hit
        A = potential_block(V, s_ref)
        k = np.arange(-s_ref, s_ref + 1)
        A[np.diag_indices(k.size)] += (k + q) ** 2
        w, P = np.linalg.eigh(A)
        entry = (A, w, P)
        with self._lock:
            if key == self._key:
                self._data[float(q)] = entry
        return entry

    def clear(self):
        with self._lock:
            self._key = None
            self._data = {}


def _potential_key(V):
    if isinstance(V, TrigPotential):
        return ("trig", V.c.tobytes(), V.d.tobytes())
    if hasattr(V, "v"):
        return ("exp", V.v.tobytes())
    return ("measure", V.lam, V.shift)


def delta_report(V, grid: QGrid, M: int, s: int, cfg: ApostConfig, cache: ReferenceCache | None = None) -> DeltaReport:
    """Bounds for the lowest ``M`` bands of ``V`` at cutoff ``s`` on every grid point."""
    if s > cfg.s_ref:
        raise ValueError(f"s={s} exceeds the reference cutoff s_ref={cfg.s_ref}")
    cache = cache if cache is not None else ReferenceCache()
    sheet = band_sweep(V, grid, M, s)
    Q = grid.Q
    kappa = cfg.kappa
    if kappa is None:
        A0, _, _ = cache.get(V, 0.0, cfg.s_ref)
        kappa = default_kappa(V, A0)
    out = {name: np.zeros((Q, M)) for name in ("delta", "lambda_m", "residual_norm", "eps_ref")}
    gap_ok = np.zeros((Q, M), dtype=bool)
    shift_ok = np.zeros((Q, M), dtype=bool)
    for i, q in enumerate(grid.points):
        A, w, P = cache.get(V, q, cfg.s_ref)
        U = lift(sheet.vecs[i], s, cfg.s_ref)
        for m in range(M):
            eps_N = sheet.eps[i, m]
            r = A @ U[m] - eps_N * U[m]
            lam = lambda_lower_bound(A, m + 1)
            dlt = max(0.0, cfg.theta * (eps_N - kappa))
            out["delta"][i, m] = _delta_from_spectrum(w, P, r, eps_N, lam, dlt)
            out["lambda_m"][i, m] = lam
            out["residual_norm"][i, m] = np.linalg.norm(r)
            out["eps_ref"][i, m] = w[m]
            # hypothesis of the bound: 0 < eps_N - eps_m < dist(eps_N, spectrum minus eps_m),
            # with the error resolved above rounding noise
            err = eps_N - w[m]
            others = np.delete(w, m)
            floor = NOISE_TOL * max(1.0, abs(eps_N))
            dist = np.min(np.abs(others - eps_N))
            gap_ok[i, m] = floor < err < dist
            # the shift must stay below both eps_m - lambda_m and the slack left in the gap
            shift_ok[i, m] = dlt <= min(w[m] - lam, dist - err)
    if not np.all(gap_ok):
        log.debug("gap condition fails at %d of %d (q, m) pairs", int(np.sum(~gap_ok)), gap_ok.size)
    if not np.all(shift_ok):
        log.debug("shift too large for a guaranteed bound at %d of %d (q, m) pairs",
                  int(np.sum(~shift_ok)), shift_ok.size)
    return DeltaReport(out["delta"], out["lambda_m"], out["residual_norm"], sheet.eps, out["eps_ref"], gap_ok,
                       shift_ok, kappa)


def s_estimator_from(residual, delta_values, Q: int) -> float:
    """``(1/Q) sum (2 |b - eps| + Delta) Delta`` from precomputed arrays."""
    residual = np.abs(np.asarray(residual))
    dv = np.asarray(delta_values)
    return float(np.sum((2 * residual + dv) * dv) / Q)


def s_estimator(V, T: TargetBands, s: int, cfg: ApostConfig, cache: ReferenceCache | None = None) -> float:
    rep = delta_report(V, T.grid, T.M, s, cfg, cache)
    return s_estimator_from(rep.eps_s - T.samples, rep.delta, T.grid.Q)


def p_estimator(V: TrigPotential, T: TargetBands, s: int, new_modes_only: bool = False) -> float:
    """Gradient norm of the misfit on the doubled space ``Y_{2p}``.

    With ``new_modes_only`` the coordinates of ``Y_p`` itself are left out,
    which is the value the indicator takes at an exact stationary point.
    """
    p = V.p
    g = evaluate(V, T, s, p_out=2 * p).grad
    if new_modes_only:
        g = np.concatenate([g[:p], g[3 * p + 1:]])
    return float(np.linalg.norm(g))


def _estimator_test_potential():
    from .fourier import ExpCoeffs

    # normalised coefficients hat V_k of V = sum hat V_k e_k, e_k = exp(ikx)/sqrt(2 pi)
    hat = {0: 2.0, 1: 1 + 0.5j, 2: 1 + 0.5j}
    v = np.zeros(7, dtype=complex)
    for k, val in hat.items():
        v[3 + k] = val / np.sqrt(2 * np.pi)
        v[3 - k] = np.conj(val) / np.sqrt(2 * np.pi)
    return ExpCoeffs(v)


ESTIMATOR_TEST_POTENTIAL = _estimator_test_potential()
