"""Descent methods for the band misfit at fixed discretisation.

Three search directions are available -- steepest descent (``sd``),
Polak-Ribiere conjugate gradient (``pr``) and BFGS (``bfgs``) -- all combined
with a strong-Wolfe line search.  :func:`descend` is a generic driver on a
flat coefficient vector; :func:`run_naive` wires it to the misfit functional.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fourier import TrigPotential, extend
from .objective import TargetBands, evaluate

__all__ = [
    "METHODS",
    "LineSearchError",
    "OptimState",
    "RunRecord",
    "line_search",
    "descent_direction",
    "update_memory",
    "descend",
    "run_naive",
    "write_convergence_csv",
]

log = logging.getLogger(__name__)

METHODS = ("sd", "pr", "bfgs")
C1 = 1e-4
C2 = {"sd": 0.9, "pr": 0.4, "bfgs": 0.9}
MAX_LS_ITER = 40
CURVATURE_EPS = 1e-12
DEFAULT_MAX_ITER = 100_000


class LineSearchError(RuntimeError):
    pass


@dataclass
class OptimState:
    """Iterate plus whatever the chosen method remembers between steps."""

    x: np.ndarray
    f: float
    g: np.ndarray
    method: str = "bfgs"
    dir: np.ndarray | None = None
    g_prev: np.ndarray | None = None
    dir_prev: np.ndarray | None = None
    H: np.ndarray | None = None
    f_prev: float | None = None
    iter: int = 0

    def reset_memory(self):
        self.g_prev = None
        self.dir_prev = None
        self.H = None


@dataclass
class RunRecord:
    rows: list = field(default_factory=list)
    W: TrigPotential | None = None
    J: float = math.nan
    gnorm: float = math.nan
    s: int = 0
    p: int = 0
    n_iter: int = 0
    termination: str = ""
    elapsed: float = 0.0

    def log_row(self, it, J, gnorm, s, p, elapsed, event=""):
        self.rows.append((it, J, gnorm, s, p, elapsed, event))

    @property
    def J_history(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    @property
    def events(self) -> list:
        return [r for r in self.rows if r[6]]


# -- line search ---------------------------------------------------------------


def _cubic_min(a, fa, da, b, fb, db):
    """Minimiser of the cubic interpolating (a, fa, da), (b, fb, db), or None."""
    d1 = da + db - 3 * (fa - fb) / (a - b)
    rad = d1 * d1 - da * db
    if rad < 0:
        return None
    d2 = math.copysign(math.sqrt(rad), b - a)
    denom = db - da + 2 * d2
    if denom == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


def line_search(phi: Callable, f0: float, d0: float, t0: float = 1.0, c1: float = C1, c2: float = 0.9,
                max_iter: int = MAX_LS_ITER):
    """Strong-Wolfe step along a descent direction.

    Parameters
    ----------
    phi : callable
        ``phi(t) -> (f, dphi, payload)`` where ``dphi`` is the directional
        derivative at ``x + t * dir``.
    f0, d0 : float
        Value and (negative) slope at ``t = 0``.

    Returns
    -------
    t, f, payload
        The accepted step with its value and the payload returned by ``phi``.
    """
    if not d0 < 0:
        raise LineSearchError(f"direction is not a descent direction (slope {d0:.3g})")
    t_prev, f_prev, d_prev = 0.0, f0, d0
    t = t0
    n = 0
    lo = hi = None
    while n < max_iter:
        f, d, payload = phi(t)
        n += 1
        if not math.isfinite(f):
            hi = (t, f, d)
            lo = (t_prev, f_prev, d_prev)
            break
        if f > f0 + c1 * t * d0 or (n > 1 and f >= f_prev):
            lo, hi = (t_prev, f_prev, d_prev), (t, f, d)
            break
        if abs(d) <= -c2 * d0:
            return t, f, payload
        if d >= 0:
            lo, hi = (t, f, d), (t_prev, f_prev, d_prev)
            break
        t_prev, f_prev, d_prev = t, f, d
        t *= 2.0
    else:
        raise LineSearchError(f"no bracket after {max_iter} trial steps")

    while n < max_iter:
        (a, fa, da), (b, fb, db) = lo, hi
        lo_end, hi_end = min(a, b), max(a, b)
        width = hi_end - lo_end
        if width <= 1e-16 * max(1.0, hi_end):
            break
        t = None
        if math.isfinite(fb):
            t = _cubic_min(a, fa, da, b, fb, db)
        if t is None or not (lo_end + 0.1 * width <= t <= hi_end - 0.1 * width):
            t = 0.5 * (a + b)
        f, d, payload = phi(t)
        n += 1
        if not math.isfinite(f) or f > f0 + c1 * t * d0 or f >= fa:
            hi = (t, f, d)
            continue
        if abs(d) <= -c2 * d0:
            return t, f, payload
        if d * (b - a) >= 0:
            hi = lo
        lo = (t, f, d)
    raise LineSearchError(f"strong Wolfe conditions not met within {max_iter} evaluations")


# -- directions ----------------------------------------------------------------


def descent_direction(state: OptimState) -> np.ndarray:
    g = state.g
    if state.method == "sd" or (state.g_prev is None and state.H is None):
        return -g
    if state.method == "pr":
        gp = state.g_prev
        beta = max(0.0, float(g @ (g - gp)) / float(gp @ gp))
        d = -g + beta * state.dir_prev
    elif state.method == "bfgs":
        d = -(state.H @ g) if state.H is not None else -g
    else:
        raise ValueError(f"unknown method {state.method!r}")
    if not float(g @ d) < 0:
        log.info("%s direction is not descent at iteration %d; restarting with -g", state.method, state.iter)
        state.reset_memory()
        d = -g
    return d


def update_memory(state: OptimState, x_new, g_new, step_dir):
    """Fold an accepted step into the method memory (before overwriting ``state.x``)."""
    if state.method == "pr":
        state.g_prev = state.g
        state.dir_prev = step_dir
    elif state.method == "bfgs":
        sk = x_new - state.x
        yk = g_new - state.g
        sy = float(sk @ yk)
        n = sk.size
        if sy <= CURVATURE_EPS:
            log.info("BFGS curvature condition failed (s.y=%.3g); resetting to identity", sy)
            state.H = np.eye(n)
            state.g_prev = state.g
            return
        H = state.H
        if H is None:
            H = (sy / float(yk @ yk)) * np.eye(n)
        rho = 1.0 / sy
        Hy = H @ yk
        # H+ = (I - rho s y^T) H (I - rho y s^T) + rho s s^T, expanded
        H = H - rho * (np.outer(sk, Hy) + np.outer(Hy, sk)) + (rho * rho * float(yk @ Hy) + rho) * np.outer(sk, sk)
        state.H = 0.5 * (H + H.T)
        state.g_prev = state.g


def _initial_step(state: OptimState, d: np.ndarray) -> float:
    slope = float(state.g @ d)
    if state.method == "bfgs" and state.H is not None:
        return 1.0
    if state.f_prev is not None and state.f_prev > state.f:
        return min(1.0, 2.02 * (state.f - state.f_prev) / slope)
    return min(1.0, 1.0 / max(float(np.max(np.abs(d))), 1e-300))


# -- drivers -------------------------------------------------------------------


@dataclass
class DescentResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    payload: object
    n_steps: int
    reason: str


def descend(fun: Callable, x0, method: str, nu: float, max_iter: int = DEFAULT_MAX_ITER,
            start=None, on_step: Callable | None = None) -> DescentResult:
    """Minimise ``fun`` from ``x0`` until the gradient norm is at most ``nu``.

    ``fun(x)`` returns ``(f, g, payload)``.  ``start`` may carry that triple
    for ``x0`` when the caller already has it.  ``on_step(x, f, g, payload)``
    is called after every accepted step.

    Termination reasons: ``"converged"``, ``"max_iter"``, ``"line_search_failed"``.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    x = np.array(x0, dtype=float)
    f, g, payload = start if start is not None else fun(x)
    state = OptimState(x=x, f=f, g=g, method=method)
    steps = 0

    while True:
        if float(np.linalg.norm(state.g)) <= nu:
            return DescentResult(state.x, state.f, state.g, payload, steps, "converged")
        if steps >= max_iter:
            return DescentResult(state.x, state.f, state.g, payload, steps, "max_iter")

        d = descent_direction(state)
        for attempt in range(2):
            slope = float(state.g @ d)
            base = state.x
            dd = d

            def phi(t, base=base, dd=dd):
                fx, gx, pl = fun(base + t * dd)
                return fx, float(gx @ dd), (gx, pl)

            try:
                t, f_new, (g_new, payload_new) = line_search(
                    phi, state.f, slope, _initial_step(state, d), c2=C2[method])
                break
            except LineSearchError as exc:
                if attempt == 1 or method == "sd" or np.array_equal(d, -state.g):
                    log.warning("line search failed at iteration %d: %s", state.iter, exc)
                    return DescentResult(state.x, state.f, state.g, payload, steps, "line_search_failed")
                log.info("line search failed on %s direction; retrying with -g", method)
                state.reset_memory()
                d = -state.g
        x_new = state.x + t * d
        update_memory(state, x_new, g_new, d)
        state.f_prev = state.f
        state.x, state.f, state.g = x_new, f_new, g_new
        payload = payload_new
        steps += 1
        state.iter = steps
        if on_step is not None:
            on_step(state.x, state.f, state.g, payload)


def run_naive(W0: TrigPotential, T: TargetBands, s: int, p: int | None = None, nu: float = 1e-5,
              method: str = "bfgs", max_iter: int = DEFAULT_MAX_ITER, threads: int = 1) -> RunRecord:
    """Descend on the misfit in ``Y_p`` at fixed cutoff ``s``."""
    if p is None:
        p = W0.p
    if W0.p > p:
        raise ValueError(f"initial guess has degree {W0.p} > p={p}")
    W0 = extend(W0, p)
    rec = RunRecord(s=s, p=p)
    t_start = time.perf_counter()

    def fun(x):
        ev = evaluate(TrigPotential.from_vector(x), T, s, p, threads=threads)
        return ev.J, ev.grad, ev

    f0, g0, ev0 = fun(W0.to_vector())
    rec.log_row(0, f0, float(np.linalg.norm(g0)), s, p, 0.0)

    def on_step(x, f, g, ev):
        rec.log_row(len(rec.rows), f, float(np.linalg.norm(g)), s, p, time.perf_counter() - t_start)

    res = descend(fun, W0.to_vector(), method, nu, max_iter=max_iter, start=(f0, g0, ev0), on_step=on_step)
    rec.W = TrigPotential.from_vector(res.x)
    rec.J = res.f
    rec.gnorm = float(np.linalg.norm(res.g))
    rec.n_iter = res.n_steps
    rec.termination = res.reason
    rec.elapsed = time.perf_counter() - t_start
    return rec


def write_convergence_csv(path, rec: RunRecord, with_event: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["iter", "J", "gnorm", "s", "p", "elapsed_s"]
        w.writerow(header + (["event"] if with_event else []))
        for it, J, gn, s, p, el, ev in rec.rows:
            row = [it, f"{J:.17g}", f"{gn:.17g}", s, p, f"{el:.6f}"]
            w.writerow(row + ([ev] if with_event else []))
