"""Descent with on-the-fly refinement of the band cutoff ``s`` and potential degree ``p``.

Each outer pass runs the fixed-discretisation descent to a stationary point,
then checks two indicators at that point:

* ``S`` -- bound on the misfit error caused by the band cutoff; if above
  ``eta`` the cutoff grows by one;
* otherwise ``P`` -- gradient norm on the modes ``(p, 2p]``; if above
  ``eta`` the degree jumps to the mode in ``(p, 2p]`` with the largest
  derivative.  The in-space part of the gradient is left out of ``P``: it is
  already controlled by ``nu``, which may exceed ``eta``.

The iterate is carried across refinements by zero-padding.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .estimator import ApostConfig, ReferenceCache, delta_report, s_estimator_from
from .fourier import TrigPotential, extend
from .objective import TargetBands, evaluate
from .optim import DEFAULT_MAX_ITER, METHODS, RunRecord, descend

__all__ = ["AdaptiveConfig", "RefinementError", "grow_p", "grow_p_from_gradient", "in_space", "new_modes", "run_adaptive"]

log = logging.getLogger(__name__)


class RefinementError(RuntimeError):
    pass


@dataclass(frozen=True)
class AdaptiveConfig:
    s0: int = 1
    p0: int = 1
    eta: float = 1e-6
    nu: float = 1e-5
    apost: ApostConfig = field(default_factory=ApostConfig)
    method: str = "bfgs"
    max_iter: int = DEFAULT_MAX_ITER
    max_outer: int = 10_000
    threads: int = 1

    def __post_init__(self):
        if not (self.eta > 0 and self.nu > 0):
            raise ValueError("eta and nu must be positive")
        if self.s0 < 1 or self.p0 < 1:
            raise ValueError("s0 and p0 must be >= 1")
        if self.s0 >= self.apost.s_ref:
            raise ValueError(f"s0={self.s0} must stay below s_ref={self.apost.s_ref}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")


def in_space(g2p: np.ndarray, p: int) -> np.ndarray:
    """Sub-vector of a degree-``2p`` gradient belonging to ``Y_p``."""
    return g2p[p: 3 * p + 1]


def new_modes(g2p: np.ndarray, p: int) -> np.ndarray:
    """Sub-vector of a degree-``2p`` gradient on the modes ``(p, 2p]``."""
    return np.concatenate([g2p[:p], g2p[3 * p + 1:]])


def grow_p_from_gradient(g2p: np.ndarray, p: int) -> int:
    """New degree in ``(p, 2p]`` carrying the largest cos/sin derivative.

    Ties go to the smallest degree.
    """
    g2p = np.asarray(g2p)
    if g2p.size != 4 * p + 1:
        raise ValueError(f"expected a degree-{2 * p} gradient of length {4 * p + 1}")
    cand = np.arange(p + 1, 2 * p + 1)
    dc = g2p[2 * p + cand]
    dd = g2p[2 * p - cand]
    score = np.maximum(np.abs(dc), np.abs(dd))
    if not np.any(score > 0):
        raise RefinementError(f"P indicator above threshold but every derivative on ({p}, {2 * p}] vanishes")
    return int(cand[np.argmax(score)])


def grow_p(W: TrigPotential, T: TargetBands, s: int, p: int) -> int:
    ev = evaluate(extend(W, p), T, s, p_out=2 * p)
    return grow_p_from_gradient(ev.grad, p)


def run_adaptive(W0: TrigPotential, T: TargetBands, cfg: AdaptiveConfig) -> RunRecord:
    s, p = cfg.s0, cfg.p0
    if W0.p > p:
        raise ValueError(f"initial guess has degree {W0.p} > p0={p}")
    W = extend(W0, p)
    rec = RunRecord(s=s, p=p)
    cache = ReferenceCache()
    t_start = time.perf_counter()
    steps = 0

    def clock():
        return time.perf_counter() - t_start

    def make_fun(s_, p_):
        def fun(x):
            ev = evaluate(TrigPotential.from_vector(x), T, s_, p_, threads=cfg.threads)
            return ev.J, ev.grad, ev
        return fun

    ev = evaluate(W, T, s, p, threads=cfg.threads)
    rec.log_row(0, ev.J, ev.gnorm, s, p, 0.0)
    reason = "max_outer"
    for _ in range(cfg.max_outer):
        fun = make_fun(s, p)

        def on_step(x, f, g, payload, s_=s, p_=p):
            rec.log_row(len(rec.rows), f, float(np.linalg.norm(g)), s_, p_, clock())

        res = descend(fun, W.to_vector(), cfg.method, cfg.nu, max_iter=cfg.max_iter - steps,
                      start=(ev.J, ev.grad, ev), on_step=on_step)
        steps += res.n_steps
        W = TrigPotential.from_vector(res.x)
        if res.reason != "converged":
            reason = res.reason
            break

        ev2 = evaluate(W, T, s, p_out=2 * p, threads=cfg.threads)
        gnorm = float(np.linalg.norm(in_space(ev2.grad, p)))
        rep = delta_report(W, T.grid, T.M, s, cfg.apost, cache)
        S = s_estimator_from(ev2.residual, rep.delta, T.grid.Q)
        P = float(np.linalg.norm(new_modes(ev2.grad, p)))
        if gnorm <= cfg.nu and S <= cfg.eta and P <= cfg.eta:
            reason = "converged"
            rec.log_row(len(rec.rows), ev2.J, gnorm, s, p, clock(), f"done S={S:.6e} P={P:.6e}")
            break
        if S > cfg.eta:
            if s + 1 >= cfg.apost.s_ref:
                reason = "s_ref_reached"
                break
            s += 1
            event = f"s->{s} S={S:.6e}"
        elif P > cfg.eta:
            p_new = grow_p_from_gradient(ev2.grad, p)
            W = extend(W, p_new)
            event = f"p->{p_new} P={P:.6e}"
            p = p_new
        else:
            event = ""
        log.info("refinement at iteration %d: %s", steps, event)
        ev = evaluate(W, T, s, p, threads=cfg.threads)
        rec.log_row(len(rec.rows), ev.J, ev.gnorm, s, p, clock(), event)

    rec.W = W
    final = evaluate(W, T, s, p, threads=cfg.threads)
    rec.J, rec.gnorm = float(final.J), float(final.gnorm)
    rec.s, rec.p = s, p
    rec.n_iter = steps
    rec.termination = reason
    rec.elapsed = clock()
    return rec
