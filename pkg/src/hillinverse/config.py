"""Run configuration: flat ``key = value`` files with ``#`` comments.

Keys (defaults in brackets)::

    mode      naive | adaptive | oracle | estimator-validate   [naive]
    method    sd | pr | bfgs                                    [bfgs]
    M, Q                                                        [3, 25]
    s, p      cutoffs of the naive run                          [s_t, p_t]
    s0, p0    initial cutoffs of the adaptive run               [1, 1]
    s_t, p_t  target cutoff and random-target degree            [20, 1]
    nu, eta                                                     [1e-5, 1e-6]
    theta, kappa, s_ref   estimator settings                    [0.01, auto, 250]
    seed                                                        [42]
    target    random | file:<path> | inline:<p=..;k c d;..> | dirac-comb:<lam>[,<shift>] | estimator-test
    initial   zero | file:<path> | inline:<...>   starting potential   [zero]
    lambdas   comma list for the oracle sweep                   [1,10,100,1000]
    thetas    comma list for estimator validation               [0.1,0.5,1]
    s_oracle  cutoff used for comb flatness                     [200]
    max_iter, threads, out_dir
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fourier import MeasurePotential, PotentialFormatError, TrigPotential, parse_potential, read_potential
from .optim import DEFAULT_MAX_ITER, METHODS
from .rng import XorShift64Star

__all__ = [
    "ConfigError",
    "RunConfig",
    "apply_override",
    "generate_target",
    "load_config",
    "parse_config_text",
    "resolve_initial",
    "resolve_target",
]

MODES = ("naive", "adaptive", "oracle", "estimator-validate")


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


def _float_list(text):
    return tuple(float(x) for x in str(text).split(",") if x.strip())


@dataclass
class RunConfig:
    mode: str = "naive"
    method: str = "bfgs"
    M: int = 3
    Q: int = 25
    s: int | None = None
    p: int | None = None
    s0: int = 1
    p0: int = 1
    s_t: int = 20
    p_t: int = 1
    nu: float = 1e-5
    eta: float = 1e-6
    theta: float = 0.01
    kappa: float | None = None
    s_ref: int = 250
    seed: int = 42
    target: str = "random"
    initial: str = "zero"
    lambdas: tuple = (1.0, 10.0, 100.0, 1000.0)
    thetas: tuple = (0.1, 0.5, 1.0)
    s_oracle: int = 200
    max_iter: int = DEFAULT_MAX_ITER
    threads: int = 1
    out_dir: str = "out"

    @property
    def s_naive(self) -> int:
        return self.s if self.s is not None else self.s_t

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lambdas"] = list(self.lambdas)
        d["thetas"] = list(self.thetas)
        return d

    def validate(self) -> "RunConfig":
        def need(cond, key, msg):
            if not cond:
                raise ConfigError(key, msg)

        need(self.mode in MODES, "mode", f"must be one of {MODES}, got {self.mode!r}")
        need(self.method in METHODS, "method", f"must be one of {METHODS}, got {self.method!r}")
        need(self.Q >= 1, "Q", "must be >= 1")
        need(self.M >= 1, "M", "must be >= 1")
        for key in ("s_t", "s0", "p0", "p_t", "s_ref", "s_oracle", "threads", "max_iter"):
            need(getattr(self, key) >= 1, key, "must be >= 1")
        need(self.M <= 2 * min(self.s0, self.s_naive, self.s_t) + 1, "M",
             "must not exceed 2s+1 for the smallest cutoff in use")
        if self.s is not None:
            need(self.s >= 1, "s", "must be >= 1")
        if self.p is not None:
            need(self.p >= 1, "p", "must be >= 1")
        need(self.nu > 0, "nu", "must be positive")
        need(self.eta > 0, "eta", "must be positive")
        need(self.theta > 0, "theta", "must be positive")
        need(self.s_ref > self.s0, "s_ref", "must exceed s0")
        need(all(x > 0 for x in self.thetas), "thetas", "must be positive")
        need(all(x >= 0 for x in self.lambdas), "lambdas", "must be non-negative")
        need(0 <= self.seed < 2**64, "seed", "must be a 64-bit unsigned integer")
        return self


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _convert(key, raw):
    raw = str(raw).strip()
    try:
        if key in ("lambdas", "thetas"):
            return _float_list(raw)
        if key == "kappa":
            return None if raw.lower() in ("", "auto", "none") else float(raw)
        if key in ("s", "p"):
            return None if raw.lower() in ("", "auto", "none") else int(raw)
        if key in ("mode", "method", "target", "initial", "out_dir"):
            return raw.lower() if key in ("mode", "method") else raw
        if isinstance(_FIELDS[key].default, int):
            return int(raw, 0)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(key, f"cannot parse {raw!r}: {exc}") from exc


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = dataclasses.replace(base) if base is not None else RunConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        apply_override(cfg, key, value)
    return cfg


def apply_override(cfg: RunConfig, key: str, value) -> None:
    key = key.replace("-", "_")
    if key not in _FIELDS:
        raise ConfigError(key, "unknown configuration key")
    setattr(cfg, key, _convert(key, value))


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    return parse_config_text(text, base)


def generate_target(p_t: int, seed: int) -> TrigPotential:
    """Random target with coefficients i.i.d. uniform on [-1, 1].

    Draw order is ``c_0`` then ``(c_k, d_k)`` for ``k = 1..p_t`` from
    :class:`~hillinverse.rng.XorShift64Star`.
    """
    if p_t < 1:
        raise ValueError("p_t must be >= 1")
    gen = XorShift64Star(seed)
    c = np.zeros(p_t + 1)
    d = np.zeros(p_t)
    c[0] = gen.uniform(-1.0, 1.0)
    for k in range(1, p_t + 1):
        c[k] = gen.uniform(-1.0, 1.0)
        d[k - 1] = gen.uniform(-1.0, 1.0)
    return TrigPotential(c, d)


def resolve_target(cfg: RunConfig):
    """Target potential named by ``cfg.target``."""
    choice = cfg.target.strip()
    kind, _, arg = choice.partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "random":
            return generate_target(cfg.p_t, cfg.seed)
        if kind == "file":
            return read_potential(arg.strip())
        if kind == "inline":
            return parse_potential(arg)
        if kind == "estimator-test":
            from .estimator import ESTIMATOR_TEST_POTENTIAL

            return ESTIMATOR_TEST_POTENTIAL
        if kind == "dirac-comb":
            vals = _float_list(arg)
            if len(vals) not in (1, 2):
                raise ValueError("expected dirac-comb:<lambda>[,<shift>]")
            return MeasurePotential(*vals)
    except (OSError, PotentialFormatError, ValueError) as exc:
        raise ConfigError("target", str(exc)) from exc
    raise ConfigError("target", f"unknown target kind {kind!r}")


def resolve_initial(cfg: RunConfig, p: int) -> TrigPotential:
    """Starting potential of degree ``p`` (zero unless ``cfg.initial`` names one)."""
    choice = cfg.initial.strip()
    if choice.lower() == "zero":
        return TrigPotential.zero(p)
    kind, _, arg = choice.partition(":")
    try:
        if kind.strip().lower() == "file":
            W = read_potential(arg.strip())
        elif kind.strip().lower() == "inline":
            W = parse_potential(arg)
        else:
            raise ConfigError("initial", f"unknown initial kind {kind!r}")
    except (OSError, PotentialFormatError) as exc:
        raise ConfigError("initial", str(exc)) from exc
    if W.p > p:
        raise ConfigError("initial", f"initial degree {W.p} exceeds p={p}")
    return W
