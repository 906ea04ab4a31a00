"""Coefficient algebra for real 2*pi-periodic potentials.

Two representations are used throughout the package:

* :class:`TrigPotential` -- ``V(x) = c_0 + sum_k c_k cos(kx) + d_k sin(kx)``,
  the real parametrisation the optimisers work in;
* :class:`ExpCoeffs` -- ``V(x) = sum_n v_n exp(inx)``, the form that enters the
  plane-wave Galerkin matrices (entry ``(j, k)`` is ``v_{j-k}``).

:class:`MeasurePotential` covers the Dirac comb ``lam * sum_k delta_{2 pi k}``
plus a constant shift, whose exponential coefficients are all ``lam / (2 pi)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "TrigPotential",
    "ExpCoeffs",
    "MeasurePotential",
    "PotentialFormatError",
    "trig_to_exp",
    "exp_to_trig",
    "evaluate",
    "extend",
    "truncate",
    "format_potential",
    "parse_potential",
    "read_potential",
    "write_potential",
]

HERMITIAN_TOL = 1e-12


class PotentialFormatError(ValueError):
    """Raised for malformed potential text or non-Hermitian coefficients."""


@dataclass(frozen=True)
class TrigPotential:
    """Real trigonometric polynomial of degree ``p``.

    Parameters
    ----------
    c : array_like
        Cosine coefficients ``c_0 .. c_p`` (length ``p + 1``).
    d : array_like
        Sine coefficients ``d_1 .. d_p`` (length ``p``).
    """

    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=float).reshape(-1)
        d = np.array(self.d, dtype=float).reshape(-1)
        if c.size < 1:
            raise ValueError("need at least the constant coefficient c_0")
        if d.size != c.size - 1:
            raise ValueError(f"len(d) must be len(c) - 1, got {d.size} and {c.size}")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(d))):
            raise ValueError("potential coefficients must be finite")
        c.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    @property
    def p(self) -> int:
        return self.c.size - 1

    @classmethod
    def zero(cls, p: int) -> "TrigPotential":
        return cls(np.zeros(p + 1), np.zeros(p))

    @classmethod
    def from_vector(cls, x) -> "TrigPotential":
        """Inverse of :meth:`to_vector`."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.size % 2 != 1:
            raise ValueError("coefficient vector must have odd length 2p+1")
        p = x.size // 2
        return cls(x[p:], x[:p][::-1])

    def to_vector(self) -> np.ndarray:
        """Flatten as ``(d_p, ..., d_1, c_0, c_1, ..., c_p)``.

        This is the ordering of the gradient vectors, so optimisers can add
        directions to potentials coordinate-wise.
        """
        return np.concatenate([self.d[::-1], self.c])

    def __eq__(self, other):
        if not isinstance(other, TrigPotential):
            return NotImplemented
        return np.array_equal(self.c, other.c) and np.array_equal(self.d, other.d)

    def __hash__(self):
        return hash((self.c.tobytes(), self.d.tobytes()))


@dataclass(frozen=True)
class ExpCoeffs:
    """Exponential Fourier coefficients ``v_{-p} .. v_p`` of a real potential."""

    v: np.ndarray

    def __post_init__(self):
        v = np.array(self.v, dtype=complex).reshape(-1)
        if v.size % 2 != 1:
            raise ValueError("coefficient array must have odd length 2p+1")
        v.setflags(write=False)
        object.__setattr__(self, "v", v)

    @property
    def p(self) -> int:
        return self.v.size // 2

    def __getitem__(self, n: int) -> complex:
        if abs(n) > self.p:
            return 0j
        return self.v[n + self.p]

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.v))))
        return bool(np.max(np.abs(self.v - np.conj(self.v[::-1]))) <= tol * scale)


@dataclass(frozen=True)
class MeasurePotential:
    """Dirac comb of amplitude ``lam`` at the lattice sites, plus a constant."""

    lam: float
    shift: float = 0.0

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError(f"comb amplitude must be non-negative, got {self.lam}")

    @property
    def coefficient(self) -> float:
        """Common value ``lam / (2 pi)`` of every exponential coefficient."""
        return self.lam / (2 * math.pi)


def trig_to_exp(V: TrigPotential) -> ExpCoeffs:
    p = V.p
    v = np.zeros(2 * p + 1, dtype=complex)
    v[p] = V.c[0]
    if p:
        pos = 0.5 * (V.c[1:] - 1j * V.d)
        v[p + 1:] = pos
        v[:p] = np.conj(pos[::-1])
    return ExpCoeffs(v)


def exp_to_trig(E: ExpCoeffs) -> TrigPotential:
    if not E.is_hermitian():
        raise PotentialFormatError("exponential coefficients are not Hermitian (v_-n != conj(v_n))")
    p = E.p
    pos = E.v[p + 1:]
    return TrigPotential(np.concatenate([[E.v[p].real], 2 * pos.real]), -2 * pos.imag)


def evaluate(V: TrigPotential, xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    k = np.arange(1, V.p + 1)
    kx = np.multiply.outer(xs, k)
    return V.c[0] + np.cos(kx) @ V.c[1:] + np.sin(kx) @ V.d


def extend(V: TrigPotential, p_new: int) -> TrigPotential:
    if p_new < V.p:
        raise ValueError(f"cannot extend degree {V.p} potential to lower degree {p_new}")
    pad = p_new - V.p
    return TrigPotential(np.pad(V.c, (0, pad)), np.pad(V.d, (0, pad)))


def truncate(V: TrigPotential, p_new: int) -> TrigPotential:
    """Drop all modes above ``p_new``."""
    if p_new > V.p:
        raise ValueError(f"cannot truncate degree {V.p} potential to higher degree {p_new}")
    return TrigPotential(V.c[: p_new + 1], V.d[:p_new])


# -- text format -------------------------------------------------------------
#
#   p=<int>
#   0 c_0
#   k c_k d_k        (k = 1..p)


def format_potential(V: TrigPotential) -> str:
    lines = [f"p={V.p}", f"0 {V.c[0]:.17g}"]
    for k in range(1, V.p + 1):
        lines.append(f"{k} {V.c[k]:.17g} {V.d[k - 1]:.17g}")
    return "\n".join(lines) + "\n"


def parse_potential(text: str) -> TrigPotential:
    rows = [ln.split("#", 1)[0].strip() for ln in text.replace(";", "\n").splitlines()]
    rows = [r for r in rows if r]
    if not rows or not rows[0].replace(" ", "").startswith("p="):
        raise PotentialFormatError("potential text must start with a 'p=<int>' header")
    try:
        p = int(rows[0].replace(" ", "")[2:])
    except ValueError as exc:
        raise PotentialFormatError(f"bad degree header {rows[0]!r}") from exc
    if p < 0:
        raise PotentialFormatError("degree must be non-negative")
    c = np.zeros(p + 1)
    d = np.zeros(p)
    seen = set()
    for row in rows[1:]:
        fields = row.split()
        try:
            k = int(fields[0])
            vals = [float(f) for f in fields[1:]]
        except (ValueError, IndexError) as exc:
            raise PotentialFormatError(f"bad coefficient line {row!r}") from exc
        if not 0 <= k <= p:
            raise PotentialFormatError(f"mode {k} outside 0..{p}")
        if k in seen:
            raise PotentialFormatError(f"mode {k} given twice")
        seen.add(k)
        if k == 0:
            if len(vals) != 1:
                raise PotentialFormatError("mode 0 line takes exactly one value (c_0)")
            c[0] = vals[0]
        else:
            if len(vals) != 2:
                raise PotentialFormatError(f"mode {k} line needs 'k c_k d_k'")
            c[k], d[k - 1] = vals
    try:
        return TrigPotential(c, d)
    except ValueError as exc:
        raise PotentialFormatError(str(exc)) from exc


def read_potential(path) -> TrigPotential:
    return parse_potential(Path(path).read_text())


def write_potential(path, V: TrigPotential) -> None:
    Path(path).write_text(format_potential(V))
