import numpy as np
import pytest

from hillinverse.fourier import TrigPotential

DATA = __import__("pathlib").Path(__file__).parent / "data"


def random_trig(rng, p, scale=1.0):
    return TrigPotential(scale * rng.uniform(-1, 1, p + 1), scale * rng.uniform(-1, 1, p))


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


def fd_relative_errors(V, T, s, h=1e-6):
    """Per-entry ``|g - fd| / max(1, |g|)`` against central differences of the cost."""
    from hillinverse.objective import cost, gradient

    g = gradient(V, T, s)
    x = V.to_vector()
    fd = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        fd[i] = (cost(TrigPotential.from_vector(x + e), T, s) - cost(TrigPotential.from_vector(x - e), T, s)) / (2 * h)
    return np.abs(g - fd) / np.maximum(1.0, np.abs(g))


def gradient_instance(seed):
    """Seeded instance for gradient checks: p <= 3, s = 10, M = 2, Q = 9."""
    from hillinverse.bloch import QGrid
    from hillinverse.objective import TargetBands

    r = np.random.default_rng(seed)
    p = 1 + seed % 3
    T = TargetBands.from_potential(random_trig(r, 1 + (seed + 1) % 3), QGrid(9), 2, 10)
    return random_trig(r, p), T


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one pass/fail line for an acceptance criterion."""
    def _report(label, passed, detail):
        line = f"{label}: {'PASS' if passed else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
