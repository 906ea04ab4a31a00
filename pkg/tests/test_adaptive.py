import numpy as np
import pytest

from hillinverse.adaptive import (
    AdaptiveConfig,
    RefinementError,
    grow_p,
    grow_p_from_gradient,
    in_space,
    new_modes,
    run_adaptive,
)
from hillinverse.bloch import QGrid
from hillinverse.config import generate_target
from hillinverse.estimator import ApostConfig, p_estimator, s_estimator
from hillinverse.fourier import TrigPotential, read_potential
from hillinverse.objective import TargetBands, evaluate
from hillinverse.optim import run_naive

from conftest import DATA, random_trig


def gradient_with(p, mode_values):
    """Degree-2p gradient with cos derivative ``mode_values[k]`` at mode k."""
    g = np.zeros(4 * p + 1)
    for k, v in mode_values.items():
        g[2 * p + k] = v
    return g


def test_grow_p_argmax():
    assert grow_p_from_gradient(gradient_with(3, {5: 0.1, 4: 0.01, 6: 0.05}), 3) == 5
    g = np.zeros(13)
    g[6 - 5] = -0.2  # sin derivative of mode 5
    assert grow_p_from_gradient(g, 3) == 5


def test_grow_p_ties_go_low():
    assert grow_p_from_gradient(gradient_with(2, {3: 1.0, 4: 1.0}), 2) == 3
    assert grow_p_from_gradient(np.ones(17), 4) == 5


def test_grow_p_errors():
    with pytest.raises(RefinementError):
        grow_p_from_gradient(gradient_with(2, {1: 1.0}), 2)
    with pytest.raises(ValueError):
        grow_p_from_gradient(np.ones(5), 2)


def test_subvectors_partition():
    g = np.arange(9.0)
    np.testing.assert_array_equal(in_space(g, 2), [2, 3, 4, 5, 6])
    np.testing.assert_array_equal(new_modes(g, 2), [0, 1, 7, 8])


def test_grow_p_on_problem():
    Vt = TrigPotential([0.1, 0.0, 0.0, 0.8], [0.0, 0.0, 0.3])
    T = TargetBands.from_potential(Vt, QGrid(9), 3, 12)
    W = TrigPotential([0.1, 0.0], [0.0])
    assert grow_p(W, T, 12, 2) in (3, 4)


def test_config_validation():
    with pytest.raises(ValueError):
        AdaptiveConfig(eta=0)
    with pytest.raises(ValueError):
        AdaptiveConfig(s0=300)
    with pytest.raises(ValueError):
        AdaptiveConfig(method="lbfgs")


def test_no_refinement_matches_naive():
    g = QGrid(25)
    T = TargetBands.from_potential(TrigPotential([0.2, 0.4], [-0.3]), g, 3, 10)
    cfg = AdaptiveConfig(s0=10, p0=1, nu=1e-9, apost=ApostConfig(30, 0.01))
    rec = run_adaptive(TrigPotential.zero(1), T, cfg)
    naive = run_naive(TrigPotential.zero(1), T, 10, 1, nu=1e-9)
    assert rec.termination == "converged"
    assert [e[6] for e in rec.events] == [rec.rows[-1][6]] and rec.rows[-1][6].startswith("done")
    assert [r[1] for r in rec.rows[:-1]] == [r[1] for r in naive.rows]
    assert rec.W == naive.W and (rec.s, rec.p) == (10, 1)


@pytest.fixture(scope="module")
def cosine_runs():
    g = QGrid(25)
    T = TargetBands.from_potential(generate_target(1, 42), g, 3, 20)
    naive = run_naive(TrigPotential.zero(1), T, 20, 1)
    cfg = AdaptiveConfig(apost=ApostConfig(60, 0.01))
    return T, cfg, naive, run_adaptive(TrigPotential.zero(1), T, cfg)


def test_cosine_adaptive(cosine_runs):
    T, cfg, naive, rec = cosine_runs
    assert rec.termination == "converged"
    assert 2 <= rec.s <= 6 and 1 <= rec.p <= 4
    assert abs(rec.J - naive.J) <= 1e-8


def test_exit_certificate(cosine_runs):
    T, cfg, _, rec = cosine_runs
    assert np.linalg.norm(evaluate(rec.W, T, rec.s).grad) <= cfg.nu
    assert s_estimator(rec.W, T, rec.s, cfg.apost) <= cfg.eta
    assert p_estimator(rec.W, T, rec.s, new_modes_only=True) <= cfg.eta


def check_run_invariants(rec, nu):
    s = np.array([r[3] for r in rec.rows])
    p = np.array([r[4] for r in rec.rows])
    assert np.all(np.diff(s) >= 0) and np.all(np.diff(p) >= 0)
    assert np.all(p[1:] <= 2 * p[:-1])
    for i, row in enumerate(rec.rows):
        event = row[6]
        if event.startswith(("s->", "p->")):
            # the inner loop converged at the previous (s, p) before refining
            assert rec.rows[i - 1][2] <= nu
            changed = (s[i] != s[i - 1]) + (p[i] != p[i - 1])
            assert changed == 1


def test_refinement_monotone_seeded():
    g = QGrid(9)
    for seed in range(20):
        r = np.random.default_rng(1100 + seed)
        T = TargetBands.from_potential(random_trig(r, 1 + seed % 3), g, 2, 10)
        cfg = AdaptiveConfig(nu=1e-5, eta=1e-6, apost=ApostConfig(20, 0.01), method=("bfgs", "pr")[seed % 2],
                             max_iter=300)
        rec = run_adaptive(TrigPotential.zero(1), T, cfg)
        check_run_invariants(rec, cfg.nu)


def test_p_sequence_degree_four_target():
    Vt = read_potential(DATA / "target_seed42_p4.txt")
    T = TargetBands.from_potential(Vt, QGrid(25), 3, 20)
    cfg = AdaptiveConfig(apost=ApostConfig(40, 0.01), max_iter=20_000)
    rec = run_adaptive(TrigPotential.zero(1), T, cfg)
    ps = [1] + [int(e[6].split()[0][3:]) for e in rec.events if e[6].startswith("p->")]
    assert len(ps) >= 2
    assert all(b > a and b <= 2 * a for a, b in zip(ps, ps[1:]))
    check_run_invariants(rec, cfg.nu)
