import csv
from types import SimpleNamespace

import numpy as np
import pytest

from hillinverse.bloch import QGrid, assemble_fiber, band_sweep, eigen_lowest, write_bands_csv
from hillinverse.fourier import MeasurePotential, TrigPotential, trig_to_exp
from hillinverse.oracle import free_band

from conftest import random_trig

COS = TrigPotential([0.0, 1.0], [0.0])


def test_free_fiber_diagonal():
    H = assemble_fiber(TrigPotential.zero(0), 0.3, 2).entries
    np.testing.assert_allclose(np.diag(H).real, [2.89, 0.49, 0.09, 1.69, 5.29], atol=1e-15)
    assert np.count_nonzero(H - np.diag(np.diag(H))) == 0


def test_cos_fiber_matrix():
    H = assemble_fiber(COS, 0.0, 1).entries
    np.testing.assert_array_equal(H, [[1, 0.5, 0], [0.5, 0, 0.5], [0, 0.5, 1]])


def test_comb_fiber_matrix():
    a = 10 / (2 * np.pi)
    H = assemble_fiber(MeasurePotential(10.0), 0.0, 1).entries
    np.testing.assert_allclose(H, np.full((3, 3), a) + np.diag([1, 0, 1]), rtol=0, atol=1e-15)
    H2 = assemble_fiber(MeasurePotential(10.0, shift=-2.0), 0.0, 1).entries
    np.testing.assert_allclose(H2 - H, -2 * np.eye(3), atol=1e-15)


def test_toeplitz_entries_match_coefficients(rng):
    V = random_trig(rng, 3)
    E = trig_to_exp(V)
    s = 5
    H = assemble_fiber(V, 0.1, s).entries
    k = np.arange(-s, s + 1)
    for a, j in enumerate(k):
        for b, l in enumerate(k):
            expected = E[j - l] + ((j + 0.1) ** 2 if j == l else 0)
            assert H[a, b] == pytest.approx(expected, abs=1e-15)


def test_cos_eigenvalues_closed_form():
    w, U = eigen_lowest(assemble_fiber(COS, 0.0, 1), 3)
    r3 = np.sqrt(3)
    np.testing.assert_allclose(w, [(1 - r3) / 2, 1, (1 + r3) / 2], atol=1e-14)
    np.testing.assert_allclose(U @ U.conj().T, np.eye(3), atol=1e-14)


def test_free_lowest_mode():
    w, _ = eigen_lowest(assemble_fiber(TrigPotential.zero(1), 0.3, 4), 1)
    assert w[0] == pytest.approx(0.09, abs=1e-15)


def test_shift_invariance(rng):
    V = random_trig(rng, 2)
    F = assemble_fiber(V, 0.2, 6)
    G = assemble_fiber(TrigPotential(V.c + np.eye(3)[0] * 5, V.d), 0.2, 6)
    np.testing.assert_allclose(eigen_lowest(G, 4)[0], eigen_lowest(F, 4)[0] + 5, atol=1e-12)


def test_M_out_of_range():
    with pytest.raises(ValueError):
        eigen_lowest(assemble_fiber(COS, 0.0, 1), 4)
    with pytest.raises(ValueError):
        band_sweep(COS, QGrid(4), 4, 1)


def test_qgrid_points():
    g = QGrid(25)
    assert g.points[0] == -0.5 and g.points.size == 25
    assert np.all(g.points < 0.5)
    np.testing.assert_allclose(np.diff(g.points), 1 / 25, atol=1e-15)
    with pytest.raises(ValueError):
        QGrid(0)


def test_free_sweep_small_grid():
    sheet = band_sweep(TrigPotential.zero(1), QGrid(4), 1, 3)
    np.testing.assert_allclose(sheet.eps[:, 0], [0.25, 0.0625, 0.0, 0.0625], atol=1e-15)


def test_free_sweep_matches_free_band():
    g = QGrid(25)
    sheet = band_sweep(TrigPotential.zero(1), g, 5, 20)
    expected = np.array([[free_band(q, m) for m in range(1, 6)] for q in g.points])
    assert np.max(np.abs(sheet.eps - expected)) <= 1e-12


def test_sweep_matches_single_fibers_and_reversed_grid(rng):
    V = random_trig(rng, 3)
    g = QGrid(9)
    sheet = band_sweep(V, g, 3, 8)
    for i, q in enumerate(g.points):
        w, _ = eigen_lowest(assemble_fiber(V, q, 8), 3)
        np.testing.assert_array_equal(sheet.eps[i], w)
    rev = SimpleNamespace(Q=9, points=g.points[::-1].copy())
    back = band_sweep(V, rev, 3, 8)
    np.testing.assert_array_equal(back.eps[::-1], sheet.eps)


def test_threads_do_not_change_result(rng):
    V = random_trig(rng, 2)
    a = band_sweep(V, QGrid(25), 3, 10)
    b = band_sweep(V, QGrid(25), 3, 10, threads=3)
    np.testing.assert_array_equal(a.eps, b.eps)
    np.testing.assert_array_equal(a.vecs, b.vecs)


def test_sheet_invariants(rng):
    V = random_trig(rng, 4)
    s = 12
    sheet = band_sweep(V, QGrid(25), 4, s)
    assert np.all(np.diff(sheet.eps, axis=1) >= 0)
    np.testing.assert_allclose(np.linalg.norm(sheet.vecs, axis=2), 1, atol=1e-13)
    for i, q in enumerate(sheet.grid.points):
        H = assemble_fiber(V, q, s).entries
        for m in range(4):
            u = sheet.vecs[i, m]
            assert np.linalg.norm(H @ u - sheet.eps[i, m] * u) <= 1e-10 * max(1, abs(sheet.eps[i, m]))


def test_hermitian_by_construction(rng):
    for seed in range(20):
        V = random_trig(np.random.default_rng(seed), seed % 5)
        H = assemble_fiber(V, rng.uniform(-0.5, 0.5), 7).entries
        assert np.max(np.abs(H - H.conj().T)) == 0
        H = assemble_fiber(MeasurePotential(seed + 0.5), 0.1, 7).entries
        assert np.max(np.abs(H - H.conj().T)) == 0


def test_band_evenness(rng):
    for seed in range(20):
        r = np.random.default_rng(100 + seed)
        V = random_trig(r, 1 + seed % 4)
        q = r.uniform(0, 0.5)
        a, _ = eigen_lowest(assemble_fiber(V, q, 10), 3)
        b, _ = eigen_lowest(assemble_fiber(V, -q, 10), 3)
        assert np.max(np.abs(a - b)) <= 1e-12


def test_galerkin_monotone_in_s():
    for seed in range(20):
        r = np.random.default_rng(200 + seed)
        V = random_trig(r, 1 + seed % 4, scale=3.0)
        q = r.uniform(-0.5, 0.5)
        prev = None
        for s in range(2, 16):
            w, _ = eigen_lowest(assemble_fiber(V, q, s), 3)
            if prev is not None:
                assert np.all(w <= prev + 1e-12)
            prev = w


def test_first_band_increasing_cos():
    g = QGrid(25)
    sheet = band_sweep(COS, g, 3, 20)
    half = g.points >= 0
    assert np.all(np.diff(sheet.eps[half, 0]) > -1e-10)
    # the same on [-1/2, 0] read backwards
    assert np.all(np.diff(sheet.eps[g.points <= 0, 0]) < 1e-10)


def test_first_band_monotone_random_smooth():
    g = QGrid(25)
    for seed in range(20):
        V = random_trig(np.random.default_rng(300 + seed), 2)
        band = band_sweep(V, g, 1, 15).eps[:, 0]
        assert np.all(np.diff(band[g.points >= 0]) > -1e-10)


def test_degenerate_pair_is_mixed():
    # free fiber at q = -1/2: modes k = 0 and k = 1 are degenerate
    _, U = eigen_lowest(assemble_fiber(TrigPotential.zero(1), -0.5, 3), 2)
    np.testing.assert_allclose(np.abs(U[:, 3]), np.sqrt(0.5), atol=1e-14)
    np.testing.assert_allclose(np.abs(U[:, 4]), np.sqrt(0.5), atol=1e-14)
    np.testing.assert_allclose(U @ U.conj().T, np.eye(2), atol=1e-14)


def test_bands_csv(tmp_path):
    g = QGrid(4)
    sheet = band_sweep(COS, g, 2, 5)
    path = tmp_path / "b.csv"
    write_bands_csv(path, g.points, sheet.eps)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["q", "m", "eps"]
    assert len(rows) == 1 + 4 * 2
    for q, m, e in rows[1:]:
        float(q), int(m), float(e)
    assert float(rows[1][2]) == sheet.eps[0, 0]
