import importlib

import numpy as np
import pytest

from linbet import _kernels_py, kernels

compiled = pytest.importorskip("linbet._kernels")


def test_backend_reports_compiled_when_built():
    assert kernels.BACKEND == "compiled"


@pytest.mark.parametrize("two_sided", [True, False])
def test_truncated_projection_agrees(two_sided):
    rng = np.random.default_rng(0)
    for _ in range(50):
        d, t = rng.integers(1, 8), rng.integers(1, 300)
        U = rng.normal(size=(d, t))
        y = rng.standard_t(2, size=t)
        thr = float(rng.uniform(0.1, 3.0))
        z_py, n_py = _kernels_py.truncated_projection(U, y, thr, two_sided)
        z_c, n_c = compiled.truncated_projection(U, y, thr, two_sided)
        np.testing.assert_allclose(z_c, z_py, rtol=1e-12, atol=1e-12)
        assert n_c == n_py


def test_truncated_projection_threshold_is_inclusive():
    U = np.array([[1.0, 2.0]])
    y = np.array([1.0, 1.0])
    for fn in (_kernels_py.truncated_projection, compiled.truncated_projection):
        z, n = fn(U, y, 1.0, True)
        assert z[0] == 1.0 and n == 1


def test_one_sided_keeps_large_negatives():
    U = np.array([[1.0]])
    y = np.array([-100.0])
    for fn in (_kernels_py.truncated_projection, compiled.truncated_projection):
        z, n = fn(U, y, 1.0, False)
        assert z[0] == -100.0 and n == 0
        z, n = fn(U, y, 1.0, True)
        assert z[0] == 0.0 and n == 1


def test_lower_median_distances_agree():
    rng = np.random.default_rng(1)
    for k in (1, 2, 3, 4, 7, 50, 373):
        Z = rng.normal(size=(k, 3))
        np.testing.assert_allclose(compiled.lower_median_distances(Z),
                                   _kernels_py.lower_median_distances(Z), rtol=1e-12)


def test_lower_median_distances_brute_force():
    rng = np.random.default_rng(2)
    Z = rng.normal(size=(9, 2))
    expected = []
    for j in range(9):
        dist = sorted(np.linalg.norm(Z[j] - Z[s]) for s in range(9) if s != j)
        expected.append(dist[(len(dist) + 1) // 2 - 1])  # ceil((k-1)/2)-th smallest
    for fn in (_kernels_py.lower_median_distances, compiled.lower_median_distances):
        np.testing.assert_allclose(fn(Z), expected, rtol=1e-12)


def test_identical_rows_give_exact_zero():
    Z = np.tile([0.1, 0.7, 1e8], (3, 1))
    for fn in (_kernels_py.lower_median_distances, compiled.lower_median_distances):
        assert np.all(fn(Z) == 0.0)


def test_pure_python_switch(monkeypatch):
    monkeypatch.setenv("LINBET_PURE_PYTHON", "1")
    try:
        mod = importlib.reload(kernels)
        assert mod.BACKEND == "python"
        assert mod.truncated_projection is _kernels_py.truncated_projection
    finally:
        monkeypatch.delenv("LINBET_PURE_PYTHON")
        importlib.reload(kernels)
    assert kernels.BACKEND == "compiled"
