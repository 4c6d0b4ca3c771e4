"""Compiled kernels and their pure-python twins must agree."""

import numpy as np
import pytest

from shadowsense._kernels import KERNELS, NUMBA_ACTIVE, PY_KERNELS

RNG = np.random.default_rng(21)


def test_registry_complete():
    assert set(KERNELS) == set(PY_KERNELS)
    assert len(KERNELS) >= 8


def pairs():
    return [(name, KERNELS[name], PY_KERNELS[name]) for name in sorted(KERNELS)]


@pytest.mark.parametrize("name,args", [
    ("ec_orbit", (np.array([1.3]), 0.05, 50, 200)),
    ("cat_orbit", (np.array([1.3, 2.1]), 0.05, 50, 200)),
    ("sol_orbit", (np.array([1.3, 0.1, -0.2]), 0.04, 0.25, 0.3, 50, 200)),
])
def test_orbit_kernels_match_python(name, args):
    res_a = KERNELS[name](*args)
    res_p = PY_KERNELS[name](*args)
    for a, p in zip(res_a, res_p):
        np.testing.assert_allclose(a, p, atol=1e-12, rtol=0)


def test_lin_orbit_matches_python():
    L = np.array([[2.0, 1.5], [0.0, 0.5]])
    X0 = np.array([0.3, -0.2])
    center = np.array([0.0, np.pi])
    u0 = np.array([1.0, 3.0])
    a = KERNELS["lin_orbit"](u0, 0.1, L, X0, center, 30, 150)
    p = PY_KERNELS["lin_orbit"](u0, 0.1, L, X0, center, 30, 150)
    for x, y in zip(a, p):
        np.testing.assert_allclose(x, y, atol=1e-12, rtol=0)


def test_objective_kernels_match_python():
    u0 = np.array([1.3])
    a = KERNELS["ec_obj_mean"](u0, 0.02, 100, 5000)
    p = PY_KERNELS["ec_obj_mean"](u0, 0.02, 100, 5000)
    np.testing.assert_allclose(a, p, atol=1e-12, rtol=0)


def test_qr_pos_properties():
    qr = KERNELS["_qr_pos"]
    for _ in range(30):
        n, m = RNG.integers(1, 7), RNG.integers(1, 7)
        m = min(m, n)
        A = RNG.standard_normal((n, m))
        Q, R = qr(np.asarray(A, dtype=np.float64))
        np.testing.assert_allclose(Q @ R, A, atol=1e-12)
        np.testing.assert_allclose(Q.T @ Q, np.eye(m), atol=1e-12)
        assert np.all(np.diag(R) >= 0)


def test_qr_pos_matches_python_twin():
    A = RNG.standard_normal((6, 3))
    Qa, Ra = KERNELS["_qr_pos"](A)
    Qp, Rp = PY_KERNELS["_qr_pos"](A)
    np.testing.assert_allclose(Qa, Qp, atol=1e-12)
    np.testing.assert_allclose(Ra, Rp, atol=1e-12)


def test_prop_basis_matches_python_twin():
    K, M, m = 80, 3, 2
    jac = RNG.standard_normal((K, M, M)) * 0.8 + np.eye(M) * 1.2
    W0 = np.linalg.qr(RNG.standard_normal((M, m)))[0]
    for renorm in (1, 5):
        out_a = KERNELS["prop_basis"](jac, W0.copy(), renorm)
        out_p = PY_KERNELS["prop_basis"](jac, W0.copy(), renorm)
        for a, p in zip(out_a, out_p):
            np.testing.assert_allclose(a, p, atol=1e-10)


def test_prop_inhom_matches_python_twin():
    K, M = 60, 2
    jac = np.tile(np.array([[1.5, 0.2], [0.0, 0.5]]), (K, 1, 1))
    X = RNG.standard_normal((K + 1, M))
    v0 = np.zeros(M)
    va, sa = KERNELS["prop_inhom"](jac, X, v0)
    vp, sp = PY_KERNELS["prop_inhom"](jac, X, v0)
    assert sa == sp == -1
    np.testing.assert_allclose(va, vp, atol=1e-10)


def test_prop_inhom_flags_overflow():
    K, M = 800, 1
    jac = np.full((K, M, M), 2.0)
    X = np.ones((K + 1, M))
    _, status = KERNELS["prop_inhom"](jac, X, np.ones(M))
    assert status > 0


def test_nilss_sweep_matches_python_twin():
    K, M, m, L = 60, 2, 1, 12
    jac = np.tile(np.array([[2.0, 1.0], [0.0, 0.5]]), (K, 1, 1))
    X = RNG.standard_normal((K + 1, M))
    Q0 = np.linalg.qr(RNG.standard_normal((M, m)))[0]
    seg = np.arange(0, K + 1, L)
    if seg[-1] != K:
        seg = np.append(seg, K)
    out_a = KERNELS["nilss_sweep"](jac, X, Q0.copy(), seg)
    out_p = PY_KERNELS["nilss_sweep"](jac, X, Q0.copy(), seg)
    for a, p in zip(out_a, out_p):
        np.testing.assert_allclose(a, p, atol=1e-10)


def test_numba_flag_reported():
    # informational: the env flag decides which twin is bound
    import os
    flag = os.environ.get("SHADOWSENSE_NO_NUMBA", "")
    disabled = bool(flag) and flag != "0"
    assert NUMBA_ACTIVE == (not disabled)
