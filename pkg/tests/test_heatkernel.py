"""Spectral kernel: exactness, bounds, walk duality."""

import numpy as np
import pytest
import scipy.linalg

from kpzlab.heatkernel import (
    apply_semigroup,
    build_kernel,
    kernel_entry,
    kernel_row,
    mc_crosscheck,
    verify_bounds,
)


def explicit_generator(n, dbar):
    T = np.zeros((n, n))
    for x in range(n):
        T[x, (x + 1) % n] += 0.5 * n * n
        T[x, (x - 1) % n] += 0.5 * n * n - dbar * n
        T[x, x] -= n * n - dbar * n
    return T


def test_eigenvalue_zero_mode():
    for n, dbar in ((2, 0.5), (16, -0.7), (64, 0.0)):
        k = build_kernel(n, dbar)
        assert k.eigenvalues[0] == 0.0
        assert np.all(k.eigenvalues.real <= 1e-12)


def test_symmetric_case_real_eigenvalues():
    k = build_kernel(16, 0.0)
    assert np.max(np.abs(k.eigenvalues.imag)) < 1e-12
    theta = 2 * np.pi * np.arange(16) / 16
    assert np.allclose(k.eigenvalues.real, 16**2 * (np.cos(theta) - 1.0))


def test_two_site_kernel():
    k = build_kernel(2, 0.5)
    # lambda_1 = (1/2) N^2 (2cos(pi) - 2) - dbar N (e^{-i pi} - 1) = -2N^2 + 2 dbar N
    assert k.eigenvalues[1] == pytest.approx(-8.0 + 2.0, abs=1e-12)
    row = kernel_row(k, 0.3)
    mat = np.array([[row[0], row[1]], [row[1], row[0]]])
    assert np.allclose(mat.sum(axis=0), 1.0)
    assert np.allclose(mat.sum(axis=1), 1.0)
    assert np.min(mat) >= 0.0


def test_identity_at_equal_times():
    k = build_kernel(12, 0.3)
    row = kernel_row(k, 0.0)
    assert np.allclose(row, np.eye(12)[0], atol=1e-12)
    assert kernel_entry(k, 0.5, 0.5, 3, 3) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        kernel_entry(k, 1.0, 0.5, 0, 0)


def test_row_sums_and_positivity():
    for n, dbar in ((16, 0.5), (32, -1.2), (128, 0.25)):
        k = build_kernel(n, dbar)
        for dt in np.geomspace(n**-2.0, 1.0, 8):
            row = kernel_row(k, float(dt))
            assert row.sum() == pytest.approx(1.0, abs=1e-12)
            assert row.min() >= -1e-12


def test_matches_matrix_exponential():
    n, dbar, dt = 16, 0.5, 0.01
    k = build_kernel(n, dbar)
    H_exp = scipy.linalg.expm(dt * explicit_generator(n, dbar))
    H_fft = np.array([[kernel_entry(k, 0.0, dt, x, y) for y in range(n)] for x in range(n)])
    assert np.max(np.abs(H_exp - H_fft)) < 1e-10


def test_semigroup_property():
    k = build_kernel(24, 0.4)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(24)
    a = apply_semigroup(k, 0.002, apply_semigroup(k, 0.003, v))
    b = apply_semigroup(k, 0.005, v)
    assert np.max(np.abs(a - b)) < 1e-10
    assert np.allclose(apply_semigroup(k, 0.1, np.ones(24)), 1.0, atol=1e-12)


def test_gradient_commutes_with_semigroup():
    k = build_kernel(24, 0.4)
    rng = np.random.default_rng(1)
    v = rng.standard_normal(24)
    grad = lambda f, l: np.roll(f, -l) - f
    a = grad(apply_semigroup(k, 0.01, v), 3)
    b = apply_semigroup(k, 0.01, grad(v, 3))
    assert np.max(np.abs(a - b)) < 1e-12


def test_verify_bounds_constants():
    for n in (32, 128):
        k = build_kernel(n, 0.5)
        rep = verify_bounds(k, np.geomspace(n**-2.0, 1.0, 12), [1, 2, 4, 8])
        assert rep["on_diagonal"] <= 5.0
        assert rep["row_l1"] <= 1.0 + 1e-12
        assert rep["grad_l1_half"] <= 5.0
        assert rep["grad_l1_one"] <= 5.0


def test_mc_crosscheck_within_3se():
    k = build_kernel(32, 0.5)
    out = mc_crosscheck(k, 0.05, 100000, master_seed=4)
    assert out["tv"] <= 3 * out["mc_se"]


def test_mc_crosscheck_negative_drift():
    k = build_kernel(32, -0.5)
    out = mc_crosscheck(k, 0.05, 100000, master_seed=5)
    assert out["tv"] <= 3 * out["mc_se"]


def test_mc_crosscheck_symmetric():
    k = build_kernel(16, 0.0)
    out = mc_crosscheck(k, 0.03, 50000, master_seed=6)
    assert out["tv"] <= 3 * out["mc_se"]
    with pytest.raises(ValueError):
        mc_crosscheck(k, 0.03, 10)
