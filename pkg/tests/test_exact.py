"""Generators, forward equations, Dirichlet forms, resolvents, KV oracle."""

import math

import numpy as np
import pytest
import scipy.optimize

from kpzlab.exact import (
    StateSpace,
    build_generator,
    dirichlet_form,
    entropy_production_check,
    forward_evolve,
    h_minus1_norm,
    kv_exact_oracle,
    local_function_vector,
    resolvent_checks,
    structure_checks,
    symmetric_part,
    _bond_swap_indices,
)
from kpzlab.localfn import constant_fn, site_fn


@pytest.fixture(scope="module")
def hyper7():
    return StateSpace.hyperplane(7, 3)


@pytest.fixture(scope="module")
def gen_free7(hyper7):
    return build_generator(hyper7, 64.0, variant="free")


def test_state_space_bijection(hyper7):
    assert hyper7.size == math.comb(7, 3)
    for i in (0, 5, hyper7.size - 1):
        assert hyper7.state_index(int(hyper7.masks[i])) == i
    assert all(bin(int(m)).count("1") == 3 for m in hyper7.masks)


def test_generator_row_sums_and_positivity(hyper7):
    d = site_fn(-1)
    for variant in ("sym", "free", "full"):
        gen = build_generator(hyper7, 32.0, d=d, variant=variant)
        mat = gen.dense()
        assert np.max(np.abs(mat.sum(axis=1))) < 1e-9
        off = mat - np.diag(np.diag(mat))
        assert off.min() >= 0.0


def test_decomposition_exact(hyper7):
    d = site_fn(-1)
    full = build_generator(hyper7, 32.0, d=d, variant="full").dense()
    parts = sum(
        build_generator(hyper7, 32.0, d=d, variant=v).dense()
        for v in ("sym", "free_asym", "drift_only")
    )
    assert np.max(np.abs(full - parts)) == 0.0


def test_free_equals_full_without_driving(hyper7):
    a = build_generator(hyper7, 32.0, d=constant_fn(0.0), variant="full").dense()
    b = build_generator(hyper7, 32.0, variant="free").dense()
    assert np.max(np.abs(a - b)) == 0.0


def test_sym_variant_symmetric(hyper7):
    mat = build_generator(hyper7, 32.0, variant="sym").dense()
    assert np.max(np.abs(mat - mat.T)) == 0.0


def test_forward_evolve_invariance_and_mass(gen_free7):
    p = forward_evolve(gen_free7, np.ones(gen_free7.space.size), 0.01)
    assert np.max(np.abs(p - 1.0)) < 1e-10
    rng = np.random.default_rng(0)
    p0 = rng.random(gen_free7.space.size) + 0.1
    p0 /= p0.mean()
    pt = forward_evolve(gen_free7, p0, 3e-4)
    assert np.mean(pt) == pytest.approx(1.0, abs=1e-11)
    assert pt.min() > -1e-14


def test_forward_backward_duality(gen_free7):
    """d/dt E[p_t f] = E[p_t L f] via a centered finite difference."""
    rng = np.random.default_rng(1)
    space = gen_free7.space
    p0 = rng.random(space.size) + 0.1
    p0 /= p0.mean()
    f = rng.standard_normal(space.size)
    t, h = 2e-4, 1e-8
    p_minus = forward_evolve(gen_free7, p0, t - h)
    p_plus = forward_evolve(gen_free7, p0, t + h)
    lhs = (np.mean(p_plus * f) - np.mean(p_minus * f)) / (2 * h)
    pt = forward_evolve(gen_free7, p0, t)
    rhs = np.mean(pt * (gen_free7.dense() @ f))
    assert lhs == pytest.approx(rhs, rel=1e-6, abs=1e-8)


def test_dirichlet_form_examples():
    cube = StateSpace.cube(5)
    assert dirichlet_form(np.ones(cube.size), cube) == 0.0
    f = local_function_vector(cube, site_fn(0))
    assert dirichlet_form(f, cube) == pytest.approx(4.0)


def test_per_bond_dirichlet_identity(hyper7):
    rng = np.random.default_rng(2)
    f = rng.standard_normal(hyper7.size)
    for perm in _bond_swap_indices(hyper7):
        lf = f[perm] - f
        assert np.mean(f * lf) == pytest.approx(-0.5 * np.mean(lf * lf), abs=1e-12)


def test_lp_stability_of_forward_density():
    """Densities started at 1 stay L^p-bounded over the KV time-scale."""
    space = StateSpace.hyperplane(7, 3)
    gen = build_generator(space, 64.0, d=site_fn(-1), variant="full")
    t_max = 64.0 ** (-4.0 / 3.0)
    p = np.ones(space.size)
    worst = 0.0
    for _ in range(8):
        p = forward_evolve(gen, p, t_max / 8)
        for q in (2, 4, 8):
            worst = max(worst, float(np.mean(np.abs(p) ** q)))
    assert worst <= 2.0


def test_entropy_production_constant():
    rng = np.random.default_rng(3)
    space = StateSpace.cube(7)
    for N in (32.0, 64.0):
        gen = build_generator(space, N, d=site_fn(-1), variant="full")
        # grid must resolve the N^2-rate relaxation of the Dirichlet form
        grid = np.linspace(0.0, 50.0 / N**2, 251)
        for _ in range(3):
            p0 = rng.random(space.size) + 0.05
            p0 /= p0.mean()
            out = entropy_production_check(gen, p0, grid)
            assert not out["vacuous"]
            assert out["fitted_constant"] <= 10.0
            assert np.all(np.diff(out["integral"]) >= -1e-15)


def test_entropy_production_vacuous_case():
    space = StateSpace.cube(5)
    gen = build_generator(space, 32.0, d=constant_fn(0.0), variant="full")
    out = entropy_production_check(gen, np.ones(space.size), np.linspace(0.0, 0.01, 5))
    assert out["vacuous"]
    assert out["fitted_constant"] == 0.0


def test_h_minus1_matches_numerical_maximization(gen_free7):
    rng = np.random.default_rng(4)
    f = rng.standard_normal(gen_free7.space.size)
    f -= f.mean()
    val = h_minus1_norm(f, gen_free7)
    Q = gen_free7.dense()
    m = len(f)

    def neg_obj(b):
        return -(2 * np.mean(f * b) + np.mean(b * (Q @ b)))

    best = -np.inf
    for trial in range(3):
        x0 = rng.standard_normal(m) * 0.001
        res = scipy.optimize.minimize(neg_obj, x0, method="L-BFGS-B",
                                      options={"maxiter": 20000, "ftol": 1e-18, "gtol": 1e-14})
        best = max(best, -res.fun)
    assert best == pytest.approx(val, rel=1e-6, abs=1e-10)


def test_h_minus1_requires_mean_zero(gen_free7):
    with pytest.raises(ValueError):
        h_minus1_norm(np.ones(gen_free7.space.size), gen_free7)
    assert h_minus1_norm(np.zeros(gen_free7.space.size), gen_free7) == 0.0


def test_resolvent_ratios_and_residual():
    rng = np.random.default_rng(5)
    for L, N in ((5, 32.0), (7, 32.0), (5, 256.0), (7, 256.0)):
        space = StateSpace.hyperplane(L, L // 2)
        gen = build_generator(space, N, variant="free")
        for _ in range(3):
            f = rng.standard_normal(space.size)
            f -= f.mean()
            for lam in (N**2, N ** (4.0 / 3.0), N):
                rep = resolvent_checks(lam, f, gen)
                assert rep["residual"] < 1e-10 * max(1.0, np.max(np.abs(f)))
                assert rep["ratio_l2"] <= 5.0
                assert rep["ratio_dirichlet"] <= 5.0
                assert rep["ratio_sup"] <= 5.0


def test_resolvent_closed_form_for_symmetric_eigenvector():
    space = StateSpace.hyperplane(7, 3)
    gen_sym = build_generator(space, 32.0, variant="sym")
    S = gen_sym.dense()
    evals, evecs = np.linalg.eigh(S)
    # pick a nondegenerate interior eigenvalue
    idx = np.argmin(np.abs(evals - np.median(evals)))
    mu = -evals[idx]
    f = evecs[:, idx]
    lam = 500.0
    rep = resolvent_checks(lam, f, gen_sym)
    assert np.max(np.abs(rep["u"] - f / (lam + mu))) < 1e-10


def test_resolvent_ratios_bounded_as_lambda_grows(gen_free7):
    rng = np.random.default_rng(6)
    f = rng.standard_normal(gen_free7.space.size)
    f -= f.mean()
    prev = None
    for lam in (1e2, 1e4, 1e6, 1e8):
        rep = resolvent_checks(lam, f, gen_free7)
        assert rep["ratio_l2"] <= 5.0 and rep["ratio_dirichlet"] <= 5.0
        prev = rep


def test_structure_checks_small_sizes():
    d = site_fn(-1)
    for L in (5, 7, 9):
        space = StateSpace.hyperplane(L, L // 2)
        checks = structure_checks(space, 32.0, d)
        assert checks["invariance"] < 1e-12 * 32.0**2
        assert checks["antisymmetry"] == 0.0
        assert checks["decomposition"] == 0.0
        assert checks["martingale"] == 0.0
        assert checks["entropy_slack_min"] > -1e-12


def test_kv_oracle_limits(gen_free7):
    rng = np.random.default_rng(7)
    f = rng.standard_normal(gen_free7.space.size)
    f -= f.mean()
    assert kv_exact_oracle(np.zeros_like(f), gen_free7, 0.1)["value"] == pytest.approx(0.0, abs=1e-12)
    t = 1e-9
    out = kv_exact_oracle(f, gen_free7, t)
    assert out["value"] / t**2 == pytest.approx(np.mean(f * f), rel=1e-4)
    # Kipnis-Varadhan bound: E|int_0^t f|^2 <= ~ t ||f||_{H^-1}^2 (constants O(1))
    t2 = 1e-3
    out2 = kv_exact_oracle(f, gen_free7, t2)
    assert out2["bound_ratio"] is not None
    assert out2["bound_ratio"] <= 4.0


def test_symmetric_part_is_sym_generator(hyper7):
    free = build_generator(hyper7, 32.0, variant="free")
    sym = build_generator(hyper7, 32.0, variant="sym")
    assert np.max(np.abs(symmetric_part(free) - sym.dense())) < 1e-9


def test_generator_coo_round_trip(tmp_path):
    from kpzlab.exact import dump_generator_coo, load_generator_coo

    space = StateSpace.hyperplane(5, 2)
    gen = build_generator(space, 32.0, d=site_fn(-1), variant="full")
    path = tmp_path / "gen.coo"
    dump_generator_coo(gen, path)
    mat = load_generator_coo(path)
    assert np.max(np.abs(mat.toarray() - gen.dense())) == 0.0
    assert open(path).readline().startswith("# kpzlab-generator full sites=5")
