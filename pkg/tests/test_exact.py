from __future__ import annotations

import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from rwwis import BudgetError, DimensionError, WalkSpec, builtin_walk, reversed_walk
from rwwis.exact import (TorusPlan, brute_force_range, exact_distribution, first_return, gamma_limit,
                         occupation_marginal_check, renewal_solve, return_matrices)

# ---------------------------------------------------------------------------
# occupation tables


def test_ssrw1d_distribution_is_binomial():
    n = 40
    tab = exact_distribution(builtin_walk("ssrw1d"), n)
    ref = np.array([oracles.binomial_ssrw(n, x) for x in range(-n, n + 1)])
    np.testing.assert_allclose(tab.probs[:, 0], ref, atol=1e-15)


def test_ssrw2d_distribution_rotated_binomials():
    n = 12
    tab = exact_distribution(builtin_walk("ssrw2d"), n)
    for x in range(-n, n + 1):
        for y in range(-n, n + 1):
            assert tab.at((x, y), 0) == pytest.approx(oracles.ssrw2d_prob(n, x, y), abs=1e-15)


def test_w2_distribution_against_naive_dp():
    spec = builtin_walk("w2-antipersistent")
    nu = np.array([1.0, 0.0])
    tab = exact_distribution(spec, 30, nu)
    np.testing.assert_allclose(tab.probs, oracles.dp_distribution_1d(oracles.W2_KERNEL, 30, nu), atol=1e-15)
    assert occupation_marginal_check(tab, spec) < 1e-14


def test_dp_budget():
    with pytest.raises(BudgetError) as err:
        exact_distribution(builtin_walk("ssrw3d"), 2000, budget=1e6)
    assert err.value.required > 1e6


# ---------------------------------------------------------------------------
# return matrices


def test_return_matrices_ssrw1d_binomial():
    U = return_matrices(builtin_walk("ssrw1d"), 200, "dp")
    np.testing.assert_array_equal(U[0], [[1.0]])
    ref = [oracles.ssrw1d_return(n) for n in range(201)]
    np.testing.assert_allclose(U[:, 0, 0], ref, atol=1e-15)


@pytest.mark.parametrize("name, N", [("w2-antipersistent", 600), ("ssrw2d", 200), ("ssrw3d", 60)])
def test_dp_and_torus_agree(name, N):
    spec = builtin_walk(name)
    a = return_matrices(spec, N, "dp")
    b = return_matrices(spec, N, "torus")
    np.testing.assert_allclose(a, b, atol=1e-13, rtol=0)


def test_torus_plan_records_blocks():
    plan = TorusPlan()
    return_matrices(builtin_walk("ssrw2d"), 64, "torus", plan=plan)
    text = plan.describe()
    assert text.startswith("k=1..1")
    assert plan.blocks[-1][1] == 64


def test_return_matrix_cache(tmp_path, caplog):
    spec = builtin_walk("w2-antipersistent")
    a = return_matrices(spec, 300, "torus", cache_dir=tmp_path)
    with caplog.at_level(logging.INFO, logger="rwwis"):
        b = return_matrices(spec, 300, "torus", cache_dir=tmp_path)
    assert any("cache hit" in r.message for r in caplog.records)
    np.testing.assert_array_equal(a, b)


def test_unknown_method():
    with pytest.raises(ValueError):
        return_matrices(builtin_walk("ssrw1d"), 10, "fft")


# ---------------------------------------------------------------------------
# renewal ledger


@pytest.mark.parametrize("name, kernel", [("ssrw1d", oracles.SSRW1_KERNEL), ("w2-antipersistent", oracles.W2_KERNEL)])
def test_ledger_matches_taboo_dp(name, kernel):
    """gamma(n) = P(reversed walk avoids the origin at times 1..n)."""
    led = renewal_solve(builtin_walk(name), 400)
    ref = oracles.taboo_no_return(oracles.reversed_kernel(kernel), 400)
    np.testing.assert_allclose(led.gamma, ref, atol=1e-13)
    assert led.max_residual < 1e-12


def test_ledger_skewed_walk_uses_reversal():
    """For a non-symmetric step law the reversal matters."""
    kernel = {(2,): np.array([[1 / 3]]), (-1,): np.array([[2 / 3]])}
    spec = WalkSpec.from_kernel(kernel)
    led = renewal_solve(spec, 60)
    np.testing.assert_allclose(led.gamma, oracles.taboo_no_return(oracles.reversed_kernel(kernel), 60), atol=1e-13)
    g, E = oracles.brute_force_range(kernel, 8)
    np.testing.assert_allclose(led.gamma[:9], g, atol=1e-13)
    np.testing.assert_allclose(led.E[:9], E, atol=1e-12)


@pytest.mark.parametrize("name, kernel, n", [
    ("ssrw1d", oracles.SSRW1_KERNEL, 10),
    ("w2-antipersistent", oracles.W2_KERNEL, 10),
    ("ssrw2d", oracles.SSRW2_KERNEL, 8),
])
def test_brute_force_range_against_oracle(name, kernel, n):
    law = brute_force_range(builtin_walk(name), n)
    g, E = oracles.brute_force_range(kernel, n)
    np.testing.assert_allclose(law.gamma, g, atol=1e-14)
    np.testing.assert_allclose(law.E, E, atol=1e-12)
    assert sum(law.law.values()) == pytest.approx(1.0, abs=1e-12)
    assert law.mean == pytest.approx(E[-1], abs=1e-12)


def test_brute_force_budget():
    with pytest.raises(BudgetError):
        brute_force_range(builtin_walk("ssrw3d"), 30)


def test_nonstationary_initial_law():
    spec = builtin_walk("w2-antipersistent")
    g, E = oracles.brute_force_range(oracles.W2_KERNEL, 10, nu=[1.0, 0.0])
    led = renewal_solve(spec, 10, nu=[1.0, 0.0])
    np.testing.assert_allclose(led.gamma, g, atol=1e-14)


def test_ledger_csv_header():
    led = renewal_solve(builtin_walk("w2-antipersistent"), 5)
    assert led.to_csv().splitlines()[0] == "n,gamma_n,E_n,R_0,R_1,residual"


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), s=st.integers(1, 3))
def test_random_walk_ledger_properties(seed, s):
    rng = np.random.default_rng(seed)
    raw = rng.random((2, s, s)) + 0.05
    raw[1] = raw[0]  # symmetric step law per state: zero drift
    raw /= raw.sum(axis=(0, 2))[None, :, None]
    kernel = {(1,): raw[0], (-1,): raw[1]}
    spec = WalkSpec.from_kernel(kernel)
    led = renewal_solve(spec, 80)
    assert np.all((led.gamma >= 0) & (led.gamma <= 1))
    assert np.all(np.diff(led.gamma[1:]) <= 1e-12)
    np.testing.assert_allclose(led.gamma, oracles.taboo_no_return(oracles.reversed_kernel(kernel), 80), atol=1e-12)
    assert led.max_residual < 1e-12


# ---------------------------------------------------------------------------
# first returns and transient constant


def test_first_return_catalan():
    tab = first_return(builtin_walk("ssrw1d"), 500)
    ref = [oracles.catalan_first_return(n) for n in range(501)]
    np.testing.assert_allclose(tab.f_nu, ref, atol=1e-15)


def test_w2_first_returns_sum_to_at_most_one():
    tab = first_return(builtin_walk("w2-antipersistent"), 2000)
    assert 0.95 < tab.f_nu.sum() <= 1 + 1e-12
    # F_2 for W2: return in two steps must come from a reversal
    np.testing.assert_allclose(tab.F[2].sum(axis=1), [0.6, 0.6], atol=1e-15)


def test_w2_U2():
    U = return_matrices(reversed_walk(builtin_walk("w2-antipersistent")), 2, "dp")
    np.testing.assert_allclose(U[2], [[0.36, 0.24], [0.24, 0.36]], atol=1e-15)


def test_gamma_limit_dimension_error():
    with pytest.raises(DimensionError):
        gamma_limit(builtin_walk("ssrw2d"), 100)


def test_gamma_limit_3d_small():
    gl = gamma_limit(builtin_walk("ssrw3d"), 256, method="torus")
    assert gl.estimate > oracles.polya_3d_escape()
    assert abs(gl.fitted_limit - oracles.polya_3d_escape()) < abs(gl.estimate - oracles.polya_3d_escape())
