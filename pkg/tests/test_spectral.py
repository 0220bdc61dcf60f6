from __future__ import annotations

import dataclasses
from math import pi, sqrt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from rwwis import ConvergenceError, WalkSpec, builtin_walk, moment_set
from rwwis.spectral import (char_matrix, eigen_expansion, llt_density, llt_error_profile, llt_predict,
                            perron_eigenvalue, perturbative_radius, spectral_radii, third_coefficient)

SKEW = WalkSpec.from_kernel({2: [[1 / 3]], -1: [[2 / 3]]}, name="skew")
SKEW_KERNEL = {(2,): np.array([[1 / 3]]), (-1,): np.array([[2 / 3]])}


def test_char_matrix_at_zero_is_Q(walks):
    for spec in walks.values():
        np.testing.assert_array_equal(char_matrix(spec, np.zeros(spec.dimension)).value, spec.Q)
        assert perron_eigenvalue(char_matrix(spec, np.zeros(spec.dimension))) == pytest.approx(1.0, abs=1e-14)


def test_char_matrix_rejects_wrong_shape():
    with pytest.raises(ValueError):
        char_matrix(builtin_walk("ssrw2d"), [0.1])


def test_ssrw_eigenvalue_is_cosine():
    spec = builtin_walk("ssrw1d")
    for t in (0.1, 1.0, 2.5):
        assert perron_eigenvalue(char_matrix(spec, t)).real == pytest.approx(np.cos(t), abs=1e-15)


def test_unit_modulus_on_peak_set(walks):
    """|lambda| = 1 on the peak set, e.g. t = pi for nearest-neighbour walks."""
    for name in ("ssrw1d", "w2-antipersistent"):
        assert spectral_radii(walks[name], [[pi]])[0] == pytest.approx(1.0, abs=1e-12)
    assert spectral_radii(walks["ssrw2d"], [[pi, pi]])[0] == pytest.approx(1.0, abs=1e-12)


def test_gap_failure_raises():
    spec = builtin_walk("w2-antipersistent")
    # at t = pi/2 the two eigenvalues of alpha(t) have equal modulus
    with pytest.raises(ConvergenceError):
        perron_eigenvalue(char_matrix(spec, pi / 2))


def test_perturbative_radius():
    assert perturbative_radius(builtin_walk("ssrw1d")) == pi
    t = perturbative_radius(builtin_walk("w2-antipersistent"))
    assert 0.5 < t < pi / 2


@settings(max_examples=30, deadline=None)
@given(t=st.lists(st.floats(-pi, pi), min_size=2, max_size=2))
def test_spectral_radius_at_most_one(t):
    spec = builtin_walk("ssrw2d")
    assert spectral_radii(spec, [t])[0] <= 1 + 1e-12


@pytest.mark.parametrize("spec, expected", [
    (SKEW, -2.0),  # -kappa_3 of the step law: E X^3 = 8/3 - 2/3 = 2
    (builtin_walk("ssrw1d"), 0.0),
    (builtin_walk("w2-antipersistent"), 0.0),
])
def test_third_coefficient(spec, expected):
    rho3, err = third_coefficient(spec)
    assert rho3 == pytest.approx(expected, abs=1e-7)
    assert err < 1e-5


def test_eigen_expansion_w2():
    ex = eigen_expansion(builtin_walk("w2-antipersistent"))
    assert ex.sigma2_or_cov == pytest.approx(2 / 3, abs=1e-12)
    assert ex.cov_numeric[0, 0] == pytest.approx(2 / 3, abs=1e-8)
    assert abs(ex.r1) < 1e-10
    assert abs(ex.rho3_real) < 1e-6


# ---------------------------------------------------------------------------
# local limit predictions


def test_smooth_density_vs_lattice_prediction():
    """On a parity lattice the smooth density is half the admissible-site value."""
    ms = moment_set(builtin_walk("ssrw1d"))
    n = 100
    x = np.arange(-10, 11)
    pred = llt_predict(x, n, 0, ms)
    dens = llt_density(x, n, 0, ms)
    np.testing.assert_allclose(pred[x % 2 == 0], 2 * dens[x % 2 == 0])
    assert np.all(pred[x % 2 == 1] == 0)
    assert dens[10] == pytest.approx(1 / sqrt(2 * pi * n))


def test_ssrw1d_llt_against_binomial():
    ms = moment_set(builtin_walk("ssrw1d"))
    for n in (64, 256, 1024):
        x = np.arange(-n, n + 1)
        exact = np.array([oracles.binomial_ssrw(n, int(v)) for v in x])
        err = np.abs(exact - llt_predict(x, n, 0, ms)).max()
        assert err * n**1.5 < 0.5


def test_third_order_correction_is_needed():
    """For a skewed step law the corrected LLT error is O(n^{-3/2}); without
    the rho3 term it is only O(n^{-1})."""
    ms = moment_set(SKEW)
    flat = dataclasses.replace(ms, rho3=0.0)
    corr, plain = [], []
    for n in (64, 256):
        P = oracles.dp_distribution_1d(SKEW_KERNEL, n, [1.0])[:, 0]
        x = np.arange(-2 * n, 2 * n + 1)
        corr.append(np.abs(P - llt_predict(x, n, 0, ms)).max() * n**1.5)
        plain.append(np.abs(P - llt_predict(x, n, 0, flat)).max() * n**1.5)
    assert corr[1] / corr[0] < 1.5
    assert plain[1] / plain[0] > 1.7


def test_w2_llt_against_independent_dp():
    spec = builtin_walk("w2-antipersistent")
    ms = moment_set(spec)
    prof = llt_error_profile(spec, ms, [64, 128])
    for n, err_max in zip(prof.column("n"), prof.column("max_abs_err")):
        n = int(n)
        P = oracles.dp_distribution_1d(oracles.W2_KERNEL, n, ms.mu)
        x = np.arange(-n, n + 1)
        ref = max(np.abs(P[:, k] - llt_predict(x, n, k, ms, start=ms.mu)).max() for k in range(2))
        assert err_max == pytest.approx(ref, rel=1e-9)


def test_ssrw2d_llt_tv_decreases():
    spec = builtin_walk("ssrw2d")
    prof = llt_error_profile(spec, moment_set(spec), [16, 32, 64])
    tv = prof.column("tv_times_n_quarter")
    assert tv[-1] < tv[0]
    text = prof.to_csv()
    assert text.splitlines()[0] == "n,max_abs_err,sum_abs_err,max_err_times_n_pow,tv_times_n_quarter"


def test_w2_state_resolved_llt_needs_projector_term():
    """The mu_k-weighted formula alone leaves an O(1/n) error per state for
    W2 (the state remembers the last step direction); adding the linear
    eigenprojection term restores O(n^{-3/2})."""
    spec = builtin_walk("w2-antipersistent")
    ms = moment_set(spec)
    grid = [64, 128, 256, 512]
    literal = llt_error_profile(spec, ms, grid, projector_correction=False).column("max_abs_err")
    fixed = llt_error_profile(spec, ms, grid).column("max_abs_err")
    n = np.array(grid, dtype=float)
    assert np.ptp(literal * n) / np.mean(literal * n) < 0.05  # exactly order 1/n
    assert (literal * n**1.5)[-1] / (literal * n**1.5)[0] > 2.5
    assert np.ptp(fixed * n**1.5) / np.mean(fixed * n**1.5) < 0.05


def test_projector_derivatives_w2():
    from rwwis.spectral import projector_derivatives

    rp, lp = projector_derivatives(moment_set(builtin_walk("w2-antipersistent")))
    np.testing.assert_allclose(rp[:, 0], [-1 / 6, 1 / 6], atol=1e-14)
    np.testing.assert_allclose(lp[0], [5 / 12, -5 / 12], atol=1e-14)
    rp1, lp1 = projector_derivatives(moment_set(builtin_walk("ssrw2d")))
    assert not rp1.any() and not lp1.any()


def test_projector_term_in_two_dimensions():
    """2-D, two states remembering the sign of the last x-step."""
    spec = WalkSpec.from_kernel({(1, 0): [[0.3, 0], [0.45, 0]], (-1, 0): [[0, 0.45], [0, 0.3]],
                                 (0, 1): [[0.125, 0], [0, 0.125]], (0, -1): [[0.125, 0], [0, 0.125]]})
    ms = moment_set(spec)
    grid = [32, 64, 128]
    n = np.array(grid, dtype=float)
    fixed = llt_error_profile(spec, ms, grid).column("max_abs_err") * n**2
    literal = llt_error_profile(spec, ms, grid, projector_correction=False).column("max_abs_err") * n**2
    assert fixed[-1] / fixed[0] < 1.1
    assert literal[-1] / literal[0] > 1.8
