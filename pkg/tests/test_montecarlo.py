from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from rwwis import builtin_walk
from rwwis.montecarlo import (PrecisionError, SimPlan, _jackknife_se_var, _range_counts, lln_probe,
                              simulate_range, state_occupancy, trial_stream, variance_normalizer,
                              variance_profile)

# ---------------------------------------------------------------------------
# plan validation


@pytest.mark.parametrize("kwargs, fragment", [
    ({"checkpoints": (4, 2)}, "strictly increasing"),
    ({"checkpoints": ()}, "at least one checkpoint"),
    ({"trials": 1}, "at least 2 trials"),
    ({"seed": None}, "explicit unsigned 64-bit"),
    ({"seed": -1}, "explicit unsigned 64-bit"),
    ({"checkpoints": (10**8,)}, "maximum path length"),
    ({"initial_law": [0.5]}, "probability vector"),
])
def test_plan_rejects(kwargs, fragment):
    base = {"spec": builtin_walk("ssrw1d"), "checkpoints": (2, 4), "trials": 10, "seed": 1}
    base.update(kwargs)
    with pytest.raises(ValueError, match=fragment):
        SimPlan(**base)


def test_chunks_depend_only_on_plan():
    plan = SimPlan(builtin_walk("ssrw1d"), (1024,), 10000, 3)
    chunks = plan.chunks()
    assert chunks[0] == (0, 2**22 // 1025) and chunks[-1][1] == 10000
    assert all(a[1] == b[0] for a, b in zip(chunks, chunks[1:]))


def test_trial_streams_are_distinct_and_reproducible():
    a = trial_stream(5, 0).random(4)
    np.testing.assert_array_equal(a, trial_stream(5, 0).random(4))
    assert not np.array_equal(a, trial_stream(5, 1).random(4))
    assert not np.array_equal(a, trial_stream(6, 0).random(4))


# ---------------------------------------------------------------------------
# distinct-site counting


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 3), n=st.integers(1, 60))
def test_range_counts_match_set_counting(seed, d, n):
    rng = np.random.default_rng(seed)
    steps = rng.integers(-2, 3, size=(5, n, d))
    pos = np.zeros((5, n + 1, d), dtype=np.int64)
    np.cumsum(steps, axis=1, out=pos[:, 1:])
    cps = sorted({0, n // 2, n})
    got = _range_counts(pos, cps)
    for i in range(5):
        for c, m in enumerate(cps):
            assert got[i, c] == len({tuple(p) for p in pos[i, : m + 1].tolist()})


def test_interval_fast_path_agrees():
    spec = builtin_walk("ssrw1d")
    a = simulate_range(SimPlan(spec, (10, 100), 500, 9))
    b = simulate_range(SimPlan(spec, (10, 100), 500, 9, interval_fast_path=True))
    np.testing.assert_array_equal(a.samples, b.samples)


def test_interval_fast_path_rejected_in_2d():
    with pytest.raises(ValueError, match="interval fast path"):
        simulate_range(SimPlan(builtin_walk("ssrw2d"), (10,), 10, 1, interval_fast_path=True))


# ---------------------------------------------------------------------------
# statistics


@pytest.mark.parametrize("name, kernel", [
    ("ssrw1d", oracles.SSRW1_KERNEL),
    ("w2-antipersistent", oracles.W2_KERNEL),
    ("ssrw2d", oracles.SSRW2_KERNEL),
])
def test_mean_range_matches_brute_force(name, kernel):
    _, E = oracles.brute_force_range(kernel, 8)
    st_ = simulate_range(SimPlan(builtin_walk(name), (1, 4, 8), 20000, 11, debug=True))
    for c, n in enumerate((1, 4, 8)):
        assert abs(st_.mean[c] - E[n]) <= 4 * st_.se_mean[c] + 1e-12


def test_deterministic_across_workers_and_reruns():
    plan = SimPlan(builtin_walk("w2-antipersistent"), (2, 50, 500), 12000, 2024)
    a = simulate_range(plan, workers=1)
    b = simulate_range(plan, workers=3)
    c = simulate_range(plan, workers=1)
    assert a.to_csv() == b.to_csv() == c.to_csv()
    np.testing.assert_array_equal(a.samples, b.samples)
    d = simulate_range(SimPlan(plan.spec, plan.checkpoints, plan.trials, 2025))
    assert not np.array_equal(a.samples, d.samples)


def test_range_bounds_and_csv():
    st_ = simulate_range(SimPlan(builtin_walk("ssrw3d"), (0, 1, 30), 300, 4))
    assert np.all(st_.samples[:, 0] == 1) and np.all(st_.samples[:, 1] == 2)
    assert np.all(st_.samples[:, 2] <= 31)
    assert st_.to_csv().splitlines()[0] == "n,mean,var,se_mean,se_var,trials,seed"
    assert sum(c for _, c in st_.histogram(30)) == 300


def test_jackknife_matches_explicit_leave_one_out(rng):
    x = rng.normal(size=(40, 2))
    loo = np.array([np.delete(x, i, axis=0).var(axis=0, ddof=1) for i in range(40)])
    ref = np.sqrt(39 / 40 * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0))
    np.testing.assert_allclose(_jackknife_se_var(x), ref, rtol=1e-10)


def test_state_occupancy_tracks_Q_powers():
    spec = builtin_walk("w2-antipersistent")
    occ = state_occupancy(spec, 3, 20000, 1, initial_law=[1.0, 0.0])
    ref = np.array([1.0, 0.0]) @ np.linalg.matrix_power(spec.Q, 3)
    assert np.abs(occ - ref).max() < 4 * np.sqrt(0.25 / 20000)


def test_variance_normalizer():
    assert variance_normalizer(3, 8) == pytest.approx(8 ** (-5 / 3))
    assert variance_normalizer(1, 10) == pytest.approx(0.1)


def test_variance_profile_precision_error():
    with pytest.raises(PrecisionError) as err:
        variance_profile(builtin_walk("ssrw2d"), [16, 32], 20, 1, max_rel_se=0.01)
    assert err.value.required_trials > 20


def test_lln_probe_surrogate_flag():
    probe = lln_probe(builtin_walk("ssrw1d"), 200, 400, 3, exact_budget_N=100)
    assert probe.surrogate
    exact = lln_probe(builtin_walk("ssrw1d"), 200, 400, 3)
    assert not exact.surrogate and exact.iqr > 0
