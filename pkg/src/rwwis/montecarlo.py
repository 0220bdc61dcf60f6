"""Monte Carlo estimation of the range L(n) = #{eta_0, ..., eta_n}.

Every trial owns a counter-based Philox stream keyed by the master seed with
the trial index in the counter, so results do not depend on how trials are
split across threads. Trials are processed in fixed chunks whose boundaries
depend only on the plan; chunk summaries are merged in chunk order.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import log

import numpy as np

from .model import WalkSpec, stationary_measure

MAX_STEPS = 10**7
CHUNK_CELLS = 2**22  # trials x (n + 1) entries per chunk
EPSILONS = (0.05, 0.1, 0.2)
QUANTILES = (0.01, 0.25, 0.5, 0.75, 0.99)


@dataclass(frozen=True, eq=False)
class SimPlan:
    """What to simulate.

    Attributes
    ----------
    checkpoints : sequence of int
        Strictly increasing step counts at which L(n) is recorded.
    trials : int
        Number of independent trajectories (>= 2).
    seed : int
        Master seed (unsigned 64-bit).
    initial_law : array-like, optional
        Law of the initial internal state; defaults to the stationary law.
    interval_fast_path : bool
        Opt in to counting L(n) as max - min + 1; only honoured for d = 1
        walks with nearest-neighbour support.
    debug : bool
        Re-check every sampled transition against the kernel.
    """

    spec: WalkSpec
    checkpoints: tuple
    trials: int
    seed: int
    initial_law: np.ndarray | None = None
    max_steps: int = MAX_STEPS
    interval_fast_path: bool = False
    debug: bool = False

    def __post_init__(self):
        cps = tuple(int(c) for c in self.checkpoints)
        object.__setattr__(self, "checkpoints", cps)
        if not cps:
            raise ValueError("at least one checkpoint is required")
        if any(c < 0 for c in cps) or any(b <= a for a, b in zip(cps, cps[1:])):
            raise ValueError(f"checkpoints must be non-negative and strictly increasing: {cps}")
        if cps[-1] > self.max_steps:
            raise ValueError(f"checkpoint {cps[-1]} exceeds the maximum path length {self.max_steps}")
        if int(self.trials) < 2:
            raise ValueError("at least 2 trials are needed for a variance estimate")
        if self.seed is None or not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an explicit unsigned 64-bit integer")
        s = self.spec.states
        law = stationary_measure(self.spec.Q) if self.initial_law is None else np.asarray(self.initial_law, float)
        if law.shape != (s,) or np.any(law < 0) or abs(law.sum() - 1) > 1e-12:
            raise ValueError("initial law must be a probability vector over the states")
        object.__setattr__(self, "initial_law", law)

    @property
    def horizon(self) -> int:
        return self.checkpoints[-1]

    def chunks(self) -> list[tuple[int, int]]:
        """Fixed trial partition, a function of (trials, horizon) only."""
        size = max(1, CHUNK_CELLS // (self.horizon + 1))
        return [(a, min(self.trials, a + size)) for a in range(0, self.trials, size)]


def trial_stream(seed: int, trial: int) -> np.random.Generator:
    """Independent Philox stream for one trial."""
    ctr = np.array([0, 0, 0, trial], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=int(seed), counter=ctr))


class _Sampler:
    """Joint (offset, next state) sampling by inverse CDF per current state."""

    def __init__(self, spec: WalkSpec):
        s, K = spec.states, len(spec.offsets)
        flat = spec.matrices.transpose(1, 0, 2).reshape(s, K * s)  # [j, a*s + k]
        cdf = np.cumsum(flat, axis=1)
        # Exact top from the last outcome with mass on, so u < 1 never falls
        # off the table; zero-mass outcomes share the previous cdf value and
        # are never selected.
        for j in range(s):
            last = np.flatnonzero(flat[j] > 0)[-1]
            cdf[j, last:] = 1.0
        self.cdf = cdf
        self.offset_of = np.repeat(np.arange(K), s)
        self.next_of = np.tile(np.arange(s), K)
        self.offsets = spec.offsets.astype(np.int64)
        self.flat = flat

    def draw(self, state: np.ndarray, u: np.ndarray):
        idx = np.empty(u.shape[0], dtype=np.int64)
        for j in range(self.cdf.shape[0]):
            mask = state == j
            idx[mask] = np.searchsorted(self.cdf[j], u[mask], side="right")
        return self.offset_of[idx], self.next_of[idx]


def _sample_paths(plan: SimPlan, lo: int, hi: int) -> np.ndarray:
    """Positions (T, n + 1, d) of trials ``lo .. hi - 1``."""
    spec, n = plan.spec, plan.horizon
    T = hi - lo
    U = np.empty((T, n + 1))
    for i in range(T):
        U[i] = trial_stream(plan.seed, lo + i).random(n + 1)
    cum0 = np.cumsum(plan.initial_law)
    cum0[-1] = 1.0
    state = (U[:, 0][:, None] >= cum0[None, :]).sum(axis=1)
    sampler = _Sampler(spec)
    if spec.states == 1:
        choice = np.searchsorted(sampler.cdf[0], U[:, 1:], side="right")
    else:
        # outcome each state would produce at each time; the state path then
        # only needs a gather per step
        Ut = np.ascontiguousarray(U[:, 1:].T)
        pre = np.stack([np.searchsorted(sampler.cdf[j], Ut, side="right")
                        for j in range(spec.states)], axis=1)  # (n, s, T)
        rows = np.arange(T)
        choice = np.empty((T, n), dtype=np.int64)
        for t in range(n):
            ch = pre[t][state, rows]
            nxt = sampler.next_of[ch]
            if plan.debug:
                assert np.all(spec.matrices[sampler.offset_of[ch], state, nxt] > 0), "sampled a zero-mass transition"
            choice[:, t] = ch
            state = nxt
    steps = sampler.offsets[sampler.offset_of[choice]]
    pos = np.zeros((T, n + 1, spec.dimension), dtype=np.int64)
    np.cumsum(steps, axis=1, out=pos[:, 1:])
    return pos


def _range_counts(pos: np.ndarray, checkpoints) -> np.ndarray:
    """Distinct-site counts at each checkpoint, (T, m).

    Sites are encoded as integers and tagged with their visit time in the low
    bits; after a row sort the first entry of every run of equal sites is its
    first visit.
    """
    T, n1, d = pos.shape
    # per-axis reductions are far cheaper than one reduce over (0, 1)
    lo = np.array([pos[..., i].min() for i in range(d)], dtype=np.int64)
    span = np.array([pos[..., i].max() for i in range(d)], dtype=np.int64) - lo + 1
    bits = int(n1 - 1).bit_length()
    if float(np.prod(span.astype(float))) * 2.0**bits >= 2**62:
        raise OverflowError("site encoding would overflow; lower the horizon")
    code = np.zeros((T, n1), dtype=np.int64)
    for i in range(d):
        code = code * span[i] + (pos[..., i] - lo[i])
    tagged = (code << bits) | np.arange(n1, dtype=np.int64)[None, :]
    if float(np.prod(span.astype(float))) * 2.0**bits < 2**31:
        tagged = tagged.astype(np.int32)
    tagged.sort(axis=1)
    site = tagged >> bits
    first = np.ones(site.shape, dtype=bool)
    np.not_equal(site[:, 1:], site[:, :-1], out=first[:, 1:])
    times = np.where(first, tagged & ((1 << bits) - 1), n1)
    return np.stack([np.count_nonzero(times <= c, axis=1) for c in checkpoints], axis=1)


def _interval_counts(pos: np.ndarray, checkpoints) -> np.ndarray:
    x = pos[..., 0]
    return (np.maximum.accumulate(x, axis=1) - np.minimum.accumulate(x, axis=1) + 1)[:, list(checkpoints)]


@dataclass
class _Moments:
    """Chan/Welford running count, mean and sum of squared deviations."""

    count: int = 0
    mean: np.ndarray | None = None
    m2: np.ndarray | None = None

    def merge_samples(self, x: np.ndarray) -> None:
        nb = x.shape[0]
        mb = x.mean(axis=0)
        m2b = ((x - mb) ** 2).sum(axis=0)
        if self.count == 0:
            self.count, self.mean, self.m2 = nb, mb, m2b
            return
        na = self.count
        delta = mb - self.mean
        tot = na + nb
        self.mean = self.mean + delta * nb / tot
        self.m2 = self.m2 + m2b + delta**2 * na * nb / tot
        self.count = tot


def _jackknife_se_var(x: np.ndarray) -> np.ndarray:
    """Jackknife standard error of the Bessel-corrected variance, per column."""
    n = x.shape[0]
    if n < 3:
        return np.full(x.shape[1], np.nan)
    dev2 = (x - x.mean(axis=0)) ** 2
    S = dev2.sum(axis=0)
    loo = (S[None, :] - n / (n - 1) * dev2) / (n - 2)
    return np.sqrt((n - 1) / n * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0))


@dataclass(frozen=True, eq=False)
class RangeStats:
    """Range statistics per checkpoint.

    ``samples[i, c]`` is L(checkpoints[c]) in trial i (trial order).
    """

    checkpoints: tuple
    mean: np.ndarray
    var: np.ndarray
    se_mean: np.ndarray
    se_var: np.ndarray
    trials: int
    seed: int
    samples: np.ndarray = field(repr=False)

    def row(self, n: int) -> dict:
        c = self.checkpoints.index(n)
        return {"n": n, "mean": float(self.mean[c]), "var": float(self.var[c]),
                "se_mean": float(self.se_mean[c]), "se_var": float(self.se_var[c])}

    def histogram(self, n: int) -> list[tuple[int, int]]:
        vals, counts = np.unique(self.samples[:, self.checkpoints.index(n)], return_counts=True)
        return [(int(v), int(c)) for v, c in zip(vals, counts)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "mean", "var", "se_mean", "se_var", "trials", "seed"])
        for c, n in enumerate(self.checkpoints):
            w.writerow([n, repr(float(self.mean[c])), repr(float(self.var[c])),
                        repr(float(self.se_mean[c])), repr(float(self.se_var[c])), self.trials, self.seed])
        return buf.getvalue()

    def histogram_csv(self, n: int) -> str:
        return "value,count\n" + "".join(f"{v},{c}\n" for v, c in self.histogram(n))


def _run_chunk(plan: SimPlan, lo: int, hi: int, fast: bool) -> np.ndarray:
    pos = _sample_paths(plan, lo, hi)
    if fast:
        return _interval_counts(pos, plan.checkpoints)
    return _range_counts(pos, plan.checkpoints)


def simulate_range(plan: SimPlan, workers: int = 1) -> RangeStats:
    """Simulate ``plan.trials`` trajectories and summarise L(n) at each checkpoint.

    The output is a deterministic function of the plan; ``workers`` only
    changes wall-clock time.
    """
    spec = plan.spec
    fast = False
    if plan.interval_fast_path:
        nn = spec.dimension == 1 and spec.radius <= 1
        if not nn:
            raise ValueError("interval fast path requires a d=1 walk with steps in {-1, 0, 1}")
        fast = True
    chunks = plan.chunks()
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda c: _run_chunk(plan, c[0], c[1], fast), chunks))
    else:
        parts = [_run_chunk(plan, a, b, fast) for a, b in chunks]
    acc = _Moments()
    for part in parts:  # fixed chunk order
        acc.merge_samples(part.astype(float))
    samples = np.concatenate(parts).astype(np.int64)
    n_cp = np.array(plan.checkpoints)
    if np.any(samples < 1) or np.any(samples > n_cp[None, :] + 1):
        raise AssertionError("range sample outside [1, n + 1]")
    N = acc.count
    var = acc.m2 / (N - 1)
    return RangeStats(checkpoints=plan.checkpoints, mean=acc.mean, var=var,
                      se_mean=np.sqrt(var / N), se_var=_jackknife_se_var(samples.astype(float)),
                      trials=N, seed=int(plan.seed), samples=samples)


def state_occupancy(spec: WalkSpec, n: int, trials: int, seed: int, initial_law=None) -> np.ndarray:
    """Empirical law of the internal state after ``n`` steps."""
    plan = SimPlan(spec, (n,), trials, seed, initial_law)
    s = spec.states
    counts = np.zeros(s)
    sampler = _Sampler(spec)
    cum0 = np.cumsum(plan.initial_law)
    cum0[-1] = 1.0
    for lo, hi in plan.chunks():
        U = np.stack([trial_stream(seed, i).random(n + 1) for i in range(lo, hi)])
        state = (U[:, 0][:, None] >= cum0[None, :]).sum(axis=1)
        for t in range(n):
            _, state = sampler.draw(state, U[:, t + 1])
        counts += np.bincount(state, minlength=s)
    return counts / trials


# ---------------------------------------------------------------------------
# law of large numbers and variance shape


@dataclass(frozen=True)
class LLNProbe:
    """Distribution of L(n) / E(n) across trials.

    ``surrogate`` is True when E(n) came from an independent Monte Carlo
    estimate instead of the exact renewal ledger.
    """

    n: int
    E: float
    surrogate: bool
    quantiles: dict
    exceed: dict
    trials: int

    @property
    def iqr(self) -> float:
        return self.quantiles[0.75] - self.quantiles[0.25]


def lln_probe(spec: WalkSpec, n: int, trials: int, seed: int, E: float | None = None, *,
              workers: int = 1, exact_budget_N: int = 20000, **renewal_kw) -> LLNProbe:
    """Quantiles of L(n)/E(n) and ``P(|L/E - 1| > eps)``.

    ``E`` defaults to the exact renewal value; when ``n`` exceeds
    ``exact_budget_N`` a surrogate from an independent simulation (seed
    ``seed + 1``, 4x trials) is used and flagged.
    """
    surrogate = False
    if E is None:
        if n <= exact_budget_N:
            from .exact import renewal_solve

            E = float(renewal_solve(spec, n, **renewal_kw).E[n])
        else:
            pilot = simulate_range(SimPlan(spec, (n,), 4 * trials, (seed + 1) % 2**64), workers)
            E = float(pilot.mean[0])
            surrogate = True
    if E is None or not np.isfinite(E) or E <= 0:
        raise ValueError("E(n) unavailable")
    st = simulate_range(SimPlan(spec, (n,), trials, seed), workers)
    ratio = st.samples[:, 0] / E
    q = {p: float(np.quantile(ratio, p)) for p in QUANTILES}
    ex = {eps: float(np.mean(np.abs(ratio - 1) > eps)) for eps in EPSILONS}
    return LLNProbe(n=n, E=E, surrogate=surrogate, quantiles=q, exceed=ex, trials=trials)


def variance_normalizer(d: int, n: int) -> float:
    """Scale making the variance bound shape flat: ``log^3 n / (n^2 log log n)``
    for d = 2, ``n^{-(1 + 2/d)}`` for d >= 3 and ``1/n`` for d = 1."""
    if d == 1:
        return 1.0 / n
    if d == 2:
        return log(n) ** 3 / (n**2 * log(log(n)))
    return n ** -(1 + 2 / d)


@dataclass(frozen=True)
class VarianceProfile:
    """Rows ``(n, V_hat, normalized, se_var, rel_se)``."""

    dimension: int
    rows: list

    def normalized(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows])

    def max_growth(self) -> float:
        """Largest ratio ``col[j] / col[i]`` over ``i < j`` (1.0 for one row)."""
        col = self.normalized()
        g = 1.0
        for i in range(len(col)):
            for j in range(i + 1, len(col)):
                g = max(g, col[j] / col[i])
        return float(g)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "var", "normalized", "se_var", "rel_se"])
        for r in self.rows:
            w.writerow([r[0]] + [repr(float(v)) for v in r[1:]])
        return buf.getvalue()


class PrecisionError(ValueError):
    """Too few trials for the requested variance precision."""

    def __init__(self, message: str, required_trials: int):
        super().__init__(f"{message}; about {required_trials} trials required")
        self.required_trials = required_trials


def variance_profile(spec: WalkSpec, n_grid, trials: int, seed: int, *, workers: int = 1,
                     max_rel_se: float = 0.1) -> VarianceProfile:
    """Normalised variance of L(n) along ``n_grid``.

    Raises
    ------
    PrecisionError
        If the jackknife standard error of some variance exceeds
        ``max_rel_se`` of the estimate.
    """
    grid = tuple(sorted(int(n) for n in n_grid))
    st = simulate_range(SimPlan(spec, grid, trials, seed), workers)
    rows = []
    for c, n in enumerate(grid):
        V, se = float(st.var[c]), float(st.se_var[c])
        rel = se / V if V > 0 else 0.0
        if rel > max_rel_se:
            need = int(np.ceil(trials * (rel / max_rel_se) ** 2))
            raise PrecisionError(f"variance at n={n} has relative SE {rel:.3f} > {max_rel_se}", need)
        rows.append((n, V, V * variance_normalizer(spec.dimension, n), se, rel))
    return VarianceProfile(dimension=spec.dimension, rows=rows)
