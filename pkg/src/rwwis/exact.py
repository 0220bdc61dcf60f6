"""Exact engines: lattice distributions, return matrices, renewal ledger.

Return matrices ``U_k`` (probability of being back at the origin after k
steps, as a state-to-state matrix) are computed either by dynamic
programming on Z^d or spectrally on a discrete torus (Z_m)^d, where

    U_k = m^{-d} sum_{t in grid} Re alpha(t)^k

is exact up to wrap-around mass, which the choice of ``m`` makes negligible.
The new-site probability ``gamma(n)`` of a walk equals the no-return
probability of its time reversal, obtained from the renewal system

    sum_{k=0}^n U_k R_{n-k} = 1,   gamma(n) = <mu, R_n>.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from itertools import product
from math import ceil, log, pi, sqrt
from pathlib import Path

import numpy as np

from .errors import BudgetError, DimensionError, InvariantError
from .model import WalkSpec, moment_set, reversed_walk, stationary_measure
from .spectral import char_matrices, spectral_radii

log_ = logging.getLogger(__name__)

DP_BUDGET = 2e9
AUTO_DP_LIMIT = 5e7
TORUS_MEMORY_POINTS = 2**23
TORUS_TOL = 1e-13
CHUNK = 2**16
BRUTE_BUDGET = 1e8


# ---------------------------------------------------------------------------
# dynamic programming


@dataclass(frozen=True, eq=False)
class OccupationTable:
    """Exact law of ``xi_n`` over the box ``[-n r, n r]^d`` times states.

    ``probs[x_1 + R, ..., x_d + R, k] = P(xi_n = (x, k))`` with ``R = n r``.
    """

    n: int
    radius: int
    probs: np.ndarray
    nu: np.ndarray

    @property
    def dimension(self) -> int:
        return self.probs.ndim - 1

    def at(self, x, k: int | None = None):
        idx = tuple(int(v) + self.radius for v in np.atleast_1d(x))
        return self.probs[idx] if k is None else float(self.probs[idx + (k,)])

    def site_marginal(self) -> np.ndarray:
        return self.probs.sum(axis=-1)

    def state_marginal(self) -> np.ndarray:
        return self.probs.reshape(-1, self.probs.shape[-1]).sum(axis=0)


def _dp_budget(n: int, r: int, d: int, s: int) -> float:
    return float(n) * float(2 * n * r + 1) ** d * s


def _dp_step(spec: WalkSpec, old: np.ndarray, center: int, rad_old: int, rad_new: int) -> np.ndarray:
    """One convolution step on arrays of shape (B, box..., s).

    Mass is read from the cube of radius ``rad_old`` and only the cube of
    radius ``rad_new`` of the result is kept (everything else is zero).
    """
    d = spec.dimension
    new = np.zeros_like(old)
    src = (slice(None),) + tuple(slice(center - rad_old, center + rad_old + 1) for _ in range(d))
    block = old[src]
    for y, A in zip(spec.offsets, spec.matrices):
        if not A.any():
            continue
        dst = (slice(None),) + tuple(slice(center - rad_old + int(v), center + rad_old + 1 + int(v)) for v in y)
        if spec.states == 1:
            new[dst] += block * A[0, 0]
        else:
            new[dst] += block @ A
    if rad_new < rad_old + spec.radius:
        keep = np.zeros_like(new)
        sl = (slice(None),) + tuple(slice(center - rad_new, center + rad_new + 1) for _ in range(d))
        keep[sl] = new[sl]
        new = keep
    return new


def exact_distribution(spec: WalkSpec, n: int, nu=None, budget: float = DP_BUDGET) -> OccupationTable:
    """Exact distribution of ``xi_n`` started at the origin with state law ``nu``.

    Parameters
    ----------
    nu : array-like, optional
        Initial internal-state law; defaults to the stationary law.
    budget : float
        Limit on ``n (2 n r + 1)^d s`` kernel applications.

    Raises
    ------
    BudgetError
        When the convolution exceeds ``budget``.
    """
    d, s, r = spec.dimension, spec.states, spec.radius
    need = _dp_budget(n, r, d, s)
    if need > budget:
        raise BudgetError(f"exact distribution at n={n} exceeds the DP budget {budget:.3g}",
                          required=need, hint="lower n or raise the budget")
    nu = stationary_measure(spec.Q) if nu is None else np.asarray(nu, dtype=float)
    R = n * r
    table = np.zeros((1,) + (2 * R + 1,) * d + (s,))
    table[(0,) + (R,) * d] = nu
    for k in range(1, n + 1):
        table = _dp_step(spec, table, R, (k - 1) * r, k * r)
    return OccupationTable(n=n, radius=R, probs=table[0], nu=nu)


def _return_matrices_dp(spec: WalkSpec, N: int, budget: float) -> np.ndarray:
    d, s, r = spec.dimension, spec.states, spec.radius
    need = _dp_budget(N, r, d, s)
    if need > budget:
        raise BudgetError(f"DP return matrices to N={N} exceed the budget {budget:.3g}",
                          required=need, hint="use method='torus'")
    R = ((N + 1) // 2 + 1) * r
    table = np.zeros((s,) + (2 * R + 1,) * d + (s,))
    origin = (slice(None),) + (R,) * d
    table[origin] = np.eye(s)
    U = np.zeros((N + 1, s, s))
    U[0] = np.eye(s)
    for k in range(1, N + 1):
        # only sites within (N - k) r of the origin can still return by N
        rad_old = min(k - 1, N - k + 1) * r
        rad_new = min(k, N - k) * r
        table = _dp_step(spec, table, R, rad_old, rad_new)
        U[k] = table[origin]
    return U


# ---------------------------------------------------------------------------
# torus spectral method


def _round_up(m: int, h: int) -> int:
    return -(-m // h) * h


def _power_sums(A: np.ndarray, k_lo: int, k_hi: int, out: np.ndarray) -> None:
    """Accumulate ``sum_p A_p^k`` into ``out[k - k_lo]`` for ``k_lo <= k <= k_hi``.

    Uses per-point eigendecomposition with running powers of the eigenvalues;
    points whose eigenvector matrix is ill-conditioned fall back to running
    matrix products.
    """
    s = A.shape[-1]
    if s == 1:
        w = A[:, 0, 0]
        W = w ** k_lo
        for i in range(k_hi - k_lo + 1):
            out[i, 0, 0] += W.sum()
            W *= w
        return
    w, V = np.linalg.eig(A)
    cond = np.linalg.cond(V)
    good = np.isfinite(cond) & (cond < 1e8)
    if good.any():
        Vg, wg = V[good], w[good]
        Vi = np.linalg.inv(Vg)
        W = wg ** k_lo
        for i in range(k_hi - k_lo + 1):
            out[i] += np.einsum("pij,pj,pjl->il", Vg, W, Vi)
            W *= wg
    if (~good).any():
        Ab = A[~good]
        P = np.linalg.matrix_power(Ab, k_lo)
        for i in range(k_hi - k_lo + 1):
            out[i] += P.sum(axis=0)
            P = P @ Ab


def _grid_points(m: int, d: int, idx: np.ndarray) -> np.ndarray:
    """Dual points for flat indices ``idx`` of the full grid ``[0, m)^d``."""
    J = np.stack(np.unravel_index(idx, (m,) * d), axis=-1)
    return 2 * pi * J / m


def _full_grid_sums(spec: WalkSpec, m: int, k_lo: int, k_hi: int) -> np.ndarray:
    d, s = spec.dimension, spec.states
    total = m**d
    out = np.zeros((k_hi - k_lo + 1, s, s), dtype=complex)
    for start in range(0, total, CHUNK):
        idx = np.arange(start, min(total, start + CHUNK))
        _power_sums(char_matrices(spec, _grid_points(m, d, idx)), k_lo, k_hi, out)
    return out / total


def _cube_points(J: int, m: int, d: int) -> np.ndarray:
    ax = np.arange(-J, J + 1)
    grids = np.meshgrid(*[ax] * d, indexing="ij")
    return 2 * pi * np.stack([g.ravel() for g in grids], axis=-1) / m


def _cube_sums(spec: WalkSpec, J: int, m: int, k_lo: int, k_hi: int) -> np.ndarray:
    d, s = spec.dimension, spec.states
    T = _cube_points(J, m, d)
    out = np.zeros((k_hi - k_lo + 1, s, s), dtype=complex)
    for start in range(0, T.shape[0], CHUNK):
        _power_sums(char_matrices(spec, T[start:start + CHUNK]), k_lo, k_hi, out)
    return out / m**d


@dataclass
class TorusPlan:
    """Per-block choices of the torus engine (recorded for diagnostics)."""

    blocks: list = field(default_factory=list)

    def describe(self) -> str:
        return "; ".join(f"k={a}..{b}: m={m} {mode}" for a, b, m, mode in self.blocks)


def _blocks(N: int):
    yield 1, min(1, N)
    lo = 2
    while lo <= N:
        hi = min(2 * lo - 1, N)
        yield lo, hi
        lo = hi + 1


def _return_matrices_torus(spec: WalkSpec, N: int, tol: float = TORUS_TOL,
                           max_points: int = TORUS_MEMORY_POINTS, plan: TorusPlan | None = None) -> np.ndarray:
    d, s, r = spec.dimension, spec.states, spec.radius
    ms = moment_set(spec, with_rho3=False)
    lat = ms.lattice
    h = lat.index
    peaks = lat.peaks()
    sig_max = float(np.max(np.diag(ms.cov)))
    sig_min = float(np.linalg.eigvalsh(ms.cov).min())
    U = np.zeros((N + 1, s, s))
    U[0] = np.eye(s)
    if N == 0:
        return U
    for k_lo, k_hi in _blocks(N):
        m_gauss = 2 * r + 2 * ceil(sqrt(2 * k_hi * sig_max * 55))
        m = _round_up(min(m_gauss, k_hi * r + 1), h)
        a = 1.2 * sqrt(2 * log(10 * s / tol) / (k_lo * sig_min))
        J = ceil(a * m / (2 * pi))
        sums = None
        mode = "full"
        if 2 * J + 1 <= m // h and _outside_window_small(spec, m, J, a, peaks, k_lo, s, tol):
            sums = _cube_sums(spec, J, m, k_lo, k_hi)
            J2 = min(2 * J, (m // h - 1) // 2)
            if J2 > J:
                check = _cube_sums(spec, J2, m, k_lo, k_lo)[0]
                if np.abs(check - sums[0]).max() > tol:
                    sums = None
            if sums is not None:
                mode = f"window J={J}"
                ks = np.arange(k_lo, k_hi + 1)
                acc = np.zeros_like(sums)
                for pk in peaks:
                    D = np.exp(1j * pk.phases)
                    acc += np.exp(1j * ks * pk.theta)[:, None, None] * (D[:, None] * sums / D[None, :])
                sums = acc
        if sums is None:
            if m**d > max_points * 64:
                raise BudgetError(f"torus grid m={m} in d={d} is too large for k up to {k_hi}",
                                  required=float(m**d), hint=f"lower N below {k_lo} or raise the point budget")
            sums = _full_grid_sums(spec, m, k_lo, k_hi)
        if plan is not None:
            plan.blocks.append((k_lo, k_hi, m, mode))
        U[k_lo:k_hi + 1] = sums.real
    return U


def _outside_window_small(spec, m, J, a, peaks, k_lo, s, tol) -> bool:
    """Scan |lambda| outside the windows: the cube shell just outside the
    window around 0, plus a coarse uniform grid with window points removed.
    The largest modulus raised to ``k_lo`` must be below ``tol / (10 s)``."""
    d = spec.dimension
    # shell |j|_inf = J + 1 around the origin
    ax = np.arange(-(J + 1), J + 2)
    pts = []
    for face in range(d):
        for sign in (-1, 1):
            grids = np.meshgrid(*[ax] * (d - 1), indexing="ij") if d > 1 else []
            cols = [g.ravel() for g in grids]
            cols.insert(face, np.full(cols[0].shape if cols else (1,), sign * (J + 1)))
            pts.append(np.stack(cols, axis=-1))
    shell = 2 * pi * np.concatenate(pts) / m
    G = min(m, 48 if d >= 3 else 256)
    coarse = np.stack(np.meshgrid(*[np.linspace(-pi, pi, G, endpoint=False)] * d, indexing="ij"), -1).reshape(-1, d)
    keep = np.ones(coarse.shape[0], dtype=bool)
    for pk in peaks:
        diff = np.abs(((coarse - pk.t0) + pi) % (2 * pi) - pi)
        keep &= diff.max(axis=1) > a
    T = np.concatenate([shell, coarse[keep]])
    rho = 0.0
    for start in range(0, T.shape[0], CHUNK):
        rho = max(rho, float(spectral_radii(spec, T[start:start + CHUNK]).max()))
    return rho ** k_lo * s < tol / 10


# ---------------------------------------------------------------------------
# return matrices with caching


def _resolve_method(spec: WalkSpec, N: int, method: str) -> str:
    if method not in ("dp", "torus", "auto"):
        raise ValueError(f"unknown method {method!r}")
    if method != "auto":
        return method
    need = _dp_budget(N, spec.radius, spec.dimension, spec.states)
    return "dp" if need <= AUTO_DP_LIMIT else "torus"


def return_matrices(spec: WalkSpec, N: int, method: str = "auto", *, tol: float = TORUS_TOL,
                    budget: float = DP_BUDGET, cache_dir: str | Path | None = None,
                    plan: TorusPlan | None = None) -> np.ndarray:
    """``U_0 .. U_N`` with ``(U_k)_{ij} = P(xi_k = (0, j) | xi_0 = (0, i))``.

    Parameters
    ----------
    method : {"dp", "torus", "auto"}
        ``auto`` uses DP when it is cheap and the torus engine otherwise.
    cache_dir : path, optional
        Directory for an ``.npz`` cache keyed by (walk digest, N, method, tol).

    Returns
    -------
    ndarray, shape (N + 1, s, s)
    """
    if N < 0:
        raise ValueError("N must be non-negative")
    method = _resolve_method(spec, N, method)
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"U_{spec.digest()}_N{N}_{method}_tol{tol:.0e}.npz"
        if path.exists():
            log_.info("return-matrix cache hit: %s", path)
            with np.load(path) as z:
                return z["U"]
    if method == "dp":
        U = _return_matrices_dp(spec, N, budget)
    else:
        U = _return_matrices_torus(spec, N, tol=tol, plan=plan)
    if np.any(U < -1e-10) or np.any(U > 1 + 1e-10):
        raise InvariantError("return matrix entries outside [0, 1]")
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(path, U=U)
        log_.info("return-matrix cache written: %s", path)
    return U


# ---------------------------------------------------------------------------
# renewal ledger


@dataclass(frozen=True, eq=False)
class RenewalLedger:
    """Solution of the renewal system for a walk and an initial law.

    Attributes
    ----------
    U : ndarray (N + 1, s, s)
        Return matrices of the REVERSED walk.
    R : ndarray (N + 1, s)
        ``R_n = Q~^n w - sum_{k=1}^n U_k R_{n-k}`` with ``w = nu / mu``; for
        ``nu = mu`` this is the no-return probability vector.
    gamma : ndarray (N + 1,)
        ``gamma(n) = <mu, R_n>``: probability that step n visits a new site.
    E : ndarray (N + 1,)
        Expected range ``E(n) = sum_{k <= n} gamma(k)``.
    residual : ndarray (N + 1,)
        ``max_j |sum_{k=0}^n U_k R_{n-k} - Q~^n w|`` per n.
    """

    N: int
    U: np.ndarray
    R: np.ndarray
    gamma: np.ndarray
    E: np.ndarray
    residual: np.ndarray
    nu: np.ndarray
    mu: np.ndarray
    method: str

    @property
    def max_residual(self) -> float:
        return float(self.residual.max())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        s = self.R.shape[1]
        w.writerow(["n", "gamma_n", "E_n"] + [f"R_{j}" for j in range(s)] + ["residual"])
        for n in range(self.N + 1):
            w.writerow([n, repr(float(self.gamma[n])), repr(float(self.E[n]))]
                       + [repr(float(v)) for v in self.R[n]] + [f"{self.residual[n]:.3e}"])
        return buf.getvalue()


def _convolve_tail(U: np.ndarray, X: np.ndarray, n: int) -> np.ndarray:
    """``sum_{k=1}^n U_k X_{n-k}`` for vectors ``X``."""
    if n == 0:
        return np.zeros(X.shape[1])
    if U.shape[1] == 1:
        return np.array([np.dot(U[1:n + 1, 0, 0], X[n - 1::-1, 0])])
    return np.einsum("kij,kj->i", U[1:n + 1], X[n - 1::-1])


def renewal_solve(spec: WalkSpec, N: int, *, nu=None, U: np.ndarray | None = None,
                  method: str = "auto", cache_dir=None, tol: float = TORUS_TOL,
                  check: bool = True) -> RenewalLedger:
    """Solve the renewal system of the reversed walk up to horizon ``N``.

    Parameters
    ----------
    spec : WalkSpec
        The (primary) walk whose new-site probabilities are wanted.
    nu : array-like, optional
        Initial internal law of the primary walk; defaults to ``mu``.
    U : ndarray, optional
        Precomputed return matrices of the reversed walk.

    Raises
    ------
    InvariantError
        If a component of ``R`` leaves its admissible range by more than
        1e-9, or (for ``nu = mu``) ``R`` or ``gamma`` increases.
    """
    mu = stationary_measure(spec.Q)
    rev = reversed_walk(spec, mu)
    if U is None:
        method = _resolve_method(rev, N, method)
        U = return_matrices(rev, N, method, tol=tol, cache_dir=cache_dir)
    else:
        method = "given"
    U = np.asarray(U)[: N + 1]
    if U.shape[0] < N + 1:
        raise ValueError(f"need {N + 1} return matrices, got {U.shape[0]}")
    s = spec.states
    nu_v = mu.copy() if nu is None else np.asarray(nu, dtype=float)
    if nu_v.shape != (s,) or np.any(nu_v < 0) or abs(nu_v.sum() - 1) > 1e-12:
        raise ValueError("initial law must be a probability vector over the states")
    w = nu_v / mu
    stationary = np.allclose(w, 1.0, atol=1e-14)
    Qr = rev.Q
    R = np.zeros((N + 1, s))
    target = np.zeros((N + 1, s))
    t = w.copy()
    for n in range(N + 1):
        target[n] = t
        t = Qr @ t
    R[0] = target[0]
    hi = float(w.max()) + 1e-9
    for n in range(1, N + 1):
        R[n] = target[n] - _convolve_tail(U, R, n)
        if check:
            if R[n].min() < -1e-9 or R[n].max() > hi:
                raise InvariantError(f"R_{n} = {R[n]} left [0, {hi:.6g}]; inconsistent return matrices")
            if stationary and np.any(R[n] > R[n - 1] + 1e-9):
                raise InvariantError(f"R_{n} increased: {R[n - 1]} -> {R[n]}")
    # independent re-evaluation of the renewal identity
    residual = np.zeros(N + 1)
    for n in range(N + 1):
        tot = np.einsum("kij,kj->ki", U[: n + 1], R[n::-1]).sum(axis=0)
        residual[n] = np.abs(tot - target[n]).max()
    gamma = R @ mu
    gamma[0] = 1.0
    if check and stationary and np.any(np.diff(gamma[1:]) > 1e-9):
        raise InvariantError("gamma(n) is not non-increasing")
    E = np.cumsum(gamma)
    return RenewalLedger(N=N, U=U, R=R, gamma=gamma, E=E, residual=residual, nu=nu_v, mu=mu, method=method)


# ---------------------------------------------------------------------------
# first returns


@dataclass(frozen=True, eq=False)
class FirstReturnTable:
    """Matrix first-return decomposition ``U_n = sum_{k=1}^n F_k U_{n-k}``.

    ``F[k]`` (index 0 unused, zero) holds ``P(first return at k in state j |
    start (0, i))``; ``f_nu[k] = <nu, F_k 1>``.
    """

    N: int
    F: np.ndarray
    f_nu: np.ndarray
    nu: np.ndarray

    def scaled(self, power: float = 1.5) -> np.ndarray:
        n = np.arange(self.N + 1, dtype=float)
        return self.f_nu * n**power


def first_return(spec: WalkSpec, N: int, nu=None, *, U: np.ndarray | None = None,
                 method: str = "auto", cache_dir=None) -> FirstReturnTable:
    """First-return matrices of the PRIMARY walk by inverting the renewal
    convolution ``F_n = U_n - sum_{k=1}^{n-1} F_k U_{n-k}``.

    Raises
    ------
    InvariantError
        If an entry of some ``F_n`` is below -1e-10.
    """
    if U is None:
        U = return_matrices(spec, N, method, cache_dir=cache_dir)
    U = np.asarray(U)[: N + 1]
    s = spec.states
    nu = stationary_measure(spec.Q) if nu is None else np.asarray(nu, dtype=float)
    F = np.zeros((N + 1, s, s))
    for n in range(1, N + 1):
        if n > 1:
            conv = np.einsum("kij,kjl->il", F[1:n], U[n - 1:0:-1])
        else:
            conv = 0.0
        F[n] = U[n] - conv
        if F[n].min() < -1e-10:
            raise InvariantError(f"negative first-return probability at n={n}: {F[n].min():.3g}")
    F = np.maximum(F, 0.0)
    f_nu = np.einsum("i,nij->n", nu, F)
    return FirstReturnTable(N=N, F=F, f_nu=f_nu, nu=nu)


# ---------------------------------------------------------------------------
# brute-force oracle


@dataclass(frozen=True, eq=False)
class RangeLaw:
    """Exact law of the range ``L(n)`` from path enumeration.

    ``law[L]`` is ``P(L(n) = L)``; ``gamma[j]`` and ``E[j]`` are the exact
    new-site probabilities and expected ranges for ``j <= n``.
    """

    n: int
    law: dict
    gamma: np.ndarray
    E: np.ndarray

    @property
    def mean(self) -> float:
        return float(sum(L * p for L, p in self.law.items()))


def brute_force_range(spec: WalkSpec, n: int, nu=None, budget: float = BRUTE_BUDGET) -> RangeLaw:
    """Enumerate every (step, state) path of length ``n``.

    Raises
    ------
    BudgetError
        If the number of path-state pairs exceeds ``budget``.
    """
    s, d = spec.states, spec.dimension
    nu = stationary_measure(spec.Q) if nu is None else np.asarray(nu, dtype=float)
    # outcomes from each state: (offset index, next state, probability)
    outs = [[(a, k, spec.matrices[a, j, k]) for a in range(len(spec.offsets)) for k in range(s)
             if spec.matrices[a, j, k] > 0] for j in range(s)]
    branching = max(len(o) for o in outs)
    if float(branching) ** n * s > budget:
        raise BudgetError(f"brute-force enumeration at n={n} exceeds {budget:.3g} paths",
                          required=float(branching) ** n * s)
    starts = np.flatnonzero(nu > 0)
    state = starts.astype(np.int64)
    prob = nu[starts].astype(float)
    hist = np.zeros((len(starts), n + 1, d), dtype=np.int32)
    count = np.ones(len(starts), dtype=np.int64)
    gamma = np.zeros(n + 1)
    gamma[0] = 1.0
    for t in range(1, n + 1):
        new_state, new_prob, parent, step = [], [], [], []
        for j in range(s):
            idx = np.flatnonzero(state == j)
            for a, k, p in outs[j]:
                parent.append(idx)
                step.append(np.full(idx.size, a))
                new_state.append(np.full(idx.size, k))
                new_prob.append(prob[idx] * p)
        parent = np.concatenate(parent)
        step = np.concatenate(step)
        state = np.concatenate(new_state)
        prob = np.concatenate(new_prob)
        hist = hist[parent]
        hist[:, t] = hist[:, t - 1] + spec.offsets[step]
        count = count[parent]
        fresh = ~np.any(np.all(hist[:, :t] == hist[:, t:t + 1], axis=2), axis=1)
        count = count + fresh
        gamma[t] = float(prob[fresh].sum())
    law: dict[int, float] = {}
    for L in np.unique(count):
        law[int(L)] = float(prob[count == L].sum())
    return RangeLaw(n=n, law=law, gamma=gamma, E=np.cumsum(gamma))


# ---------------------------------------------------------------------------
# transient constant


@dataclass(frozen=True)
class GammaLimit:
    """Estimate of ``gamma_d = lim gamma(n)`` for a transient walk.

    ``estimate`` is ``gamma(N)``; ``error`` the window ``c N^{1 - d/2}`` with
    ``c`` fitted (empirically) from the tail of the sequence; ``fitted_limit``
    the extrapolation ``gamma(N) - c N^{1 - d/2}``.
    """

    N: int
    estimate: float
    error: float
    c_fitted: float
    fitted_limit: float


def gamma_limit(spec: WalkSpec, N: int, ledger: RenewalLedger | None = None, **kw) -> GammaLimit:
    """Transient new-site constant from the renewal ledger.

    Raises
    ------
    DimensionError
        For d < 3, where the walk is recurrent and the constant is zero.
    """
    d = spec.dimension
    if d < 3:
        raise DimensionError(f"gamma_limit requires d >= 3 (got d={d}): the walk is recurrent and gamma_d = 0")
    if ledger is None:
        ledger = renewal_solve(spec, N, **kw)
    g = ledger.gamma[: N + 1]
    if np.any(np.diff(g[1:]) > 1e-12):
        raise InvariantError("gamma(n) sequence is not non-increasing")
    p = 1 - d / 2
    lo = max(2, N // 4)
    n = np.arange(lo, N + 1, dtype=float)
    # least squares for gamma(n) = g_inf + c n^p on the tail
    X = np.stack([np.ones_like(n), n**p], axis=1)
    (g_inf, c), *_ = np.linalg.lstsq(X, g[lo:], rcond=None)
    c = abs(float(c))
    return GammaLimit(N=N, estimate=float(g[N]), error=c * N**p, c_fitted=c,
                      fitted_limit=float(g[N] - c * N**p))


def occupation_marginal_check(table: OccupationTable, spec: WalkSpec) -> float:
    """``max |state marginal - nu Q^n|`` (diagnostic)."""
    Qn = np.linalg.matrix_power(spec.Q, table.n)
    return float(np.abs(table.state_marginal() - table.nu @ Qn).max())


def lattice_sites(radius: int, d: int) -> np.ndarray:
    """All points of ``[-radius, radius]^d`` in C order, shape (P, d)."""
    return np.array(list(product(range(-radius, radius + 1), repeat=d)), dtype=np.int64)
