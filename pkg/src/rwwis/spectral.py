"""Fourier layer: characteristic matrix, Perron eigenvalue, local limit predictors.

``alpha(t) = sum_y exp(i <t, y>) A_y``. Near ``t = 0`` its eigenvalue of
largest modulus is a smooth branch

    lambda(t) = 1 + r1 t - (sigma^2 / 2) t^2 + (r3 / 6) t^3 + O(t^4),

with ``r1 = 0`` for a driftless walk and ``r3 = i * rho3`` purely imaginary
because ``lambda(-t) = conj(lambda(t))``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from itertools import combinations_with_replacement, permutations
from math import pi

import numpy as np

from .errors import ConvergenceError
from .model import MomentSet, WalkSpec, moment_set, solve_poisson

RICHARDSON_STEPS = (1e-2, 5e-3, 2.5e-3)
RICHARDSON_TOL = 1e-5
GAP_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class CharMatrix:
    """Value of the characteristic matrix at a dual point ``t``."""

    t: np.ndarray
    value: np.ndarray


def char_matrices(spec: WalkSpec, T) -> np.ndarray:
    """Batched ``alpha(t)`` for points ``T`` of shape (P, d); returns (P, s, s)."""
    T = np.atleast_2d(np.asarray(T, dtype=float))
    phase = np.exp(1j * (T @ spec.offsets.T.astype(float)))  # (P, K)
    return np.einsum("pa,ajk->pjk", phase, spec.matrices)


def char_matrix(spec: WalkSpec, t) -> CharMatrix:
    """Exact finite sum ``alpha(t) = sum_y exp(i <t, y>) A_y``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t.shape != (spec.dimension,):
        raise ValueError(f"t must have {spec.dimension} components")
    if np.allclose(t, 0.0, atol=0.0):
        return CharMatrix(t=t, value=spec.Q.astype(complex))
    return CharMatrix(t=t, value=char_matrices(spec, t[None, :])[0])


def _ref_vector(s: int) -> np.ndarray:
    return np.ones(s, dtype=complex) / np.sqrt(s)


def perron_eigenvalue(cm: CharMatrix | np.ndarray, ref: np.ndarray | None = None,
                      return_vector: bool = False):
    """Perron branch of ``alpha(t)`` selected by eigenvector continuity.

    Parameters
    ----------
    cm : CharMatrix or (s, s) array
    ref : ndarray, optional
        Right eigenvector tracked from a nearby point; defaults to the Perron
        vector ``1`` of ``Q`` (appropriate for ``t`` near 0).
    return_vector : bool
        Also return the normalised right eigenvector (to continue tracking).

    Raises
    ------
    ConvergenceError
        If the two eigenvalues of largest modulus are within 1e-9 of each
        other, i.e. ``t`` lies outside the perturbative neighbourhood.
    """
    a = cm.value if isinstance(cm, CharMatrix) else np.asarray(cm)
    s = a.shape[0]
    if s == 1:
        lam = complex(a[0, 0])
        return (lam, np.ones(1, dtype=complex)) if return_vector else lam
    w, V = np.linalg.eig(a)
    mods = np.sort(np.abs(w))[::-1]
    if mods[0] - mods[1] < GAP_TOL:
        raise ConvergenceError(f"no modulus gap ({mods[0]:.12g} vs {mods[1]:.12g}); t outside perturbative region")
    if ref is None:
        ref = _ref_vector(s)
    V = V / np.linalg.norm(V, axis=0)
    overlap = np.abs(np.conj(ref) @ V)
    i = int(np.argmax(overlap))
    lam = complex(w[i])
    if return_vector:
        v = V[:, i]
        # fix the phase so that successive vectors are comparable
        v = v * np.exp(-1j * np.angle(np.conj(ref) @ v))
        return lam, v
    return lam


def spectral_radii(spec: WalkSpec, T) -> np.ndarray:
    """Largest eigenvalue modulus of ``alpha(t)`` at each point of ``T``."""
    A = char_matrices(spec, T)
    if spec.states == 1:
        return np.abs(A[:, 0, 0])
    return np.abs(np.linalg.eigvals(A)).max(axis=1)


def perturbative_radius(spec: WalkSpec, gap: float = 0.1, samples: int = 256) -> float:
    """Largest ``t_max`` such that along every coordinate axis and diagonal the
    modulus gap between the two leading eigenvalues stays at least ``gap`` for
    ``|t| <= t_max``. Equals pi for scalar walks."""
    if spec.states == 1:
        return pi
    d = spec.dimension
    dirs = [np.eye(d)[i] for i in range(d)]
    if d > 1:
        dirs.append(np.ones(d) / np.sqrt(d))
    radii = np.linspace(0.0, pi, samples + 1)[1:]
    t_max = pi
    for u in dirs:
        for sign in (1.0, -1.0):
            A = char_matrices(spec, sign * radii[:, None] * u[None, :])
            m = np.sort(np.abs(np.linalg.eigvals(A)), axis=1)[:, ::-1]
            g = m[:, 0] - m[:, 1]
            bad = np.flatnonzero(g < gap)
            if bad.size:
                t_max = min(t_max, float(radii[bad[0] - 1]) if bad[0] > 0 else 0.0)
    return t_max


def _lambda_along(spec: WalkSpec, v: np.ndarray, hs) -> np.ndarray:
    """Perron eigenvalue at the points ``h * v`` (continuity-tracked from 0)."""
    out = []
    for h in hs:
        a = char_matrices(spec, (h * v)[None, :])[0]
        out.append(perron_eigenvalue(a))
    return np.array(out)


def _richardson(g) -> tuple[complex, float]:
    """Two-level Richardson for an O(h^2) sequence at h, h/2, h/4."""
    g1, g2, g3 = g
    a = (4 * g2 - g1) / 3
    b = (4 * g3 - g2) / 3
    c = (16 * b - a) / 15
    return c, float(max(abs(b - a), abs(c - b)))


def directional_derivative(spec: WalkSpec, v, order: int) -> tuple[complex, float]:
    """Richardson-extrapolated ``d^order/ds^order lambda(s v)`` at ``s = 0``.

    Central differences with steps 1e-2, 5e-3, 2.5e-3.

    Returns
    -------
    value, error : complex, float
        Extrapolated derivative and the spread of the last tableau column.
    """
    v = np.asarray(v, dtype=float)
    g = []
    for h in RICHARDSON_STEPS:
        if order == 1:
            lp, lm = _lambda_along(spec, v, [h, -h])
            g.append((lp - lm) / (2 * h))
        elif order == 2:
            lp, lm = _lambda_along(spec, v, [h, -h])
            g.append((lp - 2.0 + lm) / h**2)
        elif order == 3:
            l2, l1, m1, m2 = _lambda_along(spec, v, [2 * h, h, -h, -2 * h])
            g.append((l2 - 2 * l1 + 2 * m1 - m2) / (2 * h**3))
        else:
            raise ValueError("order must be 1, 2 or 3")
    return _richardson(g)


def third_coefficient(spec: WalkSpec):
    """``rho3 = Im lambda'''(0)``: scalar in d = 1, symmetric tensor otherwise.

    Multi-index entries use polarisation of directional third derivatives,
    ``T(x,y,z) = [p(x+y+z) - p(x+y-z) - p(x-y+z) - p(-x+y+z)] / 24``.

    Raises
    ------
    ConvergenceError
        If the extrapolation tableau spreads by more than 1e-5.
    """
    d = spec.dimension
    if d == 1:
        val, err = directional_derivative(spec, np.ones(1), 3)
        if err > RICHARDSON_TOL:
            raise ConvergenceError(f"rho3 extrapolation did not converge (spread {err:.3g})")
        return float(val.imag), err
    E = np.eye(d)
    cache: dict[tuple, tuple[complex, float]] = {}

    def p(v):
        key = tuple(np.round(v, 12))
        if key not in cache:
            cache[key] = directional_derivative(spec, v, 3)
        return cache[key]

    T = np.zeros((d, d, d))
    worst = 0.0
    for i, j, k in combinations_with_replacement(range(d), 3):
        x, y, z = E[i], E[j], E[k]
        terms = [p(x + y + z), p(x + y - z), p(x - y + z), p(-x + y + z)]
        val = (terms[0][0] - terms[1][0] - terms[2][0] - terms[3][0]) / 24
        err = sum(t[1] for t in terms) / 24
        worst = max(worst, err)
        for a, b, c in set(permutations((i, j, k))):
            T[a, b, c] = val.imag
    if worst > RICHARDSON_TOL:
        raise ConvergenceError(f"rho3 extrapolation did not converge (spread {worst:.3g})")
    return T, worst


@dataclass(frozen=True, eq=False)
class EigenExpansion:
    """Taylor data of the Perron eigenvalue at 0.

    Attributes
    ----------
    r1 : complex or ndarray
        Numerical gradient of lambda at 0 (vanishes for driftless walks).
    sigma2_or_cov : float or ndarray
        ``-r2`` from the closed-form moment formula (scalar for d = 1).
    cov_numeric : ndarray
        ``-Hessian`` of lambda at 0 by finite differences (cross-check).
    rho3 : float or ndarray
        Imaginary part of the third coefficient.
    rho3_real : float
        Largest real part seen in the third-derivative estimate (should vanish).
    rho3_error : float
        Richardson error estimate for ``rho3``.
    t_max : float
        Radius of the perturbative neighbourhood (gap >= 0.1 scan).
    """

    r1: complex | np.ndarray
    sigma2_or_cov: float | np.ndarray
    cov_numeric: np.ndarray
    rho3: float | np.ndarray
    rho3_real: float
    rho3_error: float
    t_max: float


def eigen_expansion(spec: WalkSpec, ms: MomentSet | None = None) -> EigenExpansion:
    """Assemble ``r1``, ``-r2`` and ``rho3`` for a validated walk."""
    if ms is None:
        ms = moment_set(spec)
    d = spec.dimension
    E = np.eye(d)
    r1 = np.array([directional_derivative(spec, E[i], 1)[0] for i in range(d)])
    q = {}
    for i in range(d):
        for j in range(i, d):
            if i == j:
                q[i, j] = -directional_derivative(spec, E[i], 2)[0].real
            else:
                plus = directional_derivative(spec, E[i] + E[j], 2)[0].real
                minus = directional_derivative(spec, E[i] - E[j], 2)[0].real
                q[i, j] = -(plus - minus) / 4
    H = np.zeros((d, d))
    for (i, j), v in q.items():
        H[i, j] = H[j, i] = v
    if d == 1:
        val, _ = directional_derivative(spec, np.ones(1), 3)
        re = abs(val.real)
    else:
        re = 0.0
    return EigenExpansion(
        r1=complex(r1[0]) if d == 1 else r1,
        sigma2_or_cov=float(ms.cov[0, 0]) if d == 1 else ms.cov.copy(),
        cov_numeric=H,
        rho3=ms.rho3,
        rho3_real=float(re),
        rho3_error=ms.rho3_error,
        t_max=perturbative_radius(spec),
    )


# ---------------------------------------------------------------------------
# local limit predictors


def gaussian_density(u, cov: np.ndarray) -> np.ndarray:
    """Centred Gaussian density ``g_sigma(u)`` on R^d, ``u`` of shape (..., d)."""
    u = np.asarray(u, dtype=float)
    d = cov.shape[0]
    P = np.linalg.inv(cov)
    quad = np.einsum("...i,ij,...j->...", u, P, u)
    return np.exp(-0.5 * quad) / ((2 * pi) ** (d / 2) * np.sqrt(np.linalg.det(cov)))


def _as_points(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    return x


def llt_density(x, n: int, k: int, ms: MomentSet) -> np.ndarray:
    """Smooth local limit approximation to ``P(xi_n = (x, k))``.

    d = 1 (with third-order correction)::

        mu_k / (sigma sqrt(2 pi n)) exp(-x^2 / (2 n sigma^2))
            * [1 + (rho3 / 6) x (3 sigma^2 n - x^2) / (sigma^6 n^2)]

    d >= 2: ``n^{-d/2} mu_k g_sigma(x / sqrt(n))``.

    The raw value is returned; the correction may make it slightly negative
    in the tails. This is the density per lattice site averaged over the
    cosets of a periodic walk; see :func:`llt_predict` for the lattice-aware
    version.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    d = ms.dimension
    if d == 1:
        x = np.asarray(x, dtype=float)
        s2 = ms.sigma2
        base = ms.mu[k] / np.sqrt(2 * pi * n * s2) * np.exp(-x**2 / (2 * n * s2))
        corr = 1.0 + (ms.rho3 / 6.0) * x * (3 * s2 * n - x**2) / (s2**3 * n**2)
        return base * corr
    u = _as_points(x, d) / np.sqrt(n)
    return n ** (-d / 2) * ms.mu[k] * gaussian_density(u, ms.cov)


def projector_derivatives(ms: MomentSet) -> tuple[np.ndarray, np.ndarray]:
    """First-order terms of the Perron eigenprojection at ``t = 0``.

    With ``alpha(t) ~ lambda(t) r(t) l(t)^T``, ``r(0) = 1`` and ``l(0) = mu``,
    returns real arrays ``rp`` (s, d) and ``lp`` (d, s) such that
    ``dr/dt_l = i rp[:, l]`` and ``dl/dt_l = i lp[l]``:
    ``(I - Q) rp_l = M_l 1`` with ``<mu, rp_l> = 0`` and
    ``lp_l (I - Q) = mu M_l`` with ``<lp_l, 1> = 0``. Both vanish for s = 1.
    """
    d, s = ms.dimension, ms.mu.shape[0]
    one = np.ones(s)
    rp = np.stack([solve_poisson(ms.Q, ms.mu, -(ms.M[l] @ one)) for l in range(d)], axis=1)
    lp = np.stack([solve_poisson(ms.Q.T, one, -(ms.mu @ ms.M[l])) for l in range(d)])
    return rp, lp


def llt_predict(x, n: int, k: int, ms: MomentSet, start=None, *, projector_correction: bool = True) -> np.ndarray:
    """Lattice-aware local limit prediction of ``P(xi_n = (x, k) | xi_0 = (0, start))``.

    The smooth density of :func:`llt_density` is multiplied by ``h`` on the
    sites reachable at time ``n`` and by 0 elsewhere, where ``h`` is the
    index of the walk's cycle lattice (``h = 2`` for nearest-neighbour walks
    with parity). For aperiodic lattices ``h = 1``.

    For s > 1 the state-resolved probabilities carry an O(n^{-(d+1)/2}) term
    from the linear part of the eigenprojection,
    ``n^{-d/2} g_sigma(x / sqrt n) <b_{jk}, sigma^{-1} x> / n`` with
    ``b_{jk} = rp[j] mu_k + lp[:, k]`` (see :func:`projector_derivatives`).
    It is included unless ``projector_correction`` is False. Without it the
    state-resolved error is O(n^{-(d+1)/2}) (O(1/n) in d = 1, e.g. for W2);
    with it, and the rho3 term of the d = 1 density, it is O(n^{-3/2}) in
    d = 1. The term vanishes for s = 1 and sums to zero over k when the
    initial law is ``mu``.

    Parameters
    ----------
    start : int or array-like, optional
        Initial internal state, or a law over states; defaults to ``mu``.
    """
    dens = llt_density(x, n, k, ms)
    lat = ms.lattice
    d = ms.dimension
    s = ms.mu.shape[0]
    if start is None:
        law = ms.mu
    elif np.ndim(start) == 0:
        law = np.eye(s)[int(start)]
    else:
        law = np.asarray(start, dtype=float)
    pts = _as_points(x, d)
    if projector_correction and s > 1:
        rp, lp = projector_derivatives(ms)
        u = np.linalg.solve(ms.cov, pts.reshape(-1, d).T).T.reshape(pts.shape) / n
        g = n ** (-d / 2) * gaussian_density(pts / np.sqrt(n), ms.cov)
        lin_k = g * (u @ lp[:, k])          # from dl/dt
        lin_r = [g * ms.mu[k] * (u @ rp[j]) for j in range(s)]  # from dr/dt, per start state
    else:
        lin_k = 0.0
        lin_r = [0.0] * s
    if lat.index == 1:
        return dens + lin_k + sum(law[j] * lin_r[j] for j in range(s))
    ipts = np.rint(pts).astype(np.int64)
    out = np.zeros(ipts.shape[:-1])
    for j in np.flatnonzero(law > 0):
        out = out + law[j] * lat.admissible(ipts, n, int(j), k) * (dens + lin_k + lin_r[j])
    return lat.index * out


def llt_error_profile(spec: WalkSpec, ms: MomentSet, n_grid, nu=None, *,
                      projector_correction: bool = True) -> "LLTProfile":
    """Compare exact distributions with :func:`llt_predict` over the full support.

    For each ``n`` reports the max and summed absolute errors over all
    (site, state) pairs, ``max_err * n^p`` with ``p = 3/2`` for d = 1 and
    ``(d + 1) / 2`` otherwise, and total variation times ``n^{1/4}``.
    """
    from .exact import exact_distribution

    d = spec.dimension
    p = 1.5 if d == 1 else (d + 1) / 2
    law = ms.mu if nu is None else np.asarray(nu, dtype=float)
    rows = []
    for n in sorted(int(v) for v in n_grid):
        table = exact_distribution(spec, n, law)
        grids = np.meshgrid(*[np.arange(-table.radius, table.radius + 1)] * d, indexing="ij")
        pts = np.stack(grids, axis=-1)
        err_max, err_sum = 0.0, 0.0
        for k in range(spec.states):
            pred = llt_predict(pts if d > 1 else pts[..., 0], n, k, ms, start=law,
                               projector_correction=projector_correction)
            diff = np.abs(table.probs[..., k] - pred)
            err_max = max(err_max, float(diff.max()))
            err_sum += float(diff.sum())
        rows.append((n, err_max, err_sum, err_max * n**p, 0.5 * err_sum * n**0.25))
    return LLTProfile(rows=rows, power=p)


@dataclass(frozen=True)
class LLTProfile:
    """Rows ``(n, max_abs_err, sum_abs_err, max_err_times_n_pow, tv_times_n_quarter)``."""

    rows: list
    power: float

    columns = ("n", "max_abs_err", "sum_abs_err", "max_err_times_n_pow", "tv_times_n_quarter")

    def column(self, name: str) -> np.ndarray:
        return np.array([r[self.columns.index(name)] for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for n, a, b, c, e in self.rows:
            w.writerow([n, f"{a:.12e}", f"{b:.12e}", f"{c:.12e}", f"{e:.12e}"])
        return buf.getvalue()
