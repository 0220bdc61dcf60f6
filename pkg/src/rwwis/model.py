"""Walk kernels: parsing, validation, stationary measure, moments, reversal.

A random walk with internal states (RWwIS) on Z^d x E is given by a finite
family of s x s matrices ``A_y`` indexed by lattice offsets ``y``; entry
``A_y[j, k]`` is the probability of stepping by ``y`` and moving from internal
state ``j`` to ``k``. Rows of ``Q = sum_y A_y`` sum to one.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from math import gcd
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from .arithmetic import WalkLattice, cycle_lattice, generates_full_lattice
from .errors import AssumptionError, WalkFormatError

PROB_TOL = 1e-12
DRIFT_TOL = 1e-10
PD_TOL = 1e-10

BUILTIN_WALKS = ("ssrw1d", "ssrw2d", "ssrw3d", "w2-antipersistent")


@dataclass(frozen=True, eq=False)
class WalkSpec:
    """Finite-support RWwIS kernel.

    Attributes
    ----------
    dimension : int
        Lattice dimension d.
    states : int
        Number of internal states s.
    offsets : ndarray, shape (K, d), int64
        Distinct support offsets, in document order.
    matrices : ndarray, shape (K, s, s)
        ``matrices[a]`` is ``A_{offsets[a]}``.
    """

    dimension: int
    states: int
    offsets: np.ndarray
    matrices: np.ndarray
    name: str = ""

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=np.int64)
        matrices = np.asarray(self.matrices, dtype=float)
        if offsets.ndim == 1:
            offsets = offsets[:, None]
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "matrices", matrices)
        offsets.setflags(write=False)
        matrices.setflags(write=False)
        d, s = self.dimension, self.states
        if not isinstance(d, (int, np.integer)) or d < 1:
            raise WalkFormatError(f"dimension must be a positive integer, got {d!r}")
        if not isinstance(s, (int, np.integer)) or s < 1:
            raise WalkFormatError(f"states must be a positive integer, got {s!r}")
        if offsets.shape[0] == 0:
            raise WalkFormatError("kernel support is empty")
        if offsets.shape[1] != d:
            raise WalkFormatError(f"offsets have length {offsets.shape[1]}, expected {d}")
        if matrices.shape != (offsets.shape[0], s, s):
            raise WalkFormatError(f"matrices have shape {matrices.shape}, expected ({offsets.shape[0]}, {s}, {s})")
        if len({tuple(y) for y in offsets.tolist()}) != offsets.shape[0]:
            raise WalkFormatError("duplicate offset in kernel")
        if not np.all(np.isfinite(matrices)):
            raise WalkFormatError("non-finite probability")
        if np.any(matrices < 0):
            a, j, k = np.argwhere(matrices < 0)[0]
            raise WalkFormatError(f"negative probability p[{offsets[a].tolist()}][{j},{k}] = {matrices[a, j, k]}")
        rows = matrices.sum(axis=(0, 2))
        bad = np.abs(rows - 1.0) > PROB_TOL
        if np.any(bad):
            j = int(np.argmax(bad))
            raise WalkFormatError(f"row {j} of the kernel sums to {rows[j]:.15g}, expected 1")

    @classmethod
    def from_kernel(cls, kernel: Mapping[Any, Any], name: str = "") -> "WalkSpec":
        """Build from ``{offset: matrix}``; scalar offsets mean d = 1."""
        items = list(kernel.items())
        if not items:
            raise WalkFormatError("kernel support is empty")
        offs = [np.atleast_1d(np.asarray(y, dtype=np.int64)) for y, _ in items]
        mats = [np.atleast_2d(np.asarray(m, dtype=float)) for _, m in items]
        return cls(dimension=len(offs[0]), states=mats[0].shape[0],
                   offsets=np.stack(offs), matrices=np.stack(mats), name=name)

    @property
    def kernel(self) -> dict[tuple[int, ...], np.ndarray]:
        return {tuple(y): A for y, A in zip(self.offsets.tolist(), self.matrices)}

    @property
    def radius(self) -> int:
        """Support radius r: largest sup-norm of an offset carrying mass."""
        mass = self.matrices.sum(axis=(1, 2)) > 0
        if not np.any(mass):
            return 0
        return int(np.abs(self.offsets[mass]).max())

    @property
    def Q(self) -> np.ndarray:
        return self.matrices.sum(axis=0)

    def matrix(self, y) -> np.ndarray:
        """``A_y``; zero matrix for offsets outside the support."""
        y = tuple(np.atleast_1d(y).tolist())
        for off, A in zip(self.offsets.tolist(), self.matrices):
            if tuple(off) == y:
                return A
        return np.zeros((self.states, self.states))

    def digest(self) -> str:
        """Stable content hash (independent of offset order and name)."""
        order = np.lexsort(self.offsets.T[::-1])
        h = hashlib.sha256()
        h.update(np.array([self.dimension, self.states], dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(self.offsets[order]).tobytes())
        h.update(np.ascontiguousarray(self.matrices[order]).tobytes())
        return h.hexdigest()[:16]

    def to_document(self) -> dict:
        return {
            "dimension": int(self.dimension),
            "states": int(self.states),
            "steps": [{"offset": y, "matrix": A.tolist()}
                      for y, A in zip(self.offsets.tolist(), self.matrices)],
        }

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"WalkSpec{label}(d={self.dimension}, s={self.states}, support={len(self.offsets)}, r={self.radius})"


# ---------------------------------------------------------------------------
# parsing


def _number(v) -> float:
    if isinstance(v, bool):
        raise WalkFormatError(f"probability must be numeric, got {v!r}")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        try:
            return float(Fraction(v.strip()))
        except (ValueError, ZeroDivisionError) as exc:
            raise WalkFormatError(f"cannot parse probability {v!r}") from exc
    raise WalkFormatError(f"probability must be numeric, got {v!r}")


def parse_walk(document: str | Mapping, name: str = "") -> WalkSpec:
    """Parse a walk document (YAML or JSON text, or an already-loaded mapping).

    Schema: ``dimension`` (int), ``states`` (int), ``steps``: list of
    ``{offset: [d ints], matrix: s rows of s numbers}``. Probabilities may be
    floats or exact fraction strings such as ``"1/6"``.
    """
    if isinstance(document, str):
        try:
            doc = yaml.safe_load(document)
        except yaml.YAMLError as exc:
            raise WalkFormatError(f"walk document is not valid YAML/JSON: {exc}") from exc
    else:
        doc = document
    if not isinstance(doc, Mapping):
        raise WalkFormatError("walk document must be a mapping")
    missing = [k for k in ("dimension", "states", "steps") if k not in doc]
    if missing:
        raise WalkFormatError(f"walk document lacks keys: {', '.join(missing)}")
    d, s, steps = doc["dimension"], doc["states"], doc["steps"]
    if not isinstance(d, int) or isinstance(d, bool) or d < 1:
        raise WalkFormatError(f"dimension must be a positive integer, got {d!r}")
    if not isinstance(s, int) or isinstance(s, bool) or s < 1:
        raise WalkFormatError(f"states must be a positive integer, got {s!r}")
    if not isinstance(steps, list) or not steps:
        raise WalkFormatError("kernel support is empty")
    offsets, mats = [], []
    for i, step in enumerate(steps):
        if not isinstance(step, Mapping) or "offset" not in step or "matrix" not in step:
            raise WalkFormatError(f"step {i} must have 'offset' and 'matrix'")
        off = step["offset"]
        if isinstance(off, int) and d == 1:
            off = [off]
        if (not isinstance(off, list) or len(off) != d
                or not all(isinstance(v, int) and not isinstance(v, bool) for v in off)):
            raise WalkFormatError(f"step {i}: offset must be a list of {d} integers, got {off!r}")
        mat = step["matrix"]
        if not isinstance(mat, list) or len(mat) != s or not all(isinstance(r, list) and len(r) == s for r in mat):
            raise WalkFormatError(f"step {i}: matrix must be {s}x{s}")
        offsets.append(off)
        mats.append([[_number(v) for v in row] for row in mat])
    return WalkSpec(dimension=d, states=s, offsets=np.array(offsets, dtype=np.int64),
                    matrices=np.array(mats, dtype=float), name=name)


def load_walk(path: str | Path) -> WalkSpec:
    """Load a walk document from a file; bare builtin names are accepted too."""
    p = Path(path)
    if not p.exists():
        # canonical walks may be referenced by name, e.g. "examples/ssrw1d"
        stem = p.name.removesuffix(".yaml")
        if stem in BUILTIN_WALKS:
            return builtin_walk(stem)
        raise WalkFormatError(f"walk document not found: {path}")
    return parse_walk(p.read_text(), name=p.stem)


def builtin_walk(name: str) -> WalkSpec:
    """One of the canonical walks shipped with the package."""
    if name not in BUILTIN_WALKS:
        raise WalkFormatError(f"unknown builtin walk {name!r}; choose from {', '.join(BUILTIN_WALKS)}")
    text = resources.files("rwwis").joinpath("walks").joinpath(f"{name}.yaml").read_text()
    return parse_walk(text, name=name)


# ---------------------------------------------------------------------------
# internal chain


def _reachable(adj: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(adj.shape[0], dtype=bool)
    seen[start] = True
    stack = [start]
    while stack:
        j = stack.pop()
        for k in np.flatnonzero(adj[j]):
            if not seen[k]:
                seen[k] = True
                stack.append(int(k))
    return seen


def is_irreducible(Q: np.ndarray) -> bool:
    adj = np.asarray(Q) > 0
    return bool(_reachable(adj, 0).all() and _reachable(adj.T, 0).all())


def chain_period(Q: np.ndarray) -> int:
    """Period of an irreducible chain: gcd of (level_j + 1 - level_k) over
    edges j -> k, with BFS levels from state 0. Equals the gcd of all cycle
    lengths through state 0."""
    adj = np.asarray(Q) > 0
    s = adj.shape[0]
    level = np.full(s, -1)
    level[0] = 0
    frontier = [0]
    while frontier:
        nxt = []
        for j in frontier:
            for k in np.flatnonzero(adj[j]):
                if level[k] < 0:
                    level[k] = level[j] + 1
                    nxt.append(int(k))
        frontier = nxt
    g = 0
    for j, k in zip(*np.nonzero(adj)):
        if level[j] >= 0 and level[k] >= 0:
            g = gcd(g, int(abs(level[j] + 1 - level[k])))
    return g


def stationary_measure(Q: np.ndarray) -> np.ndarray:
    """Stationary law of a row-stochastic matrix by a direct linear solve.

    Raises
    ------
    AssumptionError
        If the system is singular or the solution is not a strictly positive
        probability vector with residual below 1e-12 (reducible chain).
    """
    Q = np.asarray(Q, dtype=float)
    s = Q.shape[0]
    if s == 1:
        return np.ones(1)
    A = Q.T - np.eye(s)
    A[-1, :] = 1.0
    b = np.zeros(s)
    b[-1] = 1.0
    try:
        mu = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise AssumptionError("i", "stationary system is singular; internal chain is reducible") from exc
    # one step of iterative refinement keeps the residual at rounding level
    r = b - A @ mu
    mu = mu + np.linalg.solve(A, r)
    if np.any(mu <= 0):
        raise AssumptionError("i", f"stationary vector is not strictly positive: {mu}")
    mu = mu / mu.sum()
    res = np.abs(mu @ Q - mu).max()
    if res >= PROB_TOL:
        raise AssumptionError("i", f"stationary residual {res:.3g} exceeds {PROB_TOL}")
    return mu


# ---------------------------------------------------------------------------
# moments


@dataclass(frozen=True, eq=False)
class MomentSet:
    """Moment matrices of a validated walk.

    Attributes
    ----------
    mu : ndarray (s,)
        Stationary law of the internal chain.
    Q : ndarray (s, s)
    M : ndarray (d, s, s)
        ``M[l] = sum_y y_l A_y``.
    Sigma : ndarray (d, d, s, s)
        ``Sigma[l, m] = sum_y y_l y_m A_y``.
    Xi : ndarray
        Third moments: ``(s, s)`` for d = 1, ``(d, d, d, s, s)`` otherwise.
    Upsilon : ndarray or None
        Fourth moment matrix (d = 1 only).
    cov : ndarray (d, d)
        Covariance matrix sigma of the Gaussian limit.
    rho3 : float or ndarray
        Imaginary part of the third Taylor coefficient of the Perron
        eigenvalue: scalar for d = 1, symmetric (d, d, d) tensor otherwise.
    rho3_error : float
        Richardson error estimate for ``rho3``.
    lattice : WalkLattice
        Cycle lattice (periodicity structure).
    """

    mu: np.ndarray
    Q: np.ndarray
    M: np.ndarray
    Sigma: np.ndarray
    Xi: np.ndarray
    Upsilon: np.ndarray | None
    cov: np.ndarray
    rho3: Any
    rho3_error: float
    lattice: WalkLattice

    @property
    def dimension(self) -> int:
        return self.M.shape[0]

    @property
    def det_cov(self) -> float:
        return float(np.linalg.det(self.cov))

    @property
    def sigma2(self) -> float:
        """Scalar variance (d = 1 only)."""
        if self.dimension != 1:
            raise ValueError("sigma2 is defined for d = 1 only; use cov")
        return float(self.cov[0, 0])


def solve_poisson(Q: np.ndarray, mu: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Solve ``(Q - I) x = v`` with the gauge ``<mu, x> = 0``.

    The system is augmented with the constraint row and solved by least
    squares; it is consistent exactly when ``<mu, v> = 0``.
    """
    s = Q.shape[0]
    A = np.vstack([Q - np.eye(s), mu[None, :]])
    b = np.concatenate([v, [0.0]])
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    return x


def covariance_from_moments(mu, Q, M, Sigma, gauge: float = 0.0) -> np.ndarray:
    """Covariance ``sigma_{lm} = <mu, Sigma_lm 1> - <mu, M_l x_m> - <mu, M_m x_l>``
    with ``(Q - I) x_m = M_m 1``. ``gauge`` adds ``c * 1`` to every solution,
    which leaves the result unchanged because ``<mu, M_l 1> = 0``."""
    d, s = M.shape[0], Q.shape[0]
    one = np.ones(s)
    xs = [solve_poisson(Q, mu, M[m] @ one) + gauge for m in range(d)]
    cov = np.empty((d, d))
    for l in range(d):
        for m in range(d):
            cov[l, m] = mu @ Sigma[l, m] @ one - mu @ M[l] @ xs[m] - mu @ M[m] @ xs[l]
    return cov


def _raw_moments(spec: WalkSpec):
    Y = spec.offsets.astype(float)
    A = spec.matrices
    M = np.einsum("al,ajk->ljk", Y, A)
    Sigma = np.einsum("al,am,ajk->lmjk", Y, Y, A)
    if spec.dimension == 1:
        Xi = np.einsum("a,ajk->jk", Y[:, 0] ** 3, A)
        Ups = np.einsum("a,ajk->jk", Y[:, 0] ** 4, A)
    else:
        Xi = np.einsum("al,am,an,ajk->lmnjk", Y, Y, Y, A)
        Ups = None
    return M, Sigma, Xi, Ups


def moment_set(spec: WalkSpec, mu: np.ndarray | None = None, *, with_rho3: bool = True) -> MomentSet:
    """Assemble moment matrices, covariance and third-order coefficient.

    Parameters
    ----------
    spec : WalkSpec
        A walk satisfying assumptions (i) and (iii).
    mu : ndarray, optional
        Stationary law; computed when omitted.
    with_rho3 : bool
        Compute ``rho3`` by Richardson-extrapolated differences of the
        Perron eigenvalue (set False to skip the spectral work).
    """
    Q = spec.Q
    if mu is None:
        mu = stationary_measure(Q)
    M, Sigma, Xi, Ups = _raw_moments(spec)
    one = np.ones(spec.states)
    drift = np.array([mu @ M[l] @ one for l in range(spec.dimension)])
    if np.abs(drift).max() > DRIFT_TOL:
        raise AssumptionError("iii", f"stationary drift {drift.tolist()} is not zero")
    cov = covariance_from_moments(mu, Q, M, Sigma)
    cov = 0.5 * (cov + cov.T)
    lattice = cycle_lattice(spec.offsets, spec.matrices)
    rho3, err = (0.0 if spec.dimension == 1 else np.zeros((spec.dimension,) * 3)), 0.0
    if with_rho3:
        from .spectral import third_coefficient

        rho3, err = third_coefficient(spec)
    return MomentSet(mu=mu, Q=Q, M=M, Sigma=Sigma, Xi=Xi, Upsilon=Ups, cov=cov,
                     rho3=rho3, rho3_error=err, lattice=lattice)


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    """Outcome of the four basic assumptions.

    ``checks`` maps the assumption label ("i" .. "iv") to a pair
    ``(passed, message)``; ``None`` for ``passed`` means "not evaluated".
    """

    checks: dict[str, tuple[bool | None, str]] = field(default_factory=dict)
    mu: np.ndarray | None = None
    cov: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        return all(p is True for p, _ in self.checks.values())

    @property
    def failures(self) -> list[str]:
        """Assumptions that were evaluated and failed."""
        return [k for k, (p, _) in self.checks.items() if p is False]

    @property
    def skipped(self) -> list[str]:
        """Assumptions not evaluated because an earlier one failed."""
        return [k for k, (p, _) in self.checks.items() if p is None]

    def raise_for_failure(self) -> None:
        for k in self.failures + self.skipped:
            raise AssumptionError(k, self.checks[k][1])

    def lines(self) -> list[str]:
        labels = {"i": "irreducible+aperiodic", "ii": "trivial arithmetic",
                  "iii": "zero drift", "iv": "covariance positive definite"}
        out = []
        for k, (p, msg) in self.checks.items():
            status = "PASS" if p else ("SKIP" if p is None else "FAIL")
            out.append(f"({k}) {labels[k]}: {status} - {msg}")
        if self.mu is not None:
            out.append("mu = " + np.array2string(self.mu, precision=12))
        if self.cov is not None:
            out.append("sigma = " + np.array2string(self.cov, precision=12))
        return out


def validate_walk(spec: WalkSpec) -> ValidationReport:
    """Check assumptions (i) irreducible and aperiodic internal chain,
    (ii) support offsets generate Z^d, (iii) zero stationary drift and
    (iv) positive definite covariance."""
    rep = ValidationReport()
    Q = spec.Q
    mu = None
    if not is_irreducible(Q):
        rep.checks["i"] = (False, "internal chain Q is not irreducible")
    else:
        per = chain_period(Q)
        if per != 1:
            rep.checks["i"] = (False, f"internal chain Q is periodic (aperiodicity fails, period {per})")
        else:
            try:
                mu = stationary_measure(Q)
                rep.checks["i"] = (True, "irreducible and aperiodic")
                rep.mu = mu
            except AssumptionError as exc:
                rep.checks["i"] = (False, str(exc))
    mass = spec.matrices.sum(axis=(1, 2)) > 0
    if generates_full_lattice(spec.offsets[mass], spec.dimension):
        rep.checks["ii"] = (True, f"offsets generate Z^{spec.dimension}")
    else:
        rep.checks["ii"] = (False, f"support offsets generate a proper subgroup of Z^{spec.dimension}")
    if mu is None:
        rep.checks["iii"] = (None, "needs the stationary measure")
        rep.checks["iv"] = (None, "needs the stationary measure")
        return rep
    M, Sigma, _, _ = _raw_moments(spec)
    one = np.ones(spec.states)
    drift = np.array([mu @ M[l] @ one for l in range(spec.dimension)])
    if np.abs(drift).max() > DRIFT_TOL:
        rep.checks["iii"] = (False, f"nonzero stationary drift {np.round(drift, 12).tolist()}")
        rep.checks["iv"] = (None, "covariance undefined without zero drift")
        return rep
    rep.checks["iii"] = (True, "zero stationary drift")
    cov = covariance_from_moments(mu, Q, M, Sigma)
    cov = 0.5 * (cov + cov.T)
    rep.cov = cov
    lam = float(np.linalg.eigvalsh(cov).min())
    if lam > PD_TOL:
        rep.checks["iv"] = (True, f"smallest eigenvalue {lam:.6g}")
    else:
        rep.checks["iv"] = (False, f"covariance not positive definite (smallest eigenvalue {lam:.3g})")
    return rep


def require_valid(spec: WalkSpec) -> ValidationReport:
    rep = validate_walk(spec)
    rep.raise_for_failure()
    return rep


# ---------------------------------------------------------------------------
# reversal


def reversed_walk(spec: WalkSpec, mu: np.ndarray | None = None) -> WalkSpec:
    """Time reversal under the stationary law:
    ``q_{y,i,j} = mu_j p_{-y,j,i} / mu_i``, i.e. ``A~_y = D^-1 A_{-y}^T D``."""
    if mu is None:
        mu = stationary_measure(spec.Q)
    mats = spec.matrices.transpose(0, 2, 1) * mu[None, None, :] / mu[None, :, None]
    # rows of the reversed kernel sum to one up to rounding; renormalise
    mats = mats / mats.sum(axis=(0, 2))[None, :, None]
    name = f"{spec.name}~" if spec.name and not spec.name.endswith("~") else spec.name[:-1]
    return WalkSpec(dimension=spec.dimension, states=spec.states, offsets=-spec.offsets,
                    matrices=mats, name=name)


def walk_to_json(spec: WalkSpec) -> str:
    return json.dumps(spec.to_document(), sort_keys=True)
