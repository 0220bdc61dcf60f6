"""Integer lattice bookkeeping for walks on Z^d.

Two lattices matter here. The group generated by the support offsets decides
whether the walk can reach every site at all. The finer object is the lattice
of realizable (displacement, time) pairs of closed state cycles: it fixes the
parity-like constraints that make, e.g., the simple walk live on the even
sublattice at even times. Local limit predictions and the torus engine both
need it.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from math import pi
from typing import Sequence

import numpy as np


def hermite_normal_form(rows: Sequence[Sequence[int]]) -> list[list[int]]:
    """Row-style Hermite normal form of an integer matrix.

    Returns the nonzero rows of an upper echelon basis of the row lattice with
    positive pivots and entries above each pivot reduced modulo the pivot.
    Exact integer arithmetic throughout.
    """
    A = [[int(v) for v in row] for row in rows]
    if not A:
        return []
    ncols = len(A[0])
    r0 = 0
    for c in range(ncols):
        if r0 >= len(A):
            break
        while True:
            nz = [i for i in range(r0, len(A)) if A[i][c] != 0]
            if not nz:
                break
            piv = min(nz, key=lambda i: abs(A[i][c]))
            A[r0], A[piv] = A[piv], A[r0]
            clean = True
            for i in range(r0 + 1, len(A)):
                if A[i][c]:
                    q = A[i][c] // A[r0][c]
                    A[i] = [a - q * b for a, b in zip(A[i], A[r0])]
                    if A[i][c]:
                        clean = False
            if clean:
                break
        if A[r0][c] == 0:
            continue
        if A[r0][c] < 0:
            A[r0] = [-a for a in A[r0]]
        for i in range(r0):
            q = A[i][c] // A[r0][c]
            if q:
                A[i] = [a - q * b for a, b in zip(A[i], A[r0])]
        r0 += 1
    return [row for row in A[:r0]]


def _pivot(row: Sequence[int]) -> int:
    for c, v in enumerate(row):
        if v:
            return c
    raise ValueError("zero row in HNF basis")


def lattice_contains(basis: Sequence[Sequence[int]], vectors) -> np.ndarray:
    """Vectorised membership test for the lattice spanned by an HNF basis.

    ``vectors`` has shape (..., D); returns a boolean array of shape (...).
    """
    v = np.array(vectors, dtype=np.int64, copy=True)
    shape = v.shape[:-1]
    v = v.reshape(-1, v.shape[-1])
    ok = np.ones(v.shape[0], dtype=bool)
    for row in basis:
        c = _pivot(row)
        p = row[c]
        rem = np.mod(v[:, c], p)
        ok &= rem == 0
        q = np.floor_divide(v[:, c], p)
        v -= q[:, None] * np.asarray(row, dtype=np.int64)[None, :]
    ok &= np.all(v == 0, axis=1)
    return ok.reshape(shape)


def generates_full_lattice(offsets: np.ndarray, d: int) -> bool:
    """True iff the integer vectors ``offsets`` generate all of Z^d."""
    H = hermite_normal_form(offsets.tolist())
    if len(H) != d:
        return False
    det = 1
    for row in H:
        det *= row[_pivot(row)]
    return det == 1


@dataclass(frozen=True)
class Peak:
    """A point of the dual torus where the characteristic matrix is unimodular.

    ``alpha(t0 + t) = exp(i*theta) * D @ alpha(t) @ D^{-1}`` with
    ``D = diag(exp(i*phases))``.
    """

    t0: np.ndarray
    theta: float
    phases: np.ndarray


@dataclass(frozen=True)
class WalkLattice:
    """Cycle lattice of a walk in Z^{d+1} (space coordinates, then time).

    ``potentials[j]`` is the (displacement, time) of a fixed path from state 0
    to state j; a transition (0, j) -> (x, k) in n steps is possible only if
    ``(x, n) + potentials[j] - potentials[k]`` lies in the lattice.
    """

    dimension: int
    potentials: np.ndarray  # (s, d+1) int
    basis: tuple[tuple[int, ...], ...]

    @property
    def index(self) -> int:
        """Number of cosets of the reachable sublattice at a fixed time."""
        h = 1
        for row in self.basis:
            h *= row[_pivot(row)]
        return h

    def admissible(self, x, n: int, j: int, k: int) -> np.ndarray:
        """Boolean mask over lattice points ``x`` (shape (..., d)) reachable
        from state j into state k in exactly n steps, modulo the lattice."""
        x = np.asarray(x, dtype=np.int64)
        if self.dimension == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        shift = self.potentials[j] - self.potentials[k]
        w = np.concatenate([x + shift[:-1], np.full(x.shape[:-1] + (1,), n + shift[-1])], axis=-1)
        return lattice_contains(self.basis, w)

    def peaks(self) -> list[Peak]:
        """All characters annihilating the cycle lattice; ``t0 = 0`` first."""
        B = [list(row) for row in self.basis]
        D = len(B)
        diag = [B[i][i] for i in range(D)]
        out: list[Peak] = []
        for z in product(*(range(p) for p in diag)):
            # back-substitution B v = z over the rationals
            v = [Fraction(0)] * D
            for i in reversed(range(D)):
                acc = Fraction(z[i]) - sum(B[i][c] * v[c] for c in range(i + 1, D))
                v[i] = acc / B[i][i]
            frac = [float(2 * pi * (vi - (vi.numerator // vi.denominator))) for vi in v]
            t0 = np.array(frac[:-1])
            t0 = np.where(t0 > pi + 1e-12, t0 - 2 * pi, t0)
            theta = -frac[-1]
            phases = -(self.potentials[:, :-1] @ t0) + theta * self.potentials[:, -1]
            out.append(Peak(t0=t0, theta=theta, phases=phases))
        out.sort(key=lambda p: (float(np.abs(p.t0).sum()), tuple(p.t0)))
        return out


def cycle_lattice(offsets: np.ndarray, matrices: np.ndarray) -> WalkLattice:
    """Build the cycle lattice from a kernel given as offsets (K, d) and
    matrices (K, s, s). Requires every state reachable from state 0."""
    K, d = offsets.shape
    s = matrices.shape[1]
    edges = [(int(j), tuple(int(v) for v in offsets[a]), int(k))
             for a in range(K) for j in range(s) for k in range(s) if matrices[a, j, k] > 0]
    pot: dict[int, np.ndarray] = {0: np.zeros(d + 1, dtype=np.int64)}
    frontier = [0]
    while frontier:
        nxt = []
        for j in frontier:
            for (a, y, b) in edges:
                if a == j and b not in pot:
                    pot[b] = pot[j] + np.array(list(y) + [1], dtype=np.int64)
                    nxt.append(b)
        frontier = nxt
    if len(pot) != s:
        raise ValueError("internal chain is not irreducible; cycle lattice undefined")
    P = np.stack([pot[j] for j in range(s)])
    gens = []
    for (j, y, k) in edges:
        g = P[j] + np.array(list(y) + [1], dtype=np.int64) - P[k]
        gens.append(g.tolist())
    H = hermite_normal_form(gens)
    if len(H) != d + 1:
        raise ValueError("cycle lattice is degenerate (walk confined to a hyperplane)")
    return WalkLattice(dimension=d, potentials=P, basis=tuple(tuple(r) for r in H))
