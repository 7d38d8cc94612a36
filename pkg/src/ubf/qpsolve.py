"""Minimum-norm quadratic programs: closed-form halfspace projection and a tiny enumeration oracle."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


class QpInfeasible(ArithmeticError):
    pass


@dataclass(frozen=True)
class HalfspaceQp:
    """min |v|^2  s.t.  p.v + q >= 0"""
    p: np.ndarray
    q: float


@dataclass(frozen=True)
class DenseQp:
    """min 0.5 v.v  s.t.  A v >= b"""
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.shape[0] != b.shape[0]:
            raise ValueError("A and b row counts differ")
        if A.shape[0] > 8 or A.shape[1] > 8:
            raise ValueError("enumeration oracle is limited to 8 rows and 8 variables")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)


def solve_halfspace(qp_or_p, q=None) -> np.ndarray:
    """Projection of the origin onto ``{v : p.v >= -q}``."""
    if q is None:
        p, q = qp_or_p.p, qp_or_p.q
    else:
        p = qp_or_p
    p = np.asarray(p, dtype=float)
    q = float(q)
    if q >= 0.0:
        return np.zeros_like(p)
    pp = float(p @ p)
    if pp == 0.0:
        raise QpInfeasible(f"constraint p.v + q >= 0 has p = 0 and q = {q:.6g} < 0")
    return (-q / pp) * p


def solve_halfspace_batch(p, q) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection; returns ``(v, infeasible_mask)`` with ``v = 0`` where infeasible."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pp = np.einsum("...k,...k->...", p, p)
    active = q < 0
    bad = active & (pp == 0)
    scale = np.where(active & ~bad, -q / np.where(pp == 0, 1.0, pp), 0.0)
    return scale[..., None] * p, bad


@dataclass
class DenseSolution:
    v: np.ndarray
    multipliers: np.ndarray
    active: tuple[int, ...]


def solve_dense(qp: DenseQp, tol: float = 1e-10, full: bool = False):
    """Exact minimizer by enumerating every active set.

    For each subset S of rows, solve ``v = A_S^T lam`` with ``A_S A_S^T lam = b_S``;
    keep candidates with ``lam >= 0`` that satisfy all rows, and return the one
    of least norm.  Rank-deficient subsets are skipped.
    """
    A, b = qp.A, qp.b
    k, n = A.shape
    best = None
    for r in range(0, min(k, n) + 1):
        for S in itertools.combinations(range(k), r):
            S = list(S)
            if r == 0:
                v = np.zeros(n)
                lam = np.zeros(0)
            else:
                AS = A[S]
                G = AS @ AS.T
                if np.linalg.matrix_rank(G, tol=1e-12 * max(1.0, np.abs(G).max())) < r:
                    continue
                lam = np.linalg.solve(G, b[S])
                if np.any(lam < -tol):
                    continue
                v = AS.T @ lam
            scale = max(1.0, np.abs(b).max(initial=0.0))
            if np.any(A @ v - b < -tol * scale):
                continue
            nv = float(v @ v)
            if best is None or nv < best[0] - 1e-15:
                full_lam = np.zeros(k)
                full_lam[S] = lam
                best = (nv, DenseSolution(v, full_lam, tuple(S)))
    if best is None:
        raise QpInfeasible("no feasible active set")
    return best[1] if full else best[1].v


# -- Lipschitz counterexample ------------------------------------------------

def robinson_qp(x1: float, x2: float) -> DenseQp:
    A = np.array([[0.0, -1.0, 1.0, 0.0],
                  [0.0, 1.0, 1.0, 0.0],
                  [-1.0, 0.0, 1.0, 0.0],
                  [1.0, 0.0, 1.0, x1]])
    b = np.array([1.0, 1.0, 1.0, 1.0 + x2])
    return DenseQp(A, b)


def robinson_closed_form(x1: float, x2: float) -> np.ndarray:
    if x1 == 0.0:
        return np.array([0.0, 0.0, 1.0, 0.0])
    return np.array([0.0, 0.0, 1.0, x2 / x1])


def in_robinson_domain(x1: float, x2: float) -> bool:
    return (0.0 < x1 < 1.0 and 0.0 <= x2 <= 0.5 * x1 * x1) or (x1 == 0.0 and x2 == 0.0)


def robinson_grid(n: int = 5) -> list[tuple[float, float]]:
    """``n x n`` points strictly inside the domain ``0 < x1 < 1, 0 <= x2 <= x1^2/2``."""
    pts = []
    for x1 in np.linspace(0.1, 0.9, n):
        for frac in np.linspace(0.0, 1.0, n):
            pts.append((float(x1), float(frac * 0.5 * x1 * x1)))
    return pts


def robinson_demo(grid=None, eps=(0.1, 0.05, 0.01)):
    """Minimizers on a grid against the closed form, plus local Lipschitz ratios.

    Returns ``(rows, ratios)``: rows are dicts with the point, the minimizer
    and its max-abs error; ratios map ``eps`` to
    ``|u(eps, eps^2/2) - u(eps, 0)| / |x - x'|``.
    """
    grid = robinson_grid() if grid is None else grid
    rows = []
    for x1, x2 in grid:
        if not in_robinson_domain(x1, x2):
            raise ValueError(f"point ({x1}, {x2}) is outside 0 < x1 < 1, 0 <= x2 <= x1^2/2")
        u = solve_dense(robinson_qp(x1, x2))
        err = float(np.max(np.abs(u - robinson_closed_form(x1, x2))))
        rows.append({"x1": x1, "x2": x2, "u": u, "max_abs_err": err})
    ratios = {}
    for e in eps:
        ua = solve_dense(robinson_qp(e, 0.5 * e * e))
        ub = solve_dense(robinson_qp(e, 0.0))
        ratios[e] = float(np.linalg.norm(ua - ub) / (0.5 * e * e))
    return rows, ratios
