"""High-order barrier chains.

Two liftings are provided:

* ``PhiChain`` turns a state leaf of relative degree ``m_i`` into an effective
  field of relative degree one: ``Phi^1 = h`` and
  ``Phi^{j+1} = grad psi^j . F + alpha_j(psi^j)`` with ``psi^j = Phi^j`` unless a
  dominating override ``psi^j >= Phi^j`` is supplied.
* ``PiChain`` lifts the composed barrier until the input shows up:
  ``Pi^0 = h`` and ``Pi^{i+1} = D[Pi^i] + alpha^i(Pi^i)``, where ``D`` is the time
  derivative along the nominal flow ``(xdot, udot) = (F, tau)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fields import ClassKappa, FdPolicy, ScalarField
from .lse_compose import ComposedUbf, QpData, qp_data
from .spec_lang import ConstraintLeaf


class ChainError(ArithmeticError):
    pass


class PsiOverrideError(ValueError):
    pass


def _alpha(a) -> Callable:
    if isinstance(a, (int, float)):
        return ClassKappa("linear", float(a))
    if isinstance(a, dict):
        return ClassKappa(a.get("kind", "linear"), float(a.get("coef", 1.0)))
    if not callable(a):
        raise TypeError(f"not a class-K function: {a!r}")
    return a


# Lifting steps for effective leaf fields; central differences of quadratic
# and bilinear leaves are exact at any step, so a wide step mainly buys
# robustness against round-off.
PHI_FD = FdPolicy(rel_step=1e-4, abs_step=1e-4)


@dataclass
class PhiChain:
    leaf: ConstraintLeaf
    degree: int
    alphas: list
    fields: list            # Phi^1 .. Phi^m
    psis: list              # psi^1 .. psi^{m-1}

    @property
    def effective(self) -> ScalarField:
        return self.fields[-1]


def _lift(psi: ScalarField, alpha, sys, fd: FdPolicy, name: str) -> ScalarField:
    def value(x, u):
        g = psi.grad_x(x, u)
        return np.einsum("...k,...k->...", g, sys.F(x, u)) + alpha(psi.value(x, u))

    return ScalarField(value, depends="x", fd=fd, name=name)


def build_phi_chain(leaf: ConstraintLeaf, sys, alphas: Sequence = (), psi_overrides: dict | None = None,
                    fd: FdPolicy = PHI_FD, validation_points=None, n_validation: int = 256) -> PhiChain:
    """Lift ``leaf`` to relative degree one.

    ``psi_overrides`` maps a level ``j`` (1-based, ``j < m_i``) to a state field
    that must dominate ``Phi^j``; domination is checked at ``validation_points``
    (or at deterministic samples from a box around the origin).
    """
    m = int(leaf.relative_degree)
    if m < 1:
        raise ValueError("relative degree must be >= 1")
    alphas = [_alpha(a) for a in alphas]
    if len(alphas) != m - 1:
        raise ValueError(f"leaf {leaf.id!r} of degree {m} needs {m - 1} class-K functions, got {len(alphas)}")
    psi_overrides = dict(psi_overrides or {})
    for j in psi_overrides:
        if not 1 <= j < m:
            raise ValueError(f"psi override level {j} outside 1..{m - 1}")
    if validation_points is None:
        rng = np.random.default_rng(12345)
        validation_points = rng.uniform(-5.0, 5.0, size=(n_validation, sys.n))
    X = np.asarray(validation_points, dtype=float)
    U0 = np.zeros(X.shape[:-1] + (sys.m,))

    fields = [leaf.barrier]
    psis = []
    for j in range(1, m):
        phi = fields[-1]
        psi = psi_overrides.get(j, phi)
        if psi is not phi:
            gap = np.asarray(psi.value(X, U0)) - np.asarray(phi.value(X, U0))
            bad = np.flatnonzero(~(gap >= -1e-12))
            if bad.size:
                raise PsiOverrideError(
                    f"leaf {leaf.id!r}: psi^{j} < Phi^{j} at {bad.size} validation point(s), e.g. x = {X[bad[0]].tolist()}")
        psis.append(psi)
        fields.append(_lift(psi, alphas[j - 1], sys, fd, f"Phi^{j + 1}[{leaf.id}]"))
    return PhiChain(leaf, m, alphas, fields, psis)


# Default finite-difference steps for differentiating Pi^1, Pi^2, ...
PI_STEPS = (1e-4, 1e-3, 1e-2)


class PiChain:
    """``Pi^0 .. Pi^m`` over a composed barrier, with derivatives along the nominal flow.

    ``tau`` is ``tau(x, u)`` (batched).  ``fd_steps[i-1]`` is the absolute
    central-difference step used when differentiating ``Pi^i``; ``Pi^0`` is
    differentiated analytically.
    """

    def __init__(self, ubf: ComposedUbf, sys, tau: Callable, alphas: Sequence, depth: int,
                 terminal_alpha=None, fd_steps: Sequence[float] | None = None):
        if depth < 0:
            raise ValueError("depth must be >= 0")
        if depth > 2:
            raise ValueError("depth above 2 exceeds the nested finite-difference noise limit")
        alphas = [_alpha(a) for a in alphas]
        if len(alphas) < depth:
            raise ValueError(f"depth {depth} needs {depth} class-K functions, got {len(alphas)}")
        self.ubf = ubf
        self.sys = sys
        self.tau = tau
        self.depth = int(depth)
        self.alphas = alphas[:depth]
        self.terminal_alpha = _alpha(terminal_alpha) if terminal_alpha is not None else (
            alphas[depth] if len(alphas) > depth else ClassKappa("linear", 1.0))
        steps = tuple(fd_steps) if fd_steps is not None else PI_STEPS
        if len(steps) < depth or any(not s > 0 for s in steps):
            raise ValueError("need one positive finite-difference step per lifted level")
        self.fd_steps = steps

    def with_tau(self, tau: Callable) -> "PiChain":
        c = object.__new__(PiChain)
        c.__dict__.update(self.__dict__)
        c.tau = tau
        return c

    # ---- batched core on flat (B, n) / (B, m) arrays ----------------------
    def _flow(self, x, u):
        return self.sys.F(x, u), self.tau(x, u)

    def _levels(self, x, u, top: int, flow=None):
        """Values of Pi^0..Pi^top at flat batches (list of (B,) arrays) and the flow at x, u."""
        h, gx, gu = self.ubf.evaluate(x, u)
        vals = [h]
        if top == 0:
            return vals, flow
        f, t = flow if flow is not None else self._flow(x, u)
        vals.append(np.einsum("bk,bk->b", gx, f) + np.einsum("bk,bk->b", gu, t) + self.alphas[0](h))
        for k in range(2, top + 1):
            d = self._directional(x, u, f, t, k - 1)
            vals.append(d + self.alphas[k - 1](vals[k - 1]))
        return vals, (f, t)

    def _directional(self, x, u, f, t, level: int):
        """``D[Pi^level]`` by a central difference along the normalized flow direction."""
        n = x.shape[-1]
        B = x.shape[0]
        G = np.concatenate([f, t], axis=-1)
        norm = np.linalg.norm(G, axis=-1)
        safe = np.where(norm > 0, norm, 1.0)
        dlt = self.fd_steps[level - 1]
        S = (dlt / safe)[:, None] * G
        Z = np.concatenate([x, u], axis=-1)
        P = np.concatenate([Z + S, Z - S], axis=0)
        v, _ = self._levels(P[:, :n], P[:, n:], level)
        d = norm * (v[level][:B] - v[level][B:]) / (2.0 * dlt)
        if not np.all(np.isfinite(d)):
            raise ChainError("non-finite nested derivative")
        return d

    # ---- public API --------------------------------------------------------
    def values(self, x, u) -> np.ndarray:
        """``[Pi^0, ..., Pi^m]`` stacked along the first axis."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
        X = np.broadcast_to(x, shape + x.shape[-1:]).reshape(-1, x.shape[-1])
        U = np.broadcast_to(u, shape + u.shape[-1:]).reshape(-1, u.shape[-1])
        vals, _ = self._levels(X, U, self.depth)
        return np.stack(vals).reshape((self.depth + 1,) + shape)

    def value(self, x, u, level: int | None = None):
        level = self.depth if level is None else level
        return self.values(x, u)[level]

    def field(self, level: int | None = None) -> ScalarField:
        level = self.depth if level is None else level
        return ScalarField(lambda x, u: self.value(x, u, level), name=f"Pi^{level}")

    def qp_data(self, x, u, with_values: bool = False):
        """QP data of the terminal level for a single point ``x``, ``u``.

        With ``with_values`` returns ``(qp, [Pi^0..Pi^m], tau)`` at the point.
        """
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if self.depth == 0:
            t = self.tau(x, u)
            qd = qp_data(self.ubf, self.sys, t, self.terminal_alpha, x, u)
            if with_values:
                return qd, np.array([self.ubf.value(x, u)]), t
            return qd
        n, m = x.shape[-1], u.shape[-1]
        X = x.reshape(1, n)
        U = u.reshape(1, m)
        vals, (f, t) = self._levels(X, U, self.depth)
        top = vals[-1][0]
        dlt = self.fd_steps[self.depth - 1]
        G = np.concatenate([f, t], axis=-1)[0]
        norm = float(np.linalg.norm(G))
        S = G * (dlt / norm) if norm > 0 else np.zeros_like(G)
        z = np.concatenate([x, u])
        eye = np.zeros((m, n + m))
        eye[:, n:] = np.eye(m)
        # m input probes each way, then two probes along the flow
        P = np.concatenate([z + dlt * eye, z - dlt * eye, (z + S)[None], (z - S)[None]], axis=0)
        pv, _ = self._levels(P[:, :n], P[:, n:], self.depth)
        w = pv[-1]
        if not np.all(np.isfinite(w)):
            raise ChainError("non-finite nested derivative")
        p = (w[:m] - w[m:2 * m]) / (2.0 * dlt)
        dtop = norm * (w[2 * m] - w[2 * m + 1]) / (2.0 * dlt)
        q = float(dtop + self.terminal_alpha(top))
        qd = QpData(p, q)
        if with_values:
            return qd, np.array([v[0] for v in vals]), t[0]
        return qd


def build_pi_chain(ubf: ComposedUbf, sys, tau: Callable, alphas: Sequence, depth: int,
                   terminal_alpha=None, fd_steps=None) -> PiChain:
    return PiChain(ubf, sys, tau, alphas, depth, terminal_alpha, fd_steps)


def pi_qp_data(chain: PiChain, x, u) -> QpData:
    return chain.qp_data(x, u)
