"""Scalar fields over (state, input) with value and gradients.

Every field is batched: ``x`` has shape ``(..., n)`` and ``u`` has shape
``(..., m)`` with matching leading dimensions, ``value`` returns shape ``(...)``
and the gradients return ``(..., n)`` / ``(..., m)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

ValueFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


class FiniteDifferenceError(ArithmeticError):
    pass


@dataclass(frozen=True)
class FdPolicy:
    """Central-difference step rule: ``step = max(abs_step, rel_step * |coordinate|)``."""
    rel_step: float = 1e-6
    abs_step: float = 1e-8

    def __post_init__(self):
        if not (self.rel_step > 0 and self.abs_step > 0):
            raise ValueError("finite-difference steps must be positive")

    def steps(self, z: np.ndarray) -> np.ndarray:
        return np.maximum(self.abs_step, self.rel_step * np.abs(z))


DEFAULT_FD = FdPolicy()


def _probe_gradient(fn: Callable[[np.ndarray], np.ndarray], z: np.ndarray, policy: FdPolicy) -> np.ndarray:
    """Central differences of ``fn`` over the last axis of ``z`` (batched)."""
    k = z.shape[-1]
    if k == 0:
        return np.zeros(z.shape)
    h = policy.steps(z)                                   # (..., k)
    eye = np.eye(k)
    # probes: (2k, ..., k)
    shift = eye.reshape((k,) + (1,) * (z.ndim - 1) + (k,)) * h[None]
    probes = np.concatenate([z[None] + shift, z[None] - shift], axis=0)
    vals = np.asarray(fn(probes), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise FiniteDifferenceError("non-finite field value at a finite-difference probe")
    diff = (vals[:k] - vals[k:]) / (2.0 * np.moveaxis(h, -1, 0))
    return np.moveaxis(diff, 0, -1)


def fd_gradient(fn: ValueFn, x, u, policy: FdPolicy = DEFAULT_FD, wrt: str = "xu"):
    """Central-difference gradient of a value-only function ``fn(x, u)``.

    Returns ``(grad_x, grad_u)``; a part not listed in ``wrt`` is returned as zeros.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    gx = gu = None
    if "x" in wrt:
        gx = _probe_gradient(lambda X: fn(X, np.broadcast_to(u, X.shape[:-1] + u.shape[-1:])), x, policy)
    else:
        gx = np.zeros(x.shape)
    if "u" in wrt:
        gu = _probe_gradient(lambda U: fn(np.broadcast_to(x, U.shape[:-1] + x.shape[-1:]), U), u, policy)
    else:
        gu = np.zeros(u.shape)
    return gx, gu


class ScalarField:
    """A differentiable function of (x, u).

    ``depends`` lists which arguments the field reads ("x", "u" or both); the
    gradient with respect to an unused argument is exactly zero.  When an
    analytic gradient is not supplied it is computed with central differences
    under ``fd``.
    """

    def __init__(self, value: ValueFn, grad_x: ValueFn | None = None, grad_u: ValueFn | None = None,
                 depends: str = "xu", fd: FdPolicy = DEFAULT_FD, name: str = ""):
        self._value = value
        self._grad_x = grad_x
        self._grad_u = grad_u
        self.depends = depends
        self.fd = fd
        self.name = name
        need_x = "x" in depends and grad_x is None
        need_u = "u" in depends and grad_u is None
        self.tag = "finite-difference" if (need_x or need_u) else "analytic"
        self.n_x: int | None = None
        self.n_u: int | None = None

    def __repr__(self):
        return f"ScalarField({self.name or '?'}, {self.tag})"

    def value(self, x, u) -> np.ndarray:
        return self._value(np.asarray(x, dtype=float), np.asarray(u, dtype=float))

    __call__ = value

    def grad_x(self, x, u) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if "x" not in self.depends:
            return np.zeros(np.broadcast_shapes(x.shape[:-1], u.shape[:-1]) + x.shape[-1:])
        if self._grad_x is not None:
            return self._grad_x(x, u)
        return fd_gradient(self._value, x, u, self.fd, wrt="x")[0]

    def grad_u(self, x, u) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if "u" not in self.depends:
            return np.zeros(np.broadcast_shapes(x.shape[:-1], u.shape[:-1]) + u.shape[-1:])
        if self._grad_u is not None:
            return self._grad_u(x, u)
        return fd_gradient(self._value, x, u, self.fd, wrt="u")[1]

    def grads(self, x, u):
        return self.grad_x(x, u), self.grad_u(x, u)

    def value_and_grads(self, x, u):
        return self.value(x, u), self.grad_x(x, u), self.grad_u(x, u)


@dataclass(frozen=True)
class ClassKappa:
    """Class-K-infinity function ``c*r`` (linear) or ``c*r**3`` (cubic)."""
    kind: str = "linear"
    coef: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "cubic"):
            raise ValueError(f"unknown class-K kind {self.kind!r}")
        if not self.coef > 0:
            raise ValueError("class-K coefficient must be positive")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return self.coef * r if self.kind == "linear" else self.coef * r ** 3

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        return np.full(r.shape, self.coef) if self.kind == "linear" else 3.0 * self.coef * r ** 2


def as_class_k(spec) -> ClassKappa:
    """Build a ClassKappa from a number, a dict ``{"kind", "coef"}`` or an instance."""
    if isinstance(spec, ClassKappa):
        return spec
    if isinstance(spec, (int, float)):
        return ClassKappa("linear", float(spec))
    if isinstance(spec, dict):
        return ClassKappa(spec.get("kind", "linear"), float(spec.get("coef", 1.0)))
    raise TypeError(f"cannot interpret {spec!r} as a class-K function")


# -- barrier leaves --------------------------------------------------------

def _coords(coords, what: str) -> np.ndarray:
    idx = np.asarray(list(coords), dtype=int)
    if idx.ndim != 1 or idx.size == 0 or np.any(idx < 0) or len(set(idx.tolist())) != idx.size:
        raise ValueError(f"bad {what} coordinate set {coords!r}")
    return idx


def quadratic_distance_barrier(center: Sequence[float], offset: float, coords: Sequence[int] | None = None) -> ScalarField:
    """``sum_k (x_k - c_k)^2 - offset`` over the selected state coordinates (0-based)."""
    if not offset > 0:
        raise ValueError("offset must be positive")
    c = np.asarray(center, dtype=float)
    idx = np.arange(c.size) if coords is None else _coords(coords, "state")
    if idx.size != c.size:
        raise ValueError("center and coords must have the same length")

    def value(x, u):
        d = x[..., idx] - c
        return np.einsum("...k,...k->...", d, d) - offset

    def grad_x(x, u):
        g = np.zeros(x.shape)
        g[..., idx] = 2.0 * (x[..., idx] - c)
        return np.broadcast_to(g, np.broadcast_shapes(x.shape[:-1], u.shape[:-1]) + x.shape[-1:]).copy()

    f = ScalarField(value, grad_x=grad_x, depends="x", name=f"dist({c.tolist()})")
    return f


def input_norm_barrier(bound: float, coords: Sequence[int] | None = None, n_u: int | None = None) -> ScalarField:
    """``bound - sum_{j in coords} u_j^2`` (coords 0-based, all inputs when omitted)."""
    if not bound > 0:
        raise ValueError("bound must be positive")
    idx = None if coords is None else _coords(coords, "input")
    if idx is not None and n_u is not None and np.any(idx >= n_u):
        raise ValueError(f"input coordinates {coords!r} exceed input dimension {n_u}")

    def value(x, u):
        uu = u if idx is None else u[..., idx]
        return bound - np.einsum("...k,...k->...", uu, uu)

    def grad_u(x, u):
        g = np.zeros(u.shape)
        if idx is None:
            g = -2.0 * u
        else:
            g[..., idx] = -2.0 * u[..., idx]
        return np.broadcast_to(g, np.broadcast_shapes(x.shape[:-1], u.shape[:-1]) + u.shape[-1:]).copy()

    f = ScalarField(value, grad_u=grad_u, depends="u", name=f"unorm({bound})")
    f.n_u = n_u
    return f


# -- stability leaf --------------------------------------------------------

@dataclass(frozen=True)
class ClfLeaf:
    """Lyapunov candidate ``V`` and decay rate ``P`` (both state-only fields)."""
    V: ScalarField
    P: ScalarField


def quadratic_clf(n: int, decay: float = 1.0, target=None) -> ClfLeaf:
    """``V = 0.5*|x - x*|^2`` with ``P = decay*|x - x*|^2``."""
    if not decay > 0:
        raise ValueError("decay must be positive")
    xs = np.zeros(n) if target is None else np.asarray(target, dtype=float)

    V = ScalarField(lambda x, u: 0.5 * np.sum((x - xs) ** 2, axis=-1),
                    grad_x=lambda x, u: np.broadcast_to(x - xs, x.shape).copy(), depends="x", name="V")
    P = ScalarField(lambda x, u: decay * np.sum((x - xs) ** 2, axis=-1),
                    grad_x=lambda x, u: 2.0 * decay * (x - xs), depends="x", name="P")
    return ClfLeaf(V, P)


def stability_field(clf: ClfLeaf, sys, fd: FdPolicy = DEFAULT_FD) -> ScalarField:
    """``h_V(x,u) = -grad V(x) . F(x,u) - P(x)``; non-negative iff V decays at least at rate P."""
    n = sys.n

    def value(x, u):
        if x.shape[-1] != n or u.shape[-1] != sys.m:
            raise ValueError(f"stability field expects x in R^{n}, u in R^{sys.m}")
        gV = clf.V.grad_x(x, u)
        return -np.einsum("...k,...k->...", gV, sys.F(x, u)) - clf.P.value(x, u)

    f = ScalarField(value, depends="xu", fd=fd, name="h_V")
    f.n_x, f.n_u = n, sys.m
    return f


def sontag_feedback(clf: ClfLeaf, sys, x) -> np.ndarray:
    """Universal stabilizing feedback for a control-affine system ``f(x) + g(x)u``."""
    if not sys.is_affine:
        raise ValueError(f"system {sys.name!r} is not control-affine")
    x = np.asarray(x, dtype=float)
    gV = clf.V.grad_x(x, np.zeros(sys.m))
    a = float(gV @ sys.drift(x))
    b = sys.input_matrix(x).T @ gV
    return sontag_from_lie(a, b)


def sontag_from_lie(a: float, b) -> np.ndarray:
    """Sontag's formula from the Lie derivatives ``a = L_f V`` and ``b = L_g V``."""
    b = np.atleast_1d(np.asarray(b, dtype=float))
    bb = float(b @ b)
    if bb == 0.0:
        return np.zeros_like(b)
    return -((a + np.sqrt(a * a + bb * bb)) / bb) * b
