"""Smooth composition of a specification into one barrier via log-sum-exp folds."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fields import ScalarField
from .spec_lang import Op, SpecExpr, crisp_fold


class CompositionError(ArithmeticError):
    pass


@dataclass(frozen=True)
class QpData:
    p: np.ndarray
    q: float | np.ndarray


def softmax_pair(a, b, beta):
    """``ln(e^{beta a} + e^{beta b}) / beta`` and the weight on ``a``."""
    m = np.maximum(a, b)
    ea = np.exp(beta * (a - m))
    eb = np.exp(beta * (b - m))
    s = ea + eb
    return m + np.log(s) / beta, ea / s


def softmin_pair(a, b, beta):
    """``-ln(e^{-beta a} + e^{-beta b}) / beta`` and the weight on ``a``."""
    m = np.minimum(a, b)
    ea = np.exp(-beta * (a - m))
    eb = np.exp(-beta * (b - m))
    s = ea + eb
    return m - np.log(s) / beta, ea / s


def fold_values(ops: Sequence[Op], values, beta: float, with_weights: bool = False):
    """Smooth left fold of leaf values (leaf axis first).

    With ``with_weights`` also returns the sensitivity ``dh/dh_i`` of the fold
    to every leaf, stacked along the leaf axis.
    """
    values = np.asarray(values, dtype=float)
    acc = values[0]
    weights = [np.ones_like(acc)] if with_weights else None
    for op, v in zip(ops, values[1:]):
        if op is Op.UNION:
            acc, wa = softmax_pair(acc, v, beta)
        else:
            acc, wa = softmin_pair(acc, v, beta)
        if with_weights:
            weights = [w * wa for w in weights]
            weights.append(1.0 - wa)
    if with_weights:
        return acc, np.stack(weights)
    return acc


def correction_factor(spec: SpecExpr) -> float:
    """Product of ``1/(run_length + 1)`` over union runs; 1 when there are none."""
    b = 1.0
    for k in spec.union_run_lengths:
        b /= (k + 1)
    return b


class ComposedUbf:
    """Composed barrier ``h(x, u)`` for a specification at sharpness ``beta``.

    ``leaf_fields`` optionally replaces each leaf's barrier with an effective
    field (for example the top of a relative-degree lifting chain).
    """

    def __init__(self, spec: SpecExpr, beta: float, leaf_fields: Sequence[ScalarField] | None = None):
        if not beta > 0:
            raise ValueError("beta must be positive")
        if spec.n_leaves < 1:
            raise ValueError("empty specification")
        self.spec = spec
        self.beta = float(beta)
        self.fields = list(leaf_fields) if leaf_fields is not None else [l.barrier for l in spec.leaves]
        if len(self.fields) != spec.n_leaves:
            raise ValueError("one effective field per leaf is required")
        self.correction = correction_factor(spec)
        self.offset = float(np.log(1.0 / self.correction) / self.beta)
        self.field = ScalarField(self.value, grad_x=lambda x, u: self.evaluate(x, u)[1],
                                 grad_u=lambda x, u: self.evaluate(x, u)[2], name="h")

    @property
    def n_folds(self) -> int:
        return self.spec.n_leaves - 1

    def leaf_values(self, x, u) -> np.ndarray:
        vals = np.stack([np.asarray(f.value(x, u), dtype=float) *
                         np.ones(np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1]))
                         for f in self.fields])
        if not np.all(np.isfinite(vals)):
            raise CompositionError("non-finite leaf value")
        return vals

    def value(self, x, u) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return fold_values(self.spec.ops, self.leaf_values(x, u), self.beta) - self.offset

    __call__ = value

    def crisp(self, x, u) -> np.ndarray:
        return crisp_fold(self.spec.ops, self.leaf_values(x, u))

    def evaluate(self, x, u):
        """``(h, grad_x h, grad_u h)`` with gradients propagated through the fold."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        vals = self.leaf_values(x, u)
        h, w = fold_values(self.spec.ops, vals, self.beta, with_weights=True)
        shape = vals.shape[1:]
        gx = np.zeros(shape + x.shape[-1:])
        gu = np.zeros(shape + u.shape[-1:])
        for wi, f in zip(w, self.fields):
            if "x" in f.depends:
                gx += wi[..., None] * f.grad_x(x, u)
            if "u" in f.depends:
                gu += wi[..., None] * f.grad_u(x, u)
        return h - self.offset, gx, gu


def compose(spec: SpecExpr, beta: float, leaf_fields: Sequence[ScalarField] | None = None) -> ComposedUbf:
    return ComposedUbf(spec, beta, leaf_fields)


def evaluate(ubf: ComposedUbf, x, u):
    return ubf.evaluate(x, u)


def qp_data(ubf: ComposedUbf, sys, tau, alpha, x, u) -> QpData:
    """``p = dh/du`` and ``q = dh/dx . F + dh/du . tau + alpha(h)``.

    ``tau`` is either the nominal input derivative at (x, u) or a callable
    ``tau(x, u)`` returning it.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    h, gx, gu = ubf.evaluate(x, u)
    t = tau(x, u) if callable(tau) else np.asarray(tau, dtype=float)
    q = (np.einsum("...k,...k->...", gx, sys.F(x, u)) + np.einsum("...k,...k->...", gu, t) + alpha(h))
    if not np.all(np.isfinite(q)):
        raise CompositionError("non-finite QP data")
    return QpData(gu, q if np.ndim(q) else float(q))
