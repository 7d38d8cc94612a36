"""Newton-Raphson flow: integral tracking controller ``udot = tau(x, u)``."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .systems import rollout


class NrFlowError(ArithmeticError):
    pass


@dataclass(frozen=True)
class NrConfig:
    """Prediction horizon, gain and numerics of the tracking controller.

    ``reference`` is a constant output vector or a callable ``r(t)``.
    ``substeps`` defaults to ``ceil(T / 0.01)`` rk4 steps.  The Jacobian probe
    for input ``j`` is ``jac_step * max(1, |u_j|)``.
    """
    horizon: float
    eta: float
    reference: object = None
    substeps: int | None = None
    damping: float = 1e-8
    jac_step: float = 1e-4

    def __post_init__(self):
        if not self.horizon > 0 or not self.eta > 0:
            raise ValueError("horizon T and gain eta must be positive")
        if self.substeps is not None and int(self.substeps) < 1:
            raise ValueError("substeps must be >= 1")
        if self.damping < 0 or not self.jac_step > 0:
            raise ValueError("damping must be >= 0 and the Jacobian step positive")

    @property
    def steps(self) -> int:
        return int(self.substeps) if self.substeps is not None else max(1, math.ceil(self.horizon / 0.01 - 1e-9))

    def r(self, t: float) -> np.ndarray:
        if self.reference is None:
            raise ValueError("no reference signal configured")
        if callable(self.reference):
            return np.asarray(self.reference(t), dtype=float)
        return np.asarray(self.reference, dtype=float)


def predict_output(sys, cfg: NrConfig, x, u) -> np.ndarray:
    """``c(xi(t+T))`` where ``xi`` starts at ``x`` and evolves with ``u`` frozen."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    shape = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
    xi = rollout(sys, np.broadcast_to(x, shape + x.shape[-1:]), u, cfg.horizon, cfg.steps)
    return sys.output(xi)


def prediction_jacobian(sys, cfg: NrConfig, x, u):
    """``(d, dd/du)`` with the Jacobian from column-wise central differences."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    m = u.shape[-1]
    shape = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
    u = np.broadcast_to(u, shape + (m,))
    h = cfg.jac_step * np.maximum(1.0, np.abs(u))            # (..., m)
    eye = np.eye(m).reshape((m,) + (1,) * len(shape) + (m,))
    du = eye * h[None]
    U = np.concatenate([u[None], u[None] + du, u[None] - du], axis=0)
    d_all = predict_output(sys, cfg, x[None], U)               # (2m+1, ..., m)
    d = d_all[0]
    cols = (d_all[1:m + 1] - d_all[m + 1:]) / (2.0 * np.moveaxis(h, -1, 0)[..., None])
    J = np.moveaxis(cols, 0, -1)                               # (..., m_out, m_in)
    return d, J


def nr_tau(sys, cfg: NrConfig, x, u, t: float = 0.0) -> np.ndarray:
    """``eta * s`` with ``(J^T J + lambda I) s = J^T (r(t+T) - d)``."""
    d, J = prediction_jacobian(sys, cfg, x, u)
    err = cfg.r(t + cfg.horizon) - d
    Jt = np.swapaxes(J, -1, -2)
    A = Jt @ J
    if cfg.damping > 0:
        A = A + cfg.damping * np.eye(A.shape[-1])
    else:
        s = np.linalg.svd(J, compute_uv=False)
        if np.any(s[..., -1] <= 1e-12 * np.maximum(s[..., 0], 1e-300)):
            raise NrFlowError("prediction Jacobian is singular; use a positive damping lambda")
    rhs = np.einsum("...ij,...j->...i", Jt, err)
    try:
        step = np.linalg.solve(A, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise NrFlowError("prediction Jacobian is singular; use a positive damping lambda") from exc
    tau = cfg.eta * step
    if not np.all(np.isfinite(tau)):
        raise NrFlowError("non-finite tracking update")
    return tau


def make_tau(sys, cfg: NrConfig, t: float = 0.0) -> Callable:
    """``tau(x, u)`` at a fixed time, the form used by the barrier chains."""
    return lambda x, u: nr_tau(sys, cfg, x, u, t)
