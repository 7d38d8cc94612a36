"""Dynamics models and fixed-step integrators."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class SystemModel:
    """``xdot = F(x, u)`` with output map ``y = c(x)``; everything batched over leading axes.

    Control-affine models also carry ``drift`` f(x) and ``input_matrix`` g(x).
    """
    name: str
    n: int
    m: int
    F: Callable[[np.ndarray, np.ndarray], np.ndarray]
    output: Callable[[np.ndarray], np.ndarray]
    params: dict = field(default_factory=dict)
    drift: Callable | None = None
    input_matrix: Callable | None = None
    position: tuple[int, ...] = (0, 1)  # state coordinates holding the position

    def __post_init__(self):
        y = self.output(np.zeros(self.n))
        if np.shape(y) != (self.m,):
            raise ValueError(f"{self.name}: output dimension {np.shape(y)} must equal input dimension {self.m}")

    @property
    def is_affine(self) -> bool:
        return self.drift is not None and self.input_matrix is not None

    def __call__(self, x, u):
        return self.F(x, u)


def single_integrator() -> SystemModel:
    def F(x, u):
        return np.broadcast_to(u, np.broadcast_shapes(x.shape, u.shape)).copy()

    return SystemModel("single_integrator", 2, 2, F, lambda x: np.array(x, dtype=float, copy=True),
                       drift=lambda x: np.zeros(2), input_matrix=lambda x: np.eye(2))


def double_integrator() -> SystemModel:
    g = np.vstack([np.zeros((2, 2)), np.eye(2)])

    def F(x, u):
        shape = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
        out = np.empty(shape + (4,))
        out[..., :2] = x[..., 2:4]
        out[..., 2:] = u
        return out

    return SystemModel("double_integrator", 4, 2, F, lambda x: np.array(x[..., :2], dtype=float),
                       drift=lambda x: np.concatenate([x[2:4], np.zeros(2)]), input_matrix=lambda x: g)


@dataclass(frozen=True)
class QuadrotorParams:
    mass: float = 1.0
    inertia: tuple[float, float, float] = (0.01, 0.01, 0.02)
    gravity: float = 9.81

    def __post_init__(self):
        if self.mass <= 0 or self.gravity <= 0 or min(self.inertia) <= 0 or len(self.inertia) != 3:
            raise ValueError("quadrotor mass, gravity and inertia must be positive")


def rotation_zyx(angles: np.ndarray) -> np.ndarray:
    """Body-to-world rotation ``Rz(psi) Ry(theta) Rx(phi)`` for angles ``(phi, theta, psi)``."""
    angles = np.asarray(angles, dtype=float)
    cf, sf = np.cos(angles[..., 0]), np.sin(angles[..., 0])
    ct, st = np.cos(angles[..., 1]), np.sin(angles[..., 1])
    cp, sp = np.cos(angles[..., 2]), np.sin(angles[..., 2])
    R = np.empty(angles.shape[:-1] + (3, 3))
    R[..., 0, 0] = cp * ct
    R[..., 0, 1] = cp * st * sf - sp * cf
    R[..., 0, 2] = cp * st * cf + sp * sf
    R[..., 1, 0] = sp * ct
    R[..., 1, 1] = sp * st * sf + cp * cf
    R[..., 1, 2] = sp * st * cf - cp * sf
    R[..., 2, 0] = -st
    R[..., 2, 1] = ct * sf
    R[..., 2, 2] = ct * cf
    return R


def quadrotor(params: QuadrotorParams | None = None) -> SystemModel:
    """12-state rigid-body quadrotor.

    State: position (x, y, z), ZYX Euler angles (phi, theta, psi), world-frame
    velocity, body angular rate.  Input: total thrust and three body torques.
    Output: (x, y, z, psi) so the prediction Jacobian is square.
    """
    p = params or QuadrotorParams()
    I = np.asarray(p.inertia, dtype=float)
    mass, g = float(p.mass), float(p.gravity)

    def F(x, u):
        shape = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
        x = np.broadcast_to(x, shape + (12,))
        u = np.broadcast_to(u, shape + (4,))
        phi, th = x[..., 3], x[..., 4]
        w = x[..., 9:12]
        sf, cf = np.sin(phi), np.cos(phi)
        ct, tt = np.cos(th), np.tan(th)
        out = np.empty(shape + (12,))
        out[..., 0:3] = x[..., 6:9]
        # Euler angle rates from body rates (ZYX)
        out[..., 3] = w[..., 0] + sf * tt * w[..., 1] + cf * tt * w[..., 2]
        out[..., 4] = cf * w[..., 1] - sf * w[..., 2]
        out[..., 5] = (sf * w[..., 1] + cf * w[..., 2]) / ct
        # thrust along body z: third column of R
        sp, cp = np.sin(x[..., 5]), np.cos(x[..., 5])
        st = np.sin(th)
        a = u[..., 0] / mass
        out[..., 6] = a * (cp * st * cf + sp * sf)
        out[..., 7] = a * (sp * st * cf - cp * sf)
        out[..., 8] = a * ct * cf - g
        Iw = w * I
        out[..., 9:12] = (u[..., 1:4] - np.cross(w, Iw)) / I
        return out

    def output(x):
        return np.array(x[..., [0, 1, 2, 5]], dtype=float)

    return SystemModel("quadrotor", 12, 4, F, output,
                       params={"mass": mass, "inertia": I.tolist(), "gravity": g}, position=(0, 1, 2))


SYSTEMS = {
    "single_integrator": lambda **kw: single_integrator(),
    "double_integrator": lambda **kw: double_integrator(),
    "quadrotor": lambda **kw: quadrotor(QuadrotorParams(**kw)),
}


def make_system(name: str, params: dict | None = None) -> SystemModel:
    if name not in SYSTEMS:
        raise ValueError(f"unknown system {name!r}; choose from {sorted(SYSTEMS)}")
    params = dict(params or {})
    if "inertia" in params:
        params["inertia"] = tuple(params["inertia"])
    return SYSTEMS[name](**params)


class IntegrationError(ArithmeticError):
    pass


def _rk4(F, x, u, h):
    k1 = F(x, u)
    k2 = F(x + 0.5 * h * k1, u)
    k3 = F(x + 0.5 * h * k2, u)
    k4 = F(x + h * k3, u)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_step(sys, x, u, dt: float, scheme: str = "euler") -> np.ndarray:
    """One explicit step of ``xdot = F(x, u)`` with ``u`` held constant."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if dt == 0:
        return x.copy()
    F = sys.F if hasattr(sys, "F") else sys
    if scheme == "euler":
        dx = F(x, u)
        if not np.all(np.isfinite(dx)):
            raise IntegrationError("non-finite state derivative")
        return x + dt * dx
    if scheme == "rk4":
        out = _rk4(F, x, u, dt)
        if not np.all(np.isfinite(out)):
            raise IntegrationError("non-finite state derivative")
        return out
    raise ValueError(f"unknown integration scheme {scheme!r}")


def rollout(sys, x, u, horizon: float, substeps: int) -> np.ndarray:
    """State after ``horizon`` seconds of rk4 with constant ``u`` (batched)."""
    F = sys.F if hasattr(sys, "F") else sys
    h = horizon / substeps
    x = np.asarray(x, dtype=float)
    for _ in range(substeps):
        x = _rk4(F, x, u, h)
    if not np.all(np.isfinite(x)):
        raise IntegrationError("non-finite state in horizon prediction")
    return x
