"""Run configuration: JSON file -> assembled problem.

Coordinates in configuration files are 1-based; the Python API is 0-based.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fields import as_class_k, input_norm_barrier, quadratic_clf, quadratic_distance_barrier, stability_field
from .spec_lang import ConstraintLeaf, SpecExpr, parse_spec
from .systems import SystemModel, make_system


class ConfigError(ValueError):
    pass


KNOWN_KEYS = {
    "name", "system", "system_params", "specification", "leaves", "beta", "horizon_T", "eta", "lambda",
    "substeps", "jacobian_step", "m", "class_k", "fd_steps", "x0", "u0", "goal", "dt", "duration",
    "strict", "stability", "goal_tolerance", "output_dir", "description",
}


@dataclass
class RunConfig:
    name: str
    system: SystemModel
    spec: SpecExpr
    leaf_defs: dict
    beta: float
    horizon_T: float
    eta: float
    damping: float
    substeps: int | None
    jacobian_step: float
    pi_depth: int
    pi_alphas: list
    terminal_alpha: object
    phi_alphas: dict
    fd_steps: tuple | None
    x0: np.ndarray
    u0: object
    goal_output: np.ndarray
    goal_position: np.ndarray
    dt: float
    duration: float
    strict: bool = True
    goal_tolerance: float | None = None
    stability: dict | None = None
    output_dir: str | None = None
    raw: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return int(np.floor(self.duration / self.dt + 1e-9))


def _require(d: dict, key: str):
    if key not in d:
        raise ConfigError(f"missing required key {key!r}")
    return d[key]


def _positive(d: dict, key: str, default=None) -> float:
    v = d.get(key, default)
    if v is None:
        raise ConfigError(f"missing required key {key!r}")
    try:
        v = float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{key!r} must be a number") from None
    if not v > 0:
        raise ConfigError(f"{key!r} must be positive")
    return v


def _zero_based(coords, what: str):
    if coords is None:
        return None
    if not isinstance(coords, list) or not coords or any(not isinstance(c, int) or c < 1 for c in coords):
        raise ConfigError(f"{what} coords must be a non-empty list of 1-based integers")
    return [c - 1 for c in coords]


def build_leaf(name: str, d: dict, system: SystemModel) -> ConstraintLeaf:
    kind = d.get("kind", "state")
    barrier = d.get("barrier")
    try:
        if barrier == "quadratic_distance":
            center = _require(d, "center")
            coords = _zero_based(d.get("coords"), f"leaf {name!r}")
            if coords is not None and max(coords) >= system.n:
                raise ConfigError(f"leaf {name!r}: coords exceed state dimension {system.n}")
            if coords is None and len(center) > system.n:
                raise ConfigError(f"leaf {name!r}: center longer than the state")
            f = quadratic_distance_barrier(center, float(_require(d, "offset")), coords)
        elif barrier == "input_norm":
            coords = _zero_based(d.get("coords"), f"leaf {name!r}")
            f = input_norm_barrier(float(_require(d, "bound")), coords, n_u=system.m)
        else:
            raise ConfigError(f"leaf {name!r}: unknown barrier {barrier!r}")
        return ConstraintLeaf(name, kind, f, int(d.get("m_i", 1)))
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"leaf {name!r}: {exc}") from None


def from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(raw) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    try:
        system = make_system(_require(raw, "system"), raw.get("system_params"))
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None

    leaves_raw = _require(raw, "leaves")
    if not isinstance(leaves_raw, dict) or not leaves_raw:
        raise ConfigError("'leaves' must be a non-empty object")
    registry = {name: build_leaf(name, d, system) for name, d in leaves_raw.items()}

    stab_leaf = None
    stab = raw.get("stability")
    if stab is not None:
        target = stab.get("target")
        clf = quadratic_clf(system.n, float(stab.get("decay", 1.0)), target)
        stab_leaf = ConstraintLeaf(stab.get("id", "SV"), "stability", stability_field(clf, system))
    try:
        spec = parse_spec(_require(raw, "specification"), registry, stability=stab_leaf)
    except ValueError as exc:
        raise ConfigError(f"specification: {exc}") from None

    ck = raw.get("class_k", {})
    pi_depth = int(raw.get("m", 0))
    if not 0 <= pi_depth <= 2:
        raise ConfigError("chain depth 'm' must be 0, 1 or 2")
    try:
        pi_alphas = [as_class_k(a) for a in ck.get("pi", [1.0] * pi_depth)]
        terminal = as_class_k(ck.get("terminal", 1.0))
        phi_alphas = {}
        for leaf in spec.leaves:
            mi = leaf.relative_degree
            given = leaves_raw.get(leaf.id, {}).get("alphas", ck.get("phi", [1.0] * (mi - 1)))
            if isinstance(given, (int, float)):
                given = [given] * (mi - 1)
            phi_alphas[leaf.id] = [as_class_k(a) for a in given][: mi - 1]
            if len(phi_alphas[leaf.id]) != mi - 1:
                raise ConfigError(f"leaf {leaf.id!r} needs {mi - 1} class-K coefficients")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"class_k: {exc}") from None
    if len(pi_alphas) != pi_depth:
        raise ConfigError(f"class_k.pi must list {pi_depth} functions for chain depth {pi_depth}")

    x0 = np.asarray(_require(raw, "x0"), dtype=float)
    if x0.shape != (system.n,):
        raise ConfigError(f"x0 must have {system.n} entries")
    u0 = raw.get("u0", "zero")
    if isinstance(u0, list):
        u0 = np.asarray(u0, dtype=float)
        if u0.shape != (system.m,):
            raise ConfigError(f"u0 must have {system.m} entries")
    elif u0 not in ("zero", "sontag"):
        raise ConfigError("u0 must be 'zero', 'sontag' or a list")
    if isinstance(u0, str) and u0 == "sontag" and not system.is_affine:
        raise ConfigError("u0 = 'sontag' needs a control-affine system")

    goal = np.asarray(_require(raw, "goal"), dtype=float)
    if goal.shape == (system.n,):
        goal_output = system.output(goal)
        goal_position = goal[list(system.position)]
    elif goal.shape == (system.m,):
        goal_output = goal
        goal_position = goal[: len(system.position)]
    else:
        raise ConfigError(f"goal must have {system.n} (state) or {system.m} (output) entries")

    dt = _positive(raw, "dt")
    duration = float(raw.get("duration", 0.0))
    if duration < 0:
        raise ConfigError("duration must be non-negative")
    substeps = raw.get("substeps")
    if substeps is not None and (not isinstance(substeps, int) or substeps < 1):
        raise ConfigError("substeps must be a positive integer")
    damping = float(raw.get("lambda", 1e-8))
    if damping < 0:
        raise ConfigError("lambda must be non-negative")

    # start strictly inside every state leaf
    for leaf in spec.leaves:
        if leaf.kind == "state":
            h0 = float(leaf.barrier.value(x0, np.zeros(system.m)))
            if not h0 > 0:
                raise ConfigError(f"x0 is not strictly inside leaf {leaf.id!r} (h = {h0:.6g})")

    fd_steps = raw.get("fd_steps")
    return RunConfig(
        name=raw.get("name", system.name), system=system, spec=spec, leaf_defs=leaves_raw,
        beta=_positive(raw, "beta"), horizon_T=_positive(raw, "horizon_T"), eta=_positive(raw, "eta"),
        damping=damping, substeps=substeps, jacobian_step=_positive(raw, "jacobian_step", 1e-4),
        pi_depth=pi_depth, pi_alphas=pi_alphas, terminal_alpha=terminal, phi_alphas=phi_alphas,
        fd_steps=tuple(fd_steps) if fd_steps is not None else None,
        x0=x0, u0=u0, goal_output=goal_output, goal_position=goal_position, dt=dt, duration=duration,
        strict=bool(raw.get("strict", True)), goal_tolerance=raw.get("goal_tolerance"),
        stability=stab, output_dir=raw.get("output_dir"), raw=raw,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return from_dict(raw)
