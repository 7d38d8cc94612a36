"""Closed-loop simulation: ``xdot = F(x, u)``, ``udot = tau + v*``, with v* from the barrier QP."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .fields import quadratic_clf, sontag_feedback
from .hocomp import PiChain, build_phi_chain
from .lse_compose import ComposedUbf, compose
from .nrflow import NrConfig, make_tau, nr_tau
from .qpsolve import QpInfeasible, solve_halfspace

INVARIANCE_TOL = 1e-6


@dataclass
class Problem:
    """Everything the control loop needs, assembled from a RunConfig."""
    cfg: RunConfig
    ubf: ComposedUbf
    chain: PiChain
    nr: NrConfig
    phi_chains: dict


def build_problem(cfg: RunConfig) -> Problem:
    sys = cfg.system
    fields, phi_chains = [], {}
    for leaf in cfg.spec.leaves:
        if leaf.relative_degree > 1:
            ch = build_phi_chain(leaf, sys, cfg.phi_alphas[leaf.id])
            phi_chains[leaf.id] = ch
            fields.append(ch.effective)
        else:
            fields.append(leaf.barrier)
    ubf = compose(cfg.spec, cfg.beta, fields)
    nr = NrConfig(cfg.horizon_T, cfg.eta, reference=cfg.goal_output, substeps=cfg.substeps,
                  damping=cfg.damping, jac_step=cfg.jacobian_step)
    chain = PiChain(ubf, sys, make_tau(sys, nr), cfg.pi_alphas, cfg.pi_depth, cfg.terminal_alpha, cfg.fd_steps)
    return Problem(cfg, ubf, chain, nr, phi_chains)


@dataclass
class SimLog:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    tau: np.ndarray
    pi: np.ndarray            # (steps, depth + 1): Pi^0 = h, Pi^1, ...
    leaves: np.ndarray        # (steps, N) raw leaf barrier values
    leaf_ids: list
    infeasible_steps: list = field(default_factory=list)
    runtime: float = 0.0
    summary: dict = field(default_factory=dict)

    @property
    def h(self) -> np.ndarray:
        return self.pi[:, 0]

    @property
    def unorm(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.u, self.u)

    def __len__(self):
        return len(self.t)


def initial_input(cfg: RunConfig) -> np.ndarray:
    sys = cfg.system
    if isinstance(cfg.u0, np.ndarray):
        return cfg.u0.copy()
    if cfg.u0 == "sontag":
        goal_state = np.zeros(sys.n)
        goal_state[list(sys.position)] = cfg.goal_position
        clf = quadratic_clf(sys.n, 1.0, goal_state)
        return sontag_feedback(clf, sys, cfg.x0)
    return np.zeros(sys.m)


def run_experiment(cfg: RunConfig, problem: Problem | None = None, progress=None) -> SimLog:
    """Forward-Euler closed loop for ``floor(duration/dt)`` steps (plus the initial record)."""
    prob = problem or build_problem(cfg)
    sys = cfg.system
    K = cfg.n_steps
    depth = prob.chain.depth
    x = cfg.x0.astype(float).copy()
    u = initial_input(cfg)
    X = np.empty((K + 1, sys.n))
    U = np.empty((K + 1, sys.m))
    V = np.empty((K + 1, sys.m))
    TAU = np.empty((K + 1, sys.m))
    PI = np.empty((K + 1, depth + 1))
    infeasible = []
    t0 = time.perf_counter()
    for k in range(K + 1):
        t = k * cfg.dt
        chain = prob.chain.with_tau(make_tau(sys, prob.nr, t))
        qd, vals, tau = chain.qp_data(x, u, with_values=True)
        try:
            v = solve_halfspace(qd.p, qd.q)
        except QpInfeasible:
            infeasible.append(k)
            v = np.zeros(sys.m)
        X[k], U[k], V[k], TAU[k], PI[k] = x, u, v, tau, vals
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
            raise FloatingPointError(f"non-finite state at step {k}")
        if k < K:
            dx = sys.F(x, u)
            x = x + cfg.dt * dx
            u = u + cfg.dt * (tau + v)
        if progress is not None and k % 1000 == 0:
            progress(k, K)
    runtime = time.perf_counter() - t0
    T = np.arange(K + 1) * cfg.dt
    leaves = np.stack([np.asarray(l.barrier.value(X, U), dtype=float) * np.ones(K + 1)
                       for l in cfg.spec.leaves], axis=1)
    log = SimLog(T, X, U, V, TAU, PI, leaves, [l.id for l in cfg.spec.leaves], infeasible, runtime)
    log.summary = summarize(cfg, log)
    return log


def summarize(cfg: RunConfig, log: SimLog) -> dict:
    sys = cfg.system
    pos = log.x[-1, list(sys.position)]
    dist = float(np.linalg.norm(pos - cfg.goal_position))
    leaf_min = {lid: float(log.leaves[:, i].min()) for i, lid in enumerate(log.leaf_ids)}
    pi_min = {f"Pi{i}": float(log.pi[:, i].min()) for i in range(log.pi.shape[1])}
    pi_init = {f"Pi{i}": float(log.pi[0, i]) for i in range(log.pi.shape[1])}
    checks = {
        "no_infeasible_qp": len(log.infeasible_steps) == 0 or not cfg.strict,
        "leaves_nonnegative": all(v >= 0.0 for v in leaf_min.values()),
    }
    if all(v > 0 for v in pi_init.values()):
        checks["chain_invariant"] = all(v >= -INVARIANCE_TOL for v in pi_min.values())
    if cfg.goal_tolerance is not None:
        checks["goal_reached"] = dist <= float(cfg.goal_tolerance)
    return {
        "name": cfg.name,
        "system": sys.name,
        "specification": cfg.spec.render(),
        "steps": len(log.t),
        "dt": cfg.dt,
        "duration": cfg.duration,
        "runtime_s": round(log.runtime, 3),
        "qp_infeasible_count": len(log.infeasible_steps),
        "min_leaf": leaf_min,
        "min_chain": pi_min,
        "initial_chain": pi_init,
        "max_input_norm_sq": float(log.unorm.max()) if len(log.t) else 0.0,
        "final_position": pos.tolist(),
        "goal_position": cfg.goal_position.tolist(),
        "final_distance_to_goal": dist,
        "checks": checks,
        "passed": all(checks.values()),
    }


# -- outputs -----------------------------------------------------------------

def _write_csv(path: Path, header: list, rows: np.ndarray):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) for v in r])


def emit_outputs(log: SimLog, out_dir, cfg: RunConfig | None = None, plots: bool = True) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = log.x.shape[1]
    m = log.u.shape[1]
    t = log.t[:, None]
    files = []

    def emit(name, header, data):
        p = out / name
        _write_csv(p, header, data)
        files.append(p)

    emit("trajectory.csv", ["time"] + [f"x{i + 1}" for i in range(n)], np.hstack([t, log.x]))
    emit("control_inputs.csv", ["time"] + [f"u{i + 1}" for i in range(m)], np.hstack([t, log.u]))
    emit("control_input_norm.csv", ["time", "control_input_norm"], np.hstack([t, log.unorm[:, None]]))
    depth = log.pi.shape[1] - 1
    emit("ubfs.csv", ["time", "h"] + [f"Pi{i}" for i in range(1, depth + 1)], np.hstack([t, log.pi]))
    emit("leaves.csv", ["time"] + list(log.leaf_ids), np.hstack([t, log.leaves]))
    emit("auxiliary_inputs.csv", ["time"] + [f"v{i + 1}" for i in range(m)] + [f"tau{i + 1}" for i in range(m)],
         np.hstack([t, log.v, log.tau]))
    p = out / "summary.json"
    p.write_text(json.dumps(log.summary, indent=2, sort_keys=True) + "\n")
    files.append(p)
    if plots and len(log.t):
        files += _plots(log, out, cfg)
    return files


def _plots(log: SimLog, out: Path, cfg: RunConfig | None) -> list[Path]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "ubf"
    meta = {"Date": None}
    files = []

    fig, ax = plt.subplots(figsize=(5, 5))
    i, j = 0, 1
    ax.plot(log.x[:, i], log.x[:, j], lw=1.5, label="trajectory")
    if cfg is not None:
        for lid, d in cfg.leaf_defs.items():
            if d.get("barrier") == "quadratic_distance":
                c = d["center"]
                ax.add_patch(plt.Circle((c[0], c[1]), np.sqrt(d["offset"]), color="tab:red", alpha=0.35))
                ax.annotate(lid, (c[0], c[1]), ha="center", va="center", fontsize=8)
        ax.plot(*cfg.goal_position[:2], marker="*", ms=12, color="tab:green", ls="none", label="goal")
    ax.plot(log.x[0, i], log.x[0, j], "ko", ms=4, label="start")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best", fontsize=8)
    files.append(out / "trajectory.svg")
    fig.savefig(files[-1], metadata=meta)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot(log.t, log.unorm)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("|u|^2")
    fig.tight_layout()
    files.append(out / "control_input_norm.svg")
    fig.savefig(files[-1], metadata=meta)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot(log.t, log.h, label="h")
    ax.axhline(0.0, color="k", lw=0.5)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("h(x,u)")
    fig.tight_layout()
    files.append(out / "ubf.svg")
    fig.savefig(files[-1], metadata=meta)
    plt.close(fig)
    return files
