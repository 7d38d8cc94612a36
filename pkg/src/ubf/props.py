"""Property suites shared by the ``props`` subcommand and the test-suite.

Every suite returns a ``SuiteResult``: a verdict, the measured quantity and
the threshold it was compared against.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import ScalarField
from .lse_compose import compose, fold_values
from .qpsolve import DenseQp, robinson_closed_form, robinson_demo, robinson_grid, solve_dense, solve_halfspace
from .spec_lang import ConstraintLeaf, Op, SpecExpr, crisp_fold, exact_membership


@dataclass
class SuiteResult:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name}: measured {self.measured:.6g} (threshold {self.threshold:.6g})"


def coordinate_leaf(i: int, n: int) -> ConstraintLeaf:
    """Leaf whose barrier is the i-th state coordinate; handy for spec-level tests."""
    def value(x, u):
        return x[..., i]

    def grad_x(x, u):
        g = np.zeros(x.shape)
        g[..., i] = 1.0
        return g

    return ConstraintLeaf(f"L{i + 1}", "state", ScalarField(value, grad_x=grad_x, depends="x", name=f"x{i + 1}"))


def random_spec(rng: np.random.Generator, max_leaves: int = 6) -> SpecExpr:
    n = int(rng.integers(1, max_leaves + 1))
    ops = tuple(Op.UNION if b else Op.INTERSECTION for b in rng.integers(0, 2, size=n - 1))
    return SpecExpr(tuple(coordinate_leaf(i, n) for i in range(n)), ops)


def lse_sandwich(n_specs: int = 50, n_tuples: int = 10_000, betas=(0.5, 1.0, 10.0, 100.0), seed: int = 0) -> SuiteResult:
    """``h <= crisp`` and ``crisp - h <= folds ln2 / beta`` on random specs and leaf values."""
    rng = np.random.default_rng(seed)
    worst_upper = -np.inf      # max of h - crisp (must be <= 0)
    worst_ratio = 0.0          # max of (crisp - h) / bound (must be <= 1)
    per_spec = max(1, n_tuples // n_specs)
    for _ in range(n_specs):
        spec = random_spec(rng)
        vals = rng.uniform(-5.0, 5.0, size=(spec.n_leaves, per_spec))
        # include exact ties, where the smooth folds are least accurate
        vals[:, : per_spec // 10] = vals[:1, : per_spec // 10]
        crisp = crisp_fold(spec.ops, vals)
        ubf = compose(spec, 1.0)
        for beta in betas:
            h = fold_values(spec.ops, vals, beta) - np.log(1.0 / ubf.correction) / beta
            worst_upper = max(worst_upper, float(np.max(h - crisp)))
            bound = (spec.n_leaves - 1) * np.log(2.0) / beta
            if bound > 0:
                worst_ratio = max(worst_ratio, float(np.max((crisp - h) / bound)))
            elif np.any(np.abs(crisp - h) > 1e-12):
                worst_ratio = np.inf
    eps = 1e-12
    ok = worst_upper <= eps and worst_ratio <= 1.0 + eps
    return SuiteResult("lse sandwich", ok, worst_ratio, 1.0,
                       {"max_h_minus_crisp": worst_upper, "max_gap_over_bound": worst_ratio})


def lse_halving(n_specs: int = 50, seed: int = 1, tol: float = 0.05) -> SuiteResult:
    """``crisp - h`` halves when ``beta`` doubles, over beta = 1, 2, ..., 1024.

    Measured at tied leaf values, where the gap is exactly proportional to
    ``1/beta``; at untied values the gap collapses faster than ``1/beta`` once
    ``beta`` exceeds the reciprocal leaf spacing.
    """
    rng = np.random.default_rng(seed)
    betas = 2.0 ** np.arange(11)
    worst = 0.0
    for _ in range(n_specs):
        spec = random_spec(rng)
        if spec.n_leaves < 2:
            continue
        a = rng.uniform(-5.0, 5.0)
        vals = np.full(spec.n_leaves, a)
        off = np.log(1.0 / compose(spec, 1.0).correction)
        gaps = np.array([a - (fold_values(spec.ops, vals, b) - off / b) for b in betas])
        if np.all(np.abs(gaps) < 1e-14):
            continue
        ratios = gaps[:-1] / gaps[1:]
        worst = max(worst, float(np.max(np.abs(ratios / 2.0 - 1.0))))
    return SuiteResult("lse halving", worst <= tol, worst, tol)


def sign_agreement(n_specs: int = 50, n_points: int = 2000, beta: float = 1e3, seed: int = 2) -> SuiteResult:
    """``sign(h)`` agrees with crisp membership wherever ``|crisp|`` clears ``10 folds ln2 / beta``."""
    rng = np.random.default_rng(seed)
    mismatches = 0
    checked = 0
    for _ in range(n_specs):
        spec = random_spec(rng)
        n = spec.n_leaves
        X = rng.uniform(-1.0, 1.0, size=(n_points, n))
        u = np.zeros(0)
        ubf = compose(spec, beta)
        h = ubf.value(X, np.zeros((n_points, 0)))
        crisp = ubf.crisp(X, np.zeros((n_points, 0)))
        margin = 10.0 * max(n - 1, 1) * np.log(2.0) / beta
        for k in np.flatnonzero(np.abs(crisp) > margin):
            checked += 1
            if (h[k] >= 0.0) != exact_membership(spec, X[k], u):
                mismatches += 1
    return SuiteResult("sign agreement", mismatches == 0, float(mismatches), 0.0, {"checked": checked})


def gradient_check(ubf, n_x: int, n_u: int, n_points: int = 100, seed: int = 3, step: float = 1e-6,
                   scale: float = 5.0, tol: float = 1e-5, name: str = "gradients") -> SuiteResult:
    """Analytic gradients of a composed barrier against central differences.

    Error per point is ``|g_fd - g| / max(|g|, 1)``.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_points):
        x = rng.uniform(-scale, scale, n_x)
        u = rng.uniform(-scale, scale, n_u)
        _, gx, gu = ubf.evaluate(x, u)
        z = np.concatenate([x, u])
        g = np.concatenate([gx, gu])
        fd = np.empty_like(z)
        for i in range(z.size):
            e = np.zeros_like(z)
            e[i] = step
            zp, zm = z + e, z - e
            fd[i] = (ubf.value(zp[:n_x], zp[n_x:]) - ubf.value(zm[:n_x], zm[n_x:])) / (2.0 * step)
        worst = max(worst, float(np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1.0)))
    return SuiteResult(name, worst <= tol, worst, tol)


def qp_oracle(n: int = 1000, seed: int = 4, tol: float = 1e-9) -> SuiteResult:
    """Closed-form halfspace projection against active-set enumeration."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        dim = int(rng.integers(1, 7))
        p = rng.normal(size=dim) * rng.choice([1e-2, 1.0, 1e2])
        q = float(rng.normal() * rng.choice([1e-2, 1.0, 1e2]))
        v = solve_halfspace(p, q)
        w = solve_dense(DenseQp(p[None, :], np.array([-q])))
        worst = max(worst, float(np.max(np.abs(v - w))))
    return SuiteResult("qp oracle", worst <= tol, worst, tol)


def qp_continuity(deltas=(1e-3, 1e-6), seed: int = 5, tol: float = 1e-12) -> SuiteResult:
    """``|v*(p, -delta)| = delta / |p|`` near the switching surface ``q = 0``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(20):
        p = rng.normal(size=int(rng.integers(1, 7)))
        for d in deltas:
            v = solve_halfspace(p, -d)
            worst = max(worst, abs(float(np.linalg.norm(v)) - d / float(np.linalg.norm(p))))
    return SuiteResult("qp continuity", worst <= tol, worst, tol)


def robinson(eps=(0.1, 0.05, 0.01), tol_u: float = 1e-8, tol_ratio: float = 0.01) -> list[SuiteResult]:
    rows, ratios = robinson_demo(robinson_grid(5), eps)
    err = max(r["max_abs_err"] for r in rows)
    rel = max(abs(ratios[e] * e - 1.0) for e in eps)
    return [SuiteResult("robinson minimizer", err <= tol_u, err, tol_u),
            SuiteResult("robinson lipschitz ratio", rel <= tol_ratio, rel, tol_ratio,
                        {str(e): ratios[e] for e in eps})]


def run_all(configs=(), seed: int = 0) -> list[SuiteResult]:
    """Cheap default suites plus gradient checks for each given RunConfig."""
    from .sim import build_problem

    out = [lse_sandwich(seed=seed), lse_halving(seed=seed + 1), sign_agreement(seed=seed + 2),
           qp_oracle(seed=seed + 4), qp_continuity(seed=seed + 5)]
    out += robinson()
    for cfg in configs:
        prob = build_problem(cfg)
        out.append(gradient_check(prob.ubf, cfg.system.n, cfg.system.m, seed=seed + 3,
                                  name=f"gradients [{cfg.name}]"))
    return out


__all__ = ["SuiteResult", "coordinate_leaf", "random_spec", "lse_sandwich", "lse_halving", "sign_agreement",
           "gradient_check", "qp_oracle", "qp_continuity", "robinson", "run_all", "robinson_closed_form"]
