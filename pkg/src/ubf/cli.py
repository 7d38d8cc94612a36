"""Command-line front end.

Exit codes: 0 success, 1 failed assertions, 2 usage or configuration errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .fields import ScalarField
from .spec_lang import ConstraintLeaf, SpecParseError, parse_spec

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _fmt_set(s) -> str:
    return "{" + ",".join(str(i) for i in sorted(s)) + "}"


def _report_spec(spec, degrees: dict | None = None) -> None:
    print(f"specification: {spec.render()}")
    print(f"N = {spec.n_leaves}, L = {spec.n_levels}")
    print(f"P = {_fmt_set(spec.union_indices)}, Q = {_fmt_set(spec.intersection_indices)}")
    for op, idx in spec.runs:
        print(f"  level {op.symbol}: operators {_fmt_set(idx)}")
    for leaf in spec.leaves:
        deg = degrees.get(leaf.id, leaf.relative_degree) if degrees else leaf.relative_degree
        print(f"  leaf {leaf.id}: kind {leaf.kind}, relative degree {deg}")


def _placeholder_registry(text: str) -> dict:
    """Leaves for a bare specification string: every name gets a dummy barrier (``U*`` names are input leaves)."""
    import re

    names = set(re.findall(r"[A-Za-z_][A-Za-z0-9_]*", text))
    dummy = ScalarField(lambda x, u: np.zeros(np.shape(x)[:-1]), depends="x")
    return {n: ConstraintLeaf(n, "input" if n.startswith("U") else "state", dummy) for n in names}


def cmd_check(args) -> int:
    target = args.target
    if Path(target).is_file():
        cfg = load_config(target)
        _report_spec(cfg.spec)
        print(f"system: {cfg.system.name} (n = {cfg.system.n}, m = {cfg.system.m}), beta = {cfg.beta}, "
              f"chain depth m = {cfg.pi_depth}")
        return EXIT_OK
    if target.endswith(".json"):
        raise ConfigError(f"cannot read {target}: no such file")
    spec = parse_spec(target, _placeholder_registry(target))
    _report_spec(spec)
    return EXIT_OK


def cmd_run(args) -> int:
    from .sim import emit_outputs, run_experiment

    cfg = load_config(args.config)
    if args.strict is not None:
        cfg.strict = args.strict
    out = Path(args.out or cfg.output_dir or Path("runs") / cfg.name)

    def progress(k, K):
        if not args.quiet:
            print(f"\rstep {k}/{K}", end="", file=sys.stderr, flush=True)

    log = run_experiment(cfg, progress=progress)
    if not args.quiet:
        print(file=sys.stderr)
    emit_outputs(log, out, cfg, plots=not args.no_plots)
    s = log.summary
    for name, ok in s["checks"].items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(f"final distance to goal {s['final_distance_to_goal']:.4f}, QP infeasible steps "
          f"{s['qp_infeasible_count']}, runtime {s['runtime_s']:.2f} s")
    print(f"outputs written to {out}")
    return EXIT_OK if s["passed"] else EXIT_FAIL


def cmd_robinson(args) -> int:
    from .props import robinson
    from .qpsolve import robinson_demo, robinson_grid

    rows, ratios = robinson_demo(robinson_grid(5))
    print("x1        x2        minimizer                               max|err|")
    for r in rows:
        u = np.array2string(r["u"], precision=6, suppress_small=True)
        print(f"{r['x1']:<9.4f} {r['x2']:<9.5f} {u:<40s} {r['max_abs_err']:.2e}")
    for e, ratio in ratios.items():
        print(f"eps = {e:<5g} Lipschitz ratio {ratio:.6g} (1/eps = {1 / e:.6g})")
    results = robinson()
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def cmd_props(args) -> int:
    from .props import run_all

    configs = [load_config(c) for c in args.configs]
    results = run_all(configs, seed=args.seed or 0)
    for r in results:
        print(r.line())
    if args.json:
        print(json.dumps([{"name": r.name, "passed": r.passed, "measured": r.measured,
                           "threshold": r.threshold} for r in results], indent=2))
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ubf", description="Composed barrier-function safety filters: simulations and checks.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    r = sub.add_parser("run", help="run a closed-loop experiment from a JSON config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: runs/<name>)")
    r.add_argument("--seed", type=int, help="reserved; the pipeline is deterministic")
    r.add_argument("--strict", dest="strict", action="store_true", default=None,
                   help="fail on any QP infeasibility (default)")
    r.add_argument("--no-strict", dest="strict", action="store_false")
    r.add_argument("--no-plots", action="store_true")
    r.add_argument("--quiet", action="store_true")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check", help="validate a config file (or a bare spec string) and report its structure")
    c.add_argument("target")
    c.set_defaults(func=cmd_check)

    b = sub.add_parser("robinson", help="non-Lipschitz QP minimizer demo")
    b.set_defaults(func=cmd_robinson)

    s = sub.add_parser("props", help="run property suites")
    s.add_argument("configs", nargs="*", help="configs whose composed barriers get gradient checks")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_props)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, SpecParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
