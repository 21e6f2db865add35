"""Command-line entry point.

Exit status: 0 success, 1 a requested check failed, 2 configuration or
runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dt, scenario
from .ct import SimulationError
from .graph import GraphError, WeightedDigraph, spectrum
from .signals import SignalError
from .trajectory import atomic_write_json

log = logging.getLogger("dacsim")

EXIT_OK, EXIT_CHECK, EXIT_ERROR = 0, 1, 2


def _with_seed(cfg: scenario.ScenarioConfig, seed: int | None) -> scenario.ScenarioConfig:
    if seed is None:
        return cfg
    raw = cfg.to_dict()
    raw["seed"] = seed
    return scenario.parse_config(raw)


def cmd_run(args) -> int:
    cfg = _with_seed(scenario.load_config(args.config), args.seed)
    res = scenario.run(cfg, args.out_dir, check_bounds=args.check_bounds)
    m = res.metrics
    log.info("%s: tail sup error %.6g, time-averaged error %.6g", cfg.name, m["tail_sup_error"], m["time_avg_error"])
    print(json.dumps({"metrics": res.paths["metrics"], "passed": scenario.checks_passed(res)}))
    return EXIT_OK if scenario.checks_passed(res) else EXIT_CHECK


def cmd_verify_rates(args) -> int:
    graphs = None
    if args.graph:
        graphs = [WeightedDigraph.from_json(Path(args.graph).read_text())]
    rep = scenario.verify_rates(args.out_dir, n_graphs=args.n_graphs, seed=args.seed or 0, graphs=graphs)
    log.info("max |radius - rho| = %.3g over %d graphs", rep["max_abs_diff"], rep["graphs"])
    print(json.dumps({"max_abs_diff": rep["max_abs_diff"], "passed": rep["passed"]}))
    return EXIT_OK if rep["passed"] else EXIT_CHECK


def cmd_compare(args) -> int:
    if len(args.config) != 2:
        raise scenario.ConfigError("compare needs exactly two --config arguments")
    a, b = (_with_seed(scenario.load_config(c), args.seed) for c in args.config)
    rep = scenario.compare(a, b, args.out_dir)
    print(json.dumps(rep["metrics"], indent=2))
    return EXIT_OK


def cmd_design_gains(args) -> int:
    if args.graph:
        _, lam_hat = spectrum(WeightedDigraph.from_json(Path(args.graph).read_text()))
        l2, lN = float(lam_hat[1]), float(lam_hat[-1])
    elif args.lambda2 is not None and args.lambdaN is not None:
        l2, lN = args.lambda2, args.lambdaN
    else:
        raise scenario.ConfigError("design-gains needs --graph or both --lambda2 and --lambdaN")
    variants = scenario.VARIANTS if args.variant == "all" else (args.variant,)
    reports = [dt.gains(v, l2, lN).to_dict() for v in variants]
    if args.out_dir:
        atomic_write_json(Path(args.out_dir) / "gains.json", reports if len(reports) > 1 else reports[0])
    print(json.dumps(reports if len(reports) > 1 else reports[0], indent=2))
    return EXIT_OK


def cmd_design_prefilter(args) -> int:
    f = dt.design_prefilter(args.m, args.theta_c, args.q, args.tol, args.pole)
    theta = np.linspace(0.0, np.pi, 5)
    rep = {"m": args.m, "theta_c": args.theta_c, "q": args.q, **f.to_dict(),
           "passband_deviation": dt.passband_deviation(f, args.theta_c),
           "gain_at_nyquist": float(abs(f.response(np.pi))),
           "response_samples": {f"{t:.6g}": abs(complex(r)) for t, r in zip(theta, f.response(theta))}}
    if args.out_dir:
        atomic_write_json(Path(args.out_dir) / "prefilter.json", rep)
    print(json.dumps(rep, indent=2))
    return EXIT_OK


def _parse_param(text: str) -> tuple[str, list]:
    if "=" not in text:
        raise scenario.ConfigError(f"--param {text!r}: expected path=v1,v2,...")
    name, vals = text.split("=", 1)
    out = []
    for v in vals.split(","):
        try:
            out.append(json.loads(v))
        except json.JSONDecodeError:
            out.append(v)
    return name, out


def cmd_sweep(args) -> int:
    cfg = _with_seed(scenario.load_config(args.config), args.seed)
    params = dict(_parse_param(p) for p in args.param)
    summary = scenario.sweep(cfg, params, args.out_dir, jobs=args.jobs)
    failed = [p for p in summary["points"] if p["bound_check"] and p["bound_check"].get("applicable")
              and not p["bound_check"]["holds"]]
    print(json.dumps({"points": len(summary["points"]), "bound_failures": len(failed)}))
    return EXIT_CHECK if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dacsim", description="Dynamic average consensus simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("--config", required=True, help="scenario JSON (or the name of a bundled scenario)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--check-bounds", action="store_true", help="exit 1 if the analytic bound is violated")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify-rates", help="closed-loop radii versus optimal-rate formulas")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-graphs", type=int, default=50)
    p.add_argument("--graph", help="verify a single graph JSON instead of the random suite")
    p.set_defaults(func=cmd_verify_rates)

    p = sub.add_parser("compare", help="run two scenarios and rank them")
    p.add_argument("--config", action="append", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("design-gains", help="optimal discrete-time gains")
    p.add_argument("--variant", default="all", choices=("all",) + scenario.VARIANTS)
    p.add_argument("--graph")
    p.add_argument("--lambda2", type=float)
    p.add_argument("--lambdaN", type=float)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_design_gains)

    p = sub.add_parser("design-prefilter", help="unity-approximating prefilter")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--theta-c", type=float, required=True)
    p.add_argument("--q", type=int, default=3)
    p.add_argument("--tol", type=float, default=1e-2)
    p.add_argument("--pole", type=float)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_design_prefilter)

    p = sub.add_parser("sweep", help="parameter grid over one scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--param", action="append", required=True, help="dotted.path=v1,v2,...")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (scenario.ConfigError, GraphError, SignalError, dt.DesignError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_ERROR
    except (SimulationError, FloatingPointError, ValueError, KeyError, OSError) as exc:
        log.error("run failed: %s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
