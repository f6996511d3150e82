"""Command-line entry point: ``noma-wf {solve,feasibility,sweep,verify}``.

Exit status is 0 on success, 2 when an instance is infeasible (or a
verification tolerance is missed), and 1 on any error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from . import allocator, harness, kernels, oracle

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2

log = logging.getLogger("noma_waterfill")


def _cmd_solve(args) -> int:
    ok = harness.solve_file(args.instance, args.out, eps=args.eps, max_iter=args.max_iter)
    return EXIT_OK if ok else EXIT_INFEASIBLE


def _cmd_feasibility(args) -> int:
    instance = harness.load_instance(args.instance)
    report = allocator.feasibility(instance)
    if report:
        doc = {"status": "feasible", "q_min_watt": list(report.q_min), "p_max_watt": instance.p_max}
    else:
        doc = harness.infeasibility_to_dict(report)
    harness.write_json(doc, args.out)
    return EXIT_OK if report else EXIT_INFEASIBLE


def _cmd_sweep(args) -> int:
    config = harness.load_config(args.config) if args.config else harness.ExperimentConfig()
    if args.seed is not None:
        config = replace(config, scenario=replace(config.scenario, seed=args.seed))
    if args.trials is not None:
        config = replace(config, trials=args.trials)
    out = args.out or config.output_path
    log.info("sweep %s over %d points, %d schemes, %d trials (kernels: %s)",
             config.sweep_variable, len(config.sweep_values), len(config.schemes), config.trials, kernels.BACKEND)
    result = harness.run_sweep(config)
    path = harness.emit_csv(result, out)
    log.info("wrote %s", path)
    return EXIT_OK


def _cmd_verify(args) -> int:
    trials = args.trials if args.trials is not None else 1000
    seed = args.seed if args.seed is not None else 0
    reports = oracle.agreement_suite(trials, seed, eps=args.eps, max_iter=args.max_iter)
    doc = {"instances": trials, "seed": seed, "kernels": kernels.BACKEND,
           "checks": [r.as_dict() for r in reports.values()]}
    harness.write_json(doc, args.out)
    return EXIT_OK if all(r.passed for r in reports.values()) else EXIT_INFEASIBLE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noma-wf", description="Optimal water-filling power allocation for multi-cluster NOMA.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, path_name, path_help, path_required=True):
        if path_required:
            p.add_argument(path_name, help=path_help)
        else:
            p.add_argument(path_name, nargs="?", help=path_help)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--trials", type=int, default=None)
        p.add_argument("--out", default=None, help="output path ('-' or omitted: stdout where applicable)")
        p.add_argument("--eps", type=float, default=allocator.DEFAULT_EPS)
        p.add_argument("--max-iter", type=int, default=allocator.DEFAULT_MAX_ITER)

    p = sub.add_parser("solve", help="solve a JSON problem instance")
    common(p, "instance", "instance document (JSON)")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("feasibility", help="check an instance against the minimum budgets")
    common(p, "instance", "instance document (JSON)")
    p.set_defaults(func=_cmd_feasibility)

    p = sub.add_parser("sweep", help="run a Monte Carlo sweep and write CSV")
    common(p, "config", "experiment config (TOML); defaults if omitted", path_required=False)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("verify", help="check the allocator against independent oracles")
    common(p, "config", "unused; accepted for interface symmetry", path_required=False)
    p.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (harness.InstanceFormatError, ValueError, OSError) as exc:
        print(f"noma-wf: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
