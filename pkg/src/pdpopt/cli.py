"""
Command line interface.

    pdpopt run <config>            run an experiment config
    pdpopt check-config <config>   validate a config without running it
    pdpopt generate dsm|sparse ... -o <file>
    pdpopt compare <dir>           tabulate the traces in an output directory

Exit codes: 0 success, 1 validation failure, 2 runtime failure.
"""

import argparse
import json
import sys

from .errors import ConfigError, PDPError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _cmd_run(args):
    from .apps.experiment import load_config, run_experiment

    cfg = load_config(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    out = run_experiment(cfg, args.output)
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_check(args):
    from .apps.experiment import check_config

    ok, lines = check_config(args.config)
    print("\n".join(lines))
    return EXIT_OK if ok else EXIT_INVALID


def _cmd_generate(args):
    if args.family == "dsm":
        from .apps.dsm import generate_dsm_instance

        inst = generate_dsm_instance(args.N, args.T, args.seed, args.polyhedral)
        doc = {"format": "pdpopt-dsm/1", "instance": inst.to_dict()}
    else:
        from .apps.sparse import generate_sparse_regression
        from .families import problem_to_dict

        doc = problem_to_dict(generate_sparse_regression(args.N, args.K, args.M, args.seed, args.budget))
    with open(args.output, "w") as fh:
        json.dump(doc, fh)
    print(f"wrote {args.output}")
    return EXIT_OK


def _cmd_compare(args):
    from .apps.experiment import compare

    print(compare(args.directory))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="pdpopt", description="Distributed primal-dual perturbation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="output directory (overrides the config)")
    p.add_argument("-j", "--workers", type=int, help="worker threads per run")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("check-config", help="validate a config without running it")
    p.add_argument("config")
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("generate", help="write a generated instance to a JSON file")
    gen = p.add_subparsers(dest="family", required=True)
    g = gen.add_parser("dsm", help="demand-side management instance")
    g.add_argument("--N", type=int, default=20, help="customers")
    g.add_argument("--T", type=int, default=24, help="time slots")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--polyhedral", action="store_true", help="cap every customer at one full run")
    g.add_argument("-o", "--output", required=True)
    g = gen.add_parser("sparse", help="sparse regression instance")
    g.add_argument("--N", type=int, default=5, help="agents")
    g.add_argument("--K", type=int, default=4, help="coefficients per agent")
    g.add_argument("--M", type=int, default=40, help="measurements")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--budget", type=float, default=None, help="total l1 budget")
    g.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("compare", help="tabulate the traces in an output directory")
    p.add_argument("directory")
    p.set_defaults(func=_cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for msg in exc.problems:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (PDPError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
