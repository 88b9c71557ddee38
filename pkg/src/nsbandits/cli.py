"""Command-line entry point: ``nsbandits {run,derive-params,validate-env,gen-env}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


from .assumptions import minimal_significant_partition, validate_assumptions
from .env import EnvError, EnvironmentSpec, NoiseModel
from .harness import ConfigError, ExperimentError, RunConfig, atomic_write, build_environment, run_experiment
from .params import params_case_a, params_case_b, params_case_c, params_case_d

EXIT_OK = 0
EXIT_INVALID = 2


def _dump(doc) -> None:
    json.dump(doc, sys.stdout, sort_keys=True, indent=1)
    sys.stdout.write("\n")


def cmd_run(args) -> int:
    config = RunConfig.load(args.config)
    if args.workers is not None:
        config.workers = args.workers
    report = run_experiment(config)
    _dump({"name": report.name, "summary": report.aggregate(), "outputs": config.outputs})
    return EXIT_OK


def _need(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise ValueError(f"case {args.case} needs --{', --'.join(m.replace('_', '-') for m in missing)}")
    return [getattr(args, n) for n in names]


def cmd_derive(args) -> int:
    if args.case == "a":
        cp = params_case_a(*_need(args, "M"))
    elif args.case == "b":
        cp = params_case_b(*_need(args, "M_star", "gamma_star", "u_star", "K", "T"))
    elif args.case == "c":
        cp = params_case_c(*_need(args, "M_star", "alpha", "K", "T"))
    else:
        cp = params_case_d(*_need(args, "upsilon_star", "bstar", "K", "T"))
    _dump(cp.to_dict())
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        env = EnvironmentSpec.from_json(Path(args.spec).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {args.spec}: {exc}") from exc
    if args.change_points:
        report = validate_assumptions(env, args.change_points, args.bstar)
    else:
        report = minimal_significant_partition(env, args.bstar)
    doc = report.to_dict()
    if not args.evidence:
        doc.pop("evidence")
    _dump(doc)
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_gen(args) -> int:
    block = {"case": args.case, "seed": args.seed, "args": {"K": args.K, "T": args.T}}
    a = block["args"]
    if args.case == "a":
        a["M"] = _need(args, "M")[0]
    elif args.case == "b":
        a["M_star"], a["gamma_star"], a["u_star"] = _need(args, "M_star", "gamma_star", "u_star")
    elif args.case == "c":
        a["M_star"], a["alpha"] = _need(args, "M_star", "alpha")
    else:
        a["upsilon_star"], a["B_star"] = _need(args, "upsilon_star", "bstar")
    env = build_environment(block)
    if args.noise != "bernoulli" or args.sigma:
        env = env.with_noise(NoiseModel(args.noise, args.sigma))
    if args.mode:
        env = env.with_mode(args.mode)
    text = env.to_json() + "\n"
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _structural(p: argparse.ArgumentParser) -> None:
    p.add_argument("--case", choices="abcd", required=True)
    p.add_argument("--M", type=int)
    p.add_argument("--M-star", dest="M_star", type=int)
    p.add_argument("--gamma-star", dest="gamma_star", type=int)
    p.add_argument("--u-star", dest="u_star", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--upsilon-star", dest="upsilon_star", type=int)
    p.add_argument("--bstar", type=float)
    p.add_argument("--K", type=int)
    p.add_argument("--T", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nsbandits", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a seeded experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("derive-params", help="print (M, B*) for a structural case as JSON")
    _structural(p)
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("validate-env", help="check an environment against the structural assumptions")
    p.add_argument("--spec", required=True)
    p.add_argument("--bstar", type=float, required=True)
    p.add_argument("--change-points", type=int, nargs="+", help="partition to check (default: minimal one)")
    p.add_argument("--evidence", action="store_true", help="include per-arm interval evidence")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("gen-env", help="generate an environment for a structural case")
    _structural(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", choices=("zero", "bernoulli", "gaussian"), default="bernoulli")
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--mode", choices=("mean", "gap"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, EnvError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ExperimentError as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
