"""Command-line front end: ``qadb run|oracle|bench|encode|solve``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .io import PROBLEMS, SchemaError, load_instance
from .pipeline import RunOptions, bench, make_problem, run_oracle, run_pipeline
from .qubo import QuboModel
from .sampler import SampleSet, solve_exhaustive


def _add_sampler_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sampler", choices=("sa", "exhaustive"), default="sa")
    p.add_argument("--reads", type=int, default=1000)
    p.add_argument("--sweeps", type=int, default=200)
    p.add_argument("--t-initial", type=float, default=None)
    p.add_argument("--t-final", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1, help="threads for annealing reads")


def _add_problem_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--problem", choices=PROBLEMS, required=True)
    p.add_argument("--slots", type=int, default=None, help="slot count (tx); default greedy bound")
    p.add_argument("--penalty", type=float, default=None, help="hard-constraint weight; default auto")
    p.add_argument("--carbon-weight", type=float, default=1.0, help="carbon objective weight (cloud)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qadb", description="QUBO pipelines for database optimization problems")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="preprocess, encode, optimize and read out one instance")
    run.add_argument("instance")
    _add_problem_flags(run)
    _add_sampler_flags(run)
    run.add_argument("--oracle", action="store_true", help="also run the brute-force oracle")
    run.add_argument("--out", default=None)

    oracle = sub.add_parser("oracle", help="brute-force reference solution")
    oracle.add_argument("instance")
    _add_problem_flags(oracle)
    oracle.add_argument("--out", default=None)

    b = sub.add_parser("bench", help="CSV over every *.json instance in a directory")
    b.add_argument("directory")
    _add_problem_flags(b)
    _add_sampler_flags(b)
    b.add_argument("--repetitions", type=int, default=1)
    b.add_argument("--timings", action="store_true", help="append per-phase wall-clock columns")
    b.add_argument("--out", default=None)

    enc = sub.add_parser("encode", help="write the QUBO of an instance in text form")
    enc.add_argument("instance")
    _add_problem_flags(enc)
    enc.add_argument("--out", default=None)

    solve = sub.add_parser("solve", help="sample a QUBO text file")
    solve.add_argument("qubo")
    _add_sampler_flags(solve)
    solve.add_argument("--keep", type=int, default=10, help="samples to print")
    solve.add_argument("--out", default=None)
    return parser


def _options(args: argparse.Namespace) -> RunOptions:
    return RunOptions(
        sampler=getattr(args, "sampler", "sa"),
        reads=getattr(args, "reads", 1000),
        sweeps=getattr(args, "sweeps", 200),
        t_initial=getattr(args, "t_initial", None),
        t_final=getattr(args, "t_final", None),
        seed=getattr(args, "seed", 0),
        workers=getattr(args, "workers", 1),
        slots=getattr(args, "slots", None),
        penalty=getattr(args, "penalty", None),
        carbon_weight=getattr(args, "carbon_weight", 1.0),
        oracle=getattr(args, "oracle", False),
    )


def _emit(text: str, out: str | None) -> None:
    sys.stdout.write(text)
    if out:
        Path(out).write_text(text)


def _dispatch(args: argparse.Namespace) -> None:
    opts = _options(args)
    if args.command == "run":
        report = run_pipeline(args.problem, args.instance, opts)
        _emit(json.dumps(report.to_dict(), indent=2) + "\n", args.out)
    elif args.command == "oracle":
        report = run_oracle(args.problem, args.instance, opts)
        _emit(json.dumps(report.to_dict(), indent=2) + "\n", args.out)
    elif args.command == "bench":
        _emit(bench(args.problem, args.directory, args.repetitions, opts, args.timings), args.out)
    elif args.command == "encode":
        problem = make_problem(args.problem, load_instance(args.problem, args.instance))
        problem.preprocess(opts)
        _emit(problem.encode(opts).to_text(), args.out)
    elif args.command == "solve":
        model = QuboModel.from_text(Path(args.qubo).read_text())
        if args.sampler == "exhaustive":
            samples = solve_exhaustive(model, args.keep)
        else:
            samples = opts.make_sampler().sample(model)
        top = SampleSet(samples.samples[: args.keep], model.n)
        _emit(top.to_text(), args.out)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _dispatch(args)
    except (SchemaError, ValueError, IndexError, OSError) as exc:
        print(f"qadb: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
