"""Command-line front end: solve, bench, oracle and noise."""

import argparse
import json
import sys

from .automata import NoSolution
from .bench import (
    ENGINES,
    NoiseError,
    OracleInfeasible,
    ProblemError,
    apply_cyclic_deletion_noise,
    apply_digit_substitution_noise,
    bundled_dir,
    clean_loss,
    load_problem,
    load_problems,
    reports_csv,
    run_suite,
    save_problem,
    brute_force_optimum,
)
from .dsl import GrammarError, render, size_model
from .objective import Objective, get_loss
from .synthesis import (
    Deadline,
    InvariantError,
    SynthesisError,
    Timeout,
    synthesize,
    synthesize_cfta,
)

EXIT_OK, EXIT_USAGE, EXIT_FILE, EXIT_TIMEOUT, EXIT_INTERNAL = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


def _add_run_flags(p):
    p.add_argument("--engine", choices=ENGINES, default="afta")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--height-bound", type=int)
    p.add_argument("--loss")
    p.add_argument("--objective", choices=["lexicographic", "tradeoff"])
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--max-conjuncts", type=int)
    p.add_argument("--min-gain", type=float)
    p.add_argument("--timeout-ms", type=float)


def build_parser():
    parser = argparse.ArgumentParser(prog="robustsynth", description=__doc__)
    parser.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="synthesize a program for one problem file")
    solve.add_argument("problem")
    _add_run_flags(solve)
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--out", help="write the result as JSON here")

    bench = sub.add_parser("bench", help="run engines over a directory of problems, write CSV")
    bench.add_argument("directory", nargs="?", help="defaults to the bundled suite")
    _add_run_flags(bench)
    bench.set_defaults(engine=None)
    bench.add_argument("--engines", default=",".join(ENGINES), help="comma-separated engine list")
    bench.add_argument("--jobs", type=int, default=1)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", help="CSV path (stdout if omitted)")

    oracle = sub.add_parser("oracle", help="brute-force optimum by enumeration")
    oracle.add_argument("problem")
    oracle.add_argument("--height-bound", type=int)
    oracle.add_argument("--loss")
    oracle.add_argument("--objective", choices=["lexicographic", "tradeoff"])
    oracle.add_argument("--lambda", dest="lam", type=float)
    oracle.add_argument("--cap", type=int, default=200000)
    oracle.add_argument("--out")

    noise = sub.add_parser("noise", help="write a corrupted copy of a problem file")
    noise.add_argument("problem")
    noise.add_argument("--kind", choices=["cyclic-delete", "digit-sub"], required=True)
    noise.add_argument("--n", type=int, default=1)
    noise.add_argument("--fraction", type=float, default=0.95)
    noise.add_argument("--seed", type=int, default=0)
    noise.add_argument("--out", help="problem path (stdout if omitted)")

    for p in (solve, bench, oracle, noise):
        p.add_argument("--verbose", "-v", action="store_true", default=argparse.SUPPRESS)
    return parser


def _objective(args, problem):
    kind = args.objective or problem.objective.get("kind", "lexicographic")
    lam = args.lam if args.lam is not None else problem.objective.get("lambda", 1.0)
    try:
        return Objective(kind, float(lam))
    except ValueError as e:
        raise UsageError(str(e)) from None


def _loss(args, problem):
    try:
        return get_loss(args.loss or problem.loss)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _overrides(args):
    return dict(
        epsilon=args.epsilon,
        height_bound=args.height_bound,
        max_conjuncts=args.max_conjuncts,
        min_gain=args.min_gain,
    )


def _config(args, problem):
    try:
        return problem.synthesis_config(**_overrides(args))
    except ValueError as e:
        raise UsageError(str(e)) from None


def _load(path):
    try:
        return load_problem(path)
    except OSError as e:
        raise FileNotFoundError(f"cannot read {path}: {e.strerror}") from None
    except (json.JSONDecodeError, ProblemError) as e:
        raise ProblemError(f"bad problem file {path}: {e}") from None


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    except OSError as e:
        raise PermissionError(f"cannot write {out}: {e.strerror}") from None


def cmd_solve(args):
    problem = _load(args.problem)
    grammar = problem.make_grammar()
    fn, obj, config = _loss(args, problem), _objective(args, problem), _config(args, problem)
    deadline = Deadline(args.timeout_ms)
    verbose = getattr(args, "verbose", False)

    def show(rec):
        print(
            f"[{rec['iteration']}] states={rec['states']} bank={rec['bank_size']} "
            f"distance={rec['distance']} {rec['program']}",
            file=sys.stderr,
        )

    if args.engine == "cfta":
        res = synthesize_cfta(problem.examples, grammar, obj, fn, size_model(), config.height_bound, deadline)
        bank_size = None
    else:
        res = synthesize(
            problem.examples, grammar, config, obj=obj, fn=fn, deadline=deadline,
            on_iteration=show if verbose else None,
        )
        bank_size = len(res.bank)
    text = render(res.program)
    print(text)
    print(res.score)
    print(f"iterations={res.iterations} bank_size={'' if bank_size is None else bank_size} states={res.states}")
    cl = clean_loss(problem, res.program, fn)
    if cl is not None:
        print(f"clean_loss={cl:g}")
    if args.out:
        doc = {
            "problem": problem.name,
            "engine": args.engine,
            "program": text,
            "loss": res.score.loss if res.score.loss != float("inf") else "inf",
            "complexity": res.score.complexity,
            "iterations": res.iterations,
            "bank_size": bank_size,
            "states": res.states,
            "clean_loss": cl,
            "trace": json.loads(res.trace.to_json()) if res.trace is not None else None,
        }
        _emit(json.dumps(doc, indent=1) + "\n", args.out)
    return EXIT_OK


def cmd_bench(args):
    directory = args.directory or bundled_dir() / "suite"
    try:
        problems = load_problems(directory)
    except OSError as e:
        raise FileNotFoundError(f"cannot read {directory}: {e}") from None
    engines = [e.strip() for e in args.engines.split(",") if e.strip()]
    if args.engine:
        engines = [args.engine]
    bad = [e for e in engines if e not in ENGINES]
    if bad or not engines:
        raise UsageError(f"unknown engines {bad}")
    overrides = {k: v for k, v in _overrides(args).items() if v is not None}
    if args.loss or args.objective or args.lam is not None:
        for p in problems:
            if args.loss:
                _loss(args, p)
                p.loss = args.loss
            p.objective = _objective(args, p).to_json()
    reports = run_suite(problems, engines, args.timeout_ms, max(1, args.jobs), **overrides)
    if getattr(args, "verbose", False):
        for r in reports:
            print(f"{r.problem} {r.engine} {r.outcome} {r.program or r.error or ''}", file=sys.stderr)
    _emit(reports_csv(reports), args.out)
    return EXIT_OK


def cmd_oracle(args):
    problem = _load(args.problem)
    b = args.height_bound or problem.synthesis_config().height_bound
    score, witness = brute_force_optimum(problem, b, _loss(args, problem), _objective(args, problem), cap=args.cap)
    text = f"{render(witness)}\n{score}\n"
    _emit(text, args.out)
    if args.out:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_noise(args):
    problem = _load(args.problem)
    source = problem.clean_outputs if problem.clean_outputs is not None else problem.outputs
    try:
        if args.kind == "cyclic-delete":
            outputs = apply_cyclic_deletion_noise(source, args.n)
            meta = {"kind": args.kind, "n": args.n}
        else:
            outputs = apply_digit_substitution_noise(source, args.fraction, args.seed)
            meta = {"kind": args.kind, "fraction": args.fraction, "seed": args.seed}
    except NoiseError as e:
        raise UsageError(str(e)) from None
    noisy = problem.with_outputs(outputs, meta)
    _emit(json.dumps(noisy.to_json(), indent=1, ensure_ascii=False) + "\n", args.out)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "bench": cmd_bench, "oracle": cmd_oracle, "noise": cmd_noise}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    try:
        return COMMANDS[args.command](args)
    except (UsageError, GrammarError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ProblemError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FILE
    except Timeout as e:
        print(f"timeout: {e}", file=sys.stderr)
        return EXIT_TIMEOUT
    except (InvariantError, SynthesisError, NoSolution, OracleInfeasible) as e:
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
