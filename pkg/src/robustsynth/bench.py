"""Benchmark problems, noise injection, the brute-force oracle and the suite runner."""

import csv
import io
import json
import math
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .dsl import enumerate_programs, evaluate, load_grammar, program_cost, render, size_model
from .objective import Score, fmt_num, get_loss, objective_from_json
from .synthesis import (
    Deadline,
    SynthesisConfig,
    Timeout,
    synthesize,
    synthesize_cfta,
)

ENGINES = ("afta", "cfta")
CSV_HEADER = ["problem", "engine", "outcome", "ms", "loss", "complexity", "clean_loss", "iterations", "bank_size", "states"]


class ProblemError(Exception):
    pass


class NoiseError(ValueError):
    pass


class OracleInfeasible(Exception):
    pass


@dataclass
class Problem:
    name: str
    examples: list
    grammar: dict
    loss: str = "zero_one"
    objective: dict = field(default_factory=lambda: {"kind": "lexicographic"})
    config: dict = field(default_factory=dict)
    clean_outputs: list = None
    noise: dict = None

    def __post_init__(self):
        self.examples = [tuple(e) for e in self.examples]
        if not self.examples:
            raise ProblemError(f"problem {self.name!r} has no examples")
        if any(len(e) != 2 for e in self.examples):
            raise ProblemError(f"problem {self.name!r}: every example is an [input, output] pair")
        if self.clean_outputs is not None and len(self.clean_outputs) != len(self.examples):
            raise ProblemError(f"problem {self.name!r}: clean_outputs length differs from examples")

    @property
    def inputs(self):
        return [x for x, _ in self.examples]

    @property
    def outputs(self):
        return [y for _, y in self.examples]

    def make_grammar(self):
        return load_grammar(self.grammar)

    def loss_fn(self):
        return get_loss(self.loss)

    def make_objective(self):
        return objective_from_json(self.objective)

    def synthesis_config(self, **overrides):
        doc = dict(self.config)
        doc.update({k: v for k, v in overrides.items() if v is not None})
        return SynthesisConfig(
            height_bound=int(doc.get("height_bound", 4)),
            epsilon=float(doc.get("epsilon", 0.0)),
            max_conjuncts=int(doc.get("max_conjuncts", 3)),
            min_gain=float(doc.get("min_gain", 1.0)),
        )

    def to_json(self):
        doc = {
            "name": self.name,
            "examples": [list(e) for e in self.examples],
            "grammar": self.grammar,
            "loss": self.loss,
            "objective": self.objective,
            "config": self.config,
        }
        if self.clean_outputs is not None:
            doc["clean_outputs"] = list(self.clean_outputs)
        if self.noise is not None:
            doc["noise"] = self.noise
        return doc

    @classmethod
    def from_json(cls, doc):
        try:
            return cls(
                name=doc["name"],
                examples=doc["examples"],
                grammar=doc["grammar"],
                loss=doc.get("loss", "zero_one"),
                objective=doc.get("objective", {"kind": "lexicographic"}),
                config=doc.get("config", {}),
                clean_outputs=doc.get("clean_outputs"),
                noise=doc.get("noise"),
            )
        except KeyError as e:
            raise ProblemError(f"problem file lacks field {e.args[0]!r}") from None

    def with_outputs(self, outputs, noise=None):
        clean = self.clean_outputs if self.clean_outputs is not None else self.outputs
        return Problem(
            self.name,
            [(x, y) for x, y in zip(self.inputs, outputs)],
            self.grammar,
            self.loss,
            self.objective,
            self.config,
            list(clean),
            noise,
        )


def load_problem(path):
    with open(path, encoding="utf-8") as f:
        return Problem.from_json(json.load(f))


def save_problem(problem, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(problem.to_json(), f, indent=1, ensure_ascii=False)
        f.write("\n")


def load_problems(directory):
    return [load_problem(p) for p in sorted(Path(directory).glob("*.json"))]


def bundled_dir():
    return Path(__file__).parent / "problems"


def bundled_suite():
    return load_problems(bundled_dir() / "suite")


def bundled_problem(name):
    return load_problem(bundled_dir() / f"{name}.json")


# -- noise ------------------------------------------------------------------


def apply_cyclic_deletion_noise(outputs, n):
    """Delete one character from each of the last n outputs, cycling the position."""
    outputs = list(outputs)
    if not 0 <= n <= len(outputs):
        raise NoiseError(f"n must be between 0 and {len(outputs)}, got {n}")
    start = len(outputs) - n
    for j in range(n):
        i = start + j
        s = outputs[i]
        if not s:
            raise NoiseError(f"output {i} is empty and cannot lose a character")
        k = j % len(s)
        outputs[i] = s[:k] + s[k + 1 :]
    return outputs


def apply_digit_substitution_noise(outputs, fraction, seed=0):
    """Bump one digit (9 wraps to 0) in a seeded choice of ceil(fraction * N) outputs."""
    outputs = list(outputs)
    if not 0 <= fraction <= 1:
        raise NoiseError(f"fraction must lie in [0, 1], got {fraction}")
    count = math.ceil(fraction * len(outputs))
    chosen = sorted(random.Random(seed).sample(range(len(outputs)), count))
    bad = [i for i in chosen if not any(c.isdigit() for c in outputs[i])]
    if bad:
        raise NoiseError(f"outputs without digits cannot be corrupted: indices {bad}")
    for j, i in enumerate(chosen):
        s = outputs[i]
        digits = [k for k, c in enumerate(s) if c.isdigit()]
        k = digits[j % len(digits)]
        outputs[i] = s[:k] + str((int(s[k]) + 1) % 10) + s[k + 1 :]
    return outputs


# -- brute-force oracle -----------------------------------------------------


class Oracle:
    """Every program of height <= b, evaluated once; optima under any loss and objective."""

    def __init__(self, grammar, inputs, b, model=None, cap=200000):
        if b < 1:
            raise OracleInfeasible("height bound must be >= 1")
        model = model or size_model()
        self.rows = []
        for p in enumerate_programs(grammar, b):
            if len(self.rows) >= cap:
                raise OracleInfeasible(f"more than {cap} programs of height <= {b}")
            outs = tuple(evaluate(p, x, grammar) for x in inputs)
            self.rows.append((p, outs, program_cost(p, model)))
        if not self.rows:
            raise OracleInfeasible(f"no program of height <= {b}")

    def __len__(self):
        return len(self.rows)

    def optimum(self, targets, fn, obj):
        best = None
        for p, outs, cost in self.rows:
            loss = float(sum(fn.concrete(o, y) for o, y in zip(outs, targets)))
            score = Score(loss, cost)
            k = obj.key(score)
            if best is None or k < best[0]:
                best = (k, p, score)
        return best[2], best[1]

    def scores(self, targets, fn):
        for p, outs, cost in self.rows:
            yield p, Score(float(sum(fn.concrete(o, y) for o, y in zip(outs, targets))), cost)


def brute_force_optimum(problem, b=None, fn=None, obj=None, model=None, cap=200000):
    grammar = problem.make_grammar()
    b = problem.synthesis_config().height_bound if b is None else b
    oracle = Oracle(grammar, problem.inputs, b, model, cap)
    return oracle.optimum(problem.outputs, fn or problem.loss_fn(), obj or problem.make_objective())


# -- suite ------------------------------------------------------------------


@dataclass
class RunReport:
    problem: str
    engine: str
    outcome: str
    ms: float
    score: Score = None
    abstract_score: Score = None
    clean_loss: float = None
    iterations: int = None
    bank_size: int = None
    states: int = None
    program: str = None
    error: str = None

    def row(self):
        def cell(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return fmt_num(v)
            return str(v)

        return [
            self.problem,
            self.engine,
            self.outcome,
            f"{self.ms:.1f}",
            cell(self.score.loss if self.score else None),
            cell(self.score.complexity if self.score else None),
            cell(self.clean_loss),
            cell(self.iterations),
            cell(self.bank_size),
            cell(self.states),
        ]


def clean_loss(problem, program, fn=None):
    if problem.clean_outputs is None:
        return None
    grammar = problem.make_grammar()
    fn = fn or problem.loss_fn()
    outs = [evaluate(program, x, grammar) for x in problem.inputs]
    return float(sum(fn.concrete(o, y) for o, y in zip(outs, problem.clean_outputs)))


def run_one(problem, engine, budget_ms=None, **overrides):
    """Run one engine on one problem; errors and timeouts become report fields."""
    start = time.monotonic()
    deadline = Deadline(budget_ms)

    def elapsed():
        return (time.monotonic() - start) * 1000.0

    try:
        grammar = problem.make_grammar()
        fn = problem.loss_fn()
        obj = problem.make_objective()
        config = problem.synthesis_config(**overrides)
        if engine == "afta":
            res = synthesize(problem.examples, grammar, config, obj=obj, fn=fn, deadline=deadline)
            bank_size = len(res.bank)
        elif engine == "cfta":
            res = synthesize_cfta(problem.examples, grammar, obj, fn, size_model(), config.height_bound, deadline)
            bank_size = None
        else:
            raise ValueError(f"unknown engine {engine!r}")
    except Timeout:
        return RunReport(problem.name, engine, "timeout", elapsed())
    except Exception as e:  # recorded, not fatal
        return RunReport(problem.name, engine, "error", elapsed(), error=f"{type(e).__name__}: {e}")
    return RunReport(
        problem.name,
        engine,
        "solved",
        elapsed(),
        score=res.score,
        abstract_score=res.abstract_score,
        clean_loss=clean_loss(problem, res.program, fn),
        iterations=res.iterations,
        bank_size=bank_size,
        states=res.states,
        program=render(res.program),
    )


def _run_job(job):
    problem, engine, budget_ms, overrides = job
    return run_one(problem, engine, budget_ms, **overrides)


def run_suite(problems, engines=ENGINES, budget_ms=None, parallelism=1, **overrides):
    jobs = [(p, e, budget_ms, overrides) for p in problems for e in sorted(set(engines))]
    if parallelism > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            reports = list(pool.map(_run_job, jobs))
    else:
        reports = [_run_job(j) for j in jobs]
    return sorted(reports, key=lambda r: (r.problem, r.engine))


def reports_csv(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in reports:
        w.writerow(r.row())
    return buf.getvalue()


def write_report(reports, path):
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(reports_csv(reports))


__all__ = [
    "Problem",
    "RunReport",
    "Oracle",
    "apply_cyclic_deletion_noise",
    "apply_digit_substitution_noise",
    "brute_force_optimum",
    "run_suite",
    "run_one",
    "reports_csv",
]
