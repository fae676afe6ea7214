import csv
import io
import math

import pytest

from robustsynth.bench import (
    CSV_HEADER,
    NoiseError,
    Oracle,
    OracleInfeasible,
    Problem,
    ProblemError,
    apply_cyclic_deletion_noise,
    apply_digit_substitution_noise,
    brute_force_optimum,
    bundled_problem,
    bundled_suite,
    load_problem,
    reports_csv,
    run_suite,
    save_problem,
)
from robustsynth.dsl import load_grammar, render
from robustsynth.objective import INF, LOSSES, Objective, Score


def test_cyclic_deletion_examples():
    assert apply_cyclic_deletion_noise(["abc", "def"], 1) == ["abc", "ef"]
    assert apply_cyclic_deletion_noise(["abc", "def", "ghi"], 3) == ["bc", "df", "gh"]
    assert apply_cyclic_deletion_noise(["abc", "def"], 0) == ["abc", "def"]
    assert apply_cyclic_deletion_noise(["ab", "cd", "ef"], 3) == ["b", "c", "f"]  # third: 2 mod 2 = 0


def test_cyclic_deletion_errors():
    with pytest.raises(NoiseError):
        apply_cyclic_deletion_noise(["a", ""], 1)
    with pytest.raises(NoiseError):
        apply_cyclic_deletion_noise(["a"], 2)


def test_digit_substitution_examples():
    for seed in range(5):
        assert apply_digit_substitution_noise(["123"], 1, seed) == ["223"]
    assert apply_digit_substitution_noise(["9"], 1) == ["0"]
    assert apply_digit_substitution_noise(["12", "34"], 0) == ["12", "34"]


def test_digit_substitution_counts_and_determinism():
    outs = [f"a{i}{i + 1}b" for i in range(8)]
    for frac in (0.1, 0.5, 0.95, 1.0):
        noisy = apply_digit_substitution_noise(outs, frac, seed=7)
        assert noisy == apply_digit_substitution_noise(outs, frac, seed=7)
        assert sum(a != b for a, b in zip(outs, noisy)) == math.ceil(frac * len(outs))


def test_digit_substitution_cycles_over_digit_positions():
    noisy = apply_digit_substitution_noise(["x12", "34", "5a6"], 1, seed=0)
    assert noisy == ["x22", "35", "6a6"]  # digit slots 0, 1, then 2 mod 2 = 0


def test_digit_substitution_error_names_index():
    with pytest.raises(NoiseError, match=r"\[1\]"):
        apply_digit_substitution_noise(["1", "abc"], 1)


def test_oracle_examples():
    g = load_grammar({"family": "arith_example"})
    p = Problem("arith", [(1, 3), (2, 4)], {"family": "arith_example"})
    score, witness = brute_force_optimum(p, 3)
    assert score == Score(0, 3) and render(witness) == "x + 2"
    with pytest.raises(OracleInfeasible):
        brute_force_optimum(p, 0)
    with pytest.raises(OracleInfeasible):
        Oracle(g, [1], 4, cap=10)


def test_oracle_inconsistent_zero_inf():
    p = Problem("bad", [(1, 3), (1, 4)], {"family": "arith_example"}, loss="zero_inf")
    score, witness = brute_force_optimum(p, 3)
    assert score == Score(INF, 1) and render(witness) == "x"


def test_problem_roundtrip(tmp_path):
    p = bundled_problem("arith_add_two")
    save_problem(p, tmp_path / "p.json")
    assert load_problem(tmp_path / "p.json") == p
    with pytest.raises(ProblemError):
        Problem("empty", [], {"family": "arith_example"})
    with pytest.raises(ProblemError):
        Problem("mismatch", [("a", "b")], {"family": "string_v1"}, clean_outputs=["a", "b"])


def test_bundled_suite_shape():
    suite = bundled_suite()
    assert len(suite) == 12
    for p in suite:
        assert 3 <= len(p.examples) <= 6
        assert p.clean_outputs == p.outputs
        assert p.grammar["family"] == "string_v1"
    phone = bundled_problem("phone_reformat")
    assert len(phone.examples) == 20 and all(len(y) >= 10 for y in phone.outputs)


def test_run_suite_reports():
    probs = bundled_suite()[:2]
    reports = run_suite(probs, {"afta", "cfta"})
    assert len(reports) == 4
    assert [(r.problem, r.engine) for r in reports] == sorted((r.problem, r.engine) for r in reports)
    for r in reports:
        assert r.outcome == "solved" and r.score is not None and r.clean_loss == 0


def test_run_suite_timeout():
    reports = run_suite([bundled_problem("phone_reformat")], {"afta", "cfta"}, budget_ms=1)
    assert [r.outcome for r in reports] == ["timeout", "timeout"]
    assert all(r.score is None and r.ms >= 1 for r in reports)


def test_run_suite_parallel_matches_serial():
    probs = bundled_suite()[:3]
    a = run_suite(probs, {"afta", "cfta"}, parallelism=1)
    b = run_suite(probs, {"afta", "cfta"}, parallelism=3)
    assert [(r.problem, r.engine, r.score, r.program) for r in a] == [(r.problem, r.engine, r.score, r.program) for r in b]


def test_run_suite_captures_errors():
    p = Problem("broken", [("a", "b")], {"family": "nope"})
    (r,) = run_suite([p], {"afta"})
    assert r.outcome == "error" and "nope" in r.error


def test_csv_format():
    reports = run_suite(bundled_suite()[:1], {"afta", "cfta"})
    rows = list(csv.reader(io.StringIO(reports_csv(reports))))
    assert rows[0] == CSV_HEADER
    assert len(rows) == 3
    assert rows[1][1] == "afta" and rows[2][8] == ""  # cfta has no bank
    assert reports_csv([]).strip() == ",".join(CSV_HEADER)


def test_oracle_shared_over_losses():
    p = bundled_suite()[0]
    oracle = Oracle(p.make_grammar(), p.inputs, 3)
    for name in ("zero_one", "zero_inf", "n_sub"):
        s, _ = oracle.optimum(p.outputs, LOSSES[name], Objective())
        assert s == brute_force_optimum(p, 3, LOSSES[name], Objective())[0]
