import json

import pytest

from robustsynth.abstraction import (
    TRUE,
    CharAt,
    Eq,
    Len,
    PredicateBank,
    PredicateUniverse,
    abstract_eval,
    implies,
    initial_bank,
    make,
    top,
)
from robustsynth.automata import NoSolution, accepts
from robustsynth.bench import Oracle, apply_cyclic_deletion_noise
from robustsynth.dsl import enumerate_programs, evaluate, load_grammar, parse_program, render, size_model
from robustsynth.objective import LOSSES, Objective, Score, dataset_loss
from robustsynth.synthesis import (
    Deadline,
    InvariantError,
    SynthesisConfig,
    Timeout,
    backpropagate,
    build_afta,
    build_cfta,
    incremental_update,
    min_cost,
    optimize_and_backpropagate,
    pick_dimension,
    synthesize,
    synthesize_cfta,
)

ZO = LOSSES["zero_one"]
EVERYTHING = PredicateBank(all_len=True, all_char=True, all_eq=True)


@pytest.fixture(scope="module")
def arith():
    return load_grammar({"family": "arith_example"})


@pytest.fixture(scope="module")
def strg():
    return load_grammar({"family": "string_v1", "constants": ["abc", "ab", "c"], "positions": [0, 1, 2, 3]})


def test_cfta_arith_finals(arith):
    A = build_cfta([1], arith, 2)
    assert {A.payloads[q] for q in A.finals} == {(1,), (2,), (3,), (4,)}
    assert len(A.finals) == 4  # x + 3 and x * 3 share a state


def test_cfta_height_one(strg):
    A = build_cfta(["ab"], strg, 1)
    assert all(not args for _, args, _ in A.transitions)
    assert {A.payloads[q] for q in A.finals} == {("ab",), ("abc",), ("c",)}


def test_cfta_accepts_exactly_the_enumeration(arith):
    A = build_cfta([1, 2], arith, 3)
    for p in enumerate_programs(arith, 3):
        out = tuple(evaluate(p, x, arith) for x in (1, 2))
        assert accepts(A, p, {A.lookup("n", out)})


def test_synthesize_cfta(arith):
    res = synthesize_cfta([(1, 3), (2, 4)], arith, Objective(), ZO, size_model(), 3)
    assert render(res.program) == "x + 2" and res.score == Score(0, 3)
    res = synthesize_cfta([(1, 3), (2, 5)], arith, Objective(), ZO, size_model(), 3)
    best, _ = Oracle(arith, [1, 2], 3).optimum([3, 5], ZO, Objective())
    assert res.score == best and res.score.loss >= 1


def test_synthesize_cfta_empty_language(arith):
    with pytest.raises(NoSolution):
        synthesize_cfta([(1, 3)], arith, Objective(), ZO, size_model(), 0)


def test_afta_with_nothing_expressible(strg):
    A = build_afta(["ab", "ba"], strg, PredicateBank(), 3)
    assert len(A) == len(strg.symbols)
    assert all(all(v.is_true for v in A.payloads[q]) for q in range(len(A)))


def test_afta_with_every_eq_matches_cfta(arith):
    A = build_afta([1], arith, EVERYTHING, 2)
    C = build_cfta([1], arith, 2)
    assert len(A) == len(C)
    assert len(A.transitions) == len(C.transitions)


def test_len_only_afta_is_smaller(strg):
    inputs = ["abcd", "bcda", "cdab", "dabc"]
    assert len(build_afta(inputs, strg, initial_bank(), 3)) < len(build_cfta(inputs, strg, 3))


def test_afta_accepts_every_program_at_its_abstract_vector(strg):
    inputs = ["abc", "cab"]
    bank = initial_bank().union([CharAt("S", 0, "a"), Eq("P", 1)])
    A = build_afta(inputs, strg, bank, 3)
    for p in enumerate_programs(strg, 3):
        vec = tuple(abstract_eval(p, x, bank, strg) for x in inputs)
        assert accepts(A, p, {A.lookup("S", vec)})


def test_min_cost_every_eq_equals_cfta(arith):
    data = [(1, 3), (2, 4)]
    A = build_afta([1, 2], arith, EVERYTHING, 3)
    prog, score, _ = min_cost(A, data, Objective(), ZO, size_model())
    ref = synthesize_cfta(data, arith, Objective(), ZO, size_model(), 3)
    assert render(prog) == render(ref.program) and score == ref.score


def test_min_cost_without_predicates_is_least_complex(strg):
    A = build_afta(["ab"], strg, PredicateBank(), 3)
    prog, score, _ = min_cost(A, [("ab", "zz")], Objective(), ZO, size_model())
    assert render(prog) == "x" and score == Score(0, 1)


def test_min_cost_abstract_argmin(strg):
    inputs, targets = ["abc", "cab"], ["ab", "ca"]
    bank = initial_bank().union([CharAt("S", 0, "c")])
    A = build_afta(inputs, strg, bank, 3)
    prog, score, _ = min_cost(A, list(zip(inputs, targets)), Objective(), ZO, size_model())
    obj = Objective()
    for p in enumerate_programs(strg, 3):
        vals = [abstract_eval(p, x, bank, strg) for x in inputs]
        other = Score(dataset_loss(ZO, vals, targets, abstract=True), sum(1 for _ in _nodes(p)))
        assert obj.key(score) <= obj.key(other)


def _nodes(p):
    yield p
    for c in p.children:
        yield from _nodes(c)


def test_pick_dimension(strg):
    p = parse_program('ConstStr("ab")', strg)
    dl = LOSSES["dl"]
    bank = initial_bank()
    assert pick_dimension(p, [("", "xy")], bank, ZO, strg) == 0
    assert pick_dimension(p, [("", "ab"), ("", "xy"), ("", "ba")], bank, dl, strg) == 1
    assert pick_dimension(p, [("", "ba"), ("", "ba")], bank, dl, strg) == 0
    with pytest.raises(InvariantError):
        pick_dimension(p, [("", "ab")], bank, ZO, strg)


def test_optimize_raises_abstract_loss(strg):
    p = parse_program('ConstStr("abc")', strg)
    u = PredicateUniverse(strg)
    ns = LOSSES["n_sub"]
    bank = initial_bank()
    before = ns.abstract(abstract_eval(p, "", bank, strg), "abd")
    preds = optimize_and_backpropagate(p, "", "abd", bank, u, ns, 3, 1, strg)
    assert CharAt("S", 2, "c") in preds
    assert ns.abstract(abstract_eval(p, "", bank.union(preds), strg), "abd") == before + 1 == 1


def test_optimize_prefers_one_atom(strg):
    p = parse_program('ConstStr("ab")', strg)
    preds = optimize_and_backpropagate(p, "", "abc", PredicateBank(), PredicateUniverse(strg), ZO, 3, 1, strg)
    assert preds == {Len("S", 2)}


def test_optimize_falls_back_to_eq(strg):
    p = parse_program('ConstStr("ab")', strg)
    u = PredicateUniverse(strg)
    preds = optimize_and_backpropagate(p, "", "abc", PredicateBank(), u, ZO, 3, 5, strg)
    assert Eq("S", "ab") in preds
    assert ZO.abstract(abstract_eval(p, "", PredicateBank(preds), strg), "abc") == 1


def test_backpropagate_concat(strg):
    p = parse_program('Concat(ConstStr("ab"), ConstStr("c"))', strg)
    u = PredicateUniverse(strg)
    target = make("S", [Len("S", 3)])
    preds = backpropagate(p, "", target, PredicateBank(), u, 3, strg)
    assert preds == {Len("F", 2), Len("S", 1)}
    # the caller adds the target's own atoms at the root
    assert abstract_eval(p, "", PredicateBank(preds | {Len("S", 3)}), strg) == target


def test_backpropagate_trivial_targets(strg):
    u = PredicateUniverse(strg)
    p = parse_program('Concat(ConstStr("ab"), ConstStr("c"))', strg)
    assert backpropagate(p, "", top("S"), PredicateBank(), u, 3, strg) <= {TRUE}
    leaf = parse_program("x", strg)
    assert backpropagate(leaf, "q", make("S", [Len("S", 1)]), PredicateBank(), u, 3, strg) == set()
    with pytest.raises(InvariantError):
        backpropagate(p, "", make("S", [Len("S", 4)]), PredicateBank(), u, 3, strg)


def test_backpropagate_recurses(strg):
    p = parse_program("SubStr(x, ConstPos(0), ConstPos(2))", strg)
    u = PredicateUniverse(strg)
    target = make("S", [Len("S", 2), CharAt("S", 0, "q")])
    preds = backpropagate(p, "qrs", target, PredicateBank(), u, 3, strg)
    assert preds == {Eq("X", "qrs"), Eq("P", 0), Eq("P", 2)}
    bank = PredicateBank(preds | set(target.conjuncts))
    assert abstract_eval(p, "qrs", bank, strg) == target


def test_synthesize_arith_matches_cfta(arith):
    data = [(1, 3), (2, 4)]
    res = synthesize(data, arith, SynthesisConfig(height_bound=3, epsilon=0))
    assert render(res.program) == "x + 2" and res.score == Score(0, 3)
    ref = synthesize_cfta(data, arith, Objective(), ZO, size_model(), 3)
    assert res.score == ref.score


def test_synthesize_recovers_from_deletion(strg):
    inputs = ["abcx", "abcy", "abcz"]
    clean = ["ab", "ab", "ab"]
    data = list(zip(inputs, apply_cyclic_deletion_noise(clean, 1)))
    res = synthesize(data, strg, SynthesisConfig(height_bound=3))
    assert res.score.loss == 1
    assert [evaluate(res.program, x, strg) for x in inputs] == clean
    best, _ = Oracle(strg, inputs, 3).optimum([y for _, y in data], ZO, Objective())
    assert res.score == best


def test_large_epsilon_stops_at_first_candidate(strg):
    data = [("abc", "b"), ("cab", "a")]
    res = synthesize(data, strg, SynthesisConfig(height_bound=3, epsilon=len(data)))
    assert res.iterations == 1 and len(res.trace) == 1


def test_trace_records(strg):
    data = [("abc", "bc"), ("cab", "ab")]
    res = synthesize(data, strg, SynthesisConfig(height_bound=3))
    recs = res.trace.records
    assert [r["iteration"] for r in recs] == list(range(1, len(recs) + 1))
    sizes = [r["bank_size"] for r in recs]
    assert sizes == sorted(set(sizes))
    assert all(r["distance"] >= 0 for r in recs)
    assert json.loads(res.trace.to_json())[-1]["picked"] is None


def test_incremental_update_identity_and_refinement(strg):
    inputs = ["abc", "cab"]
    bank = initial_bank()
    A = build_afta(inputs, strg, bank, 3)
    assert incremental_update(A, inputs, strg, bank, set(), 3) is A
    new = {CharAt("S", 0, "a"), Eq("P", 1)}
    B = incremental_update(A, inputs, strg, bank, new, 3)
    fresh = build_afta(inputs, strg, bank.union(new), 3)
    assert B.signature() == fresh.signature()
    old = [A.payloads[q] for q in A.finals]
    for q in B.finals:
        vec = B.payloads[q]
        assert any(all(implies(a, b) for a, b in zip(vec, o)) for o in old)


def test_config_validation():
    with pytest.raises(ValueError):
        SynthesisConfig(height_bound=0)
    with pytest.raises(ValueError):
        SynthesisConfig(epsilon=-1)
    with pytest.raises(ValueError):
        SynthesisConfig(max_conjuncts=0)
    with pytest.raises(ValueError):
        SynthesisConfig(min_gain=0)


def test_deadline(strg):
    with pytest.raises(Timeout):
        synthesize([("abc", "b")] * 3, strg, SynthesisConfig(height_bound=4), deadline=Deadline(0))
    with pytest.raises(Timeout):
        build_cfta(["abc"], strg, 4, Deadline(0))
