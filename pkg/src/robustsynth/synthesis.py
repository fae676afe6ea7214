"""Concrete and abstract FTA construction, the CFTA baseline and the refinement loop."""

import itertools
import json
import time
from dataclasses import dataclass, field

from .abstraction import (
    CHAR_K,
    EQ_K,
    LEN_K,
    PredicateUniverse,
    abstract_eval,
    alpha,
    exact,
    extract_predicates,
    gamma_contains,
    implied_predicates,
    implies,
    initial_bank,
    make,
    meet,
    transformer,
)
from .automata import NoSolution, TreeAutomaton, min_cost_program
from .dsl import BOTTOM, Leaf, evaluate, program_cost, render, size_model
from .objective import INF, LOSSES, Objective, Score, gap

__all__ = [
    "SynthesisConfig",
    "RefinementTrace",
    "build_cfta",
    "build_afta",
    "synthesize_cfta",
    "min_cost",
    "pick_dimension",
    "optimize_and_backpropagate",
    "backpropagate",
    "synthesize",
    "incremental_update",
]


class InvariantError(Exception):
    pass


class Timeout(Exception):
    pass


class SynthesisError(Exception):
    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


class Deadline:
    def __init__(self, budget_ms=None):
        self.end = None if budget_ms is None else time.monotonic() + budget_ms / 1000.0

    def check(self):
        if self.end is not None and time.monotonic() > self.end:
            raise Timeout("time budget exhausted")


NO_DEADLINE = Deadline()


@dataclass
class SynthesisConfig:
    height_bound: int = 4
    epsilon: float = 0.0
    max_conjuncts: int = 3
    min_gain: float = 1.0
    iteration_cap: int = 10000

    def __post_init__(self):
        if self.height_bound < 1:
            raise ValueError("height bound must be >= 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.max_conjuncts < 1:
            raise ValueError("max conjuncts must be >= 1")
        if not self.min_gain > 0:
            raise ValueError("min gain must be > 0")
        if self.iteration_cap < 1:
            raise ValueError("iteration cap must be >= 1")


def _num(x):
    return "inf" if x == INF else x


@dataclass
class RefinementTrace:
    records: list = field(default_factory=list)

    def add(self, **rec):
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def to_json(self):
        def clean(v):
            if isinstance(v, float):
                return _num(v)
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            return v

        return json.dumps([{k: clean(v) for k, v in r.items()} for r in self.records])


# -- construction -----------------------------------------------------------


def _layered(inputs, grammar, b, leaf, apply, deadline):
    """Shared fixpoint of the Var/Const/Prod/Final rules, one height layer at a time.

    A state is created with the height of the first layer that reaches it, so it
    exists iff some tree of height <= b evaluates to its payload.
    """
    A = TreeAutomaton()
    if b < 1:
        return A
    layers = {s: [] for s in grammar.symbols}
    fresh = {s: [] for s in grammar.symbols}
    for p in grammar.terminals:
        before = len(A)
        q = A.add_state(p.lhs, leaf(p), 1)
        A.add_transition(p, (), q)
        if len(A) > before:
            fresh[p.lhs].append(q)
    for s in grammar.symbols:
        layers[s].append(fresh[s])
    funcs = [p for p in grammar.productions if not p.is_terminal]
    index, symbols, payloads, heights = A.index, A.symbols, A.payloads, A.min_height
    transitions, forward = A.transitions, A.forward
    for h in range(2, b + 1):
        fresh = {s: [] for s in grammar.symbols}
        for p in funcs:
            for k in range(p.arity):
                deadline.check()
                pools = []
                for i, a in enumerate(p.args):
                    if i < k:
                        pools.append([q for lay in layers[a][: h - 2] for q in lay])
                    elif i == k:
                        pools.append(layers[a][h - 2])
                    else:
                        pools.append([q for lay in layers[a][: h - 1] for q in lay])
                # Hot loop: states and transitions are written directly, since
                # each (production, args) pair is produced exactly once here.
                lhs, pi, out = p.lhs, p.index, fresh[p.lhs]
                for n, args in enumerate(itertools.product(*pools)):
                    if n & 4095 == 4095:
                        deadline.check()
                    payload = apply(A, p, args)
                    q = index.get((lhs, payload))
                    if q is None:
                        q = index[(lhs, payload)] = len(symbols)
                        symbols.append(lhs)
                        payloads.append(payload)
                        heights.append(h)
                        out.append(q)
                    transitions.append((p, args, q))
                    forward[(pi, args)] = [q]
        for s in grammar.symbols:
            layers[s].append(fresh[s])
    for q, s in enumerate(A.symbols):
        if s == grammar.start:
            A.add_final(q)
    return A


def build_cfta(inputs, grammar, b, deadline=NO_DEADLINE):
    inputs = list(inputs)

    def leaf(p):
        if p.is_input:
            return tuple(inputs)
        return (p.value,) * len(inputs)

    def apply(A, p, args):
        fn = grammar.semantics[p.name].fn
        out = []
        for vals in zip(*(A.payloads[a] for a in args)):
            if any(v is BOTTOM for v in vals):
                out.append(BOTTOM)
            else:
                out.append(fn(*vals))
        return tuple(out)

    return _layered(inputs, grammar, b, leaf, apply, deadline)


class AftaBuilder:
    """Builds AFTAs and keeps the caches that let a later, larger bank reuse work.

    Abstract values are interned to small integers while building. Transformer
    results do not depend on the bank. Abstraction results and whole payload
    vectors only depend on bank atoms of their own symbol, so growing the bank
    invalidates just the entries of the affected symbols.
    """

    def __init__(self, inputs, grammar, b):
        self.inputs = list(inputs)
        self.grammar = grammar
        self.b = b
        self.bank = None
        self.values = []
        self._ids = {}
        self._pre = {}  # production -> argument ids -> transformer result id
        self._alpha = {s: {} for s in grammar.symbols}
        self._prevecs = {}  # (production, child vectors) -> transformer result ids
        self._vectors = {s: {} for s in grammar.symbols}
        self.vecs = []  # payload vectors, interned too
        self._vec_ids = {}
        self.reused = 0

    def _intern(self, v):
        i = self._ids.get(v)
        if i is None:
            i = self._ids[v] = len(self.values)
            self.values.append(v)
        return i

    def _vec(self, vec):
        i = self._vec_ids.get(vec)
        if i is None:
            i = self._vec_ids[vec] = len(self.vecs)
            self.vecs.append(vec)
        return i

    def _abs(self, symbol, pre):
        table = self._alpha[symbol]
        r = table.get(pre)
        if r is None:
            r = table[pre] = self._intern(alpha(self.bank, self.values[pre]))
        return r

    def build(self, bank, deadline=NO_DEADLINE):
        self.bank = bank
        grammar, n = self.grammar, len(self.inputs)
        values, vecs = self.values, self.vecs

        def leaf(p):
            if p.is_input:
                vec = tuple(self._abs(p.lhs, self._intern(exact(p.lhs, x))) for x in self.inputs)
            else:
                vec = (self._abs(p.lhs, self._intern(exact(p.lhs, p.value))),) * n
            return self._vec(vec)

        def apply(A, p, args):
            vectors = self._vectors[p.lhs]
            pl = A.payloads
            key = (p.index, tuple([pl[a] for a in args]))
            out = vectors.get(key)
            if out is not None:
                self.reused += 1
                return out
            prevec = self._prevecs.get(key)
            if prevec is None:
                pres = self._pre.setdefault(p.index, {})
                prevec = []
                for vals in zip(*[vecs[v] for v in key[1]]):
                    pre = pres.get(vals)
                    if pre is None:
                        av = transformer(grammar, p.name, [values[v] for v in vals], p.lhs)
                        pre = pres[vals] = self._intern(av)
                    prevec.append(pre)
                prevec = self._prevecs[key] = tuple(prevec)
            table = self._alpha[p.lhs]
            res = list(map(table.get, prevec))
            if None in res:
                res = [self._abs(p.lhs, pre) for pre in prevec]
            out = vectors[key] = self._vec(tuple(res))
            return out

        A = _layered(self.inputs, grammar, self.b, leaf, apply, deadline)
        # Swap the interned ids for the abstract values themselves.
        A.payloads = [tuple(values[i] for i in vecs[v]) for v in A.payloads]
        A.index = {(s, pl): i for i, (s, pl) in enumerate(zip(A.symbols, A.payloads))}
        A.builder = self
        A.bank = bank
        return A

    def grow(self, new_preds):
        bank = self.bank.union(new_preds)
        for s in {p.symbol for p in new_preds}:
            table = self._alpha.get(s)
            if table is None:
                continue
            # Only values entailing a new atom abstract differently.
            changed = False
            for pre, old in table.items():
                new = self._intern(alpha(bank, self.values[pre]))
                if new != old:
                    table[pre] = new
                    changed = True
            if changed:
                self._vectors[s].clear()


def build_afta(inputs, grammar, bank, b, deadline=NO_DEADLINE):
    return AftaBuilder(inputs, grammar, b).build(bank, deadline)


def incremental_update(afta, inputs, grammar, old_bank, new_preds, b, deadline=NO_DEADLINE):
    new_preds = old_bank.missing(new_preds)
    if not new_preds:
        return afta
    builder = getattr(afta, "builder", None)
    if builder is None or builder.b != b or builder.inputs != list(inputs) or builder.grammar is not grammar:
        builder = AftaBuilder(inputs, grammar, b)
        builder.bank = old_bank
    builder.grow(new_preds)
    return builder.build(old_bank.union(new_preds), deadline)


# -- candidate extraction ---------------------------------------------------


def _best_final(A, model, obj, loss_of):
    if not A.finals:
        raise NoSolution("automaton has no final state")
    cost, _ = A.costs(model)
    best = None
    for q in sorted(A.finals):
        if cost[q] == INF:
            continue
        score = Score(loss_of(A.payloads[q]), cost[q])
        k = obj.key(score)
        if best is None or k < best[0]:
            best = (k, q, score)
    if best is None:
        raise NoSolution("no final state accepts a tree")
    _, q, score = best
    return min_cost_program(A, q, model), score, q


@dataclass
class Result:
    program: object
    score: Score
    abstract_score: Score = None
    trace: RefinementTrace = None
    bank: object = None
    automaton: object = None
    iterations: int = 1

    @property
    def states(self):
        return len(self.automaton) if self.automaton is not None else None


def synthesize_cfta(dataset, grammar, obj, fn, model, b, deadline=NO_DEADLINE):
    if not dataset:
        raise ValueError("dataset is empty")
    inputs = [x for x, _ in dataset]
    targets = [y for _, y in dataset]
    A = build_cfta(inputs, grammar, b, deadline)
    deadline.check()

    def loss_of(vec):
        return float(sum(fn.concrete(v, y) for v, y in zip(vec, targets)))

    prog, score, _ = _best_final(A, model, obj, loss_of)
    return Result(prog, score, automaton=A)


def min_cost(afta, dataset, obj, fn, model, loss=None):
    """Program minimising the abstract objective; ties go to the lowest state index."""
    targets = [y for _, y in dataset]
    loss = loss or fn.abstract

    def loss_of(vec):
        return float(sum(loss(v, y) for v, y in zip(vec, targets)))

    return _best_final(afta, model, obj, loss_of)


# -- refinement -------------------------------------------------------------


def _example_gaps(program, dataset, bank, fn, grammar):
    out = []
    for x, y in dataset:
        c = fn.concrete(evaluate(program, x, grammar), y)
        a = fn.abstract(abstract_eval(program, x, bank, grammar), y)
        out.append(gap(c, a))
    return out


def pick_dimension(program, dataset, bank, fn, grammar):
    gaps = _example_gaps(program, dataset, bank, fn, grammar)
    best = max(range(len(gaps)), key=lambda i: (gaps[i], -i))
    if not gaps[best] > 0:
        raise InvariantError("no example has a positive loss gap")
    return best


_ORDER = {LEN_K: 0, CHAR_K: 1, EQ_K: 2}


def _atoms(value, symbol):
    atoms = [p for p in implied_predicates(value, symbol) if p.kind in _ORDER]
    return sorted(atoms, key=lambda p: (_ORDER[p.kind], p.index, repr(p.value)))


def _conjunctions(atoms, m):
    for k in range(1, m + 1):
        yield from itertools.combinations(atoms, k)


def optimize_and_backpropagate(program, x, y, bank, universe, fn, m, delta, grammar):
    """Predicates that raise the abstract loss of `program` on (x, y)."""
    sym = program.symbol
    phi = abstract_eval(program, x, bank, grammar)
    v = evaluate(program, x, grammar)
    current = fn.abstract(phi, y)
    psi = None
    for combo in _conjunctions(_atoms(v, sym), m):
        cand = make(sym, combo)
        if gap(fn.abstract(meet(phi, cand), y), current) >= delta:
            psi = cand
            break
    if psi is None:
        psi = exact(sym, v)
    out = extract_predicates(psi)
    out |= backpropagate(program, x, meet(phi, psi), bank, universe, m, grammar)
    return out


def _compositions(total, parts, cap):
    if parts == 0:
        if total == 0:
            yield ()
        return
    for first in range(min(total, cap) + 1):
        for rest in _compositions(total - first, parts - 1, cap):
            yield (first,) + rest


def backpropagate(expr, x, target, bank, universe, m, grammar, budget=20000):
    """Predicates under which the abstract value of `expr` implies `target`."""
    if not gamma_contains(target, evaluate(expr, x, grammar)):
        raise InvariantError(f"target {target} does not hold of the concrete value")
    if isinstance(expr, Leaf):
        return set()
    kids = expr.children
    vals = [evaluate(c, x, grammar) for c in kids]
    phis = [abstract_eval(c, x, bank, grammar) for c in kids]
    atoms = [_atoms(v, c.symbol) for v, c in zip(vals, kids)]
    chosen = None
    checks = 0
    for total in range(len(kids) * m + 1):
        for counts in _compositions(total, len(kids), m):
            pools = [list(itertools.combinations(a, k)) for a, k in zip(atoms, counts)]
            for combo in itertools.product(*pools):
                checks += 1
                psis = [make(c.symbol, atoms_i) for c, atoms_i in zip(kids, combo)]
                args = [meet(p, s) for p, s in zip(phis, psis)]
                if implies(transformer(grammar, expr.fn, args, expr.symbol), target):
                    chosen = psis
                    break
                if checks >= budget:
                    break
            if chosen is not None or checks >= budget:
                break
        if chosen is not None or checks >= budget:
            break
    if chosen is None:
        chosen = [exact(c.symbol, v) for c, v in zip(kids, vals)]
    out = set()
    for c, phi, psi in zip(kids, phis, chosen):
        out |= extract_predicates(psi)
        if not isinstance(c, Leaf):
            out |= backpropagate(c, x, meet(phi, psi), bank, universe, m, grammar, budget)
    return out


def _dataset_loss(fn, vec, targets, abstract):
    per = fn.abstract if abstract else fn.concrete
    return float(sum(per(v, y) for v, y in zip(vec, targets)))


def synthesize(
    dataset,
    grammar,
    config=None,
    bank0=None,
    universe=None,
    obj=None,
    fn=None,
    model=None,
    deadline=NO_DEADLINE,
    on_iteration=None,
):
    """Abstraction-refinement search for an epsilon-optimal program of height <= b."""
    if not dataset:
        raise ValueError("dataset is empty")
    config = config or SynthesisConfig()
    bank = bank0 if bank0 is not None else initial_bank()
    universe = universe or PredicateUniverse(grammar)
    obj = obj or Objective()
    fn = fn or LOSSES["zero_one"]
    model = model or size_model()
    inputs = [x for x, _ in dataset]
    targets = [y for _, y in dataset]
    loss = fn.memo()
    trace = RefinementTrace()

    afta = build_afta(inputs, grammar, bank, config.height_bound, deadline)
    best = None
    for it in range(1, config.iteration_cap + 1):
        deadline.check()
        prog, abs_score, q = min_cost(afta, dataset, obj, fn, model, loss)
        outputs = [evaluate(prog, x, grammar) for x in inputs]
        conc = Score(_dataset_loss(fn, outputs, targets, False), program_cost(prog, model))
        if best is None or obj.key(conc) < obj.key(best[1]):
            best = (prog, conc)
        dist = gap(conc.loss, abs_score.loss)
        rec = dict(
            iteration=it,
            bank_size=len(bank),
            states=len(afta),
            abstract_loss=abs_score.loss,
            abstract_complexity=abs_score.complexity,
            concrete_loss=conc.loss,
            concrete_complexity=conc.complexity,
            distance=dist,
            program=render(prog),
        )
        if dist <= config.epsilon:
            trace.add(**rec, picked=None, added=[])
            return Result(best[0], best[1], abs_score, trace, bank, afta, it)
        i = pick_dimension(prog, dataset, bank, fn, grammar)
        x, y = dataset[i]
        preds = optimize_and_backpropagate(
            prog, x, y, bank, universe, fn, config.max_conjuncts, config.min_gain, grammar
        )
        new = bank.missing(preds)
        if not new:
            trace.add(**rec, picked=i, added=[])
            raise SynthesisError("refinement produced no new predicates", trace)
        old_bank, bank = bank, bank.union(new)
        after = [abstract_eval(prog, xx, bank, grammar) for xx in inputs]
        abs_after = _dataset_loss(fn, after, targets, True)
        trace.add(
            **rec,
            picked=i,
            added=sorted(str(p) for p in new),
            abstract_loss_after=abs_after,
            distance_after=gap(conc.loss, abs_after),
        )
        if on_iteration is not None:
            on_iteration(rec)
        afta = incremental_update(afta, inputs, grammar, old_bank, new, config.height_bound, deadline)
    raise SynthesisError(f"no answer within {config.iteration_cap} refinement iterations", trace)

