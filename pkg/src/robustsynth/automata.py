"""Bottom-up finite tree automata with hyperedge transitions."""

import heapq
import json
from collections import defaultdict

from .dsl import App, Leaf

INF = float("inf")


class NoSolution(Exception):
    pass


class TreeAutomaton:
    def __init__(self):
        self.symbols = []
        self.payloads = []
        self.min_height = []
        self.index = {}
        self.finals = set()
        self.transitions = []  # (production, arg state tuple, result state)
        self.forward = {}  # (production index, args) -> result states
        self._reverse = None
        self._costs = {}

    def __len__(self):
        return len(self.symbols)

    @property
    def state_count(self):
        return len(self.symbols)

    def state(self, i):
        return self.symbols[i], self.payloads[i]

    def add_state(self, symbol, payload, height=1):
        key = (symbol, payload)
        i = self.index.get(key)
        if i is None:
            i = len(self.symbols)
            self.index[key] = i
            self.symbols.append(symbol)
            self.payloads.append(payload)
            self.min_height.append(height)
        elif height < self.min_height[i]:
            self.min_height[i] = height
        return i

    def lookup(self, symbol, payload):
        return self.index.get((symbol, payload))

    def add_transition(self, prod, args, result):
        args = tuple(args)
        key = (prod.index, args)
        targets = self.forward.setdefault(key, [])
        if result in targets:
            return
        targets.append(result)
        self.transitions.append((prod, args, result))
        self._reverse = None
        self._costs.clear()

    def add_final(self, i):
        self.finals.add(i)

    @property
    def reverse(self):
        if self._reverse is None:
            rev = defaultdict(list)
            for t, (_, _, r) in enumerate(self.transitions):
                rev[r].append(t)
            self._reverse = rev
        return self._reverse

    def run(self, program):
        """States the program's tree rewrites to (bottom-up)."""
        kid_sets = [self.run(c) for c in program.children]
        out = set()
        if isinstance(program, Leaf):
            out.update(self.forward.get((program.prod.index, ()), ()))
            return out
        stack = [()]
        for ks in kid_sets:
            stack = [prefix + (k,) for prefix in stack for k in sorted(ks)]
        for args in stack:
            out.update(self.forward.get((program.prod.index, args), ()))
        return out

    def costs(self, model):
        """Knuth's generalisation of Dijkstra: cheapest derivation of every state."""
        cached = self._costs.get(id(model))
        if cached is not None and cached[0] is model:
            return cached[1], cached[2]
        n = len(self.symbols)
        cost = [INF] * n
        best = [None] * n
        settled = [False] * n
        waiting = [len(a) for _, a, _ in self.transitions]
        uses = defaultdict(list)
        heap = []
        for t, (prod, args, r) in enumerate(self.transitions):
            if args:
                for a in args:
                    uses[a].append(t)
            else:
                heap.append((model.cost_of(prod), t, r))
        heapq.heapify(heap)
        while heap:
            c, t, q = heapq.heappop(heap)
            if settled[q]:
                continue
            settled[q] = True
            cost[q] = c
            best[q] = t
            for t2 in uses.get(q, ()):
                waiting[t2] -= 1
                if waiting[t2] == 0:
                    prod, args, r = self.transitions[t2]
                    if not settled[r]:
                        total = model.cost_of(prod) + sum(cost[a] for a in args)
                        heapq.heappush(heap, (total, t2, r))
        self._costs[id(model)] = (model, cost, best)
        return cost, best

    def copy(self):
        other = TreeAutomaton()
        other.symbols = list(self.symbols)
        other.payloads = list(self.payloads)
        other.min_height = list(self.min_height)
        other.index = dict(self.index)
        other.finals = set(self.finals)
        other.transitions = list(self.transitions)
        other.forward = {k: list(v) for k, v in self.forward.items()}
        return other

    def signature(self):
        """Index-free description: state multiset and transition multiset."""
        states = sorted(
            (repr(self.symbols[i]), _payload_key(self.payloads[i]), self.min_height[i])
            for i in range(len(self.symbols))
        )
        label = [(repr(self.symbols[i]), _payload_key(self.payloads[i])) for i in range(len(self.symbols))]
        trans = sorted(
            (p.index, tuple(label[a] for a in args), label[r]) for p, args, r in self.transitions
        )
        finals = sorted(label[i] for i in self.finals)
        return states, trans, finals

    def dump(self, as_json=False):
        states = [
            {
                "id": i,
                "symbol": self.symbols[i],
                "payload": [str(v) for v in self.payloads[i]] if isinstance(self.payloads[i], tuple) else str(self.payloads[i]),
                "min_height": self.min_height[i],
                "final": i in self.finals,
            }
            for i in range(len(self.symbols))
        ]
        trans = sorted(
            ({"fn": p.name, "args": list(a), "result": r} for p, a, r in self.transitions),
            key=lambda d: (d["result"], d["fn"], d["args"]),
        )
        if as_json:
            return json.dumps({"states": states, "transitions": trans}, indent=1)
        lines = [
            f"q{s['id']} {s['symbol']} h={s['min_height']}{' final' if s['final'] else ''} {s['payload']}"
            for s in states
        ]
        lines += [f"{d['fn']}({', '.join(f'q{a}' for a in d['args'])}) -> q{d['result']}" for d in trans]
        return "\n".join(lines)


def _payload_key(payload):
    if isinstance(payload, tuple):
        return tuple(repr(v) if not hasattr(v, "conjuncts") else str(v) for v in payload)
    return repr(payload)


def accepts(automaton, program, roots):
    return bool(automaton.run(program) & set(roots))


def min_cost_program(automaton, root, model):
    cost, best = automaton.costs(model)
    if root is None or root >= len(cost) or cost[root] == INF:
        raise NoSolution(f"state {root} accepts no tree")
    built = {}

    def build(q):
        p = built.get(q)
        if p is None:
            prod, args, _ = automaton.transitions[best[q]]
            p = Leaf(prod) if not args else App(prod, tuple(build(a) for a in args))
            built[q] = p
        return p

    return build(root)


def reachable_prune(automaton):
    n = len(automaton)
    derivable = [False] * n
    changed = True
    while changed:
        changed = False
        for _, args, r in automaton.transitions:
            if not derivable[r] and all(derivable[a] for a in args):
                derivable[r] = changed = True
    live = [(p, a, r) for p, a, r in automaton.transitions if derivable[r] and all(derivable[x] for x in a)]
    useful = [False] * n
    stack = [q for q in automaton.finals if derivable[q]]
    for q in stack:
        useful[q] = True
    by_result = defaultdict(list)
    for p, a, r in live:
        by_result[r].append(a)
    while stack:
        q = stack.pop()
        for args in by_result[q]:
            for x in args:
                if not useful[x]:
                    useful[x] = True
                    stack.append(x)
    out = TreeAutomaton()
    remap = {}
    for i in range(n):
        if useful[i]:
            remap[i] = out.add_state(automaton.symbols[i], automaton.payloads[i], automaton.min_height[i])
    for p, a, r in live:
        if useful[r]:
            out.add_transition(p, tuple(remap[x] for x in a), remap[r])
    for q in sorted(automaton.finals):
        if useful[q]:
            out.add_final(remap[q])
    return out
