"""Grammars, parse-tree programs, the concrete interpreter and cost models."""

import itertools
import json
import re
from dataclasses import dataclass, field
from typing import Callable, Iterator


class GrammarError(Exception):
    pass


class StructuralError(Exception):
    """A program does not fit the grammar (distinct from a run-time bottom)."""


class _Bottom:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "⊥"

    def __reduce__(self):
        return (_Bottom, ())


BOTTOM = _Bottom()

KINDS = ("string", "position", "integer", "token", "boolean")


@dataclass(frozen=True)
class Production:
    index: int
    lhs: str
    name: str
    args: tuple = ()
    value: object = None
    is_input: bool = False

    @property
    def arity(self):
        return len(self.args)

    @property
    def is_terminal(self):
        return not self.args


class Grammar:
    def __init__(self, family, symbols, start, productions, semantics, style="call", config=None):
        self.family = family
        self.symbols = dict(symbols)
        self.start = start
        self.semantics = dict(semantics)
        self.style = style
        self.config = config
        self.productions = []
        for lhs, name, args, value, is_input in productions:
            self.productions.append(
                Production(len(self.productions), lhs, name, tuple(args), value, is_input)
            )
        self._check()
        self.by_lhs = {s: [p for p in self.productions if p.lhs == s] for s in self.symbols}

    def _check(self):
        if self.start not in self.symbols:
            raise GrammarError(f"start symbol {self.start!r} is not declared")
        for s, kind in self.symbols.items():
            if kind not in KINDS:
                raise GrammarError(f"symbol {s!r} has unknown kind {kind!r}")
        for p in self.productions:
            if p.lhs not in self.symbols or any(a not in self.symbols for a in p.args):
                raise GrammarError(f"production {p.name} uses an undeclared symbol")
            if p.is_terminal:
                continue
            fn = self.semantics.get(p.name)
            if fn is None:
                raise GrammarError(f"function {p.name!r} has no registered semantics")
            if fn.arity != p.arity:
                raise GrammarError(f"function {p.name!r} expects {fn.arity} args, got {p.arity}")

    @property
    def terminals(self):
        return [p for p in self.productions if p.is_terminal]

    @property
    def nonterminals(self):
        return set(self.symbols)

    def kind(self, symbol):
        return self.symbols[symbol]

    def production(self, lhs, name):
        for p in self.by_lhs[lhs]:
            if p.name == name:
                return p
        raise GrammarError(f"no production {name!r} for symbol {lhs!r}")


@dataclass(frozen=True)
class Semantics:
    arity: int
    fn: Callable


# -- programs ---------------------------------------------------------------


@dataclass(frozen=True)
class Leaf:
    prod: Production
    height: int = field(default=1, compare=False)

    @property
    def symbol(self):
        return self.prod.lhs

    @property
    def fn(self):
        return self.prod.name

    children = ()


@dataclass(frozen=True)
class App:
    prod: Production
    children: tuple
    height: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.prod.is_terminal:
            raise StructuralError(f"{self.prod.name} is a terminal, not a function")
        if len(self.children) != self.prod.arity:
            raise StructuralError(
                f"{self.prod.name} takes {self.prod.arity} children, got {len(self.children)}"
            )
        for c, sym in zip(self.children, self.prod.args):
            if not isinstance(c, (Leaf, App)) or c.prod.lhs != sym:
                raise StructuralError(f"child of {self.prod.name} must derive from {sym}")
        object.__setattr__(self, "children", tuple(self.children))
        object.__setattr__(self, "height", 1 + max(c.height for c in self.children))

    @property
    def symbol(self):
        return self.prod.lhs

    @property
    def fn(self):
        return self.prod.name


def evaluate(program, inp, grammar):
    """Bottom-up concrete evaluation; run-time domain errors give BOTTOM."""
    if isinstance(program, Leaf):
        return inp if program.prod.is_input else program.prod.value
    if not isinstance(program, App):
        raise StructuralError(f"not a program node: {program!r}")
    vals = [evaluate(c, inp, grammar) for c in program.children]
    if any(v is BOTTOM for v in vals):
        return BOTTOM
    return grammar.semantics[program.fn].fn(*vals)


def nodes(program):
    yield program
    for c in program.children:
        yield from nodes(c)


# -- cost -------------------------------------------------------------------


@dataclass(frozen=True)
class CostModel:
    terminal_cost: dict = field(default_factory=dict)
    function_cost: dict = field(default_factory=dict)
    default: float = 1.0

    def __post_init__(self):
        costs = list(self.terminal_cost.values()) + list(self.function_cost.values())
        if self.default < 0 or any(c < 0 for c in costs):
            raise ValueError("costs must be non-negative")

    def cost_of(self, prod):
        table = self.terminal_cost if prod.is_terminal else self.function_cost
        return table.get(prod.name, self.default)


def size_model():
    return CostModel()


def program_cost(program, model):
    return model.cost_of(program.prod) + sum(program_cost(c, model) for c in program.children)


# -- enumeration ------------------------------------------------------------


def enumerate_programs(grammar, height_bound) -> Iterator:
    """Every program from the start symbol with height <= bound, each exactly once.

    Order: by height, then lexicographically over production indices (children
    are themselves drawn in this order).
    """
    if height_bound < 1:
        return
    layers = {s: [] for s in grammar.symbols}  # layers[s][h-1] = programs of height h
    for h in range(1, height_bound + 1):
        fresh = {s: [] for s in grammar.symbols}
        for s in grammar.symbols:
            for p in grammar.by_lhs[s]:
                if p.is_terminal:
                    if h == 1:
                        fresh[s].append(Leaf(p))
                    continue
                if h == 1:
                    continue
                pools = [list(itertools.chain.from_iterable(layers[a][: h - 1])) for a in p.args]
                for combo in itertools.product(*pools):
                    if max(c.height for c in combo) == h - 1:
                        fresh[s].append(App(p, combo))
        for s in grammar.symbols:
            layers[s].append(fresh[s])
        yield from fresh[grammar.start]


# -- built-in families ------------------------------------------------------


def _arith():
    symbols = {"n": "integer", "t": "integer"}
    prods = [
        ("n", "x", (), None, True),
        ("n", "+", ("n", "t"), None, False),
        ("n", "*", ("n", "t"), None, False),
        ("t", "2", (), 2, False),
        ("t", "3", (), 3, False),
    ]
    sem = {
        "+": Semantics(2, lambda a, b: a + b),
        "*": Semantics(2, lambda a, b: a * b),
    }
    return Grammar("arith_example", symbols, "n", prods, sem, style="infix")


TOKEN_CLASSES = [
    ("Upper", "[A-Z]+"),
    ("Lower", "[a-z]+"),
    ("Digit", "[0-9]+"),
    ("Alnum", "[A-Za-z0-9]+"),
    ("Space", r"\s+"),
]


@dataclass
class StringDslConfig:
    constant_strings: list = field(default_factory=list)
    constant_positions: list = field(default_factory=lambda: [0, 1, 2, 3])
    match_tokens: list = field(default_factory=list)
    ks: list = field(default_factory=lambda: [1, 2])
    directions: list = field(default_factory=lambda: ["start", "end"])

    def __post_init__(self):
        if any(not isinstance(i, int) or i < 0 for i in self.constant_positions):
            raise GrammarError("constant positions must be non-negative integers")
        if any(not isinstance(k, int) or k < 1 for k in self.ks):
            raise GrammarError("occurrence indices must be integers >= 1")
        if any(d not in ("start", "end") for d in self.directions):
            raise GrammarError("directions must be 'start' or 'end'")
        if not self.match_tokens:
            toks = list(TOKEN_CLASSES)
            seen = set()
            for s in self.constant_strings:
                for ch in s:
                    if ch not in seen:
                        seen.add(ch)
                        toks.append((repr(ch), re.escape(ch)))
            self.match_tokens = toks


def _pos(patterns):
    def pos(s, token, k, at_start):
        matches = list(patterns[token].finditer(s))
        if len(matches) < k:
            return BOTTOM
        m = matches[k - 1]
        return m.start() if at_start else m.end()

    return pos


def substr(s, i, j):
    if 0 <= i <= j <= len(s):
        return s[i:j]
    return BOTTOM


def _string(config):
    symbols = {
        "S": "string",
        "F": "string",
        "X": "string",
        "P": "position",
        "T": "token",
        "K": "integer",
        "D": "boolean",
    }
    prods = []
    for lhs in ("S", "F"):
        prods.append((lhs, "x", (), None, True))
        for c in config.constant_strings:
            prods.append((lhs, f"ConstStr({json.dumps(c)})", (), c, False))
        prods.append((lhs, "SubStr", ("X", "P", "P"), None, False))
    prods.append(("S", "Concat", ("F", "S"), None, False))
    prods.append(("X", "x", (), None, True))
    for i in config.constant_positions:
        prods.append(("P", f"ConstPos({i})", (), i, False))
    prods.append(("P", "Pos", ("X", "T", "K", "D"), None, False))
    for name, _ in config.match_tokens:
        prods.append(("T", name, (), name, False))
    for k in config.ks:
        prods.append(("K", str(k), (), k, False))
    for d in config.directions:
        prods.append(("D", d, (), d == "start", False))
    patterns = {name: re.compile(rx) for name, rx in config.match_tokens}
    sem = {
        "Concat": Semantics(2, lambda a, b: a + b),
        "SubStr": Semantics(3, substr),
        "Pos": Semantics(4, _pos(patterns)),
    }
    return Grammar("string_v1", symbols, "S", prods, sem, style="call", config=config)


def load_grammar(doc):
    family = doc.get("family")
    if family == "arith_example":
        return _arith()
    if family == "string_v1":
        config = StringDslConfig(
            constant_strings=list(doc.get("constants", [])),
            constant_positions=list(doc.get("positions", [0, 1, 2, 3])),
            ks=list(doc.get("ks", [1, 2])),
        )
        return _string(config)
    raise GrammarError(f"unknown grammar family {family!r}")


# -- rendering --------------------------------------------------------------


def render(program):
    if isinstance(program, Leaf):
        return program.prod.name
    kids = program.children
    if program.fn in ("+", "*"):
        left, right = (render(c) if isinstance(c, Leaf) else f"({render(c)})" for c in kids)
        return f"{left} {program.fn} {right}"
    return f"{program.fn}({', '.join(render(c) for c in kids)})"


def parse_program(text, grammar, symbol=None):
    """Inverse of render for the call-style family (used by tests and the CLI)."""
    symbol = symbol or grammar.start
    text = text.strip()
    for p in grammar.by_lhs[symbol]:
        if p.is_terminal and p.name == text:
            return Leaf(p)
    if "(" in text and text.endswith(")"):
        head, body = text.split("(", 1)
        for p in grammar.by_lhs[symbol]:
            if not p.is_terminal and p.name == head:
                parts = _split_args(body[:-1])
                if len(parts) != p.arity:
                    break
                return App(p, tuple(parse_program(a, grammar, s) for a, s in zip(parts, p.args)))
    raise StructuralError(f"cannot parse {text!r} as {symbol}")


def _split_args(body):
    parts, depth, cur, quote = [], 0, [], None
    for i, ch in enumerate(body):
        if ch in "\"'" and (i == 0 or body[i - 1] != "\\"):
            if quote is None:
                quote = ch
            elif quote == ch:
                quote = None
        if quote is None:
            if ch == "(":
                depth += 1
            elif ch == ")":
                depth -= 1
            elif ch == "," and depth == 0:
                parts.append("".join(cur))
                cur = []
                continue
        cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts]
