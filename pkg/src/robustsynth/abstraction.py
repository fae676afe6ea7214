"""Predicate abstraction: atoms, normalized conjunctions, alpha/gamma and transformers."""

import json
from functools import lru_cache
from typing import NamedTuple

from .dsl import BOTTOM, App, Leaf, evaluate

TRUE_K, FALSE_K, LEN_K, CHAR_K, EQ_K = range(5)


class Predicate(NamedTuple):
    kind: int
    symbol: object = None
    index: int = -1
    value: object = None

    def sort_key(self):
        v = self.value
        return (self.kind, self.index, type(v).__name__, repr(v), str(self.symbol))

    def holds(self, v):
        k = self.kind
        if k == TRUE_K:
            return True
        if k == FALSE_K:
            return False
        if k == EQ_K:
            return same_value(v, self.value)
        if not isinstance(v, str):
            return False
        if k == LEN_K:
            return len(v) == self.index
        return self.index < len(v) and v[self.index] == self.value

    def __str__(self):
        k = self.kind
        if k == TRUE_K:
            return "true"
        if k == FALSE_K:
            return "false"
        if k == LEN_K:
            return f"len={self.index}"
        if k == CHAR_K:
            return f"s[{self.index}]={self.value!r}"
        v = self.value
        return f"s={json.dumps(v) if isinstance(v, str) else repr(v)}"


def same_value(a, b):
    if a is BOTTOM or b is BOTTOM:
        return a is b
    return type(a) is type(b) and a == b


TRUE = Predicate(TRUE_K)
FALSE = Predicate(FALSE_K)


def Len(symbol, i):
    return Predicate(LEN_K, symbol, i)


def CharAt(symbol, i, c):
    return Predicate(CHAR_K, symbol, i, c)


def Eq(symbol, v):
    return Predicate(EQ_K, symbol, -1, v)


class AbstractValue:
    """A normalized conjunction of atoms over one grammar symbol.

    The empty conjunction is true; (FALSE,) is false; an Eq atom stands alone.
    """

    __slots__ = ("symbol", "conjuncts", "_hash", "_facts")

    def __init__(self, symbol, conjuncts):
        self.symbol = symbol
        self.conjuncts = conjuncts
        self._hash = hash((symbol, conjuncts))
        self._facts = None

    def __eq__(self, other):
        return (
            isinstance(other, AbstractValue)
            and self.symbol == other.symbol
            and self.conjuncts == other.conjuncts
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"<{self.symbol}: {self}>"

    def __str__(self):
        if not self.conjuncts:
            return "true"
        return " ∧ ".join(str(p) for p in self.conjuncts)

    @property
    def is_true(self):
        return not self.conjuncts

    @property
    def is_false(self):
        return self.conjuncts == (FALSE,)

    @property
    def is_eq(self):
        return len(self.conjuncts) == 1 and self.conjuncts[0].kind == EQ_K

    @property
    def eq_value(self):
        return self.conjuncts[0].value

    def facts(self):
        """(length or None, {index: char}) known about a non-bottom string."""
        if self._facts is None:
            if self.is_eq:
                v = self.eq_value
                if isinstance(v, str):
                    self._facts = (len(v), dict(enumerate(v)))
                else:
                    self._facts = (None, {})
            else:
                length, chars = None, {}
                for p in self.conjuncts:
                    if p.kind == LEN_K:
                        length = p.index
                    elif p.kind == CHAR_K:
                        chars[p.index] = p.value
                self._facts = (length, chars)
        return self._facts

    def determined(self):
        """The single string this conjunction pins down, or None."""
        if self.is_eq:
            return self.eq_value
        length, chars = self.facts()
        if length is not None and len(chars) == length:
            return "".join(chars[i] for i in range(length))
        return None


@lru_cache(maxsize=1 << 18)
def _normalize(symbol, atoms):
    atoms = {a for a in atoms if a.kind != TRUE_K}
    if FALSE in atoms:
        return (FALSE,)
    eqs = [a for a in atoms if a.kind == EQ_K]
    if eqs:
        if len(eqs) > 1:
            return (FALSE,)
        v = eqs[0].value
        if all(a.holds(v) for a in atoms):
            return (eqs[0],)
        return (FALSE,)
    lens = {a.index for a in atoms if a.kind == LEN_K}
    if len(lens) > 1:
        return (FALSE,)
    chars = {}
    for a in atoms:
        if a.kind == CHAR_K:
            if chars.setdefault(a.index, a.value) != a.value:
                return (FALSE,)
    if lens and chars and max(chars) >= next(iter(lens)):
        return (FALSE,)
    return tuple(sorted(atoms, key=Predicate.sort_key))


def make(symbol, atoms=()):
    return AbstractValue(symbol, _normalize(symbol, frozenset(atoms)))


def top(symbol):
    return AbstractValue(symbol, ())


def bottom_value(symbol):
    return AbstractValue(symbol, (FALSE,))


def exact(symbol, v):
    return AbstractValue(symbol, (Eq(symbol, v),))


def meet(a, b):
    return make(a.symbol, a.conjuncts + b.conjuncts)


def normalize(value):
    return make(value.symbol, value.conjuncts)


def extract_predicates(value):
    if value.is_true:
        return {TRUE}
    return set(value.conjuncts)


def gamma_contains(value, concrete):
    return all(p.holds(concrete) for p in value.conjuncts)


def _entails(a, q):
    if a.is_eq:
        return q.holds(a.eq_value)
    if q.kind == TRUE_K:
        return True
    if q.kind in (LEN_K, CHAR_K):
        return q in a.conjuncts
    if q.kind == EQ_K:
        d = a.determined()
        return d is not None and same_value(d, q.value)
    return False


def implies(a, b):
    if a.is_false:
        return True
    if b.is_false:
        return False
    return all(_entails(a, q) for q in b.conjuncts)


# -- banks and the universe -------------------------------------------------


class PredicateBank:
    """The enabled atoms. Whole families (every Len, every CharAt, every Eq)
    can be switched on by flag since they are infinite."""

    __slots__ = ("atoms", "all_len", "all_char", "all_eq", "_key")

    def __init__(self, atoms=(), all_len=False, all_char=False, all_eq=False):
        self.atoms = frozenset(a for a in atoms if a.kind not in (TRUE_K, FALSE_K))
        self.all_len = all_len
        self.all_char = all_char
        self.all_eq = all_eq
        self._key = (self.atoms, all_len, all_char, all_eq)

    def __eq__(self, other):
        return isinstance(other, PredicateBank) and self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def has(self, p):
        k = p.kind
        if k in (TRUE_K, FALSE_K):
            return True
        if k == LEN_K and self.all_len:
            return True
        if k == CHAR_K and self.all_char:
            return True
        if k == EQ_K and self.all_eq:
            return True
        return p in self.atoms

    def union(self, preds):
        return PredicateBank(self.atoms | set(preds), self.all_len, self.all_char, self.all_eq)

    def missing(self, preds):
        return {p for p in preds if not self.has(p)}

    def symbols(self):
        return {p.symbol for p in self.atoms}

    def __len__(self):
        return len(self.atoms) + 2

    def __contains__(self, p):
        return self.has(p)

    def __repr__(self):
        flags = [n for n, f in (("len", self.all_len), ("char", self.all_char), ("eq", self.all_eq)) if f]
        return f"PredicateBank({len(self.atoms)} atoms, families={flags})"


def initial_bank():
    return PredicateBank(all_len=True)


class PredicateUniverse:
    """Admissible atoms: every Len and CharAt over string symbols, Eq over any value."""

    def __init__(self, grammar):
        self.kinds = dict(grammar.symbols)

    def __contains__(self, p):
        if p.kind in (TRUE_K, FALSE_K, EQ_K):
            return True
        return self.kinds.get(p.symbol) == "string" and p.index >= 0

    def implied(self, symbol, v):
        return implied_predicates(v, symbol)


def implied_predicates(concrete, symbol=None):
    out = {TRUE, Eq(symbol, concrete)}
    if isinstance(concrete, str):
        out.add(Len(symbol, len(concrete)))
        out.update(CharAt(symbol, i, c) for i, c in enumerate(concrete))
    return out


def alpha(bank, value):
    if value.is_false:
        return value
    if value.is_eq:
        atoms = [p for p in implied_predicates(value.eq_value, value.symbol) if bank.has(p)]
        return make(value.symbol, atoms)
    atoms = [p for p in value.conjuncts if bank.has(p)]
    d = value.determined()
    if d is not None and bank.has(Eq(value.symbol, d)):
        atoms.append(Eq(value.symbol, d))
    return make(value.symbol, atoms)


# -- transformers -----------------------------------------------------------


def _concat(args, symbol):
    left, right = args
    if left.is_true or right.is_true:
        return top(symbol)  # a true argument may be bottom
    llen, lchars = left.facts()
    rlen, rchars = right.facts()
    atoms = [CharAt(symbol, i, c) for i, c in lchars.items()]
    if llen is not None:
        atoms += [CharAt(symbol, llen + i, c) for i, c in rchars.items()]
        if rlen is not None:
            atoms.append(Len(symbol, llen + rlen))
    return make(symbol, atoms)


def _substr(args, symbol):
    src, lo, hi = args
    if not (lo.is_eq and hi.is_eq):
        return top(symbol)
    i, j = lo.eq_value, hi.eq_value
    if i < 0 or i > j:
        return exact(symbol, BOTTOM)
    if src.is_true:
        return top(symbol)
    length, chars = src.facts()
    if length is not None:
        if j > length:
            return exact(symbol, BOTTOM)
    elif not chars or j > max(chars) + 1:
        return top(symbol)
    atoms = [Len(symbol, j - i)]
    atoms += [CharAt(symbol, k - i, c) for k, c in chars.items() if i <= k < j]
    return make(symbol, atoms)


RULES = {"Concat": _concat, "SubStr": _substr}


def transformer(grammar, fn, args, symbol):
    """Sound abstract semantics of `fn`, exact when every argument is an Eq."""
    if any(a.is_false for a in args):
        return bottom_value(symbol)
    if all(a.is_eq for a in args):
        vals = [a.eq_value for a in args]
        if any(v is BOTTOM for v in vals):
            return exact(symbol, BOTTOM)
        return exact(symbol, grammar.semantics[fn].fn(*vals))
    if any(a.is_eq and a.eq_value is BOTTOM for a in args):
        return exact(symbol, BOTTOM)
    rule = RULES.get(fn)
    if rule is None:
        return top(symbol)
    return rule(args, symbol)


def leaf_value(prod, inp):
    return inp if prod.is_input else prod.value


def abstract_eval(program, inp, bank, grammar):
    if isinstance(program, Leaf):
        return alpha(bank, exact(program.symbol, leaf_value(program.prod, inp)))
    kids = [abstract_eval(c, inp, bank, grammar) for c in program.children]
    return alpha(bank, transformer(grammar, program.fn, kids, program.symbol))


def concrete_children(program, inp, grammar):
    assert isinstance(program, App)
    return [evaluate(c, inp, grammar) for c in program.children]
