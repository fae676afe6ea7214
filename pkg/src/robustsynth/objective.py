"""Loss functions (concrete and abstract), objectives, scores and the distance measure."""

import math
from dataclasses import dataclass
from typing import NamedTuple

from .abstraction import abstract_eval, gamma_contains
from .dsl import BOTTOM, StructuralError, evaluate

INF = math.inf


def gap(concrete, abstract):
    """concrete - abstract with inf - inf taken as 0."""
    if concrete == INF and abstract == INF:
        return 0.0
    return concrete - abstract


# -- concrete losses --------------------------------------------------------


def osa_distance(a, b):
    """Damerau-Levenshtein distance (adjacent transpositions, optimal string alignment)."""
    n, m = len(a), len(b)
    prev2 = None
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        cur = [i] + [0] * m
        for j in range(1, m + 1):
            sub = prev[j - 1] + (a[i - 1] != b[j - 1])
            best = min(sub, prev[j] + 1, cur[j - 1] + 1)
            if i > 1 and j > 1 and a[i - 1] == b[j - 2] and a[i - 2] == b[j - 1]:
                best = min(best, prev2[j - 2] + 1)
            cur[j] = best
        prev2, prev = prev, cur
    return prev[m]


def _zero_one(z, y):
    return 0.0 if z == y else 1.0


def _zero_inf(z, y):
    return 0.0 if z == y else INF


def _dl(z, y):
    return float(osa_distance(z, y))


def _one_delete(z, y):
    if z == y:
        return 0.0
    if len(z) == len(y) + 1:
        for k in range(len(z)):
            if z[:k] + z[k + 1 :] == y:
                return 1.0
    return INF


def _n_sub(z, y):
    if len(z) != len(y):
        return INF
    return float(sum(a != b for a, b in zip(z, y)))


# -- abstract losses --------------------------------------------------------


def to_str(value, y):
    """Character array for an abstract string: fixed chars where known, None elsewhere."""
    length, chars = value.facts()
    if length is None:
        length = max([len(y)] + [i + 1 for i in chars])
    return [chars.get(i) for i in range(length)]


def _abs_zero_one(value, y):
    return 0.0 if gamma_contains(value, y) else 1.0


def _abs_zero_inf(value, y):
    return 0.0 if gamma_contains(value, y) else INF


def _abs_n_sub(value, y):
    if value.is_true:
        return 0.0
    c = to_str(value, y)
    if len(c) != len(y):
        return INF
    return float(sum(ch is not None and ch != yc for ch, yc in zip(c, y)))


def _abs_one_delete(value, y):
    if gamma_contains(value, y):
        return 0.0
    length, chars = value.facts()
    m = len(y)
    if length is not None and length != m + 1:
        return INF
    for k in range(m + 1):
        pattern = y[:k] + "?" + y[k:]
        if all(i < m + 1 and (i == k or pattern[i] == ch) for i, ch in chars.items()):
            return 1.0
    return INF


def _fixed_dl(c, y):
    """The d_{c,y} recurrence: edit distance where a None in c matches anything."""
    n, m = len(c), len(y)
    prev2 = None
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        cur = [i] + [0] * m
        ci = c[i - 1]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (0 if ci is None or ci == y[j - 1] else 1)
            best = min(sub, prev[j] + 1, cur[j - 1] + 1)
            if (
                i > 1
                and j > 1
                and (ci is None or ci == y[j - 2])
                and (c[i - 2] is None or c[i - 2] == y[j - 1])
            ):
                best = min(best, prev2[j - 2] + 1)
            cur[j] = best
        prev2, prev = prev, cur
    return prev[m]


def _abs_dl(value, y):
    length, chars = value.facts()
    if length is not None:
        return float(_fixed_dl(to_str(value, y), y))
    # Unknown length: try each admissible length. Any length L costs at least
    # L - |y|, so the scan stops once that floor reaches the best seen.
    shortest = max(chars) + 1 if chars else 0
    best = INF
    n = shortest
    while n - len(y) < best:
        c = [chars.get(i) for i in range(n)]
        best = min(best, _fixed_dl(c, y))
        n += 1
    return float(best)


@dataclass(frozen=True)
class LossFn:
    name: str
    _concrete: object
    _abstract: object

    def concrete(self, z, y):
        if z is BOTTOM:
            return INF
        return self._concrete(z, y)

    def abstract(self, value, y):
        if value.is_false:
            return INF
        if value.is_eq:
            return self.concrete(value.eq_value, y)
        return self._abstract(value, y)

    def memo(self):
        table = {}

        def cached(value, y):
            key = (value, y)
            r = table.get(key)
            if r is None:
                r = table[key] = self.abstract(value, y)
            return r

        return cached


LOSSES = {
    "zero_one": LossFn("zero_one", _zero_one, _abs_zero_one),
    "zero_inf": LossFn("zero_inf", _zero_inf, _abs_zero_inf),
    "dl": LossFn("dl", _dl, _abs_dl),
    "one_delete": LossFn("one_delete", _one_delete, _abs_one_delete),
    "n_sub": LossFn("n_sub", _n_sub, _abs_n_sub),
}


def get_loss(name):
    try:
        return LOSSES[name]
    except KeyError:
        raise ValueError(f"unknown loss {name!r}") from None


def concrete_loss(fn, output, target):
    return fn.concrete(output, target)


def abstract_loss(fn, value, target):
    return fn.abstract(value, target)


def dataset_loss(fn, outputs, targets, abstract=False):
    outputs, targets = list(outputs), list(targets)
    if len(outputs) != len(targets):
        raise StructuralError(f"{len(outputs)} outputs for {len(targets)} targets")
    per = fn.abstract if abstract else fn.concrete
    return float(sum(per(o, t) for o, t in zip(outputs, targets)))


# -- objectives -------------------------------------------------------------


class Score(NamedTuple):
    loss: float
    complexity: float

    def __str__(self):
        return f"loss={fmt_num(self.loss)} complexity={fmt_num(self.complexity)}"


def fmt_num(x):
    if x == INF:
        return "inf"
    return str(int(x)) if float(x).is_integer() else repr(float(x))


@dataclass(frozen=True)
class Objective:
    kind: str = "lexicographic"
    lam: float = 1.0

    def __post_init__(self):
        if self.kind not in ("lexicographic", "tradeoff"):
            raise ValueError(f"unknown objective {self.kind!r}")
        if self.kind == "tradeoff" and not self.lam > 0:
            raise ValueError("tradeoff lambda must be positive")

    def key(self, score):
        if self.kind == "lexicographic":
            return (score.loss, score.complexity)
        return (score.loss + self.lam * score.complexity,)

    def value(self, score):
        """A single comparable number or tuple; equal values mean equally good."""
        return self.key(score)

    def to_json(self):
        if self.kind == "lexicographic":
            return {"kind": "lexicographic"}
        return {"kind": "tradeoff", "lambda": self.lam}


def objective_from_json(doc):
    kind = doc.get("kind", "lexicographic")
    return Objective(kind, float(doc.get("lambda", 1.0)))


def compare_scores(obj, a, b):
    ka, kb = obj.key(a), obj.key(b)
    return (ka > kb) - (ka < kb)


def in_ball(obj, score, optimum, epsilon):
    """Whether `score` is at least as good as the optimum with epsilon added to its loss."""
    relaxed = Score(optimum.loss + epsilon, optimum.complexity)
    return compare_scores(obj, score, relaxed) <= 0


def distance(program, dataset, bank, fn, grammar):
    inputs = [x for x, _ in dataset]
    targets = [y for _, y in dataset]
    conc = dataset_loss(fn, [evaluate(program, x, grammar) for x in inputs], targets)
    abst = dataset_loss(
        fn, [abstract_eval(program, x, bank, grammar) for x in inputs], targets, abstract=True
    )
    return gap(conc, abst)
