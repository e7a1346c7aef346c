"""Iterated-integral words and the reduction of tree integrals to words.

A word ``(j1, ..., jn)`` denotes the iterated integral whose *innermost*
integrator is ``j1`` and outermost is ``jn``; index 0 integrates against
``ds``, index ``j >= 1`` against the j-th Wiener component.
"""
from __future__ import annotations

import enum
import math
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Iterator, Mapping

from .trees import ROOT, HalfInt, Tree, format_tree

Word = tuple[int, ...]
EMPTY: Word = ()


class Calculus(enum.Enum):
    ITO = "ito"
    STRATONOVICH = "stratonovich"

    @classmethod
    def of(cls, value) -> "Calculus":
        if isinstance(value, Calculus):
            return value
        v = str(value).lower()
        if v in ("ito", "itô", "i"):
            return cls.ITO
        if v in ("stratonovich", "strat", "s"):
            return cls.STRATONOVICH
        raise ValueError(f"unknown calculus {value!r}")


class IntegralCombination(Mapping):
    """Finite linear combination of words with exact rational coefficients."""

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[Word, object] | Iterable[tuple[Word, object]] = ()):
        acc: dict[Word, Fraction] = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for w, c in items:
            w = tuple(int(i) for i in w)
            acc[w] = acc.get(w, Fraction(0)) + Fraction(c)
        self._terms = {w: c for w, c in acc.items() if c != 0}

    @classmethod
    def word(cls, w: Word, coeff=1) -> "IntegralCombination":
        return cls({tuple(w): coeff})

    def __getitem__(self, w: Word) -> Fraction:
        return self._terms[tuple(w)]

    def __iter__(self) -> Iterator[Word]:
        return iter(self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    def __eq__(self, other):
        if isinstance(other, IntegralCombination):
            return self._terms == other._terms
        if isinstance(other, Mapping):
            return self == IntegralCombination(other)
        return NotImplemented

    def __hash__(self):
        return hash(frozenset(self._terms.items()))

    def __add__(self, other: "IntegralCombination") -> "IntegralCombination":
        merged = dict(self._terms)
        for w, c in other.items():
            merged[w] = merged.get(w, Fraction(0)) + c
        return IntegralCombination(merged)

    def __mul__(self, scalar) -> "IntegralCombination":
        s = Fraction(scalar)
        return IntegralCombination({w: c * s for w, c in self._terms.items()})

    __rmul__ = __mul__

    def append(self, j: int) -> "IntegralCombination":
        """Integrate every word once more against index ``j`` (outermost)."""
        return IntegralCombination({w + (j,): c for w, c in self._terms.items()})

    def times(self, other: "IntegralCombination", calculus: Calculus) -> "IntegralCombination":
        out: dict[Word, Fraction] = {}
        for u, cu in self._terms.items():
            for v, cv in other._terms.items():
                for w, c in word_product(u, v, calculus).items():
                    out[w] = out.get(w, Fraction(0)) + cu * cv * c
        return IntegralCombination(out)

    def max_length(self) -> int:
        return max((len(w) for w in self._terms), default=0)

    def top_part(self, length: int | None = None) -> "IntegralCombination":
        """Restriction to words of the given (default: maximal) length."""
        n = self.max_length() if length is None else length
        return IntegralCombination({w: c for w, c in self._terms.items() if len(w) == n})

    def sorted_items(self) -> list[tuple[Word, Fraction]]:
        """Items by word length, then lexicographically."""
        return sorted(self._terms.items(), key=lambda kv: (len(kv[0]), kv[0]))

    def to_json(self) -> list[dict]:
        return [
            {"word": list(w), "num": c.numerator, "den": c.denominator}
            for w, c in self.sorted_items()
        ]

    @classmethod
    def from_json(cls, data: list[dict]) -> "IntegralCombination":
        return cls((tuple(e["word"]), Fraction(e["num"], e.get("den", 1))) for e in data)

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        # longest words first, mirroring how expansions are usually written
        items = sorted(self._terms.items(), key=lambda kv: (len(kv[0]), kv[0]), reverse=True)
        return " + ".join(f"{c}*{format_word(w)}" for w, c in items)

    def __repr__(self) -> str:
        return f"IntegralCombination({str(self)!r})"

    def to_latex(self) -> str:
        parts = []
        for w, c in sorted(self._terms.items(), key=lambda kv: (len(kv[0]), kv[0]), reverse=True):
            coeff = "" if c == 1 else (f"{c}\\," if c.denominator == 1 else f"\\tfrac{{{c.numerator}}}{{{c.denominator}}}\\,")
            parts.append(f"{coeff}\\mathcal{{I}}_{{({','.join(map(str, w))})}}")
        return " + ".join(parts) if parts else "0"


def format_word(w: Word) -> str:
    return "(" + ",".join(str(i) for i in w) + ")"


def word_product(u: Word, v: Word, calculus: Calculus) -> IntegralCombination:
    """Expand the product of two iterated integrals into a sum of words.

    Uses the integration-by-parts rule on the outermost letters; under Itô a
    pair of equal nonzero outer letters produces the extra ``ds`` term.
    """
    return IntegralCombination(_product(tuple(u), tuple(v), Calculus.of(calculus)))


@lru_cache(maxsize=None)
def _product(u: Word, v: Word, calculus: Calculus) -> tuple[tuple[Word, Fraction], ...]:
    if not u:
        return ((v, Fraction(1)),)
    if not v:
        return ((u, Fraction(1)),)
    i, j = u[-1], v[-1]
    acc: dict[Word, Fraction] = {}

    def add(terms, letter):
        for w, c in terms:
            key = w + (letter,)
            acc[key] = acc.get(key, Fraction(0)) + c

    add(_product(u[:-1], v, calculus), i)
    add(_product(u, v[:-1], calculus), j)
    if calculus is Calculus.ITO and i == j != 0:
        add(_product(u[:-1], v[:-1], calculus), 0)
    return tuple((w, c) for w, c in acc.items() if c != 0)


def reduce_tree(t: Tree, calculus) -> IntegralCombination:
    """The multiple stochastic integral of ``t`` as a combination of words."""
    calculus = Calculus.of(calculus)
    if t.color != ROOT:
        raise ValueError(f"reduce_tree needs a root tree, got {format_tree(t)}")
    return _reduce(t, calculus)


@lru_cache(maxsize=None)
def _reduce(t: Tree, calculus: Calculus) -> IntegralCombination:
    prod = IntegralCombination.word(EMPTY)
    for c in t.children:
        if c.color == ROOT:
            raise ValueError("root color inside tree")
        prod = prod.times(_reduce(c, calculus), calculus)
    if t.color == ROOT:
        return prod
    return prod.append(t.color)


def ito_word_expectation(w: Word, h: float) -> float:
    """E[I_w] over an interval of length ``h`` for an Itô word."""
    if any(w):
        return 0.0
    n = len(w)
    return h**n / math.factorial(n)


def word_grade(w: Word) -> int:
    """l(w) + n(w): length plus number of zero letters (twice the order)."""
    return len(w) + sum(1 for i in w if i == 0)


def hierarchical_set(p, m: int) -> list[Word]:
    """Multi-indices over {0..m} with ``l + n <= 2p``, shortest first."""
    limit = HalfInt.of(p).twice
    out: list[Word] = [EMPTY]
    frontier: list[Word] = [EMPTY]
    while frontier:
        nxt = []
        for w in frontier:
            for j in range(m + 1):
                cand = w + (j,)
                if word_grade(cand) <= limit:
                    nxt.append(cand)
        out.extend(sorted(nxt))
        frontier = sorted(nxt)
    return out
