"""Colored rooted trees (S-trees) and their combinatorics.

A tree is an unordered rooted tree whose nodes carry one of the colors
``ROOT`` (the functional node, only at the top), ``0`` (a deterministic
node) or ``j >= 1`` (a stochastic node driven by the j-th Wiener
component).  Trees are stored in canonical form so that two trees are equal
exactly when they belong to the same equivalence class of monotonically
labelled trees.

Orders are half-integers; they are handled as ``2 * order`` integers
throughout (see :class:`HalfInt`).
"""
from __future__ import annotations

import itertools
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Iterator, Sequence

ROOT = -1
DETERMINISTIC = 0

# l! must fit into a signed 64-bit integer
MAX_NODES = 20
# exhaustive labelling enumeration is factorial in the node count
BRUTE_FORCE_MAX_NODES = 8


class TreeSizeError(ValueError):
    """Raised when a tree exceeds the supported node count."""


class TreeSyntaxError(ValueError):
    """Raised by :func:`parse_tree` on malformed bracket notation."""

    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} at position {pos}")
        self.pos = pos


@dataclass(frozen=True, order=True)
class HalfInt:
    """Non-negative half-integer stored as twice its value."""

    twice: int

    def __post_init__(self):
        if not isinstance(self.twice, int) or self.twice < 0:
            raise ValueError(f"twice must be a non-negative int, got {self.twice!r}")

    @classmethod
    def of(cls, value) -> "HalfInt":
        """Build from ``1.5``, ``"1.5"``, ``Fraction(3, 2)`` or an existing HalfInt."""
        if isinstance(value, HalfInt):
            return value
        if isinstance(value, str):
            value = Fraction(value.strip())
        twice = Fraction(value) * 2
        if twice.denominator != 1:
            raise ValueError(f"{value!r} is not a multiple of 1/2")
        return cls(int(twice))

    @property
    def is_integer(self) -> bool:
        return self.twice % 2 == 0

    def as_fraction(self) -> Fraction:
        return Fraction(self.twice, 2)

    def __float__(self) -> float:
        return self.twice / 2

    def __str__(self) -> str:
        return str(self.twice // 2) if self.is_integer else f"{self.twice / 2:g}"


def color_weight(color: int) -> int:
    """Contribution of one node to ``2 * order``."""
    if color == ROOT:
        return 0
    return 2 if color == DETERMINISTIC else 1


@dataclass(frozen=True, eq=False)
class Tree:
    """Canonical colored rooted tree.

    Build trees through :func:`make_tree` (or :func:`parse_tree`), which
    sorts children into canonical order; the constructor trusts its input.
    """

    color: int
    children: tuple["Tree", ...] = ()
    key: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "key", (self.color, len(self.children), tuple(c.key for c in self.children))
        )

    def __eq__(self, other):
        if not isinstance(other, Tree):
            return NotImplemented
        return self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __lt__(self, other: "Tree") -> bool:
        return self.key < other.key

    def __repr__(self) -> str:
        return f"Tree({format_tree(self)!r})"

    @property
    def num_nodes(self) -> int:
        return 1 + sum(c.num_nodes for c in self.children)

    def count_colors(self) -> Counter:
        counts = Counter([self.color])
        for c in self.children:
            counts.update(c.count_colors())
        return counts

    @property
    def num_deterministic(self) -> int:
        return self.count_colors()[DETERMINISTIC]

    @property
    def num_stochastic(self) -> int:
        return sum(n for col, n in self.count_colors().items() if col > 0)

    @property
    def max_index(self) -> int:
        return max(self.count_colors())


def make_tree(color: int, children: Iterable[Tree] = ()) -> Tree:
    """Return the canonical tree ``[children]_color``."""
    children = tuple(sorted(children))
    for c in children:
        if c.color == ROOT:
            raise ValueError("root color can only appear at the outermost node")
    return Tree(color, children)


def canonicalize(t: Tree) -> Tree:
    return make_tree(t.color, (canonicalize(c) for c in t.children))


GAMMA = Tree(ROOT)


def leaf(color: int) -> Tree:
    return Tree(color)


def _check_size(t: Tree) -> int:
    n = t.num_nodes
    if n > MAX_NODES:
        raise TreeSizeError(f"tree has {n} nodes, the cap is {MAX_NODES}")
    return n


def order(t: Tree) -> HalfInt:
    """rho(t) = d(t) + s(t)/2, exactly."""
    return HalfInt(color_weight(t.color) + sum(order(c).twice for c in t.children))


def symmetry_factor(t: Tree) -> int:
    _check_size(t)
    return _symmetry(canonicalize(t))


def _symmetry(t: Tree) -> int:
    result = 1
    for child, n in Counter(t.children).items():
        result *= math.factorial(n) * _symmetry(child) ** n
    return result


def density(t: Tree) -> int:
    _check_size(t)
    return _density(t)


def _density(t: Tree) -> int:
    if not t.children:
        return 1
    return t.num_nodes * math.prod(_density(c) for c in t.children)


def cardinality(t: Tree) -> int:
    """Number of monotone labellings, l! / (density * symmetry)."""
    n = _check_size(t)
    q, r = divmod(math.factorial(n), _density(t) * _symmetry(canonicalize(t)))
    if r:
        raise ArithmeticError(f"l!/(gamma*sigma) is not an integer for {format_tree(t)}")
    return q


# --- labelled trees (brute-force oracles) -----------------------------------


@dataclass(frozen=True)
class LabelledTree:
    """Monotonically labelled tree.

    Nodes are ``0 .. l-1`` (zero based); ``parent[i - 1]`` is the father of
    node ``i`` and must be smaller than ``i``.
    """

    parent: tuple[int, ...]
    colors: tuple[int, ...]

    def __post_init__(self):
        if len(self.colors) != len(self.parent) + 1:
            raise ValueError("need exactly one parent entry per non-root node")
        for i, p in enumerate(self.parent, start=1):
            if not 0 <= p < i:
                raise ValueError(f"node {i} has parent {p}; labelling must be monotone")
        if ROOT in self.colors[1:]:
            raise ValueError("root color can only label node 0")

    def to_tree(self) -> Tree:
        kids: list[list[int]] = [[] for _ in self.colors]
        for i, p in enumerate(self.parent, start=1):
            kids[p].append(i)

        def build(i: int) -> Tree:
            return make_tree(self.colors[i], (build(k) for k in kids[i]))

        return build(0)


def iter_labelled_trees(root_color: int, colors: Sequence[int]) -> Iterator[LabelledTree]:
    """All labelled trees with the given root and non-root color sequence.

    Every monotone parent map is combined with every distinct ordering of
    ``colors`` over the nodes ``1 .. l-1``.
    """
    n = len(colors) + 1
    if n > BRUTE_FORCE_MAX_NODES:
        raise TreeSizeError(f"brute force limited to {BRUTE_FORCE_MAX_NODES} nodes")
    color_orders = set(itertools.permutations(colors))
    for parent in itertools.product(*(range(i) for i in range(1, n))):
        for cols in color_orders:
            yield LabelledTree(tuple(parent), (root_color,) + cols)


def count_monotone_labellings(t: Tree) -> int:
    """Count labelled trees in the class of ``t`` by exhaustive enumeration."""
    counts = t.count_colors()
    counts[t.color] -= 1
    rest = sorted(counts.elements())
    return sum(1 for lt in iter_labelled_trees(t.color, rest) if lt.to_tree() == t)


def brute_force_trees(p, m: int) -> set[Tree]:
    """Root trees of order <= p, found by canonicalizing every labelled tree."""
    limit = HalfInt.of(p).twice
    found = {GAMMA}
    alphabet = range(0, m + 1)
    for size in range(1, limit + 1):
        for cols in itertools.combinations_with_replacement(alphabet, size):
            if sum(color_weight(c) for c in cols) > limit:
                continue
            for lt in iter_labelled_trees(ROOT, cols):
                found.add(lt.to_tree())
    return found


# --- enumeration ------------------------------------------------------------


@lru_cache(maxsize=None)
def _subtrees_of_weight(w: int, m: int) -> tuple[Tree, ...]:
    """Non-root trees with 2*order exactly ``w``, canonically sorted."""
    out = []
    for color in range(0, m + 1):
        rest = w - color_weight(color)
        if rest < 0:
            continue
        out.extend(make_tree(color, f) for f in _forests(rest, m))
    return tuple(sorted(out))


@lru_cache(maxsize=None)
def _pool(w: int, m: int) -> tuple[tuple[Tree, int], ...]:
    trees = [(t, k) for k in range(1, w + 1) for t in _subtrees_of_weight(k, m)]
    return tuple(sorted(trees))


@lru_cache(maxsize=None)
def _forests(w: int, m: int) -> tuple[tuple[Tree, ...], ...]:
    """Multisets of non-root trees with total weight ``w``, as sorted tuples."""
    pool = _pool(w, m)
    out: list[tuple[Tree, ...]] = []

    def extend(prefix: list[Tree], start: int, remaining: int):
        if remaining == 0:
            out.append(tuple(prefix))
            return
        for i in range(start, len(pool)):
            t, k = pool[i]
            if k <= remaining:
                prefix.append(t)
                extend(prefix, i, remaining - k)
                prefix.pop()

    extend([], 0, w)
    return tuple(out)


def enumerate_trees(p, m: int) -> list[Tree]:
    """Every canonical root tree with order <= p over ``m`` Wiener components.

    Trees are returned grouped by increasing order and sorted canonically
    within each order.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    limit = HalfInt.of(p).twice
    return [make_tree(ROOT, f) for w in range(limit + 1) for f in _forests(w, m)]


def trees_of_order(p, m: int) -> list[Tree]:
    w = HalfInt.of(p).twice
    return [make_tree(ROOT, f) for f in _forests(w, m)]


# --- descendant sets --------------------------------------------------------


def _node_paths(t: Tree, prefix: tuple[int, ...] = ()) -> Iterator[tuple[int, ...]]:
    yield prefix
    for i, c in enumerate(t.children):
        yield from _node_paths(c, prefix + (i,))


def _graft(t: Tree, path: tuple[int, ...], new: Sequence[Tree]) -> Tree:
    if not path:
        return make_tree(t.color, t.children + tuple(new))
    i = path[0]
    kids = list(t.children)
    kids[i] = _graft(kids[i], path[1:], new)
    return make_tree(t.color, kids)


def _graft_many(t: Tree, grafts: dict[tuple[int, ...], list[Tree]]) -> Tree:
    here = grafts.get((), [])
    kids = []
    for i, c in enumerate(t.children):
        sub = {p[1:]: v for p, v in grafts.items() if p and p[0] == i}
        kids.append(_graft_many(c, sub) if sub else c)
    return make_tree(t.color, kids + here)


def _require_root(t: Tree):
    if t.color != ROOT:
        raise ValueError("descendant sets are defined for trees rooted at the functional node")


def descendants_Hj(t: Tree, j: int) -> set[Tree]:
    """Trees obtained from ``t`` by attaching one node of color ``j`` anywhere."""
    _require_root(t)
    if j < 0:
        raise ValueError("j must be >= 0")
    return {_graft(t, path, [leaf(j)]) for path in _node_paths(t)}


def descendants_HI_ordered(t: Tree, m: int) -> list[Tree]:
    """Raw attachments of two equal-index stochastic leaves.

    One entry per ``j`` and per ordered pair of attachment nodes (both
    leaves may hang from the same node), so the list has
    ``m * l(t)**2`` entries and may repeat classes.
    """
    _require_root(t)
    paths = list(_node_paths(t))
    out = []
    for j in range(1, m + 1):
        for a, b in itertools.product(paths, repeat=2):
            grafts: dict[tuple[int, ...], list[Tree]] = {}
            grafts.setdefault(a, []).append(leaf(j))
            grafts.setdefault(b, []).append(leaf(j))
            out.append(_graft_many(t, grafts))
    return out


def descendants_HI(t: Tree, m: int) -> set[Tree]:
    return set(descendants_HI_ordered(t, m))


# --- bracket notation -------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\[)|(\])|(,)|(_)|(g|t0|[1-9][0-9]*))")


def _color_text(color: int) -> str:
    if color == ROOT:
        return "g"
    return "t0" if color == DETERMINISTIC else str(color)


def format_tree(t: Tree) -> str:
    """Canonical bracket notation, e.g. ``[t0,[t0]_1]_g``."""
    if not t.children:
        return _color_text(t.color)
    inner = ",".join(format_tree(c) for c in t.children)
    return f"[{inner}]_{_color_text(t.color)}"


def parse_tree(text: str, m: int | None = None) -> Tree:
    """Parse bracket notation into a canonical tree.

    ``m`` bounds the stochastic indices when given. The outermost node may
    have any color; ``g`` is only allowed there.
    """
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        mo = _TOKEN.match(text, pos)
        if not mo:
            skip = len(text[pos:]) - len(text[pos:].lstrip())
            raise TreeSyntaxError(f"unexpected character {text[pos + skip]!r}", pos + skip)
        kind = mo.lastindex
        start = mo.start(kind)
        tokens.append((kind, mo.group(kind), start))
        pos = mo.end()
    tokens.append((0, "", len(text)))
    idx = 0

    def peek():
        return tokens[idx]

    def take(kind, what):
        nonlocal idx
        tok = tokens[idx]
        if tok[0] != kind:
            found = repr(tok[1]) if tok[1] else "end of input"
            raise TreeSyntaxError(f"expected {what}, found {found}", tok[2])
        idx += 1
        return tok

    def color_of(tok) -> int:
        s = tok[1]
        if s == "g":
            return ROOT
        c = 0 if s == "t0" else int(s)
        if m is not None and c > m:
            raise TreeSyntaxError(f"stochastic index {c} exceeds m={m}", tok[2])
        return c

    def tree(depth: int) -> Tree:
        tok = peek()
        if tok[0] == 1:
            take(1, "'['")
            kids = [tree(depth + 1)]
            while peek()[0] == 3:
                take(3, "','")
                kids.append(tree(depth + 1))
            take(2, "',' or ']'")
            take(4, "'_'")
            ctok = take(5, "a color")
        else:
            ctok = take(5, "a color or '['")
            kids = []
        color = color_of(ctok)
        if color == ROOT and depth > 0:
            raise TreeSyntaxError("root color 'g' below the root", ctok[2])
        return make_tree(color, kids)

    result = tree(0)
    if peek()[0] != 0:
        raise TreeSyntaxError(f"trailing input {peek()[1]!r}", peek()[2])
    return result
