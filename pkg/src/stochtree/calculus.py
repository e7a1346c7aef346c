"""Exact polynomial SDE models, differential operators and elementary differentials."""
from __future__ import annotations

import enum
import json
import random
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .trees import DETERMINISTIC, ROOT, Tree, format_tree
from .words import Calculus, Word


class DimensionError(ValueError):
    pass


class MultiPoly:
    """Multivariate polynomial in ``nvars`` variables with rational coefficients.

    Terms map exponent tuples to coefficients; zero coefficients are never
    stored.  Instances are immutable and hashable.
    """

    __slots__ = ("nvars", "_terms", "_hash", "_float_terms")

    def __init__(self, nvars: int, terms: Mapping[tuple[int, ...], object] = ()):
        self.nvars = int(nvars)
        clean: dict[tuple[int, ...], Fraction] = {}
        for exp, c in dict(terms).items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != self.nvars:
                raise DimensionError(f"exponent {exp} does not have {self.nvars} entries")
            if any(e < 0 for e in exp):
                raise ValueError(f"negative exponent in {exp}")
            c = Fraction(c)
            if c:
                clean[exp] = clean.get(exp, Fraction(0)) + c
        self._terms = {e: c for e, c in clean.items() if c}
        self._hash = None
        self._float_terms = None

    @classmethod
    def constant(cls, nvars: int, c) -> "MultiPoly":
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def variable(cls, nvars: int, k: int, coeff=1) -> "MultiPoly":
        exp = [0] * nvars
        exp[k] = 1
        return cls(nvars, {tuple(exp): coeff})

    @property
    def terms(self) -> dict[tuple[int, ...], Fraction]:
        return dict(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def degree(self) -> int:
        return max((sum(e) for e in self._terms), default=0)

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = MultiPoly.constant(self.nvars, other)
        if not isinstance(other, MultiPoly):
            return NotImplemented
        return self.nvars == other.nvars and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.nvars, frozenset(self._terms.items())))
        return self._hash

    def _check(self, other: "MultiPoly"):
        if other.nvars != self.nvars:
            raise DimensionError(f"{self.nvars} vs {other.nvars} variables")

    def __add__(self, other):
        if not isinstance(other, MultiPoly):
            other = MultiPoly.constant(self.nvars, other)
        self._check(other)
        out = dict(self._terms)
        for e, c in other._terms.items():
            out[e] = out.get(e, Fraction(0)) + c
        return MultiPoly(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return MultiPoly(self.nvars, {e: -c for e, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-other if isinstance(other, MultiPoly) else -Fraction(other))

    def __mul__(self, other):
        if not isinstance(other, MultiPoly):
            s = Fraction(other)
            return MultiPoly(self.nvars, {e: c * s for e, c in self._terms.items()})
        return poly_mul(self, other)

    __rmul__ = __mul__

    def diff(self, var: int) -> "MultiPoly":
        return poly_diff(self, var)

    def __call__(self, x):
        return poly_eval(self, x)

    def __repr__(self):
        if not self._terms:
            return "MultiPoly(0)"
        parts = []
        for e, c in sorted(self._terms.items(), reverse=True):
            mono = "*".join(f"x{k}^{p}" if p > 1 else f"x{k}" for k, p in enumerate(e) if p)
            parts.append(f"{c}*{mono}" if mono else str(c))
        return "MultiPoly(" + " + ".join(parts) + ")"

    def to_json(self) -> list[dict]:
        return [
            {"exp": list(e), "num": c.numerator, "den": c.denominator}
            for e, c in sorted(self._terms.items())
        ]

    @classmethod
    def from_json(cls, nvars: int, data: Iterable[Mapping]) -> "MultiPoly":
        terms: dict[tuple[int, ...], Fraction] = {}
        for entry in data:
            e = tuple(entry["exp"])
            terms[e] = terms.get(e, Fraction(0)) + Fraction(entry["num"], entry.get("den", 1))
        return cls(nvars, terms)


def poly_mul(p: MultiPoly, q: MultiPoly) -> MultiPoly:
    p._check(q)
    out: dict[tuple[int, ...], Fraction] = {}
    for e1, c1 in p._terms.items():
        for e2, c2 in q._terms.items():
            e = tuple(a + b for a, b in zip(e1, e2))
            out[e] = out.get(e, Fraction(0)) + c1 * c2
    return MultiPoly(p.nvars, out)


@lru_cache(maxsize=65536)
def poly_diff(p: MultiPoly, var: int) -> MultiPoly:
    if not 0 <= var < p.nvars:
        raise DimensionError(f"variable index {var} out of range for {p.nvars} variables")
    out = {}
    for e, c in p._terms.items():
        if e[var]:
            ne = list(e)
            ne[var] -= 1
            out[tuple(ne)] = c * e[var]
    return MultiPoly(p.nvars, out)


def poly_eval(p: MultiPoly, x: Sequence):
    """Evaluate at ``x``.

    Exact when ``x`` holds ints/Fractions; floats otherwise.
    """
    if len(x) != p.nvars:
        raise DimensionError(f"point has {len(x)} entries, polynomial has {p.nvars} variables")
    if all(isinstance(v, (int, Fraction)) for v in x):
        total = Fraction(0)
        for e, c in p._terms.items():
            term = c
            for v, k in zip(x, e):
                if k:
                    term *= Fraction(v) ** k
            total += term
        return total
    if p._float_terms is None:
        p._float_terms = [(e, float(c)) for e, c in p._terms.items()]
    xs = [float(v) for v in x]
    total = 0.0
    for e, c in p._float_terms:
        term = c
        for v, k in zip(xs, e):
            if k:
                term *= v**k
        total += term
    return total


@dataclass(frozen=True)
class PolySdeModel:
    """SDE ``dX = a(X) dt + sum_j b^j(X) *dW^j`` with scalar functional ``f``.

    ``b[k][j]`` is the k-th component of the (j+1)-th diffusion column.
    """

    d: int
    m: int
    a: tuple[MultiPoly, ...]
    b: tuple[tuple[MultiPoly, ...], ...]
    f: MultiPoly
    name: str = "model"

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(self.a))
        object.__setattr__(self, "b", tuple(tuple(row) for row in self.b))
        if self.d < 1 or self.m < 1:
            raise DimensionError("d and m must be >= 1")
        if len(self.a) != self.d or len(self.b) != self.d:
            raise DimensionError("drift and diffusion need d rows")
        if any(len(row) != self.m for row in self.b):
            raise DimensionError("each diffusion row needs m entries")
        polys = list(self.a) + [q for row in self.b for q in row] + [self.f]
        if any(q.nvars != self.d for q in polys):
            raise DimensionError("all polynomials must have d variables")

    def diffusion_column(self, j: int) -> tuple[MultiPoly, ...]:
        """b^j for j = 1..m."""
        if not 1 <= j <= self.m:
            raise ValueError(f"Wiener index {j} outside 1..{self.m}")
        return tuple(row[j - 1] for row in self.b)

    def vector_field(self, color: int) -> tuple[MultiPoly, ...]:
        return self.a if color == DETERMINISTIC else self.diffusion_column(color)

    def with_functional(self, f: MultiPoly) -> "PolySdeModel":
        return PolySdeModel(self.d, self.m, self.a, self.b, f, self.name)

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "m": self.m,
            "a": [q.to_json() for q in self.a],
            "b": [[q.to_json() for q in row] for row in self.b],
            "f": self.f.to_json(),
        }

    @classmethod
    def from_json(cls, data: Mapping, name: str = "model") -> "PolySdeModel":
        d, m = int(data["d"]), int(data["m"])
        a = [MultiPoly.from_json(d, q) for q in data["a"]]
        b = [[MultiPoly.from_json(d, q) for q in row] for row in data["b"]]
        return cls(d, m, a, b, MultiPoly.from_json(d, data["f"]), name)

    @classmethod
    def load(cls, path) -> "PolySdeModel":
        path = Path(path)
        return cls.from_json(json.loads(path.read_text()), name=path.stem)


def gbm_model(mu=Fraction(1, 2), sigma=Fraction(3, 10), calculus=Calculus.ITO) -> PolySdeModel:
    """Geometric Brownian motion ``dX = mu X dt + sigma X dW`` with ``f(x) = x``.

    The Itô parameters define the process; for Stratonovich the drift is
    converted to ``(mu - sigma^2/2) x`` so both describe the same solution.
    """
    mu, sigma = Fraction(mu), Fraction(sigma)
    drift = mu if Calculus.of(calculus) is Calculus.ITO else mu - sigma**2 / 2
    x = MultiPoly.variable(1, 0)
    return PolySdeModel(1, 1, (x * drift,), ((x * sigma,),), x, name="gbm")


def random_poly_model(seed: int, d: int = 2, m: int = 2, degree: int = 2, f_degree: int = 3) -> PolySdeModel:
    """Small random model with integer-over-4 coefficients, for cross-checks."""
    rng = random.Random(seed)

    def rand_poly(deg: int) -> MultiPoly:
        terms = {}
        for exp in _exponents(d, deg):
            if rng.random() < 0.6:
                terms[exp] = Fraction(rng.randint(-4, 4), 4)
        return MultiPoly(d, terms)

    a = [rand_poly(degree) for _ in range(d)]
    b = [[rand_poly(degree) for _ in range(m)] for _ in range(d)]
    return PolySdeModel(d, m, a, b, rand_poly(f_degree), name=f"random{seed}")


def _exponents(d: int, deg: int):
    if d == 0:
        yield ()
        return
    for k in range(deg + 1):
        for rest in _exponents(d - 1, deg - k):
            yield (k,) + rest


# --- operators ---------------------------------------------------------------


class OperatorKind(enum.Enum):
    DRIFT = "L^0 hat"  # sum_k a^k d_k
    SECOND = "L^j hat"  # sum_kl b^kj b^lj d_k d_l
    DIFFUSION = "L^j"  # sum_k b^kj d_k
    GENERATOR = "L^0"  # drift + 1/2 sum_j second


def apply_operator(kind: OperatorKind, g: MultiPoly, model: PolySdeModel, j: int | None = None) -> MultiPoly:
    if g.nvars != model.d:
        raise DimensionError(f"function has {g.nvars} variables, model has d={model.d}")
    zero = MultiPoly(model.d)
    if kind is OperatorKind.DRIFT:
        return sum((ak * poly_diff(g, k) for k, ak in enumerate(model.a)), zero)
    if kind is OperatorKind.DIFFUSION:
        col = model.diffusion_column(j)
        return sum((bk * poly_diff(g, k) for k, bk in enumerate(col)), zero)
    if kind is OperatorKind.SECOND:
        col = model.diffusion_column(j)
        out = zero
        for k, bk in enumerate(col):
            dk = poly_diff(g, k)
            for l, bl in enumerate(col):
                out = out + bk * bl * poly_diff(dk, l)
        return out
    if kind is OperatorKind.GENERATOR:
        out = apply_operator(OperatorKind.DRIFT, g, model)
        for jj in range(1, model.m + 1):
            out = out + apply_operator(OperatorKind.SECOND, g, model, jj) * Fraction(1, 2)
        return out
    raise ValueError(kind)


@lru_cache(maxsize=None)
def f_alpha(alpha: Word, model: PolySdeModel, calculus) -> MultiPoly:
    """Coefficient function of the multi-index ``alpha``.

    ``f_(j1, ..., jl) = L^{j1} f_(j2, ..., jl)`` and ``f_() = f``; the
    zero index uses the generator under Itô and the plain drift derivative
    under Stratonovich.
    """
    calculus = Calculus.of(calculus)
    alpha = tuple(alpha)
    if not alpha:
        return model.f
    inner = f_alpha(alpha[1:], model, calculus)
    j = alpha[0]
    if j == 0:
        kind = OperatorKind.GENERATOR if calculus is Calculus.ITO else OperatorKind.DRIFT
        return apply_operator(kind, inner, model)
    return apply_operator(OperatorKind.DIFFUSION, inner, model, j)


# --- elementary differentials -----------------------------------------------


def _contract(g: MultiPoly, vectors: Sequence[Sequence], x: Sequence):
    """g^(k)(x) applied to the k given vectors."""
    if not vectors:
        return poly_eval(g, x)
    first, rest = vectors[0], vectors[1:]
    total = 0
    for J, vJ in enumerate(first):
        if vJ:
            dg = poly_diff(g, J)
            if not dg.is_zero():
                total = total + vJ * _contract(dg, rest, x)
    return total


def _node_value(t: Tree, x: Sequence, model: PolySdeModel) -> list:
    if t.color == ROOT:
        raise ValueError(f"root color below the root in {format_tree(t)}")
    field = model.vector_field(t.color)
    kids = [_node_value(c, x, model) for c in t.children]
    return [_contract(comp, kids, x) for comp in field]


def elementary_differential(t: Tree, x: Sequence, model: PolySdeModel):
    """F(t)(x); exact for rational ``x``, float otherwise."""
    if t.color != ROOT:
        raise ValueError("elementary differential is defined for root trees")
    if len(x) != model.d:
        raise DimensionError(f"x has {len(x)} entries, model has d={model.d}")
    if t.max_index > model.m:
        raise ValueError(f"tree uses Wiener index {t.max_index} > m={model.m}")
    kids = [_node_value(c, x, model) for c in t.children]
    return _contract(model.f, kids, x)
