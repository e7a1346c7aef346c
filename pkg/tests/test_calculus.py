import itertools
import json
from fractions import Fraction

import mpmath
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from stochtree.calculus import (
    DimensionError,
    MultiPoly,
    OperatorKind,
    PolySdeModel,
    apply_operator,
    elementary_differential,
    f_alpha,
    gbm_model,
    poly_eval,
    random_poly_model,
)
from stochtree.trees import ROOT, Tree, enumerate_trees, format_tree, leaf, parse_tree
from stochtree.words import Calculus

ITO, STRAT = Calculus.ITO, Calculus.STRATONOVICH
MU, SIG = Fraction(1, 2), Fraction(3, 10)
X = MultiPoly.variable(1, 0)


# --- polynomial algebra -------------------------------------------------------


def test_poly_arithmetic():
    x, y = MultiPoly.variable(2, 0), MultiPoly.variable(2, 1)
    p = x * x * y + MultiPoly.constant(2, 3)
    assert p.diff(0) == x * y * Fraction(2)
    assert p.diff(1) == x * x
    assert poly_eval(p, [Fraction(1, 2), 2]) == Fraction(7, 2)
    assert poly_eval(p, [0.5, 2.0]) == pytest.approx(3.5)
    assert (p - p).is_zero()
    with pytest.raises(DimensionError):
        x + X
    with pytest.raises(DimensionError):
        poly_eval(p, [1])


def test_poly_json_round_trip():
    p = MultiPoly(2, {(2, 1): Fraction(-3, 4), (0, 0): 1})
    assert MultiPoly.from_json(2, json.loads(json.dumps(p.to_json()))) == p


# --- operators on GBM -----------------------------------------------------------


def test_gbm_operators():
    gbm = gbm_model(MU, SIG)
    assert apply_operator(OperatorKind.DRIFT, X, gbm) == X * MU
    assert apply_operator(OperatorKind.GENERATOR, X, gbm) == X * MU
    assert apply_operator(OperatorKind.DIFFUSION, X, gbm, 1) == X * SIG
    assert apply_operator(OperatorKind.SECOND, X * X, gbm, 1) == X * X * (2 * SIG**2)
    assert apply_operator(OperatorKind.GENERATOR, X * X, gbm) == X * X * (2 * MU + SIG**2)


@pytest.mark.parametrize("alpha", [w for n in range(4) for w in itertools.product((0, 1), repeat=n)])
def test_gbm_f_alpha(alpha):
    n0 = alpha.count(0)
    n1 = len(alpha) - n0
    assert f_alpha(alpha, gbm_model(MU, SIG), ITO) == X * (MU**n0 * SIG**n1)
    strat_drift = MU - SIG**2 / 2
    assert f_alpha(alpha, gbm_model(MU, SIG, STRAT), STRAT) == X * (strat_drift**n0 * SIG**n1)


def test_diffusion_of_affine_vanishes():
    model = random_poly_model(3)
    affine = MultiPoly(2, {(0, 0): 1, (1, 0): 2, (0, 1): -1})
    for j in (1, 2):
        assert apply_operator(OperatorKind.SECOND, affine, model, j).is_zero()
    assert apply_operator(OperatorKind.DIFFUSION, MultiPoly.constant(2, 5), model, 1).is_zero()


def _poly(draw_terms, d=2):
    return MultiPoly(d, draw_terms)


_coeff = st.fractions(min_value=-3, max_value=3, max_denominator=4)
_poly_st = st.dictionaries(st.tuples(st.integers(0, 3), st.integers(0, 3)), _coeff, max_size=5).map(_poly)


@settings(max_examples=60, deadline=None)
@given(_poly_st, _poly_st, _coeff, st.sampled_from(list(OperatorKind)), st.integers(0, 4))
def test_operator_linearity(g1, g2, c, kind, seed):
    model = random_poly_model(seed)
    lhs = apply_operator(kind, g1 + g2 * c, model, 1)
    rhs = apply_operator(kind, g1, model, 1) + apply_operator(kind, g2, model, 1) * c
    assert lhs == rhs


def test_operator_dimension_mismatch():
    with pytest.raises(DimensionError):
        apply_operator(OperatorKind.DRIFT, X, random_poly_model(0))


# --- finite-difference oracle for f_alpha -------------------------------------

FD_STEP = mpmath.mpf("1e-5")


def _mp_callable(p: MultiPoly):
    terms = [(e, mpmath.mpf(c.numerator) / c.denominator) for e, c in p.terms.items()]

    def g(x):
        total = mpmath.mpf(0)
        for e, c in terms:
            term = c
            for v, k in zip(x, e):
                term *= v**k
            total += term
        return total

    return g


def _fd_grad(g, x, k):
    e = [FD_STEP if i == k else 0 for i in range(len(x))]
    return (g([a + b for a, b in zip(x, e)]) - g([a - b for a, b in zip(x, e)])) / (2 * FD_STEP)


def _fd_hess(g, x, k, l):
    def shifted(dk, dl):
        y = list(x)
        y[k] += dk * FD_STEP
        y[l] += dl * FD_STEP
        return g(y)

    if k == l:
        return (shifted(1, 0) - 2 * g(x) + shifted(-1, 0)) / FD_STEP**2
    return (shifted(1, 1) - shifted(1, -1) - shifted(-1, 1) + shifted(-1, -1)) / (4 * FD_STEP**2)


def _fd_operator(letter, g, model, calculus):
    a = [_mp_callable(q) for q in model.a]
    b = [[_mp_callable(q) for q in row] for row in model.b]
    d, m = model.d, model.m

    def diffusion(x, j):
        return sum(b[k][j - 1](x) * _fd_grad(g, x, k) for k in range(d))

    def result(x):
        if letter != 0:
            return diffusion(x, letter)
        out = sum(a[k](x) * _fd_grad(g, x, k) for k in range(d))
        if calculus is ITO:
            for j in range(1, m + 1):
                out += sum(
                    b[k][j - 1](x) * b[l][j - 1](x) * _fd_hess(g, x, k, l) for k in range(d) for l in range(d)
                ) / 2
        return out

    return result


def _fd_f_alpha(alpha, model, calculus):
    g = _mp_callable(model.f)
    for letter in reversed(alpha):
        g = _fd_operator(letter, g, model, calculus)
    return g


@pytest.mark.parametrize("calculus", [ITO, STRAT])
@pytest.mark.parametrize("model_seed", [None, 1])
def test_f_alpha_matches_finite_differences(calculus, model_seed):
    mpmath.mp.dps = 60
    model = gbm_model(MU, SIG, calculus) if model_seed is None else random_poly_model(model_seed)
    x0 = [mpmath.mpf("0.7"), mpmath.mpf("-0.4")][: model.d]
    alphas = [w for n in range(1, 4) for w in itertools.product(range(model.m + 1), repeat=n)]
    if model.d > 1:
        alphas = [w for w in alphas if len(w) <= 2] + [(1, 0, 2), (0, 1, 1), (2, 2, 0)]
    for alpha in alphas:
        exact = poly_eval(f_alpha(alpha, model, calculus), [Fraction(7, 10), Fraction(-2, 5)][: model.d])
        approx = _fd_f_alpha(alpha, model, calculus)(x0)
        scale = max(abs(float(exact)), 1e-3)
        assert abs(float(approx) - float(exact)) <= 1e-6 * scale, alpha


# --- elementary differentials ---------------------------------------------------


def _sympy(model: PolySdeModel):
    xs = sp.symbols(f"x0:{model.d}")

    def conv(p):
        return sum(
            (sp.Rational(c.numerator, c.denominator) * sp.Mul(*[v**k for v, k in zip(xs, e)]) for e, c in p.terms.items()),
            sp.Integer(0),
        )

    a = [conv(q) for q in model.a]
    b = [[conv(q) for q in row] for row in model.b]
    return xs, conv(model.f), a, b


def _sympy_F(t: Tree, model: PolySdeModel, point):
    """Recursive nested-derivative definition with sympy differentiation."""
    xs, f, a, b = _sympy(model)
    subs = dict(zip(xs, [sp.Rational(v.numerator, v.denominator) for v in point]))

    def field(color):
        return a if color == 0 else [row[color - 1] for row in b]

    def apply(g, kids):
        total = sp.Integer(0)
        for Ks in itertools.product(range(model.d), repeat=len(kids)):
            coeff = sp.diff(g, *[xs[k] for k in Ks]) if Ks else g
            if coeff == 0:
                continue
            prod = coeff.subs(subs)
            for vec, K in zip(kids, Ks):
                prod *= vec[K]
            total += prod
        return total

    def node(s):
        kids = [node(c) for c in s.children]
        return [apply(comp, kids) for comp in field(s.color)]

    return apply(f, [node(c) for c in t.children])


POINT = [Fraction(1, 3), Fraction(-1, 2)]


@pytest.mark.parametrize("seed", [1, 2])
def test_elementary_differentials_match_sympy(seed):
    model = random_poly_model(seed)
    for t in enumerate_trees("1.5", 2):
        got = elementary_differential(t, POINT, model)
        want = _sympy_F(t, model, POINT)
        assert sp.Rational(got.numerator, got.denominator) == want, format_tree(t)


def test_F_t_II_explicit_double_sum():
    model = random_poly_model(2)
    xs, f, a, b = _sympy(model)
    subs = dict(zip(xs, [sp.Rational(v.numerator, v.denominator) for v in POINT]))
    for j1, j2 in itertools.product((1, 2), repeat=2):
        want = sum(
            sp.diff(f, xs[J1]) * sp.diff(a[J1], xs[K1], xs[K2]) * b[K1][j1 - 1] * b[K2][j2 - 1]
            for J1 in range(2)
            for K1 in range(2)
            for K2 in range(2)
        ).subs(subs)
        got = elementary_differential(parse_tree(f"[[{j1},{j2}]_t0]_g"), POINT, model)
        assert sp.Rational(got.numerator, got.denominator) == want


def test_F_t_III_explicit_sum():
    model = random_poly_model(1)
    xs, f, a, b = _sympy(model)
    subs = dict(zip(xs, [sp.Rational(v.numerator, v.denominator) for v in POINT]))
    for j1, j2, j3, j4 in itertools.product((1, 2), repeat=4):
        want = sum(
            sp.diff(f, xs[J1], xs[J2])
            * sp.diff(b[J1][j1 - 1], xs[K1])
            * b[K1][j3 - 1]
            * sp.diff(b[J2][j2 - 1], xs[K2])
            * b[K2][j4 - 1]
            for J1, J2, K1, K2 in itertools.product(range(2), repeat=4)
        ).subs(subs)
        got = elementary_differential(parse_tree(f"[[{j3}]_{j1},[{j4}]_{j2}]_g"), POINT, model)
        assert sp.Rational(got.numerator, got.denominator) == want


def test_gbm_elementary_differentials():
    gbm = gbm_model(MU, SIG)
    x0 = [Fraction(2)]
    assert elementary_differential(parse_tree("g"), x0, gbm) == 2
    assert elementary_differential(parse_tree("[1]_g"), x0, gbm) == SIG * 2
    assert elementary_differential(parse_tree("[[[1]_1]_1]_g"), x0, gbm) == SIG**3 * 2
    assert elementary_differential(parse_tree("[1,1]_g"), x0, gbm) == 0


def test_children_order_is_irrelevant():
    model = random_poly_model(2)
    kids = (parse_tree("[[1]_2]_g").children[0], leaf(0), leaf(2))
    values = {
        elementary_differential(Tree(ROOT, perm), POINT, model) for perm in itertools.permutations(kids)
    }
    assert len(values) == 1
    inner = (leaf(1), leaf(2), leaf(0))
    values = {
        elementary_differential(Tree(ROOT, (Tree(1, perm),)), POINT, model)
        for perm in itertools.permutations(inner)
    }
    assert len(values) == 1


def test_affine_functional_kills_branching_roots():
    model = random_poly_model(4).with_functional(MultiPoly(2, {(0, 0): 1, (1, 0): 3, (0, 1): -2}))
    for t in enumerate_trees(2, 2):
        if len(t.children) >= 2:
            assert elementary_differential(t, POINT, model) == 0


def test_float_evaluation_close_to_exact():
    model = random_poly_model(1)
    for t in enumerate_trees(1, 2):
        exact = elementary_differential(t, POINT, model)
        approx = elementary_differential(t, [float(v) for v in POINT], model)
        assert approx == pytest.approx(float(exact), rel=1e-12, abs=1e-14)


def test_elementary_differential_errors():
    model = random_poly_model(1)
    with pytest.raises(DimensionError):
        elementary_differential(parse_tree("[1]_g"), [Fraction(1)], model)
    with pytest.raises(ValueError):
        elementary_differential(parse_tree("[3]_g"), POINT, model)


# --- model handling ---------------------------------------------------------------


def test_model_json_round_trip(tmp_path):
    model = random_poly_model(5, d=2, m=3)
    path = tmp_path / "m.json"
    path.write_text(json.dumps(model.to_json()))
    loaded = PolySdeModel.load(path)
    assert loaded.to_json() == model.to_json()
    assert loaded.name == "m"


def test_model_validation():
    with pytest.raises(DimensionError):
        PolySdeModel(1, 1, (X,), ((X, X),), X)
    with pytest.raises(DimensionError):
        PolySdeModel(2, 1, (X, X), ((X,), (X,)), X)
    with pytest.raises(ValueError):
        gbm_model().diffusion_column(2)
