"""Wiener paths, simulated iterated integrals, truncated expansions and
convergence experiments."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from . import _kernels
from .calculus import PolySdeModel, elementary_differential, f_alpha, poly_eval
from .trees import HalfInt, Tree, enumerate_trees, format_tree, symmetry_factor
from .words import (
    EMPTY,
    Calculus,
    IntegralCombination,
    Word,
    hierarchical_set,
    reduce_tree,
)

NOISE_FLOOR = 1e-12


class MissingWordError(KeyError):
    pass


# --- Wiener increments ---------------------------------------------------------


def _path_rng(seed: int, path: int, stream: int = 0) -> np.random.Generator:
    # counter-based: the path index selects a disjoint block of the Philox counter space
    bitgen = np.random.Philox(key=int(seed), counter=[0, 0, int(stream), int(path)])
    return np.random.Generator(bitgen)


def wiener_increments(m: int, h: float, K: int, seed: int, paths: Iterable[int], stream: int = 0) -> np.ndarray:
    """Increments of shape ``(len(paths), K, m)`` with variance ``h/K``.

    Path ``i`` depends only on ``(seed, stream, i)``.
    """
    if K < 1 or h <= 0 or m < 1:
        raise ValueError(f"invalid grid parameters m={m}, h={h}, K={K}")
    paths = list(paths)
    scale = math.sqrt(h / K)
    out = np.empty((len(paths), K, m))
    for row, i in enumerate(paths):
        out[row] = _path_rng(seed, i, stream).standard_normal((K, m))
    out *= scale
    return out


@dataclass(frozen=True)
class PathGrid:
    m: int
    h: float
    K: int
    increments: np.ndarray = field(repr=False)  # (K, m)

    @property
    def endpoint(self) -> np.ndarray:
        return self.increments.sum(axis=0)


def simulate_wiener_grid(m: int, h: float, K: int, rng_seed: int, path_index: int = 0) -> PathGrid:
    inc = wiener_increments(m, h, K, rng_seed, [path_index])[0]
    return PathGrid(m, float(h), int(K), inc)


# --- word integrals -------------------------------------------------------------


def prefix_closure(words: Iterable[Word]) -> list[Word]:
    """All words with their prefixes, ordered so prefixes come first."""
    closed = {EMPTY}
    for w in words:
        w = tuple(w)
        for k in range(1, len(w) + 1):
            closed.add(w[:k])
    return sorted(closed, key=lambda w: (len(w), w))


@dataclass
class WordIntegralTable:
    """Simulated iterated integrals; one column per word.

    ``values`` is ``(n_words,)`` for one path or ``(n_paths, n_words)``.
    """

    calculus: Calculus
    words: tuple[Word, ...]
    values: np.ndarray
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self._index = {w: i for i, w in enumerate(self.words)}

    def __contains__(self, w) -> bool:
        return tuple(w) in self._index

    def __getitem__(self, w):
        try:
            i = self._index[tuple(w)]
        except KeyError:
            raise MissingWordError(f"word {tuple(w)} not in table") from None
        return self.values[..., i]


def _word_program(words: Sequence[Word], calculus: Calculus):
    index = {w: i for i, w in enumerate(words)}
    parent = np.zeros(len(words), dtype=np.int64)
    grand = np.zeros(len(words), dtype=np.int64)
    letter = np.zeros(len(words), dtype=np.int64)
    corr = np.zeros(len(words), dtype=np.bool_)
    for i, w in enumerate(words):
        if not w:
            continue
        parent[i] = index[w[:-1]]
        letter[i] = w[-1]
        if len(w) >= 2:
            grand[i] = index[w[:-2]]
            corr[i] = calculus is Calculus.ITO and w[-1] == w[-2] != 0
    return parent, grand, letter, corr


def word_values(increments: np.ndarray, h: float, words: Sequence[Word], calculus, backend: str | None = None) -> np.ndarray:
    """Iterated integrals for a batch ``(n, K, m)`` of increments.

    ``words`` must be prefix-closed and start with the empty word (see
    :func:`prefix_closure`).
    """
    calculus = Calculus.of(calculus)
    inc = np.asarray(increments, dtype=np.float64)
    if inc.ndim == 2:
        inc = inc[None]
    n, K, m = inc.shape
    if any(i > m for w in words for i in w):
        raise ValueError("word index exceeds the Wiener dimension of the path")
    program = _word_program(words, calculus)
    return _kernels.accumulate(inc, h / K, *program, backend=backend)


def simulate_word_integrals(path: PathGrid, words: Iterable[Word], c, backend: str | None = None) -> WordIntegralTable:
    calculus = Calculus.of(c)
    closed = prefix_closure(words)
    vals = word_values(path.increments, path.h, closed, calculus, backend)[0]
    return WordIntegralTable(calculus, tuple(closed), vals)


# --- expansions -------------------------------------------------------------------


@dataclass(frozen=True)
class ExpansionTerm:
    tree: Tree
    value: object  # F(t)(x0)
    sigma: int
    integral: IntegralCombination

    @property
    def weight(self) -> Fraction:
        return Fraction(1, self.sigma)

    def word_coefficients(self) -> dict[Word, object]:
        return {w: self.value * c / self.sigma for w, c in self.integral.items()}


def expansion_terms(model: PolySdeModel, x0, p, c, nonzero_only: bool = False) -> list[ExpansionTerm]:
    """One record per tree of order <= p: F(t)(x0), sigma(t) and I_t in words."""
    calculus = Calculus.of(c)
    terms = []
    for t in enumerate_trees(p, model.m):
        val = elementary_differential(t, x0, model)
        if nonzero_only and val == 0:
            continue
        terms.append(ExpansionTerm(t, val, symmetry_factor(t), reduce_tree(t, calculus)))
    return terms


def collect_words(terms: Iterable[ExpansionTerm]) -> dict[Word, object]:
    """Sum term coefficients per word, dropping exact zeros."""
    acc: dict[Word, object] = {}
    for term in terms:
        for w, v in term.word_coefficients().items():
            acc[w] = acc.get(w, 0) + v
    return {w: v for w, v in acc.items() if v != 0}


def _dot(coeffs: dict[Word, object], table: WordIntegralTable):
    total = 0.0
    for w, v in sorted(coeffs.items(), key=lambda kv: (len(kv[0]), kv[0])):
        total = total + float(v) * table[w]
    return total


def evaluate_truncated_expansion(model: PolySdeModel, x0, p, c, table: WordIntegralTable):
    """Tree expansion Z_p evaluated on the simulated words."""
    return _dot(collect_words(expansion_terms(model, x0, p, c)), table)


def hierarchical_coefficients(model: PolySdeModel, x0, p, c) -> dict[Word, object]:
    calculus = Calculus.of(c)
    return {a: poly_eval(f_alpha(a, model, calculus), x0) for a in hierarchical_set(p, model.m)}


def hierarchical_expansion(model: PolySdeModel, x0, p, c, table: WordIntegralTable):
    """Sum of f_alpha(x0) * I_alpha over the hierarchical set of order p."""
    return _dot(hierarchical_coefficients(model, x0, p, c), table)


def expansion_words(model: PolySdeModel, p, c) -> list[Word]:
    words = set()
    for t in enumerate_trees(p, model.m):
        words.update(reduce_tree(t, c))
    return sorted(words, key=lambda w: (len(w), w))


def gbm_exact(x0, mu, sigma, h, W_h):
    """x0 * exp((mu - sigma^2/2) h + sigma W_h)."""
    return x0 * np.exp((mu - 0.5 * sigma**2) * h + sigma * np.asarray(W_h))


# --- convergence experiments ------------------------------------------------------


@dataclass(frozen=True)
class KRule:
    """Substeps per interval: ``max(k_min, ceil(per_unit / h))``."""

    k_min: int = 2**10
    per_unit: float = 64.0

    def __call__(self, h: float) -> int:
        return max(self.k_min, math.ceil(self.per_unit / h))


@dataclass
class SlopeFit:
    slope: float | None
    stderr: float | None
    used: list[float]
    excluded: list[float]


def fit_slope(hs: Sequence[float], errs: Sequence[float], floor: float) -> SlopeFit:
    """Least-squares slope of log(err) against log(h), skipping errors below ``floor``."""
    used = [(h, e) for h, e in zip(hs, errs) if e >= floor and e > 0]
    excluded = [h for h, e in zip(hs, errs) if not (e >= floor and e > 0)]
    if len({h for h, _ in used}) < 3:
        return SlopeFit(None, None, [h for h, _ in used], excluded)
    x = np.log([h for h, _ in used])
    y = np.log([e for _, e in used])
    res = stats.linregress(x, y)
    return SlopeFit(float(res.slope), float(res.stderr), [h for h, _ in used], excluded)


@dataclass
class ConvergenceReport:
    h: list[float]
    K: list[int]
    rms_error: list[float]
    rms_stderr: list[float]
    mean_error: list[float]
    mean_stderr: list[float]
    N: int
    seed: int
    p: str
    calculus: str
    rms_fit: SlopeFit
    mean_fit: SlopeFit
    expected_rms_slope: float
    expected_mean_slope: float
    config: dict = field(default_factory=dict)

    @property
    def rms_slope(self):
        return self.rms_fit.slope

    @property
    def mean_slope(self):
        return self.mean_fit.slope

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["h", "rms_error", "rms_stderr", "mean_error", "N", "K"])
        for i, h in enumerate(self.h):
            writer.writerow(
                [repr(h), repr(self.rms_error[i]), repr(self.rms_stderr[i]), repr(self.mean_error[i]), self.N, self.K[i]]
            )
        return buf.getvalue()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rms_slope"] = self.rms_slope
        d["mean_slope"] = self.mean_slope
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def expected_slopes(p) -> tuple[float, float]:
    """(mean-square root slope, mean slope): p + 1/2 and p + kappa."""
    p = HalfInt.of(p)
    kappa = 1.0 if p.is_integer else 0.5
    return float(p) + 0.5, float(p) + kappa


def convergence_experiment(
    model: PolySdeModel,
    x0,
    p,
    c,
    h_list: Sequence[float],
    K_rule: Callable[[float], int] = KRule(),
    N: int = 10_000,
    seed: int = 0,
    exact: Callable | None = None,
    chunk: int = 500,
    backend: str | None = None,
    config: dict | None = None,
) -> ConvergenceReport:
    """Truncation error of Z_p against a reference solution, per step size.

    ``exact(h, W_h)`` maps the endpoint Wiener increments ``(n, m)`` to the
    reference value of ``f(X_h)``.  Without it the hierarchical expansion of
    order ``p + 3/2`` on the same substeps serves as the reference.
    """
    calculus = Calculus.of(c)
    p = HalfInt.of(p)
    if len(h_list) < 3:
        raise ValueError("need at least 3 step sizes to fit slopes")
    if N < 1:
        raise ValueError("N must be positive")
    x0 = list(x0)

    z_coeffs = collect_words(expansion_terms(model, x0, p, calculus))
    words = set(z_coeffs)
    ref_coeffs = None
    if exact is None:
        ref_p = HalfInt(p.twice + 3)
        ref_coeffs = {w: v for w, v in hierarchical_coefficients(model, x0, ref_p, calculus).items() if v != 0}
        words |= set(ref_coeffs)
    closed = prefix_closure(words)
    fx0 = abs(float(poly_eval(model.f, [float(v) for v in x0])))
    floor = NOISE_FLOOR * max(fx0, 1.0)

    rows = dict(h=[], K=[], rms_error=[], rms_stderr=[], mean_error=[], mean_stderr=[])
    for hi, h in enumerate(h_list):
        K = int(K_rule(h))
        errs = np.empty(N)
        for start in range(0, N, chunk):
            idx = range(start, min(N, start + chunk))
            inc = wiener_increments(model.m, h, K, seed, idx, stream=hi)
            table = WordIntegralTable(calculus, tuple(closed), word_values(inc, h, closed, calculus, backend))
            z = _dot(z_coeffs, table)
            if exact is not None:
                ref = exact(h, inc.sum(axis=1))
            else:
                ref = _dot(ref_coeffs, table)
            errs[start : start + len(idx)] = ref - z
        sq = errs**2
        rms = float(np.sqrt(np.mean(sq)))
        rows["h"].append(float(h))
        rows["K"].append(K)
        rows["rms_error"].append(rms)
        rows["rms_stderr"].append(float(np.std(sq) / math.sqrt(N) / (2 * rms)) if rms > 0 else 0.0)
        rows["mean_error"].append(float(abs(np.mean(errs))))
        rows["mean_stderr"].append(float(np.std(errs) / math.sqrt(N)))

    exp_rms, exp_mean = expected_slopes(p)
    cfg = {
        "model": model.name,
        "x0": [str(v) for v in x0],
        "p": str(p),
        "calculus": calculus.value,
        "h": [float(h) for h in h_list],
        "N": N,
        "seed": seed,
        "K_rule": asdict(K_rule) if isinstance(K_rule, KRule) else repr(K_rule),
        "reference": "exact" if exact is not None else f"hierarchical p={HalfInt(p.twice + 3)}",
    }
    cfg.update(config or {})
    return ConvergenceReport(
        N=N,
        seed=seed,
        p=str(p),
        calculus=calculus.value,
        rms_fit=fit_slope(rows["h"], rows["rms_error"], floor),
        mean_fit=fit_slope(rows["h"], rows["mean_error"], floor),
        expected_rms_slope=exp_rms,
        expected_mean_slope=exp_mean,
        config=cfg,
        **rows,
    )


def gbm_reference(x0, mu, sigma) -> Callable:
    x0, mu, sigma = float(x0), float(mu), float(sigma)

    def exact(h, W_h):
        return gbm_exact(x0, mu, sigma, h, np.asarray(W_h)[:, 0])

    return exact
