"""Colored rooted trees for stochastic Taylor expansions of SDE solutions.

Submodules: ``trees`` (combinatorics), ``words`` (iterated-integral algebra),
``calculus`` (polynomial models, elementary differentials) and ``montecarlo``
(word simulation and convergence experiments).
"""
from .calculus import MultiPoly, PolySdeModel, elementary_differential, f_alpha, gbm_model, random_poly_model
from .montecarlo import (
    KRule,
    convergence_experiment,
    evaluate_truncated_expansion,
    expansion_terms,
    gbm_exact,
    hierarchical_expansion,
    simulate_wiener_grid,
    simulate_word_integrals,
)
from .trees import (
    GAMMA,
    HalfInt,
    Tree,
    cardinality,
    count_monotone_labellings,
    density,
    descendants_HI,
    descendants_Hj,
    enumerate_trees,
    format_tree,
    make_tree,
    order,
    parse_tree,
    symmetry_factor,
)
from .words import Calculus, IntegralCombination, reduce_tree, word_product

__version__ = "0.1.0"

__all__ = [
    "GAMMA",
    "Calculus",
    "HalfInt",
    "IntegralCombination",
    "KRule",
    "MultiPoly",
    "PolySdeModel",
    "Tree",
    "cardinality",
    "convergence_experiment",
    "count_monotone_labellings",
    "density",
    "descendants_HI",
    "descendants_Hj",
    "elementary_differential",
    "enumerate_trees",
    "evaluate_truncated_expansion",
    "expansion_terms",
    "f_alpha",
    "format_tree",
    "gbm_exact",
    "gbm_model",
    "hierarchical_expansion",
    "make_tree",
    "order",
    "parse_tree",
    "random_poly_model",
    "reduce_tree",
    "simulate_wiener_grid",
    "simulate_word_integrals",
    "symmetry_factor",
    "word_product",
]
