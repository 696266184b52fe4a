"""physsymbol: synthetic 1-D dynamics corpora and symbolic-reasoning rewards.

Generates randomized second-order systems x'' = f(x, x', t) from a typed
term library, integrates them with an adaptive RK pair, renders
deterministic plots, builds instruction-tuning instances, and scores
candidate formulas with structural and accuracy rewards plus a
residual-regression refinement loop.
"""

__version__ = "0.1.0"

from . import (
    annotate, dataset, errors, library, prompts, rewards, scoring, simulate,
    sr2, viz,
)
from .expr import (
    Add, Constant, Cos, Expr, Mul, Neg, Noise, Parameter, Pow, Sin, Variable,
    SkeletonTerm, bind_parameters, canonicalize, decompose_terms, evaluate,
    parse, render, skeleton_set, skeletonize, symbolic_equal,
)

__all__ = [
    "annotate", "dataset", "errors", "library", "prompts", "rewards",
    "scoring", "simulate", "sr2", "viz",
    "Expr", "Constant", "Parameter", "Variable", "Add", "Mul", "Neg", "Pow",
    "Sin", "Cos", "Noise",
    "parse", "render", "canonicalize", "evaluate", "symbolic_equal",
    "decompose_terms", "skeletonize", "skeleton_set", "SkeletonTerm",
    "bind_parameters",
]
