"""Expression kernel: node types, parsing, canonical form, skeletons,
and numeric evaluation."""

from .nodes import (
    Add, Constant, Cos, Expr, Mul, Neg, Noise, Parameter, Pow, Sin, Variable,
    bind_parameters, canonicalize, count_nodes, parameter_names, render,
    structure_key,
)
from .parser import parse
from .evaluate import compile_scalar, eval_array, evaluate, symbolic_equal
from .skeleton import SkeletonTerm, decompose_terms, skeleton_set, skeletonize

__all__ = [
    "Expr", "Constant", "Parameter", "Variable", "Add", "Mul", "Neg", "Pow",
    "Sin", "Cos", "Noise",
    "parse", "render", "canonicalize", "structure_key", "count_nodes",
    "parameter_names", "bind_parameters",
    "evaluate", "eval_array", "compile_scalar", "symbolic_equal",
    "SkeletonTerm", "decompose_terms", "skeletonize", "skeleton_set",
]
