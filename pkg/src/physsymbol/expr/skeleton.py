"""Structural skeletons: what a term *is*, ignoring how big it is.

A skeleton keeps the sign and the functional shape of a term and forgets
every magnitude: -2.5*x and -0.1*x share the skeleton (-, x), while
1.5*sin(2*t) becomes (+, sin(t)). Structural rewards compare sets of
skeletons, so a candidate is credited for finding the right physics terms
before its coefficients are anywhere near right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .nodes import (
    Add, Constant, Cos, Expr, Mul, Neg, Noise, Parameter, Pow, Sin, Variable,
    canonicalize, render,
)

__all__ = ["SkeletonTerm", "decompose_terms", "skeletonize", "skeleton_set"]


@dataclass(frozen=True, slots=True)
class SkeletonTerm:
    sign: int   # +1 or -1
    shape: Expr  # canonical, all magnitudes replaced by unit constants

    def __str__(self) -> str:
        return ("-" if self.sign < 0 else "+") + render(self.shape)


def decompose_terms(e: Expr) -> frozenset[Expr]:
    """Additive terms of the canonical form, as a set."""
    c = canonicalize(e)
    if isinstance(c, Add):
        return frozenset(c.children)
    return frozenset((c,))


def _unit(e: Expr) -> Expr:
    """Replace every magnitude with a sign-preserving unit constant.

    Parameters are positive by convention, so they map to 1; constants map
    to copysign(1, value). Structure (variables, functions, powers) is kept.
    """
    if isinstance(e, Constant):
        return Constant(math.copysign(1.0, e.value))
    if isinstance(e, Parameter):
        return Constant(1.0)
    if isinstance(e, Variable):
        return e
    if isinstance(e, Sin):
        return Sin(_unit(e.child))
    if isinstance(e, Cos):
        return Cos(_unit(e.child))
    if isinstance(e, Neg):
        return Neg(_unit(e.child))
    if isinstance(e, Noise):
        return Noise(_unit(e.scale))
    if isinstance(e, Pow):
        return Pow(_unit(e.base), e.exponent)
    if isinstance(e, Add):
        return Add(tuple(_unit(c) for c in e.children))
    if isinstance(e, Mul):
        return Mul(tuple(_unit(c) for c in e.children))
    raise TypeError(f"not an Expr: {e!r}")


def skeletonize(term: Expr) -> SkeletonTerm:
    """Skeleton of a single additive term.

    After unit replacement and canonicalization the only constant that can
    survive at the top of a product is -1 (unit products fold), which
    becomes the sign. Signs nested inside functions stay in the shape:
    sin(-2*t) keeps shape sin(-t).
    """
    s = canonicalize(_unit(canonicalize(term)))
    if isinstance(s, Constant):
        sign = -1 if s.value < 0 else 1
        return SkeletonTerm(sign, Constant(1.0))
    if isinstance(s, Mul) and isinstance(s.children[0], Constant):
        c = s.children[0].value
        rest = s.children[1:]
        shape = rest[0] if len(rest) == 1 else Mul(rest)
        return SkeletonTerm(-1 if c < 0 else 1, shape)
    return SkeletonTerm(1, s)


def skeleton_set(e: Expr) -> frozenset[SkeletonTerm]:
    """Skeletons of all additive terms of e."""
    return frozenset(skeletonize(t) for t in decompose_terms(e))
