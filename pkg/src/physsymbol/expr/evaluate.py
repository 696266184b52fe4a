"""Numeric evaluation of expression trees.

Three evaluators with one semantics:

* evaluate:  scalar tree walk, raises NonFinite on overflow/indeterminate.
* eval_array: vectorized over numpy arrays of bindings.
* compile_scalar: source-generated lambda for tight inner loops; returns
  inf on overflow instead of raising so step-size control can react.

noise(s) contributes s * noise_value where noise_value is the realized
unit-variance disturbance supplied in the binding (0 by default).
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import NonFinite, UnboundParameter
from .nodes import (
    Add, Constant, Cos, Expr, Mul, Neg, Noise, Parameter, Pow, Sin, Variable,
    canonicalize, parameter_names,
)

__all__ = ["evaluate", "eval_array", "compile_scalar", "symbolic_equal"]


def evaluate(e: Expr, x: float, v: float, t: float,
             params=None, noise_value: float = 0.0) -> float:
    """Evaluate at a scalar binding. Unbound parameters raise
    UnboundParameter; non-finite results raise NonFinite."""
    params = params or {}
    try:
        r = _ev(e, x, v, t, params, noise_value)
    except (OverflowError, ZeroDivisionError, ValueError) as exc:
        raise NonFinite(str(exc)) from None
    if not math.isfinite(r):
        raise NonFinite(f"evaluated to {r!r}")
    return r


def _ev(e, x, v, t, params, z):
    if isinstance(e, Constant):
        return e.value
    if isinstance(e, Parameter):
        try:
            return float(params[e.name])
        except KeyError:
            raise UnboundParameter(e.name) from None
    if isinstance(e, Variable):
        return x if e.name == "x" else v if e.name == "v" else t
    if isinstance(e, Add):
        return sum(_ev(c, x, v, t, params, z) for c in e.children)
    if isinstance(e, Mul):
        r = 1.0
        for c in e.children:
            r *= _ev(c, x, v, t, params, z)
        return r
    if isinstance(e, Neg):
        return -_ev(e.child, x, v, t, params, z)
    if isinstance(e, Pow):
        return _ev(e.base, x, v, t, params, z) ** e.exponent
    if isinstance(e, Sin):
        return math.sin(_ev(e.child, x, v, t, params, z))
    if isinstance(e, Cos):
        return math.cos(_ev(e.child, x, v, t, params, z))
    if isinstance(e, Noise):
        return _ev(e.scale, x, v, t, params, z) * z
    raise TypeError(f"not an Expr: {e!r}")


def eval_array(e: Expr, x, v, t, params=None, noise_value=0.0,
               strict: bool = True) -> np.ndarray:
    """Vectorized evaluate; inputs broadcast. With strict=True any
    non-finite element raises NonFinite, otherwise it passes through."""
    params = params or {}
    x, v, t = np.asarray(x, float), np.asarray(v, float), np.asarray(t, float)
    z = np.asarray(noise_value, float)
    with np.errstate(all="ignore"):
        r = _eva(e, x, v, t, params, z)
    r = np.asarray(np.broadcast_to(r, np.broadcast(x, v, t, z).shape), float)
    if strict and not np.all(np.isfinite(r)):
        raise NonFinite("non-finite element in array evaluation")
    return r


def _eva(e, x, v, t, params, z):
    if isinstance(e, Constant):
        return e.value
    if isinstance(e, Parameter):
        try:
            return float(params[e.name])
        except KeyError:
            raise UnboundParameter(e.name) from None
    if isinstance(e, Variable):
        return x if e.name == "x" else v if e.name == "v" else t
    if isinstance(e, Add):
        r = _eva(e.children[0], x, v, t, params, z)
        for c in e.children[1:]:
            r = r + _eva(c, x, v, t, params, z)
        return r
    if isinstance(e, Mul):
        r = _eva(e.children[0], x, v, t, params, z)
        for c in e.children[1:]:
            r = r * _eva(c, x, v, t, params, z)
        return r
    if isinstance(e, Neg):
        return -_eva(e.child, x, v, t, params, z)
    if isinstance(e, Pow):
        base = _eva(e.base, x, v, t, params, z)
        return np.power(base, e.exponent) if e.exponent >= 0 else \
            np.power(np.asarray(base, float), float(e.exponent))
    if isinstance(e, Sin):
        return np.sin(_eva(e.child, x, v, t, params, z))
    if isinstance(e, Cos):
        return np.cos(_eva(e.child, x, v, t, params, z))
    if isinstance(e, Noise):
        return _eva(e.scale, x, v, t, params, z) * z
    raise TypeError(f"not an Expr: {e!r}")


def _pysrc(e: Expr) -> str:
    """Python source for a fully parenthesized scalar expression."""
    if isinstance(e, Constant):
        return repr(e.value)
    if isinstance(e, Parameter):
        raise UnboundParameter(e.name)
    if isinstance(e, Variable):
        return e.name
    if isinstance(e, Add):
        return "(" + "+".join(_pysrc(c) for c in e.children) + ")"
    if isinstance(e, Mul):
        return "(" + "*".join(_pysrc(c) for c in e.children) + ")"
    if isinstance(e, Neg):
        return f"(-{_pysrc(e.child)})"
    if isinstance(e, Pow):
        return f"({_pysrc(e.base)}**{e.exponent})"
    if isinstance(e, Sin):
        return f"sin({_pysrc(e.child)})"
    if isinstance(e, Cos):
        return f"cos({_pysrc(e.child)})"
    if isinstance(e, Noise):
        return f"({_pysrc(e.scale)}*z)"
    raise TypeError(f"not an Expr: {e!r}")


def compile_scalar(e: Expr, params=None):
    """Compile a (parameter-bound) Expr into f(x, v, t, z) -> float.

    Any remaining Parameter raises UnboundParameter at compile time.
    Overflow or domain errors at call time return inf rather than raising,
    so adaptive steppers can treat the sample as divergent.
    """
    if params:
        from .nodes import bind_parameters
        e = bind_parameters(e, params)
    body = _pysrc(canonicalize(e))
    src = (
        "def _f(x, v, t, z):\n"
        "    try:\n"
        f"        return {body}\n"
        "    except (OverflowError, ZeroDivisionError, ValueError):\n"
        "        return float('inf')\n"
    )
    ns = {"sin": math.sin, "cos": math.cos}
    exec(compile(src, "<physsymbol-rhs>", "exec"), ns)
    return ns["_f"]


_PROBE_SEED = 0x5EED_20C3
_PROBE_COUNT = 32
_PROBE_TOL = 1e-9


def symbolic_equal(a: Expr, b: Expr, tol: float = _PROBE_TOL) -> bool:
    """Equivalence test: canonical forms identical, or |a-b| <= tol at 32
    seeded probe points (x,v,t uniform in [-2,2]; each parameter bound to
    one positive draw shared by both sides; noise_value = 0).

    Parameter identity is literal: k and c never match. A probe where one
    side is non-finite and the other is not refutes equality; probes where
    both sides blow up are skipped.
    """
    ca, cb = canonicalize(a), canonicalize(b)
    if ca == cb:
        return True
    names = sorted(parameter_names(ca) | parameter_names(cb))
    rng = np.random.default_rng(_PROBE_SEED)
    valid = 0
    for _ in range(_PROBE_COUNT):
        x, v, t = rng.uniform(-2.0, 2.0, 3)
        binding = {name: rng.uniform(0.1, 2.1) for name in names}
        fa, ok_a = _try_eval(ca, x, v, t, binding)
        fb, ok_b = _try_eval(cb, x, v, t, binding)
        if ok_a != ok_b:
            return False
        if not ok_a:
            continue
        if abs(fa - fb) > tol:
            return False
        valid += 1
    return valid > 0


def _try_eval(e, x, v, t, binding):
    try:
        return evaluate(e, x, v, t, binding), True
    except NonFinite:
        return 0.0, False
