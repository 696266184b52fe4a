"""Immutable expression trees and their canonical form.

Trees are built from ten node kinds over the variables x, v, t. The
canonical form is a sum-of-products normal form:

* Neg is rewritten into a leading -1 constant factor inside Mul.
* Nested Add/Mul are flattened; products distribute over sums; positive
  integer powers of sums (up to a small bound) expand.
* Constants fold through +, *, ** and negation, never through sin/cos.
* Like terms in a sum merge by summing their leading coefficients.
* Repeated factors with same-sign exponents collapse into Pow; factors of
  opposite exponent sign are left alone (no rational simplification).
* Children of Add/Mul are sorted by a total order on (node kind,
  recursive structure).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from ..errors import NonFinite

__all__ = [
    "Expr", "Constant", "Parameter", "Variable", "Add", "Mul", "Neg",
    "Pow", "Sin", "Cos", "Noise",
    "canonicalize", "render", "structure_key", "count_nodes",
    "parameter_names", "bind_parameters", "contains_noise",
]

VARIABLE_NAMES = ("x", "v", "t")
FUNCTION_NAMES = ("sin", "cos", "noise")

# Positive integer powers of sums expand up to this exponent.
_MAX_SUM_EXPAND = 6


class Expr:
    """Base class; all concrete nodes are frozen dataclasses."""

    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Constant(Expr):
    value: float

    def __post_init__(self):
        v = float(self.value)
        if not math.isfinite(v):
            raise NonFinite(f"non-finite constant {v!r}")
        if v == 0.0:
            v = 0.0  # normalize -0.0 so equal trees hash equal
        object.__setattr__(self, "value", v)


@dataclass(frozen=True, slots=True)
class Parameter(Expr):
    name: str


@dataclass(frozen=True, slots=True)
class Variable(Expr):
    name: str

    def __post_init__(self):
        if self.name not in VARIABLE_NAMES:
            raise ValueError(f"variable must be one of {VARIABLE_NAMES}")


@dataclass(frozen=True, slots=True)
class Add(Expr):
    children: tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if len(self.children) < 2:
            raise ValueError("Add needs at least 2 children")


@dataclass(frozen=True, slots=True)
class Mul(Expr):
    children: tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if len(self.children) < 2:
            raise ValueError("Mul needs at least 2 children")


@dataclass(frozen=True, slots=True)
class Neg(Expr):
    child: Expr


@dataclass(frozen=True, slots=True)
class Pow(Expr):
    base: Expr
    exponent: int

    def __post_init__(self):
        if not isinstance(self.exponent, int) or self.exponent == 0:
            raise ValueError("Pow exponent must be a nonzero integer")


@dataclass(frozen=True, slots=True)
class Sin(Expr):
    child: Expr


@dataclass(frozen=True, slots=True)
class Cos(Expr):
    child: Expr


@dataclass(frozen=True, slots=True)
class Noise(Expr):
    """Stochastic forcing token; evaluates to scale * noise_value."""

    scale: Expr


_ZERO = Constant(0.0)
_ONE = Constant(1.0)


# --- structural ordering -----------------------------------------------------

def structure_key(e: Expr) -> str:
    """Total-order key: node-kind rank, then recursive structure."""
    if isinstance(e, Constant):
        return f"0:{e.value!r}"
    if isinstance(e, Parameter):
        return f"1:{e.name}"
    if isinstance(e, Variable):
        return f"2:{e.name}"
    if isinstance(e, Sin):
        return f"3({structure_key(e.child)})"
    if isinstance(e, Cos):
        return f"4({structure_key(e.child)})"
    if isinstance(e, Noise):
        return f"5({structure_key(e.scale)})"
    if isinstance(e, Pow):
        return f"6({structure_key(e.base)},{e.exponent})"
    if isinstance(e, Mul):
        return "7(" + ",".join(structure_key(c) for c in e.children) + ")"
    if isinstance(e, Add):
        return "8(" + ",".join(structure_key(c) for c in e.children) + ")"
    if isinstance(e, Neg):
        return f"9({structure_key(e.child)})"
    raise TypeError(f"not an Expr: {e!r}")


# --- canonicalization ---------------------------------------------------------

def canonicalize(e: Expr) -> Expr:
    """Rewrite e into the canonical sum-of-products form described above."""
    return _canon(e)


def _finite(v: float) -> float:
    if not math.isfinite(v):
        raise NonFinite("constant folding overflowed")
    return v


def _canon(e: Expr) -> Expr:
    if isinstance(e, (Constant, Parameter, Variable)):
        return e
    if isinstance(e, Neg):
        return _canon(Mul((Constant(-1.0), e.child)))
    if isinstance(e, Sin):
        return Sin(_canon(e.child))
    if isinstance(e, Cos):
        return Cos(_canon(e.child))
    if isinstance(e, Noise):
        return Noise(_canon(e.scale))
    if isinstance(e, Pow):
        return _canon_pow(_canon(e.base), e.exponent)
    if isinstance(e, Mul):
        return _canon_mul(e.children)
    if isinstance(e, Add):
        return _canon_add(e.children)
    raise TypeError(f"not an Expr: {e!r}")


def _canon_pow(base: Expr, n: int) -> Expr:
    if n == 0:
        return _ONE
    if n == 1:
        return base
    if isinstance(base, Constant):
        try:
            return Constant(_finite(base.value ** n))
        except (OverflowError, ZeroDivisionError):
            raise NonFinite(f"{base.value!r} ** {n} is not finite") from None
    if isinstance(base, Mul):
        return _canon_mul(tuple(Pow(c, n) for c in base.children))
    if isinstance(base, Pow):
        return _canon_pow(base.base, base.exponent * n)
    if isinstance(base, Add) and 2 <= n <= _MAX_SUM_EXPAND:
        return _canon_mul((base,) * n)
    return Pow(base, n)


def _canon_mul(children: tuple[Expr, ...]) -> Expr:
    flat: list[Expr] = []
    for c in children:
        cc = _canon(c)
        if isinstance(cc, Mul):
            flat.extend(cc.children)
        else:
            flat.append(cc)

    if any(isinstance(f, Add) for f in flat):
        # distribute the product over every sum factor
        addend_lists = [f.children if isinstance(f, Add) else (f,) for f in flat]
        products = []
        for combo in itertools.product(*addend_lists):
            products.append(combo[0] if len(combo) == 1 else Mul(combo))
        return _canon_add(tuple(products))

    coeff = 1.0
    groups: dict[tuple[str, bool], list] = {}  # (base key, exp>0) -> [base, exp]
    for f in flat:
        if isinstance(f, Constant):
            coeff = _finite(coeff * f.value)
            continue
        base, exp = (f.base, f.exponent) if isinstance(f, Pow) else (f, 1)
        k = (structure_key(base), exp > 0)
        if k in groups:
            groups[k][1] += exp
        else:
            groups[k] = [base, exp]

    if coeff == 0.0:
        return _ZERO
    factors = [b if ex == 1 else Pow(b, ex) for b, ex in groups.values()]
    factors.sort(key=structure_key)
    if not factors:
        return Constant(coeff)
    if coeff != 1.0:
        factors.insert(0, Constant(coeff))
    return factors[0] if len(factors) == 1 else Mul(tuple(factors))


def _split_coeff(term: Expr) -> tuple[float, tuple[Expr, ...]]:
    """Split a canonical non-constant term into (coefficient, factor tuple)."""
    if isinstance(term, Mul) and isinstance(term.children[0], Constant):
        return term.children[0].value, term.children[1:]
    if isinstance(term, Mul):
        return 1.0, term.children
    return 1.0, (term,)


def _canon_add(children: tuple[Expr, ...]) -> Expr:
    flat: list[Expr] = []
    for c in children:
        cc = _canon(c)
        if isinstance(cc, Add):
            flat.extend(cc.children)
        else:
            flat.append(cc)

    const_sum = 0.0
    groups: dict[tuple[str, ...], list] = {}  # factor keys -> [coeff, factors]
    for term in flat:
        if isinstance(term, Constant):
            const_sum = _finite(const_sum + term.value)
            continue
        coeff, rest = _split_coeff(term)
        k = tuple(structure_key(r) for r in rest)
        if k in groups:
            groups[k][0] = _finite(groups[k][0] + coeff)
        else:
            groups[k] = [coeff, rest]

    terms: list[Expr] = []
    for coeff, rest in groups.values():
        if coeff == 0.0:
            continue
        if coeff == 1.0:
            terms.append(rest[0] if len(rest) == 1 else Mul(rest))
        else:
            terms.append(Mul((Constant(coeff),) + rest))
    if const_sum != 0.0:
        terms.append(Constant(const_sum))

    if not terms:
        return _ZERO
    terms.sort(key=structure_key)
    return terms[0] if len(terms) == 1 else Add(tuple(terms))


# --- rendering ----------------------------------------------------------------

def render(e: Expr) -> str:
    """Deterministic canonical text; parse(render(e)) == canonicalize(e)."""
    return _render(_canon(e))


def _fmt_number(v: float) -> str:
    if v == int(v) and abs(v) <= 1e16:
        return str(int(v))
    return repr(v)


def _render(e: Expr) -> str:
    if isinstance(e, Constant):
        return _fmt_number(e.value)
    if isinstance(e, Parameter) or isinstance(e, Variable):
        return e.name
    if isinstance(e, Sin):
        return f"sin({_render(e.child)})"
    if isinstance(e, Cos):
        return f"cos({_render(e.child)})"
    if isinstance(e, Noise):
        return f"noise({_render(e.scale)})"
    if isinstance(e, Pow):
        base = _render(e.base)
        if isinstance(e.base, (Add, Mul, Neg)):
            base = f"({base})"
        return f"{base}**{e.exponent}"
    if isinstance(e, Mul):
        parts = list(e.children)
        prefix = ""
        if isinstance(parts[0], Constant):
            c = parts[0].value
            if c == -1.0 and len(parts) > 1:
                prefix = "-"
                parts = parts[1:]
        body = "*".join(
            f"({_render(p)})" if isinstance(p, Add) else _render(p) for p in parts
        )
        return prefix + body
    if isinstance(e, Add):
        out = _render(e.children[0])
        for t in e.children[1:]:
            s = _render(t)
            if s.startswith("-"):
                out += " - " + s[1:]
            else:
                out += " + " + s
        return out
    if isinstance(e, Neg):  # unreachable on canonical trees; kept for safety
        return "-" + _render(e.child)
    raise TypeError(f"not an Expr: {e!r}")


# --- tree utilities --------------------------------------------------------------

def count_nodes(e: Expr) -> int:
    if isinstance(e, (Constant, Parameter, Variable)):
        return 1
    if isinstance(e, (Sin, Cos, Neg)):
        child = e.child
        return 1 + count_nodes(child)
    if isinstance(e, Noise):
        return 1 + count_nodes(e.scale)
    if isinstance(e, Pow):
        return 1 + count_nodes(e.base)
    if isinstance(e, (Add, Mul)):
        return 1 + sum(count_nodes(c) for c in e.children)
    raise TypeError(f"not an Expr: {e!r}")


def contains_noise(e: Expr) -> bool:
    if isinstance(e, Noise):
        return True
    if isinstance(e, (Sin, Cos, Neg)):
        return contains_noise(e.child)
    if isinstance(e, Pow):
        return contains_noise(e.base)
    if isinstance(e, (Add, Mul)):
        return any(contains_noise(c) for c in e.children)
    return False


def parameter_names(e: Expr) -> frozenset[str]:
    names: set[str] = set()
    _collect_params(e, names)
    return frozenset(names)


def _collect_params(e: Expr, out: set[str]) -> None:
    if isinstance(e, Parameter):
        out.add(e.name)
    elif isinstance(e, (Sin, Cos, Neg)):
        _collect_params(e.child, out)
    elif isinstance(e, Noise):
        _collect_params(e.scale, out)
    elif isinstance(e, Pow):
        _collect_params(e.base, out)
    elif isinstance(e, (Add, Mul)):
        for c in e.children:
            _collect_params(c, out)


def bind_parameters(e: Expr, mapping) -> Expr:
    """Replace Parameter nodes by name; values may be reals or Exprs.

    Names absent from the mapping are left unbound. The result is
    canonicalized.
    """
    return canonicalize(_bind(e, dict(mapping)))


def _bind(e: Expr, mapping: dict) -> Expr:
    if isinstance(e, Parameter):
        if e.name in mapping:
            val = mapping[e.name]
            return val if isinstance(val, Expr) else Constant(float(val))
        return e
    if isinstance(e, (Constant, Variable)):
        return e
    if isinstance(e, Sin):
        return Sin(_bind(e.child, mapping))
    if isinstance(e, Cos):
        return Cos(_bind(e.child, mapping))
    if isinstance(e, Neg):
        return Neg(_bind(e.child, mapping))
    if isinstance(e, Noise):
        return Noise(_bind(e.scale, mapping))
    if isinstance(e, Pow):
        return Pow(_bind(e.base, mapping), e.exponent)
    if isinstance(e, Add):
        return Add(tuple(_bind(c, mapping) for c in e.children))
    if isinstance(e, Mul):
        return Mul(tuple(_bind(c, mapping) for c in e.children))
    raise TypeError(f"not an Expr: {e!r}")
