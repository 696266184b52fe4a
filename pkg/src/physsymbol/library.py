"""Typed physics-term menu and the combinatorial equation sampler.

Eleven term categories cover restoring forces (linear, cubic, quintic),
velocity damping (linear, cubic, quintic), periodic forcing in time and in
space, position-velocity coupling, parameter-free trigonometric
nonlinearity, and stochastic forcing. The trig category holds two
interchangeable shapes (-x*cos(x) and -x*sin(x)), so the menu has 12
concrete specs over the 11 categories; sampling draws categories without
replacement, so at most one trig shape appears per system.

Every sampled system keeps a mandatory linear restoring term so the
dynamics have a stable backbone.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigError
from .expr import Expr, Parameter, bind_parameters, canonicalize, parse
from .expr.nodes import Add, parameter_names

__all__ = [
    "TermSpec", "GeneratedSystem", "SamplerConfig",
    "library", "categories", "lookup", "specs_for_category",
    "instantiate", "sample_formula", "param_range_for",
    "MANDATORY_CATEGORY", "DEFAULT_TERM_COUNT_WEIGHTS",
]

MANDATORY_CATEGORY = "linear_restoring"

# Range (2..5) is fixed; the corpus contract pins the mean term count
# near 3.2, which these weights give (3.18).
DEFAULT_TERM_COUNT_WEIGHTS: Mapping[int, float] = {2: 0.28, 3: 0.38, 4: 0.22, 5: 0.12}


@dataclass(frozen=True)
class TermSpec:
    name: str                # unique lookup key
    category: str            # sampling is without replacement per category
    template: Expr           # parameters unbound
    param_ranges: Mapping[str, tuple[float, float]]
    parameter_free: bool = False


@dataclass(frozen=True)
class GeneratedSystem:
    formula: Expr                     # all parameters bound to constants
    symbolic_formula: Expr            # same structure, parameters named
    params: Mapping[str, float]       # symbolic name -> bound value
    term_categories: tuple[str, ...]  # mandatory category first, then draw order
    seed: int
    x0: float
    v0: float


def _spec(name, category, text, ranges, parameter_free=False):
    return TermSpec(name, category, parse(text), dict(ranges), parameter_free)


_SPECS: tuple[TermSpec, ...] = (
    _spec("linear_restoring", "linear_restoring", "-k*x", {"k": (0.1, 10.0)}),
    _spec("cubic_restoring", "cubic_restoring", "-beta*x**3", {"beta": (0.01, 5.0)}),
    _spec("quintic_restoring", "quintic_restoring", "-delta*x**5", {"delta": (0.001, 1.0)}),
    _spec("linear_damping", "linear_damping", "-c*v", {"c": (0.01, 2.0)}),
    _spec("cubic_damping", "cubic_damping", "-alpha*v**3", {"alpha": (0.01, 5.0)}),
    _spec("quintic_damping", "quintic_damping", "-eta*v**5", {"eta": (0.001, 1.0)}),
    _spec("forcing_time", "forcing_time", "F*sin(w*t)", {"F": (0.1, 5.0), "w": (0.5, 5.0)}),
    _spec("forcing_space", "forcing_space", "F*sin(w*x)", {"F": (0.1, 5.0), "w": (0.5, 5.0)}),
    _spec("coupling", "coupling", "-gamma*x*v", {"gamma": (0.01, 5.0)}),
    _spec("trig_xcos", "trig", "-x*cos(x)", {}, parameter_free=True),
    _spec("trig_xsin", "trig", "-x*sin(x)", {}, parameter_free=True),
    _spec("noise", "noise", "noise(sigma)", {"sigma": (0.01, 0.5)}),
)

_BY_NAME = {s.name: s for s in _SPECS}

_CATEGORIES: tuple[str, ...] = tuple(dict.fromkeys(s.category for s in _SPECS))


def library() -> tuple[TermSpec, ...]:
    """All term specs, in menu order."""
    return _SPECS


def categories() -> tuple[str, ...]:
    """The 11 category identifiers, in menu order."""
    return _CATEGORIES


def lookup(name: str) -> TermSpec:
    try:
        return _BY_NAME[name]
    except KeyError:
        raise KeyError(f"no term spec named {name!r}") from None


def specs_for_category(category: str) -> tuple[TermSpec, ...]:
    found = tuple(s for s in _SPECS if s.category == category)
    if not found:
        raise KeyError(f"no term category named {category!r}")
    return found


def param_range_for(symbolic_name: str) -> tuple[float, float]:
    """Declared range for a (possibly suffixed) symbolic parameter name.

    Collision suffixes like F2/w2 map back to the base parameter.
    """
    base = re.sub(r"\d+$", "", symbolic_name)
    for s in _SPECS:
        if base in s.param_ranges:
            return s.param_ranges[base]
    raise KeyError(f"no spec declares parameter {symbolic_name!r}")


@dataclass(frozen=True)
class SamplerConfig:
    term_count_weights: Mapping[int, float] = field(
        default_factory=lambda: dict(DEFAULT_TERM_COUNT_WEIGHTS))
    enabled_categories: tuple[str, ...] | None = None  # None = all
    corpus_seed: int = 0

    def validate(self) -> None:
        w = dict(self.term_count_weights)
        if not w:
            raise ConfigError("term_count_weights is empty")
        for count, weight in w.items():
            if not isinstance(count, int) or not 2 <= count <= 5:
                raise ConfigError(f"term count {count!r} outside 2..5")
            if not (isinstance(weight, (int, float)) and weight >= 0):
                raise ConfigError(f"weight for {count} must be >= 0")
        total = sum(w.values())
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"term_count_weights sum to {total}, need 1")
        enabled = self.enabled_tuple()
        unknown = [c for c in enabled if c not in _CATEGORIES]
        if unknown:
            raise ConfigError(f"unknown categories: {unknown}")
        if MANDATORY_CATEGORY not in enabled:
            raise ConfigError(f"{MANDATORY_CATEGORY!r} cannot be disabled")
        max_count = max(c for c, weight in w.items() if weight > 0)
        if len(enabled) < max_count:
            raise ConfigError(
                f"{len(enabled)} enabled categories cannot fill {max_count} terms")
        if not isinstance(self.corpus_seed, int) or self.corpus_seed < 0:
            raise ConfigError("corpus_seed must be a nonnegative integer")

    def enabled_tuple(self) -> tuple[str, ...]:
        if self.enabled_categories is None:
            return _CATEGORIES
        return tuple(self.enabled_categories)


def _rng_for(corpus_seed: int, seed: int) -> np.random.Generator:
    # PCG64 under a two-word SeedSequence: one independent, reproducible
    # stream per (corpus, instance) pair.
    return np.random.default_rng(np.random.SeedSequence((corpus_seed, seed)))


def _draw_params(spec: TermSpec, rng: np.random.Generator) -> dict[str, float]:
    return {
        name: float(rng.uniform(*spec.param_ranges[name]))
        for name in sorted(spec.param_ranges)
    }


def instantiate(spec: TermSpec, rng: np.random.Generator) -> Expr:
    """Bind each template parameter to a uniform draw from its range."""
    if not spec.param_ranges:
        return spec.template
    return bind_parameters(spec.template, _draw_params(spec, rng))


def sample_formula(seed: int, config: SamplerConfig | None = None) -> GeneratedSystem:
    """Draw one governing equation: 2..5 terms, always including the
    linear restoring force, categories without replacement, parameters
    uniform in range, initial conditions in [-1, 1]. Deterministic in
    (config.corpus_seed, seed)."""
    cfg = config if config is not None else SamplerConfig()
    cfg.validate()
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    rng = _rng_for(cfg.corpus_seed, seed)

    counts = sorted(cfg.term_count_weights)
    probs = np.array([cfg.term_count_weights[c] for c in counts], float)
    n_terms = int(rng.choice(counts, p=probs / probs.sum()))

    enabled = [c for c in _CATEGORIES if c in cfg.enabled_tuple()]
    pool = np.array([c for c in enabled if c != MANDATORY_CATEGORY], object)
    extras = [str(c) for c in rng.choice(pool, size=n_terms - 1, replace=False)]
    chosen = [MANDATORY_CATEGORY, *extras]

    # resolve each category to a concrete spec, consuming randomness only
    # where a category has several shapes
    chosen_specs: list[TermSpec] = []
    for cat in chosen:
        options = specs_for_category(cat)
        pick = options[0] if len(options) == 1 else options[int(rng.integers(len(options)))]
        chosen_specs.append(pick)

    # bind parameters in menu order so draw order never depends on the
    # category permutation
    order = {s.name: i for i, s in enumerate(_SPECS)}
    params_out: dict[str, float] = {}
    bound_terms: list[Expr] = []
    sym_terms: list[Expr] = []
    for spec in sorted(chosen_specs, key=lambda s: order[s.name]):
        binding: dict[str, float] = {}
        renames: dict[str, Expr] = {}
        for pname, value in _draw_params(spec, rng).items():
            out = pname
            suffix = 2
            while out in params_out:
                out = f"{pname}{suffix}"
                suffix += 1
            params_out[out] = value
            binding[pname] = value
            renames[pname] = Parameter(out)
        bound_terms.append(bind_parameters(spec.template, binding))
        sym_terms.append(bind_parameters(spec.template, renames))

    x0 = float(rng.uniform(-1.0, 1.0))
    v0 = float(rng.uniform(-1.0, 1.0))
    formula = canonicalize(Add(tuple(bound_terms)))
    symbolic = canonicalize(Add(tuple(sym_terms)))
    return GeneratedSystem(
        formula=formula,
        symbolic_formula=symbolic,
        params=params_out,
        term_categories=tuple(chosen),
        seed=seed,
        x0=x0,
        v0=v0,
    )
