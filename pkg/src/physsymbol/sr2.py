"""Residual realignment: subtract an ansatz's predictions from the
observed accelerations, symbolically regress the leftover field with a
small genetic-programming engine, and add the discovered expression back.

The pipeline never makes a fit worse: the GP falls back to the constant
mean of the residual whenever evolution finds no real structure, and a
constant correction cannot raise the mean squared error.

Stochastic terms take their mean (zero) everywhere here, so for a system
driven by noise(s) the irreducible MSE floor is the realized noise
variance, by construction rather than by accident.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.optimize import least_squares

from .errors import (
    ConfigError, NonFinite, SingularFit, TooManyParameters, UnboundParameter,
)
from .expr import (
    Add, Constant, Cos, Expr, Mul, Neg, Noise, Parameter, Pow, Sin, Variable,
    bind_parameters, canonicalize, count_nodes, decompose_terms, eval_array,
    evaluate, parameter_names, structure_key,
)
from .simulate import Trajectory

__all__ = [
    "ResidualField", "GPConfig", "Candidate", "SR2Result",
    "residual_field", "fit_coefficients", "symbolic_regress", "realign",
    "post_mse", "run_sr2",
]


@dataclass(frozen=True)
class ResidualField:
    x: np.ndarray
    v: np.ndarray
    t: np.ndarray
    target: np.ndarray  # acceleration residual r[i]

    def __post_init__(self):
        for name in ("x", "v", "t", "target"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), float))
        n = len(self.x)
        if not (len(self.v) == len(self.t) == len(self.target) == n):
            raise ValueError("field arrays must have equal length")

    def __len__(self) -> int:
        return len(self.x)


def residual_field(traj: Trajectory, ansatz: Expr) -> ResidualField:
    """r[i] = a[i] - ansatz(x[i], v[i], t[i]) with noise taken at mean 0."""
    free = parameter_names(ansatz)
    if free:
        raise UnboundParameter(sorted(free)[0])
    pred = eval_array(ansatz, traj.x, traj.v, traj.t, noise_value=0.0)
    return ResidualField(x=traj.x, v=traj.v, t=traj.t, target=traj.a - pred)


def post_mse(final: Expr, traj: Trajectory) -> float:
    """Mean squared acceleration error of a fully bound formula; +inf when
    the prediction is non-finite anywhere."""
    free = parameter_names(final)
    if free:
        raise UnboundParameter(sorted(free)[0])
    pred = eval_array(final, traj.x, traj.v, traj.t, noise_value=0.0, strict=False)
    if not np.all(np.isfinite(pred)):
        return math.inf
    with np.errstate(all="ignore"):
        mse = float(np.mean((traj.a - pred) ** 2))
    return mse if math.isfinite(mse) else math.inf


def realign(ansatz: Expr, residual_expr: Expr) -> Expr:
    """Final theory = ansatz + discovered residual, with like terms merged
    by the canonical form (coefficients of shared shapes sum)."""
    return canonicalize(Add((ansatz, residual_expr)))


# --- coefficient fitting --------------------------------------------------------

_GRID_SIZES = {1: 128, 2: 24, 3: 10, 4: 6}
_DEFAULT_BOUNDS = (-10.0, 10.0)


def _count_occurrences(e: Expr, counts: dict[str, int]) -> None:
    if isinstance(e, Parameter):
        counts[e.name] = counts.get(e.name, 0) + 1
    elif isinstance(e, (Sin, Cos, Neg)):
        _count_occurrences(e.child, counts)
    elif isinstance(e, Noise):
        _count_occurrences(e.scale, counts)
    elif isinstance(e, Pow):
        _count_occurrences(e.base, counts)
    elif isinstance(e, (Add, Mul)):
        for c in e.children:
            _count_occurrences(c, counts)


def _known_bounds(name: str) -> tuple[float, float]:
    from .library import param_range_for
    try:
        return param_range_for(name)
    except KeyError:
        return _DEFAULT_BOUNDS


def fit_coefficients(skeleton: Expr, traj: Trajectory, strict: bool = True) -> Expr:
    """Bind every free parameter of a skeleton to the value that best
    reproduces traj.a in the least-squares sense.

    Parameters that appear once, as a direct factor of a single additive
    term, are solved exactly by linear least squares. Anything else
    (frequencies inside sin, repeated symbols) is handled by a bounded
    grid search followed by joint local refinement; at most 4 free
    parameters are supported. A noise scale parameter is bound to the
    standard deviation of the unexplained residual.

    A rank-deficient linear system raises SingularFit carrying the
    minimum-norm solution; strict=False returns that solution instead.
    """
    sk = canonicalize(skeleton)
    names = sorted(parameter_names(sk))
    if not names:
        return sk
    if len(names) > 4:
        raise TooManyParameters(f"{len(names)} free parameters, limit is 4")

    terms = sorted(decompose_terms(sk), key=structure_key)
    noise_terms = [e for e in terms if isinstance(e, Noise)]
    det_terms = [e for e in terms if not isinstance(e, Noise)]

    noise_only: set[str] = set()
    for e in noise_terms:
        noise_only |= parameter_names(e)
    for e in det_terms:
        noise_only -= parameter_names(e)

    occ: dict[str, int] = {}
    _count_occurrences(sk, occ)

    # a parameter is linear when it is the sole coefficient-position factor
    # of one deterministic term and appears nowhere else; parameters nested
    # deeper in the same term are fitted by the grid stage first
    linear: dict[str, Expr] = {}  # name -> the term it scales
    for term in det_terms:
        direct = [c.name for c in (term.children if isinstance(term, Mul) else (term,))
                  if isinstance(c, Parameter)]
        if len(direct) == 1 and occ[direct[0]] == 1:
            linear[direct[0]] = term
    nonlinear = [n for n in names if n not in linear and n not in noise_only]

    if len(nonlinear) > 4:
        raise TooManyParameters(f"{len(nonlinear)} nonlinear parameters, limit is 4")

    a_gt = traj.a

    def solve_linear(nl_binding: Mapping[str, float]):
        """Exact LS over the linear coefficients at fixed nonlinear values.
        Returns (sse, full binding, rank_deficient)."""
        columns = []
        col_names = []
        offset = np.zeros(len(a_gt))
        for term in det_terms:
            bound = bind_parameters(term, nl_binding)
            remaining = parameter_names(bound)
            if not remaining:
                offset = offset + eval_array(bound, traj.x, traj.v, traj.t,
                                             noise_value=0.0, strict=False)
                continue
            pname = next(iter(remaining))  # the single linear coefficient
            basis = bind_parameters(bound, {pname: 1.0})
            col = eval_array(basis, traj.x, traj.v, traj.t,
                             noise_value=0.0, strict=False)
            columns.append(col)
            col_names.append(pname)
        b = a_gt - offset
        binding = dict(nl_binding)
        deficient = False
        if columns:
            A = np.column_stack(columns)
            if not np.all(np.isfinite(A)):
                return math.inf, binding, False
            theta, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
            deficient = rank < len(columns)
            for name, val in zip(col_names, theta):
                binding[name] = float(val)
            resid = b - A @ theta
        else:
            resid = b
        sse = float(resid @ resid) if np.all(np.isfinite(resid)) else math.inf
        return sse, binding, deficient

    if nonlinear:
        grid_n = _GRID_SIZES[len(nonlinear)]
        axes = [np.linspace(*_known_bounds(n), grid_n) for n in nonlinear]
        best = (math.inf, None, False)
        for point in itertools.product(*axes):
            nl = dict(zip(nonlinear, (float(p) for p in point)))
            sse, binding, deficient = solve_linear(nl)
            if sse < best[0]:
                best = (sse, binding, deficient)
        if best[1] is None:
            raise SingularFit("no finite fit anywhere on the search grid")
        _, binding, deficient = best

        # joint local refinement over every deterministic parameter
        det_names = sorted(binding)
        x0 = np.array([binding[n] for n in det_names])
        lo = np.array([_known_bounds(n)[0] if n in nonlinear else -np.inf
                       for n in det_names])
        hi = np.array([_known_bounds(n)[1] if n in nonlinear else np.inf
                       for n in det_names])
        x0 = np.clip(x0, lo, hi)
        det_expr = (det_terms[0] if len(det_terms) == 1
                    else Add(tuple(det_terms))) if det_terms else Constant(0.0)

        def residuals(vec):
            bound = bind_parameters(det_expr, dict(zip(det_names, vec)))
            pred = eval_array(bound, traj.x, traj.v, traj.t,
                              noise_value=0.0, strict=False)
            return np.nan_to_num(a_gt - pred, nan=1e9, posinf=1e9, neginf=-1e9)

        try:
            sol = least_squares(residuals, x0, bounds=(lo, hi), method="trf",
                                max_nfev=400)
            refined = dict(zip(det_names, (float(z) for z in sol.x)))
            if float(sol.fun @ sol.fun) <= best[0]:
                binding = refined
        except Exception:
            pass  # keep the grid solution
    else:
        sse, binding, deficient = solve_linear({})

    # unexplained spread feeds the noise amplitude, when one is free
    if noise_only:
        det_expr = (Add(tuple(det_terms)) if len(det_terms) > 1
                    else det_terms[0] if det_terms else Constant(0.0))
        pred = eval_array(bind_parameters(det_expr, binding),
                          traj.x, traj.v, traj.t, noise_value=0.0, strict=False)
        spread = float(np.std(a_gt - pred))
        for n in sorted(noise_only):
            binding[n] = spread

    solution = bind_parameters(sk, binding)
    if deficient:
        err = SingularFit("design matrix is rank-deficient; "
                          "returning the minimum-norm fit", solution=solution)
        if strict:
            raise err
        return solution
    return solution


# --- genetic-programming engine -----------------------------------------------------

_ALL_OPS = ("add", "mul", "neg", "sin", "cos", "pow3", "pow5")
_UNARY = {"neg", "sin", "cos", "pow3", "pow5"}
_BINARY = {"add", "mul"}


@dataclass(frozen=True)
class GPConfig:
    population_size: int = 500
    generations: int = 40
    tournament_size: int = 4
    p_crossover: float = 0.65
    p_subtree_mutation: float = 0.15
    p_point_mutation: float = 0.10
    p_constant_jitter: float = 0.10
    max_depth: int = 5
    max_nodes: int = 64
    operators: tuple[str, ...] = _ALL_OPS
    parsimony: float | None = None  # None: 1e-4 * var(target) per node
    constant_scale: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.population_size < 2 or self.generations < 1:
            raise ConfigError("population_size >= 2 and generations >= 1 required")
        if self.tournament_size < 1:
            raise ConfigError("tournament_size must be >= 1")
        probs = (self.p_crossover, self.p_subtree_mutation,
                 self.p_point_mutation, self.p_constant_jitter)
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ConfigError("variation probabilities must lie in [0, 1]")
        if sum(probs) > 1.0 + 1e-9:
            raise ConfigError("variation probabilities exceed 1")
        unknown = set(self.operators) - set(_ALL_OPS)
        if unknown:
            raise ConfigError(f"unknown operators: {sorted(unknown)}")
        if not set(self.operators) & _BINARY:
            raise ConfigError("need at least one binary operator")
        if self.max_depth < 2 or self.max_nodes < 3:
            raise ConfigError("max_depth >= 2 and max_nodes >= 3 required")


@dataclass(frozen=True)
class Candidate:
    expr: Expr
    mse: float
    complexity: int
    fitness: float
    # optimal affine map: the candidate is scored as scale*expr + shift,
    # so selection rewards finding the right shape before the right size
    scale: float = 1.0
    shift: float = 0.0


# tree plumbing ----------------------------------------------------------------

def _children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, (Sin, Cos, Neg)):
        return (e.child,)
    if isinstance(e, Noise):
        return (e.scale,)
    if isinstance(e, Pow):
        return (e.base,)
    if isinstance(e, (Add, Mul)):
        return e.children
    return ()


def _rebuild(e: Expr, kids: tuple[Expr, ...]) -> Expr:
    if isinstance(e, Sin):
        return Sin(kids[0])
    if isinstance(e, Cos):
        return Cos(kids[0])
    if isinstance(e, Neg):
        return Neg(kids[0])
    if isinstance(e, Noise):
        return Noise(kids[0])
    if isinstance(e, Pow):
        return Pow(kids[0], e.exponent)
    if isinstance(e, Add):
        return Add(kids)
    if isinstance(e, Mul):
        return Mul(kids)
    return e


def _paths(e: Expr, prefix: tuple = ()) -> list[tuple]:
    out = [prefix]
    for i, c in enumerate(_children(e)):
        out.extend(_paths(c, prefix + (i,)))
    return out


def _get(e: Expr, path: tuple) -> Expr:
    for i in path:
        e = _children(e)[i]
    return e


def _replace(e: Expr, path: tuple, new: Expr) -> Expr:
    if not path:
        return new
    kids = list(_children(e))
    kids[path[0]] = _replace(kids[path[0]], path[1:], new)
    return _rebuild(e, tuple(kids))


def _depth(e: Expr) -> int:
    kids = _children(e)
    return 1 if not kids else 1 + max(_depth(c) for c in kids)


# random construction -----------------------------------------------------------

def _rand_terminal(rng, scale: float) -> Expr:
    k = int(rng.integers(0, 4))
    if k == 0:
        return Variable("x")
    if k == 1:
        return Variable("v")
    if k == 2:
        return Variable("t")
    return Constant(float(rng.uniform(-5.0, 5.0)) * scale)


def _rand_tree(rng, depth: int, ops: tuple[str, ...], scale: float,
               full: bool) -> Expr:
    if depth <= 1 or (not full and rng.random() < 0.3):
        return _rand_terminal(rng, scale)
    op = ops[int(rng.integers(0, len(ops)))]
    if op in _BINARY:
        left = _rand_tree(rng, depth - 1, ops, scale, full)
        right = _rand_tree(rng, depth - 1, ops, scale, full)
        return Add((left, right)) if op == "add" else Mul((left, right))
    child = _rand_tree(rng, depth - 1, ops, scale, full)
    if op == "neg":
        return Neg(child)
    if op == "sin":
        return Sin(child)
    if op == "cos":
        return Cos(child)
    return Pow(child, 3 if op == "pow3" else 5)


def _op_name(e: Expr) -> str | None:
    if isinstance(e, Add):
        return "add"
    if isinstance(e, Mul):
        return "mul"
    if isinstance(e, Neg):
        return "neg"
    if isinstance(e, Sin):
        return "sin"
    if isinstance(e, Cos):
        return "cos"
    if isinstance(e, Pow):
        return "pow3" if e.exponent == 3 else "pow5"
    return None


def _apply_op(op: str, kids: tuple[Expr, ...]) -> Expr:
    if op == "add":
        return Add(kids)
    if op == "mul":
        return Mul(kids)
    if op == "neg":
        return Neg(kids[0])
    if op == "sin":
        return Sin(kids[0])
    if op == "cos":
        return Cos(kids[0])
    return Pow(kids[0], 3 if op == "pow3" else 5)


# variation ----------------------------------------------------------------------

def _crossover(a: Expr, b: Expr, rng, cfg: GPConfig) -> Expr:
    pa = _paths(a)
    pb = _paths(b)
    cut_a = pa[int(rng.integers(0, len(pa)))]
    cut_b = pb[int(rng.integers(0, len(pb)))]
    child = _replace(a, cut_a, _get(b, cut_b))
    if _depth(child) > cfg.max_depth + 2 or count_nodes(child) > cfg.max_nodes:
        return a
    return child


def _subtree_mutation(e: Expr, rng, cfg: GPConfig) -> Expr:
    ps = _paths(e)
    cut = ps[int(rng.integers(0, len(ps)))]
    graft = _rand_tree(rng, 3, cfg.operators, cfg.constant_scale, full=False)
    child = _replace(e, cut, graft)
    if _depth(child) > cfg.max_depth + 2 or count_nodes(child) > cfg.max_nodes:
        return e
    return child


def _point_mutation(e: Expr, rng, cfg: GPConfig) -> Expr:
    ps = _paths(e)
    cut = ps[int(rng.integers(0, len(ps)))]
    node = _get(e, cut)
    op = _op_name(node)
    if op is None:
        return _replace(e, cut, _rand_terminal(rng, cfg.constant_scale))
    pool = [o for o in cfg.operators
            if o != op and (o in _BINARY) == (op in _BINARY)]
    if not pool:
        return e
    new_op = pool[int(rng.integers(0, len(pool)))]
    return _replace(e, cut, _apply_op(new_op, _children(node)))


def _constant_jitter(e: Expr, rng, cfg: GPConfig) -> Expr:
    cpaths = [p for p in _paths(e) if isinstance(_get(e, p), Constant)]
    if not cpaths:
        return _subtree_mutation(e, rng, cfg)
    cut = cpaths[int(rng.integers(0, len(cpaths)))]
    val = _get(e, cut).value
    new = (val * (1.0 + 0.2 * cfg.constant_scale * rng.standard_normal())
           + 0.05 * cfg.constant_scale * rng.standard_normal())
    new = min(max(new, -1e6), 1e6)
    return _replace(e, cut, Constant(new))


def _has_variable(e: Expr) -> bool:
    if isinstance(e, Variable):
        return True
    return any(_has_variable(c) for c in _children(e))


def _condense(e: Expr) -> Expr:
    """Collapse variable-free subtrees to plain constants, so sin(3.82)**5
    cannot masquerade as structure the parsimony term should be pruning."""
    kids = _children(e)
    if not kids:
        return e
    new = _rebuild(e, tuple(_condense(c) for c in kids))
    if not _has_variable(new):
        try:
            return Constant(evaluate(new, 0.0, 0.0, 0.0))
        except NonFinite:
            return new
    return new


# fitness --------------------------------------------------------------------------

def _assess(expr: Expr, f: ResidualField, lam: float,
            memo: dict[str, Candidate]) -> Candidate:
    key = structure_key(expr)
    hit = memo.get(key)
    if hit is not None:
        return hit
    c = count_nodes(expr)
    with np.errstate(all="ignore"):
        pred = eval_array(expr, f.x, f.v, f.t, strict=False)
        if not np.all(np.isfinite(pred)):
            cand = Candidate(expr=expr, mse=math.inf, complexity=c,
                             fitness=math.inf)
            memo[key] = cand
            return cand
        tm = float(np.mean(f.target))
        pm = float(np.mean(pred))
        dp = pred - pm
        pv = float(np.mean(dp * dp))
        if pv > 1e-300:
            a = float(np.mean(dp * (f.target - tm))) / pv
            b = tm - a * pm
        else:
            a, b = 0.0, tm
        err = f.target - (a * pred + b)
        mse = float(np.mean(err * err))
    if not math.isfinite(mse):
        mse = math.inf
    fitness = math.inf if mse == math.inf else mse + lam * c
    cand = Candidate(expr=expr, mse=mse, complexity=c, fitness=fitness,
                     scale=a, shift=b)
    memo[key] = cand
    return cand


def _materialize(cand: Candidate) -> Expr:
    """The tree the candidate is actually scored as: scale*expr + shift."""
    e = cand.expr
    if cand.scale != 1.0:
        e = Mul((Constant(cand.scale), e))
    if cand.shift != 0.0:
        e = Add((e, Constant(cand.shift)))
    return e


def _under_trig(e: Expr, path: tuple) -> bool:
    """True when the node at path sits inside a sin/cos argument."""
    for i in path:
        if isinstance(e, (Sin, Cos)):
            return True
        e = _children(e)[i]
    return False


_FREQ_GRID = np.concatenate([np.linspace(0.05, 6.3, 64),
                             -np.linspace(0.05, 6.3, 64)])


def _polish_constants(cand: Candidate, f: ResidualField, lam: float,
                      memo: dict[str, Candidate]) -> Candidate:
    """Refine a candidate's embedded constants; keep the refinement only
    on improvement, so elite fitness stays monotone.

    Constants inside trig arguments act as frequencies, whose error
    surface has a basin far narrower than local descent can find from a
    random start. Those get a coarse 1-D grid sweep before the joint
    least-squares refinement.
    """
    if not math.isfinite(cand.mse):
        return cand
    expr = _condense(_materialize(cand))
    cpaths = [p for p in _paths(expr) if isinstance(_get(expr, p), Constant)]
    if not cpaths:
        return cand

    def mse_of(e: Expr) -> float:
        with np.errstate(all="ignore"):
            pred = eval_array(e, f.x, f.v, f.t, strict=False)
            err = f.target - pred
            m = float(np.mean(err * err)) if np.all(np.isfinite(err)) else math.inf
        return m if math.isfinite(m) else math.inf

    for p in cpaths:
        if not _under_trig(expr, p):
            continue
        best_val = _get(expr, p).value
        best_mse = mse_of(expr)
        for val in _FREQ_GRID:
            trial = _replace(expr, p, Constant(float(val)))
            m = mse_of(trial)
            if m < best_mse:
                best_mse, best_val = m, float(val)
        expr = _replace(expr, p, Constant(best_val))

    x0 = np.array([_get(expr, p).value for p in cpaths])

    def rebuilt(vec):
        e = expr
        for p, val in zip(cpaths, vec):
            e = _replace(e, p, Constant(float(min(max(val, -1e6), 1e6))))
        return e

    def residuals(vec):
        with np.errstate(all="ignore"):
            pred = eval_array(rebuilt(vec), f.x, f.v, f.t, strict=False)
        return np.nan_to_num(f.target - pred, nan=1e9, posinf=1e9, neginf=-1e9)

    try:
        sol = least_squares(residuals, x0, method="trf", max_nfev=120)
    except Exception:
        return cand
    polished = _assess(rebuilt(sol.x), f, lam, memo)
    return polished if polished.fitness < cand.fitness else cand


def _prune_terms(e: Expr, f: ResidualField, lam: float, var: float) -> Expr:
    """Drop top-level additive terms whose contribution is worth less than
    their parsimony cost. Accepts a drop only while the fit stays clearly
    below the no-structure threshold, preserving the never-hurts bound."""
    def raw_score(expr: Expr) -> tuple[float, float]:
        with np.errstate(all="ignore"):
            pred = eval_array(expr, f.x, f.v, f.t, strict=False)
            err = f.target - pred
            ok = np.all(np.isfinite(err))
            mse = float(np.mean(err * err)) if ok else math.inf
        if not math.isfinite(mse):
            mse = math.inf
        return mse, mse + lam * count_nodes(expr)

    cur = canonicalize(e)
    cur_mse, cur_score = raw_score(cur)
    changed = True
    while changed and isinstance(cur, Add):
        changed = False
        for i in range(len(cur.children)):
            rest = cur.children[:i] + cur.children[i + 1:]
            trial = rest[0] if len(rest) == 1 else Add(rest)
            try:
                trial = canonicalize(trial)
            except NonFinite:
                continue
            mse, score = raw_score(trial)
            if score < cur_score and mse < 0.999 * var:
                cur, cur_mse, cur_score = trial, mse, score
                changed = True
                break
    return cur


def _regress_trace(f: ResidualField, cfg: GPConfig) -> tuple[Expr, list[float]]:
    cfg.validate()
    if len(f) == 0:
        raise ValueError("empty residual field")
    target = f.target
    mean = float(np.mean(target))
    var = float(np.var(target))
    if var == 0.0:
        return Constant(mean), [0.0]
    lam = cfg.parsimony if cfg.parsimony is not None else 1e-4 * var
    rng = np.random.default_rng(cfg.seed)
    memo: dict[str, Candidate] = {}

    pop: list[Candidate] = []
    depths = list(range(2, cfg.max_depth + 1))
    for i in range(cfg.population_size):
        depth = depths[i % len(depths)]
        full = (i // len(depths)) % 2 == 0
        tree = _condense(_rand_tree(rng, depth, cfg.operators,
                                    cfg.constant_scale, full))
        pop.append(_assess(tree, f, lam, memo))

    def tournament() -> Expr:
        idx = rng.integers(0, len(pop), size=cfg.tournament_size)
        best = min(idx, key=lambda i: (pop[i].fitness, i))
        return pop[best].expr

    def best_of(cands: list[Candidate]) -> Candidate:
        return min(cands, key=lambda c: c.fitness)

    def contains_trig(e: Expr) -> bool:
        if isinstance(e, (Sin, Cos)):
            return True
        return any(contains_trig(c) for c in _children(e))

    elite = best_of(pop)
    elite = _polish_constants(elite, f, lam, memo)
    trace = [elite.fitness]
    last_polished_key = structure_key(elite.expr)
    booster: Candidate | None = None  # polished trig lead, reinjected below
    swept: set[str] = set()           # trig structures already grid-swept

    for _ in range(cfg.generations):
        nxt = [elite]
        if booster is not None and booster.fitness < math.inf \
                and structure_key(booster.expr) != structure_key(elite.expr):
            nxt.append(booster)
        while len(nxt) < cfg.population_size:
            r = rng.random()
            if r < cfg.p_crossover:
                child = _crossover(tournament(), tournament(), rng, cfg)
            elif r < cfg.p_crossover + cfg.p_subtree_mutation:
                child = _subtree_mutation(tournament(), rng, cfg)
            elif r < (cfg.p_crossover + cfg.p_subtree_mutation
                      + cfg.p_point_mutation):
                child = _point_mutation(tournament(), rng, cfg)
            elif r < (cfg.p_crossover + cfg.p_subtree_mutation
                      + cfg.p_point_mutation + cfg.p_constant_jitter):
                child = _constant_jitter(tournament(), rng, cfg)
            else:
                child = tournament()
            nxt.append(_assess(_condense(child), f, lam, memo))
        pop = nxt
        gen_best = best_of(pop)
        if gen_best.fitness < elite.fitness:
            elite = gen_best
        key = structure_key(elite.expr)
        if key != last_polished_key:
            elite = _polish_constants(elite, f, lam, memo)
            last_polished_key = structure_key(elite.expr)

        # frequencies only lock in under the grid sweep, so the best
        # trig-bearing candidate earns a polish even when it is not elite
        trig_cands = [c for c in pop if contains_trig(c.expr)
                      and math.isfinite(c.fitness)]
        booster = None
        if trig_cands:
            lead = min(trig_cands, key=lambda c: c.fitness)
            lead_key = structure_key(lead.expr)
            if lead_key not in swept:
                swept.add(lead_key)
                booster = _polish_constants(lead, f, lam, memo)
                if booster.fitness < elite.fitness:
                    elite = booster
                    last_polished_key = structure_key(elite.expr)
        trace.append(elite.fitness)

    elite = _polish_constants(elite, f, lam, memo)
    trace.append(elite.fitness)
    if not math.isfinite(elite.mse) or elite.mse >= 0.999 * var:
        return Constant(mean), trace
    try:
        final = canonicalize(_condense(_materialize(elite)))
    except NonFinite:
        return Constant(mean), trace
    return _prune_terms(final, f, lam, var), trace


def symbolic_regress(f: ResidualField, config: GPConfig | None = None) -> Expr:
    """Evolve a parsimonious expression for the residual field; falls back
    to the constant mean when no structure beats it. Deterministic per
    config.seed."""
    expr, _ = _regress_trace(f, config if config is not None else GPConfig())
    return expr


@dataclass(frozen=True)
class SR2Result:
    ansatz: Expr
    residual_expr: Expr
    final: Expr
    pre_mse: float
    final_mse: float


def run_sr2(traj: Trajectory, ansatz: Expr,
            config: GPConfig | None = None) -> SR2Result:
    """Full realignment pass. Symbolic ansatz parameters are fitted to the
    data first; the residual is then regressed and folded back in."""
    if parameter_names(ansatz):
        ansatz = fit_coefficients(ansatz, traj, strict=False)
    pre = post_mse(ansatz, traj)
    f = residual_field(traj, ansatz)
    found = symbolic_regress(f, config)
    final = realign(ansatz, found)
    return SR2Result(ansatz=ansatz, residual_expr=found, final=final,
                     pre_mse=pre, final_mse=post_mse(final, traj))
