"""Trajectory generation: adaptive Runge-Kutta integration of
x'' = f(x, x', t) with seeded piecewise-constant stochastic forcing,
dense-output sampling onto a uniform grid, subsampling, and CSV I/O.

The integrator is an embedded Dormand-Prince 5(4) pair with Hairer's
quartic dense interpolant, written against scalar Python floats: the
two-component state makes array machinery pure overhead, and per-step
costs dominate when noise cells cap the step length at 0.02.

Stochastic forcing is realized as a zero-order-hold process: one
standard-normal draw per 0.02 time cell, frozen within the cell. Steps
never straddle a cell boundary, so the ODE seen by the solver is smooth
inside every step and the realized path is exactly reproducible from the
seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO

import numpy as np

from .errors import BadCount, ConfigError, Diverged, FormatError, StepSizeUnderflow
from .expr import compile_scalar
from .expr.nodes import contains_noise
from .library import GeneratedSystem

__all__ = [
    "SimConfig", "NoiseProcess", "Trajectory",
    "simulate", "subsample", "export_csv", "import_csv",
]


@dataclass(frozen=True)
class SimConfig:
    rtol: float = 1e-8
    atol: float = 1e-10
    t_end: float = 20.0
    n_points: int = 1000
    noise_dt: float = 0.02
    divergence_limit: float = 1e3
    initial_step: float = 1e-3
    max_steps: int = 2_000_000

    def validate(self) -> None:
        if not (self.rtol > 0 and self.atol > 0):
            raise ConfigError("tolerances must be positive")
        if not (self.t_end > 0 and self.noise_dt > 0 and self.initial_step > 0):
            raise ConfigError("time quantities must be positive")
        if self.n_points < 2:
            raise ConfigError("n_points must be at least 2")
        if self.divergence_limit <= 0:
            raise ConfigError("divergence_limit must be positive")


class NoiseProcess:
    """Seeded standard-normal draws, one per grid cell, zero-order hold.

    value(t) is right-continuous: the draw for cell floor(t / grid_dt).
    Cells are generated lazily in blocks so the path length never has to
    be declared up front; the same seed always yields the same path.
    """

    def __init__(self, seed: int, grid_dt: float = 0.02):
        self.seed = int(seed)
        self.grid_dt = float(grid_dt)
        self._rng = np.random.default_rng(self.seed)
        self._values: list[float] = []

    def cell_value(self, idx: int) -> float:
        if idx < 0:
            raise IndexError("noise cell index must be nonnegative")
        while len(self._values) <= idx:
            self._values.extend(self._rng.standard_normal(256).tolist())
        return self._values[idx]

    def value(self, t: float) -> float:
        return self.cell_value(int(math.floor(t / self.grid_dt + 1e-12)))

    def cells(self, n: int) -> np.ndarray:
        self.cell_value(n - 1)
        return np.asarray(self._values[:n])


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        for name in ("t", "x", "v", "a"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), float))
        n = len(self.t)
        if not (len(self.x) == len(self.v) == len(self.a) == n):
            raise ValueError("t, x, v, a must have equal length")
        if n > 1 and not np.all(np.diff(self.t) > 0):
            raise ValueError("t must be strictly increasing")

    def __len__(self) -> int:
        return len(self.t)


# Dormand-Prince 5(4) tableau.
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = (
    9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656)
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)
# dense-output weights for the quartic interpolant
_D1 = -12715105075 / 11282082432
_D3 = 87487479700 / 32700410799
_D4 = -10690763975 / 1880347072
_D5 = 701980252875 / 199316789632
_D6 = -1453857185 / 822651844
_D7 = 69997945 / 29380423


def simulate(system: GeneratedSystem, config: SimConfig | None = None,
             noise: NoiseProcess | None = None) -> Trajectory:
    """Integrate x' = v, v' = f(x, v, t) from (x0, v0) over [0, t_end] and
    sample the dense solution on the uniform output grid.

    The acceleration column is recomputed from the right-hand side at the
    sample points using the realized noise path, so a[i] matches the
    governing equation exactly. Raises Diverged when |x| or |v| leaves
    [-limit, limit] or turns non-finite, StepSizeUnderflow if the
    controller stalls.
    """
    cfg = config if config is not None else SimConfig()
    cfg.validate()
    f = compile_scalar(system.formula)

    noisy = contains_noise(system.formula)
    if noisy and noise is None:
        noise = NoiseProcess(system.seed, cfg.noise_dt)
    if noisy and abs(noise.grid_dt - cfg.noise_dt) > 1e-15:
        raise ConfigError("noise grid_dt disagrees with config noise_dt")

    t_grid = np.linspace(0.0, cfg.t_end, cfg.n_points)
    xs = np.empty(cfg.n_points)
    vs = np.empty(cfg.n_points)

    t = 0.0
    x, v = float(system.x0), float(system.v0)
    limit = cfg.divergence_limit
    if abs(x) > limit or abs(v) > limit:
        raise Diverged(0.0, "initial state outside stability window")

    cell = 0
    z = noise.cell_value(0) if noisy else 0.0
    k1x = v
    k1v = f(x, v, 0.0, z)
    if not math.isfinite(k1v):
        raise Diverged(0.0, "right-hand side non-finite at t=0")

    i_out = 0
    while i_out < cfg.n_points and t_grid[i_out] <= t:
        xs[i_out], vs[i_out] = x, v
        i_out += 1

    h = min(cfg.initial_step, cfg.noise_dt if noisy else cfg.t_end)
    steps = 0
    while t < cfg.t_end and i_out < cfg.n_points:
        steps += 1
        if steps > cfg.max_steps:
            raise StepSizeUnderflow(t)
        boundary = (cell + 1) * cfg.noise_dt if noisy else cfg.t_end
        t_stop = min(cfg.t_end, boundary)
        capped = False
        if h >= t_stop - t:
            h = t_stop - t
            capped = True
        if h < 1e-14 * max(1.0, abs(t)):
            raise StepSizeUnderflow(t)

        x2 = x + h * (_A21 * k1x)
        v2 = v + h * (_A21 * k1v)
        k2x, k2v = v2, f(x2, v2, t + _C2 * h, z)
        x3 = x + h * (_A31 * k1x + _A32 * k2x)
        v3 = v + h * (_A31 * k1v + _A32 * k2v)
        k3x, k3v = v3, f(x3, v3, t + _C3 * h, z)
        x4 = x + h * (_A41 * k1x + _A42 * k2x + _A43 * k3x)
        v4 = v + h * (_A41 * k1v + _A42 * k2v + _A43 * k3v)
        k4x, k4v = v4, f(x4, v4, t + _C4 * h, z)
        x5 = x + h * (_A51 * k1x + _A52 * k2x + _A53 * k3x + _A54 * k4x)
        v5 = v + h * (_A51 * k1v + _A52 * k2v + _A53 * k3v + _A54 * k4v)
        k5x, k5v = v5, f(x5, v5, t + _C5 * h, z)
        x6 = x + h * (_A61 * k1x + _A62 * k2x + _A63 * k3x + _A64 * k4x + _A65 * k5x)
        v6 = v + h * (_A61 * k1v + _A62 * k2v + _A63 * k3v + _A64 * k4v + _A65 * k5v)
        k6x, k6v = v6, f(x6, v6, t + h, z)
        y1x = x + h * (_B1 * k1x + _B3 * k3x + _B4 * k4x + _B5 * k5x + _B6 * k6x)
        y1v = v + h * (_B1 * k1v + _B3 * k3v + _B4 * k4v + _B5 * k5v + _B6 * k6v)
        k7x, k7v = y1v, f(y1x, y1v, t + h, z)

        ex = h * (_E1 * k1x + _E3 * k3x + _E4 * k4x + _E5 * k5x + _E6 * k6x + _E7 * k7x)
        ev = h * (_E1 * k1v + _E3 * k3v + _E4 * k4v + _E5 * k5v + _E6 * k6v + _E7 * k7v)
        scx = cfg.atol + cfg.rtol * max(abs(x), abs(y1x))
        scv = cfg.atol + cfg.rtol * max(abs(v), abs(y1v))
        try:
            err = math.sqrt(0.5 * ((ex / scx) ** 2 + (ev / scv) ** 2))
        except OverflowError:
            err = math.inf

        if not math.isfinite(err):
            h *= 0.2
            continue
        if err > 1.0:
            h *= max(0.2, min(1.0, 0.9 * err ** -0.2))
            continue

        # accepted: sample every output point inside (t, t_new]
        t_new = t_stop if capped else t + h
        if i_out < cfg.n_points and t_grid[i_out] <= t_new + 1e-14:
            dx = y1x - x
            dv = y1v - v
            r3x = h * k1x - dx
            r3v = h * k1v - dv
            r4x = dx - h * k7x - r3x
            r4v = dv - h * k7v - r3v
            r5x = h * (_D1 * k1x + _D3 * k3x + _D4 * k4x + _D5 * k5x + _D6 * k6x + _D7 * k7x)
            r5v = h * (_D1 * k1v + _D3 * k3v + _D4 * k4v + _D5 * k5v + _D6 * k6v + _D7 * k7v)
            while i_out < cfg.n_points and t_grid[i_out] <= t_new + 1e-14:
                th = (t_grid[i_out] - t) / h
                th = 0.0 if th < 0.0 else 1.0 if th > 1.0 else th
                th1 = 1.0 - th
                xs[i_out] = x + th * (dx + th1 * (r3x + th * (r4x + th1 * r5x)))
                vs[i_out] = v + th * (dv + th1 * (r3v + th * (r4v + th1 * r5v)))
                i_out += 1

        t, x, v = t_new, y1x, y1v
        if not (math.isfinite(x) and math.isfinite(v)) or abs(x) > limit or abs(v) > limit:
            raise Diverged(t)
        if capped and noisy and boundary <= cfg.t_end and t < cfg.t_end:
            cell += 1
            z = noise.cell_value(cell)
            k1x, k1v = v, f(x, v, t, z)
        else:
            k1x, k1v = k7x, k7v
        h *= 5.0 if err == 0.0 else max(0.2, min(5.0, 0.9 * err ** -0.2))

    a = np.empty(cfg.n_points)
    for i in range(cfg.n_points):
        zi = noise.value(float(t_grid[i])) if noisy else 0.0
        a[i] = f(float(xs[i]), float(vs[i]), float(t_grid[i]), zi)
    return Trajectory(t=t_grid, x=xs, v=vs, a=a)


def subsample(traj: Trajectory, n: int = 100) -> Trajectory:
    """Keep n uniformly spaced samples including both endpoints."""
    total = len(traj)
    if n < 2 or n > total:
        raise BadCount(f"cannot keep {n} of {total} samples")
    idx = np.round(np.linspace(0, total - 1, n)).astype(int)
    return Trajectory(t=traj.t[idx], x=traj.x[idx], v=traj.v[idx], a=traj.a[idx])


_HEADER = "t,x,v,a"


def export_csv(traj: Trajectory, dest: str | IO[str]) -> None:
    """Write header t,x,v,a then one row per sample at 17 significant
    digits, enough to reproduce every float64 bitwise."""
    own = isinstance(dest, (str, bytes))
    fh = open(dest, "w", encoding="utf-8") if own else dest
    try:
        fh.write(_HEADER + "\n")
        for i in range(len(traj)):
            fh.write("%.17g,%.17g,%.17g,%.17g\n"
                     % (traj.t[i], traj.x[i], traj.v[i], traj.a[i]))
    finally:
        if own:
            fh.close()


def import_csv(src: str | IO[str]) -> Trajectory:
    own = isinstance(src, (str, bytes))
    fh = open(src, "r", encoding="utf-8") if own else src
    try:
        header = fh.readline().strip()
        if header != _HEADER:
            raise FormatError(f"expected header {_HEADER!r}, got {header!r}")
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise FormatError(f"line {lineno}: expected 4 columns, got {len(parts)}")
            try:
                rows.append(tuple(float(p) for p in parts))
            except ValueError:
                raise FormatError(f"line {lineno}: non-numeric value") from None
        if not rows:
            raise FormatError("no data rows")
        data = np.asarray(rows, float)
        t = data[:, 0]
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise FormatError("t column is not strictly increasing")
        return Trajectory(t=t, x=data[:, 1], v=data[:, 2], a=data[:, 3])
    finally:
        if own:
            fh.close()
