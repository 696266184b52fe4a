"""Per-instance plot rendering: phase portrait v(x) and time series x(t).

Rendering goes straight through an Agg canvas (no pyplot, no global
state) and strips the PNG Software field, so identical inputs give
byte-identical files. All visual claims about the plots (closed orbits,
spirals, periodicity) are asserted on the plotted arrays, never pixels.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .errors import EmptyTrajectory
from .simulate import Trajectory

__all__ = ["PlotStyle", "render_phase_portrait", "render_time_series"]


@dataclass(frozen=True)
class PlotStyle:
    dpi: int = 300
    width: float = 4.0
    height: float = 3.0
    grid: bool = True
    line_width: float = 1.0
    line_color: str = "#1f77b4"
    pad_fraction: float = 0.05
    # subplots_adjust fractions: left, bottom, right, top
    margins: tuple[float, float, float, float] = (0.15, 0.14, 0.96, 0.95)


DEFAULT_STYLE = PlotStyle()


def _padded_limits(data: np.ndarray, frac: float) -> tuple[float, float]:
    lo = float(np.min(data))
    hi = float(np.max(data))
    span = hi - lo
    pad = frac * span if span > 0 else max(abs(lo), 1.0) * frac
    return lo - pad, hi + pad


def _render(xdata, ydata, xlabel, ylabel, style: PlotStyle) -> bytes:
    if len(xdata) < 2:
        raise EmptyTrajectory(f"need at least 2 samples, got {len(xdata)}")
    fig = Figure(figsize=(style.width, style.height), dpi=style.dpi)
    FigureCanvasAgg(fig)
    ax = fig.add_subplot(111)
    ax.plot(xdata, ydata, lw=style.line_width, color=style.line_color)
    ax.set_xlim(*_padded_limits(np.asarray(xdata), style.pad_fraction))
    ax.set_ylim(*_padded_limits(np.asarray(ydata), style.pad_fraction))
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if style.grid:
        ax.grid(True, alpha=0.3)
    left, bottom, right, top = style.margins
    fig.subplots_adjust(left=left, bottom=bottom, right=right, top=top)
    buf = io.BytesIO()
    # a None Software entry drops the only savefig metadata that varies
    # with the environment, keeping output byte-stable
    fig.savefig(buf, format="png", dpi=style.dpi, metadata={"Software": None})
    return buf.getvalue()


def render_phase_portrait(traj: Trajectory, style: PlotStyle = DEFAULT_STYLE) -> bytes:
    """PNG bytes of velocity against position."""
    return _render(traj.x, traj.v, "x", "v", style)


def render_time_series(traj: Trajectory, style: PlotStyle = DEFAULT_STYLE) -> bytes:
    """PNG bytes of position against time."""
    return _render(traj.t, traj.x, "t", "x", style)
