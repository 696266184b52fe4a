"""Plot rendering: byte determinism plus data-level shape oracles."""

import math

import numpy as np
import pytest

from physsymbol.errors import EmptyTrajectory
from physsymbol.simulate import Trajectory, simulate
from physsymbol.viz import PlotStyle, render_phase_portrait, render_time_series

from test_simulate import make_system


def test_phase_portrait_bytes_deterministic():
    traj = simulate(make_system("-x"))
    a = render_phase_portrait(traj)
    b = render_phase_portrait(traj)
    assert a == b
    assert a[:4] == b"\x89PNG"


def test_time_series_bytes_deterministic():
    traj = simulate(make_system("-x"))
    a = render_time_series(traj)
    b = render_time_series(traj)
    assert a == b
    assert a[:4] == b"\x89PNG"


def test_different_data_different_bytes():
    t1 = simulate(make_system("-x"))
    t2 = simulate(make_system("-2*x"))
    assert render_phase_portrait(t1) != render_phase_portrait(t2)


def test_style_changes_bytes():
    traj = simulate(make_system("-x"))
    a = render_phase_portrait(traj)
    b = render_phase_portrait(traj, PlotStyle(line_color="#d62728"))
    assert a != b


def test_empty_trajectory_rejected():
    single = Trajectory(t=[0.0], x=[1.0], v=[0.0], a=[-1.0])
    with pytest.raises(EmptyTrajectory):
        render_phase_portrait(single)
    with pytest.raises(EmptyTrajectory):
        render_time_series(single)


# --- data-level plot oracles ------------------------------------------------------

def test_harmonic_orbit_is_a_circle():
    # x0=1, v0=0, a=-x: phase curve should lie on x^2 + v^2 = 1
    traj = simulate(make_system("-x"))
    radii = np.hypot(traj.x, traj.v)
    mean_r = radii.mean()
    assert np.max(np.abs(radii - mean_r)) / mean_r < 0.01


def test_damped_orbit_spirals_inward():
    traj = simulate(make_system("-x - 0.3*v"))
    # radius at successive v=0 crossings strictly decreases
    sign_flips = np.where(np.diff(np.sign(traj.v)) != 0)[0]
    radii = [abs(traj.x[i]) for i in sign_flips]
    assert len(radii) >= 3
    assert all(r1 > r2 for r1, r2 in zip(radii, radii[1:]))


def test_free_motion_time_series_collinear():
    traj = simulate(make_system("0*x", x0=0.25, v0=1.0))
    # least-squares line through (t, x) leaves no residual
    coeffs = np.polyfit(traj.t, traj.x, 1)
    fit = np.polyval(coeffs, traj.t)
    assert np.max(np.abs(traj.x - fit)) < 1e-9
    assert abs(coeffs[0] - 1.0) < 1e-9


def test_forced_steady_state_period():
    w = 3.0
    traj = simulate(make_system(f"-x - 0.5*v + 4*sin({w}*t)"))
    dt = traj.t[1] - traj.t[0]
    # transient decays with envelope e^(-t/4); inspect the back half
    seg = traj.x[500:] - np.mean(traj.x[500:])
    ac = np.correlate(seg, seg, mode="full")[len(seg) - 1:]
    expected = 2 * math.pi / w / dt
    lo, hi = int(expected * 0.5), int(expected * 1.5)
    peak = lo + int(np.argmax(ac[lo:hi]))
    assert abs(peak - expected) <= 2


def test_render_accepts_subsampled_short_trajectory():
    traj = simulate(make_system("-x"))
    two = Trajectory(t=traj.t[:2], x=traj.x[:2], v=traj.v[:2], a=traj.a[:2])
    png = render_time_series(two)
    assert png[:4] == b"\x89PNG"
