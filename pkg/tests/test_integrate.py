import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import PUBLISHED_S0, params_strategy
from pestctl import ModelParams, _kernels
from pestctl.control import ObjectiveWeights
from pestctl.errors import GridMismatch, PositivityViolated
from pestctl.integrate import (ControlSchedule, TimeGrid, Trajectory, bounds_certificate,
                               integrate_adjoint_backward, integrate_forward, integrate_many)

# endpoints from an adaptive 8th-order reference solve (rtol 1e-13)
REF_T60 = np.array([0.8119913326638956, 0.024266800282772012, 0.0023091862568704437, 0.34861881407981055])
REF_T600 = np.array([0.992244467926506, 0.015193933698325399, 0.0007583171301863455, 0.21600403501685825])

BACKENDS = ["numpy"] + (["numba"] if _kernels.NUMBA_AVAILABLE else [])


def test_grid_from_step():
    g = TimeGrid.from_step(600.0, 0.05)
    assert g.n_steps == 12000 and len(g) == 12001 and g.h == pytest.approx(0.05)
    assert TimeGrid.from_step(60.0).n_steps == 1200
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0.0, 10)


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("tf,ref", [(60.0, REF_T60), (600.0, REF_T600)])
def test_endpoint_matches_reference_solution(table1, backend, tf, ref):
    traj = integrate_forward(table1, PUBLISHED_S0, TimeGrid.from_step(tf, 0.05), backend=backend)
    np.testing.assert_allclose(traj.final, ref, rtol=0, atol=1e-9)


def test_error_ratio_near_sixteen(table1):
    ends = {h: integrate_forward(table1, PUBLISHED_S0, TimeGrid.from_step(60.0, h)).final
            for h in (1.0, 0.5, 0.125)}
    ratio = np.max(np.abs(ends[1.0] - ends[0.125])) / np.max(np.abs(ends[0.5] - ends[0.125]))
    assert 13.0 < ratio < 19.0


def test_E1_is_a_fixed_point(table1):
    traj = integrate_forward(table1, (1.0, 0.0, 0.0, 0.2), TimeGrid.from_step(100.0, 0.05))
    assert np.max(np.abs(np.diff(traj.values, axis=0))) <= 1e-12


def test_backends_agree(table1):
    if "numba" not in BACKENDS:
        pytest.skip("numba not installed")
    grid = TimeGrid.from_step(60.0, 0.05)
    rng = np.random.default_rng(0)
    u = ControlSchedule(grid, rng.uniform(0, 1, (len(grid), 3)))
    a = integrate_forward(table1, PUBLISHED_S0, grid, u, backend="numba")
    b = integrate_forward(table1, PUBLISHED_S0, grid, u, backend="numpy")
    np.testing.assert_allclose(a.values, b.values, rtol=1e-12, atol=1e-15)
    w = ObjectiveWeights()
    la = integrate_adjoint_backward(table1, a, u, w, backend="numba")
    lb = integrate_adjoint_backward(table1, a, u, w, backend="numpy")
    np.testing.assert_allclose(la.values, lb.values, rtol=1e-10, atol=1e-12)


def test_integrate_many_matches_single(table1):
    grid = TimeGrid.from_step(30.0, 0.05)
    ps = [table1, table1.replace(alpha=0.1), table1.replace(gamma=0.07)]
    values, status, _ = integrate_many(ps, PUBLISHED_S0, grid)
    assert np.all(status == _kernels.OK)
    for p, v in zip(ps, values):
        np.testing.assert_array_equal(v, integrate_forward(p, PUBLISHED_S0, grid).values)


def test_negative_initial_state_rejected(table1):
    with pytest.raises(PositivityViolated):
        integrate_forward(table1, (0.1, -0.1, 0.0, 0.1), TimeGrid.from_step(1.0))


def test_grid_mismatch(table1):
    g1, g2 = TimeGrid.from_step(10.0), TimeGrid.from_step(20.0)
    with pytest.raises(GridMismatch):
        integrate_forward(table1, PUBLISHED_S0, g1, ControlSchedule.constant(g2, (0, 0, 0)))
    with pytest.raises(GridMismatch):
        Trajectory(g1, np.zeros((3, 4)))


def test_control_schedule_range():
    with pytest.raises(ValueError):
        ControlSchedule.constant(TimeGrid.from_step(1.0), (0.0, 1.5, 0.0))


def test_certificate_values(table1):
    traj = integrate_forward(table1, PUBLISHED_S0, TimeGrid.from_step(600.0))
    cert = bounds_certificate(table1, traj)
    assert cert.L == pytest.approx(0.018, rel=1e-12)
    assert cert.bound_XSI == pytest.approx(1.8, rel=1e-12)
    assert cert.bound_A == pytest.approx(2.0, rel=1e-12)
    assert cert.satisfied and not cert.tail_only


def test_certificate_at_E1(table1):
    traj = integrate_forward(table1, (1.0, 0.0, 0.0, 0.2), TimeGrid.from_step(50.0))
    cert = bounds_certificate(table1, traj)
    assert cert.satisfied and cert.sup_XSI == pytest.approx(1.0) and cert.sup_A == pytest.approx(0.2)


def test_certificate_tail_only_when_start_outside(table1):
    traj = integrate_forward(table1, (3.0, 0.0, 0.0, 3.0), TimeGrid.from_step(600.0))
    cert = bounds_certificate(table1, traj)
    assert cert.tail_only and cert.satisfied


def test_adjoint_terminal_value_is_zero(table1):
    grid = TimeGrid.from_step(60.0)
    u = ControlSchedule.constant(grid, (0.3, 0.2, 0.1))
    traj = integrate_forward(table1, PUBLISHED_S0, grid, u)
    lam = integrate_adjoint_backward(table1, traj, u, ObjectiveWeights())
    assert np.all(lam.final == 0.0)
    assert np.any(lam.values[0] != 0.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_adjoint_vanishes_without_state_cost(table1, backend):
    grid = TimeGrid.from_step(60.0)
    u = ControlSchedule.constant(grid, (0.0, 0.0, 0.0))
    traj = integrate_forward(table1, PUBLISHED_S0, grid, u)
    lam = integrate_adjoint_backward(table1, traj, u, (0.8, 0.5, 0.5, 0.0, 0.0), backend=backend)
    assert np.all(lam.values == 0.0)


@settings(max_examples=25, deadline=None)
@given(params_strategy(), st.lists(st.floats(0.0, 1.5), min_size=4, max_size=4),
       st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3))
def test_trajectories_stay_nonnegative(p, s0, u):
    grid = TimeGrid.from_step(100.0, 0.1)
    traj = integrate_forward(p, s0, grid, ControlSchedule.constant(grid, u))
    assert traj.values.min() >= 0.0
    assert np.all(np.isfinite(traj.values))


def test_backend_env_flag():
    code = "from pestctl import _kernels; print(_kernels.BACKEND)"
    env = dict(os.environ, PESTCTL_BACKEND="numpy")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
    env["PESTCTL_BACKEND"] = "fortran"
    bad = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert bad.returncode != 0 and "PESTCTL_BACKEND" in bad.stderr
