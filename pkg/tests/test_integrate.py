import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lyatensor.core import BlowUpError, ContractViolation, RangeError, VectorField
from lyatensor.integrate import (
    IntegratorConfig,
    advance,
    flow_hessian,
    flow_jacobian,
    integrate_trajectory,
    integrate_with_variation,
)
from lyatensor.systems import REGISTRY, linear, lorenz, scalar, vanderpol, zero_field

ROUND_TRIP = IntegratorConfig(rel_tol=1e-11, abs_tol=1e-13)


def fd_flow_jacobian(vf, t0, y0, t1, bump=1e-5):
    cfg = IntegratorConfig(rel_tol=1e-12, abs_tol=1e-14)
    y0 = np.asarray(y0, dtype=float)
    cols = []
    for j in range(y0.size):
        e = np.zeros_like(y0)
        e[j] = bump
        cols.append((advance(vf, t0, y0 + e, t1, cfg) - advance(vf, t0, y0 - e, t1, cfg)) / (2 * bump))
    return np.stack(cols, axis=1)


def test_exponential_decay():
    traj = integrate_trajectory(scalar(-1.0), 0.0, [1.0], 1.0)
    assert abs(traj.end[0] - 0.3678794) < 1e-7
    assert abs(traj.end[0] - math.exp(-1.0)) < 1e-9


def test_harmonic_period():
    vf = linear([[0.0, 1.0], [-1.0, 0.0]])
    y = advance(vf, 0.0, [1.0, 0.0], 2 * math.pi)
    assert np.max(np.abs(y - [1.0, 0.0])) < 1e-6


def test_backward_integration():
    traj = integrate_trajectory(scalar(-1.0), 1.0, [1.0], 0.0)
    assert traj.t0 == 0.0 and traj.t1 == 1.0
    assert abs(traj(0.0)[0] - math.e) < 1e-8


def test_blow_up_reports_time():
    vf = VectorField(1, lambda t, y: y ** 2, lambda t, y: np.array([[2 * y[0]]]))
    with pytest.raises(BlowUpError) as info:
        integrate_trajectory(vf, 0.0, [1.0], 2.0)
    assert abs(info.value.t_reached - 1.0) < 1e-3


def test_max_steps_is_blow_up():
    with pytest.raises(BlowUpError):
        integrate_trajectory(lorenz(), 0.0, [1.0, 1.0, 1.0], 10.0, IntegratorConfig(max_steps=10))


def test_config_validation():
    with pytest.raises(ContractViolation):
        IntegratorConfig(rel_tol=0.0)
    with pytest.raises(ContractViolation):
        IntegratorConfig(max_steps=0)


def test_trajectory_knots_and_range():
    traj = integrate_trajectory(vanderpol(), 0.0, [2.0, 0.0], 3.0)
    assert np.all(np.diff(traj.times) > 0)
    assert traj.times[0] == 0.0 and traj.times[-1] == 3.0
    for k in (0, len(traj) // 2, len(traj) - 1):
        assert np.array_equal(traj(traj.times[k]), traj.states[k])
    with pytest.raises(RangeError):
        traj(3.5)


def test_dense_output_accuracy():
    traj = integrate_trajectory(scalar(-1.0), 0.0, [1.0], 5.0)
    for t in np.linspace(0, 5, 37):
        assert abs(traj(t)[0] - math.exp(-t)) < 1e-6


def test_rotation_frame():
    vf = linear([[0.0, 1.0], [-1.0, 0.0]])
    traj, frame = integrate_with_variation(vf, 0.0, [1.0, 0.0], np.eye(2), 4.0)
    assert np.array_equal(frame(0.0), np.eye(2))
    for t in (0.5, 1.7, 4.0):
        c, s = math.cos(t), math.sin(t)
        assert np.max(np.abs(frame(t) - [[c, s], [-s, c]])) < 1e-7


def test_zero_field_frame_is_identity():
    traj, frame = integrate_with_variation(zero_field(3), 0.0, np.ones(3), np.eye(3), 2.0)
    for t in (0.0, 1.0, 2.0):
        assert np.array_equal(frame(t), np.eye(3))


def test_lorenz_frame_against_fd_flow_map():
    vf = lorenz()
    _, frame = integrate_with_variation(vf, 0.0, [1.0, 1.0, 1.0], np.eye(3), 1.0)
    oracle = fd_flow_jacobian(vf, 0.0, [1.0, 1.0, 1.0], 1.0)
    assert np.max(np.abs(frame(1.0) - oracle)) < 1e-4 * max(1.0, np.max(np.abs(oracle)))


def test_vanderpol_flow_jacobian_against_fd():
    vf = vanderpol()
    y1, J = flow_jacobian(vf, 0.0, [2.0, 0.0], 1.0)
    assert np.max(np.abs(J - fd_flow_jacobian(vf, 0.0, [2.0, 0.0], 1.0))) < 1e-4
    assert np.allclose(y1, advance(vf, 0.0, [2.0, 0.0], 1.0))


def test_flow_jacobian_scalar_closed_form():
    y1, J = flow_jacobian(scalar(2.0), 0.0, [0.7], 1.0)
    assert abs(y1[0] - 0.7 * math.e ** 2) < 1e-8
    assert abs(J[0, 0] - math.e ** 2) < 1e-8


def test_flow_jacobian_identity_case():
    y, J = flow_jacobian(lorenz(), 0.4, [1.0, 2.0, 3.0], 0.4)
    assert np.array_equal(y, [1.0, 2.0, 3.0])
    assert np.array_equal(J, np.eye(3))


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_round_trip(name):
    entry = REGISTRY[name]
    vf = entry.build()
    a, b = entry.window
    y1, J = flow_jacobian(vf, a, entry.y0, b, ROUND_TRIP)
    y0, K = flow_jacobian(vf, b, y1, a, ROUND_TRIP)
    assert np.max(np.abs(y0 - entry.y0)) < 1e-6
    assert np.linalg.norm(K @ J - np.eye(vf.dim)) < 1e-6


def test_lorenz_liouville():
    traj, frame = integrate_with_variation(lorenz(), 0.0, [1.0, 1.0, 1.0], np.eye(3), 0.5)
    for t in (0.1, 0.25, 0.5):
        expected = math.exp(-(10.0 + 1.0 + 8.0 / 3.0) * t)
        assert abs(np.linalg.det(frame(t)) / expected - 1.0) < 1e-4


def test_halving_rel_tol_halves_error():
    vf = scalar(-1.0)
    errors = []
    for rt in (1e-9, 5e-10):
        y = advance(vf, 0.0, [1.0], 1.0, IntegratorConfig(rel_tol=rt))
        errors.append(abs(y[0] - math.exp(-1.0)))
    assert errors[0] / errors[1] >= 2.0


def test_frame_residual_of_variation_equation():
    vf = vanderpol()
    traj, frame = integrate_with_variation(vf, 0.0, [2.0, 0.0], np.eye(2), 2.0)
    for k in range(1, len(traj) - 1, 7):
        t = traj.times[k]
        assert np.allclose(frame.derivative(t), vf.jacobian(t, traj(t)) @ frame(t), rtol=1e-12, atol=1e-12)
    # between knots the cubic Hermite interpolant limits the accuracy
    for t in (0.3, 1.1, 1.9):
        h = 1e-5
        dM = (frame(t + h) - frame(t - h)) / (2 * h)
        assert np.max(np.abs(dM - vf.jacobian(t, traj(t)) @ frame(t))) < 1e-3


def test_flow_hessian_against_fd_of_jacobian():
    vf = vanderpol()
    y = np.array([1.0, 0.5])
    _, _, H = flow_hessian(vf, 0.0, y, 1.0, ROUND_TRIP)
    bump = 1e-5
    for c in range(2):
        e = np.zeros(2)
        e[c] = bump
        dJ = (flow_jacobian(vf, 0.0, y + e, 1.0, ROUND_TRIP)[1] - flow_jacobian(vf, 0.0, y - e, 1.0, ROUND_TRIP)[1])
        assert np.max(np.abs(H[:, :, c] - dJ / (2 * bump))) < 1e-5


@settings(max_examples=25, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(0.1, 3.0), st.floats(-3.0, 3.0))
def test_linear_scalar_flow_property(a, t1, y0):
    y1, J = flow_jacobian(scalar(a), 0.0, [y0], t1)
    assert abs(J[0, 0] - math.exp(a * t1)) <= 1e-7 * math.exp(a * t1)
    assert abs(y1[0] - y0 * math.exp(a * t1)) <= 1e-7 * max(1.0, abs(y0) * math.exp(a * t1))
