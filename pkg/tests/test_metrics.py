import math

import numpy as np
import pytest

from lyatensor.core import BlowUpError, ContractViolation, VectorField
from lyatensor.integrate import integrate_trajectory, integrate_with_variation
from lyatensor.metrics import (
    ScalarProfile,
    constant,
    constant_profile,
    euclidean,
    exp_profile,
    exponent_profile,
    flow_pullback,
    quadratic_warp,
    scaled,
)
from lyatensor.systems import REGISTRY, linear, scalar, zero_field
from lyatensor.tensor import covariant_lyapunov_tensor, tensor_matrix


def test_euclidean():
    g = euclidean(2)
    y = np.array([3.0, -1.0])
    assert np.array_equal(g(4.2, y), np.eye(2))
    assert np.array_equal(g.d_t(4.2, y), np.zeros((2, 2)))
    assert np.array_equal(g.d_y(4.2, y), np.zeros((2, 2, 2)))
    with pytest.raises(ContractViolation):
        euclidean(0)


def test_scaled_unit_profile_is_base():
    base = quadratic_warp(2)
    g = scaled(constant_profile(1.0), base)
    y = np.array([0.2, 1.5])
    assert np.array_equal(g(0.9, y), base(0.9, y))


def test_scaled_exponential():
    g = scaled(exp_profile(2.0), euclidean(3))
    assert np.allclose(g(0.5, np.zeros(3)), math.e * np.eye(3), rtol=1e-15)
    assert np.allclose(g.d_t(0.5, np.zeros(3)), 2 * math.e * np.eye(3), rtol=1e-15)


def test_profile_must_be_positive():
    g = scaled(ScalarProfile(lambda t: math.cos(t), name="cos"), euclidean(1))
    with pytest.raises(ContractViolation):
        g(2.0, [0.0])


def test_exponent_profile_conventions():
    assert exponent_profile(0.5)(1.0) == pytest.approx(math.e)
    assert exponent_profile(0.5, convention="raw")(1.0) == pytest.approx(math.exp(0.5))
    assert "2*lambda" in exponent_profile(0.5).name
    with pytest.raises(ContractViolation):
        exponent_profile(0.5, convention="half")


def test_warp_derivatives_against_fd():
    g = quadratic_warp(3, 0.3)
    fd = g.without_derivatives()
    y = np.array([0.5, -1.0, 2.0])
    assert np.allclose(g.d_y(0.4, y), fd.d_y(0.4, y), atol=1e-8)
    assert np.allclose(g.d_t(0.4, y), fd.d_t(0.4, y), atol=1e-8)


@pytest.mark.parametrize("a", [-1.0, 0.5])
def test_scalar_pullback_closed_form(a):
    vf = scalar(a)
    g = flow_pullback(vf, euclidean(1))
    for t in (0.0, 0.8, 2.0):
        G = g(t, [1.3])
        assert G[0, 0] == pytest.approx(math.exp(-2 * a * t), rel=1e-9)
        ev = covariant_lyapunov_tensor(vf, g, t, [1.3])
        assert abs(ev.m[0, 0]) < 1e-9 * G[0, 0]


def test_zero_field_pullback_is_scaled_base():
    h = exp_profile(0.7)
    base = quadratic_warp(2, 0.2, constant_profile(1.0))
    g = flow_pullback(zero_field(2), base, 0.0, h)
    y = np.array([1.0, -0.5])
    assert np.allclose(g(1.1, y), h(1.1) * base(0.0, y), rtol=1e-14)


def test_pullback_provenance_and_derivatives():
    vf = REGISTRY["vanderpol"].build()
    g = flow_pullback(vf, euclidean(2))
    fd = g.without_derivatives()
    y = np.array([1.0, 0.5])
    assert np.allclose(g.d_y(0.5, y), fd.d_y(0.5, y), rtol=1e-5, atol=1e-6)
    assert np.allclose(g.d_t(0.5, y), fd.d_t(0.5, y), rtol=1e-5, atol=1e-6)
    ev = covariant_lyapunov_tensor(vf, g, 0.5, y)
    assert ev.provenance.metric_dy == "variational"


def test_linear_pullback_nullifies():
    vf = REGISTRY["linear2d"].build()
    g = flow_pullback(vf, euclidean(2))
    traj = integrate_trajectory(vf, 0.0, [1.0, 0.0], 10.0)
    for t in np.linspace(0.0, 10.0, 11):
        y = traj(t)
        assert np.linalg.norm(tensor_matrix(vf, g, t, y)) < 1e-6 * np.linalg.norm(g(t, y))


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_nullification_on_default_window(name):
    entry = REGISTRY[name]
    vf = entry.build()
    a, b = entry.window
    g = flow_pullback(vf, euclidean(vf.dim), a)
    rng = np.random.default_rng(21)
    traj = integrate_trajectory(vf, a, entry.y0, b)
    worst = 0.0
    # probes sit on the anchor: off it, reversed Van der Pol escapes to infinity before t_ref
    for t in rng.uniform(a, b, 10):
        y = traj(t)
        worst = max(worst, np.linalg.norm(tensor_matrix(vf, g, t, y)) / np.linalg.norm(g(t, y)))
    assert worst < 1e-4


@pytest.mark.parametrize("name", ["linear2d", "vanderpol"])
def test_scaling_law(name):
    entry = REGISTRY[name]
    vf = entry.build()
    h = exp_profile(0.6)
    g = flow_pullback(vf, euclidean(2), 0.0, h)
    traj = integrate_trajectory(vf, 0.0, entry.y0, 2.0)
    for t in (0.5, 1.0, 2.0):
        y = traj(t)
        G = g(t, y)
        L = tensor_matrix(vf, g, t, y)
        assert np.linalg.norm(L - 0.6 * G) < 1e-4 * np.linalg.norm(0.6 * G)


def test_jacobi_norm_is_conserved():
    entry = REGISTRY["vanderpol"]
    vf = entry.build()
    g = flow_pullback(vf, euclidean(2))
    traj, frame = integrate_with_variation(vf, 0.0, entry.y0, np.eye(2), 5.0)
    v0 = np.array([0.6, -0.8])
    q0 = v0 @ v0
    for t in np.linspace(0.0, 5.0, 11):
        w = frame(t) @ v0
        assert abs(w @ g(t, traj(t)) @ w / q0 - 1.0) < 1e-5


def test_pullback_blow_up_propagates():
    vf = VectorField(1, lambda t, y: -y ** 2, lambda t, y: np.array([[-2 * y[0]]]))
    # the solution through y(2) = 1 is 1 / (t - 1), which diverges before t_ref = 0
    g = flow_pullback(vf, euclidean(1))
    with pytest.raises(BlowUpError):
        g(2.0, [1.0])


def test_constant_metric_and_cache_hits():
    vf = REGISTRY["linear2d"].build()
    g = flow_pullback(vf, constant([[2.0, 0.0], [0.0, 0.5]]))
    y = np.array([0.1, 0.2])
    a = g(1.0, y)
    b = g(1.0, y)
    assert np.array_equal(a, b)
    assert g.flow_cache.hits >= 1
