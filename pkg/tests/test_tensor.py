import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from lyatensor.core import ContractViolation, FibreMetric, RangeError, classify
from lyatensor.integrate import integrate_with_variation
from lyatensor.metrics import constant, euclidean, exp_profile, quadratic_warp, scaled, ScalarProfile
from lyatensor.systems import REGISTRY, linear, lorenz, scalar, zero_field
from lyatensor.tensor import (
    FibreChart,
    covariant_lyapunov_tensor,
    galilean_chart,
    identity_chart,
    linear_chart,
    lyapunov_matrix,
    push_through_chart,
    shear_chart,
    standard_charts,
    tensor_matrix,
    tensoriality_defects,
    variation_identity_relative,
    variation_identity_residual,
    variation_identity_sides,
)

LORENZ_JAC_111 = np.array([[-10.0, 10.0, 0.0], [27.0, -1.0, -1.0], [1.0, 1.0, -8.0 / 3.0]])
A = np.array([[-0.5, 2.0], [-1.0, 0.3]])


def test_lyapunov_matrix_examples():
    assert np.array_equal(lyapunov_matrix(scalar(-1.0), 0.0, [2.0]), [[-1.0]])
    assert np.array_equal(lyapunov_matrix(linear(A), 0.0, [1.0, 2.0]), A.T)
    assert np.allclose(lyapunov_matrix(lorenz(), 0.0, np.ones(3)), LORENZ_JAC_111.T, atol=1e-15)


def test_euclidean_reduction_linear():
    ev = covariant_lyapunov_tensor(linear(A), euclidean(2), 0.0, [0.3, -0.2])
    assert np.allclose(ev.m, A + A.T, atol=1e-15)


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_euclidean_reduction_builtins(name):
    entry = REGISTRY[name]
    vf = entry.build()
    for y in entry.sample_box(np.random.default_rng(3), 5):
        l = lyapunov_matrix(vf, 0.4, y)
        L = covariant_lyapunov_tensor(vf, euclidean(vf.dim), 0.4, y).m
        assert np.max(np.abs(L - (l + l.T))) <= 1e-12 * max(1.0, np.max(np.abs(l)))
        assert np.array_equal(L, L.T)


def test_zero_field_exponential_metric():
    for t in (0.0, 0.7):
        ev = covariant_lyapunov_tensor(zero_field(2), scaled(exp_profile(2.0), euclidean(2)), t, [1.0, 1.0])
        assert np.allclose(ev.m, 2 * math.exp(2 * t) * np.eye(2), rtol=1e-14)
        assert ev.definiteness == "positive_definite"


def test_zero_field_static_metric_gives_zero():
    ev = covariant_lyapunov_tensor(zero_field(2), constant([[2.0, 0.5], [0.5, 1.0]]), 3.0, [1.0, -1.0])
    assert np.array_equal(ev.m, np.zeros((2, 2)))
    assert ev.definiteness == "zero"


def test_decay_unit_metric():
    ev = covariant_lyapunov_tensor(scalar(-1.0), euclidean(1), 0.0, [5.0])
    assert ev.m[0, 0] == -2.0
    assert ev.definiteness == "negative_definite"
    assert ev.provenance.as_dict() == {"jacobian": "analytic", "metric_dt": "analytic", "metric_dy": "analytic"}


def test_provenance_records_fd():
    ev = covariant_lyapunov_tensor(lorenz().without_jacobian(), quadratic_warp(3).without_derivatives(), 0.0, np.ones(3))
    assert set(ev.provenance.as_dict().values()) == {"finite_difference"}


def test_rejects_indefinite_metric():
    g = FibreMetric(1, lambda t, y: np.array([[-1.0]]))
    with pytest.raises(ContractViolation):
        covariant_lyapunov_tensor(scalar(), g, 0.0, [1.0])


def test_identity_residual_static_zero_field():
    g = constant([[2.0, 0.3], [0.3, 1.0]])
    traj, frame = integrate_with_variation(zero_field(2), 0.0, [1.0, 2.0], np.eye(2), 2.0)
    assert variation_identity_residual(zero_field(2), g, traj, frame, [0.4, -1.2], 1.0) < 1e-10


def test_identity_residual_linear_euclidean():
    vf = linear(A)
    traj, frame = integrate_with_variation(vf, 0.0, [1.0, 0.0], np.eye(2), 3.0)
    for t in (0.5, 1.5, 2.5):
        assert variation_identity_residual(vf, euclidean(2), traj, frame, [0.3, 0.8], t) < 1e-8


def test_identity_lorenz_sinusoidal_metric():
    vf = lorenz()
    h = ScalarProfile(lambda t: 1.0 + 0.1 * math.sin(t), lambda t: 0.1 * math.cos(t), "1+0.1sin")
    g = scaled(h, euclidean(3))
    traj, frame = integrate_with_variation(vf, 0.0, [1.0, 1.0, 1.0], np.eye(3), 0.5)
    rng = np.random.default_rng(4)
    for t in (0.1, 0.3, 0.45):
        v0 = rng.standard_normal(3)
        lhs, rhs = variation_identity_sides(vf, g, traj, frame, v0, t)
        assert abs(lhs - rhs) < 1e-5 * abs(rhs)


def test_identity_range_error():
    traj, frame = integrate_with_variation(scalar(), 0.0, [1.0], np.eye(1), 1.0)
    with pytest.raises(RangeError):
        variation_identity_residual(scalar(), euclidean(1), traj, frame, [1.0], 1.0)


def test_identity_relative_with_fd_providers():
    entry = REGISTRY["vanderpol"]
    vf = entry.build().without_jacobian()
    g = quadratic_warp(2).without_derivatives()
    traj, frame = integrate_with_variation(vf, 0.0, entry.y0, np.eye(2), 5.0)
    for t in (1.0, 2.5, 4.0):
        assert variation_identity_relative(vf, g, traj, frame, [1.0, -0.5], t) < 1e-3


def test_identity_chart_is_neutral():
    vf, g = lorenz(), quadratic_warp(3)
    vf2, g2 = push_through_chart(vf, g, identity_chart(3))
    y = np.array([1.0, -2.0, 20.0])
    assert np.allclose(vf2(0.3, y), vf(0.3, y), rtol=1e-15)
    assert np.allclose(g2(0.3, y), g(0.3, y), rtol=1e-15)


def test_doubling_chart_quarters_tensor():
    vf, g = REGISTRY["damped_oscillator"].build(), quadratic_warp(2)
    y = np.array([0.4, -0.9])
    vf2, g2 = push_through_chart(vf, g, linear_chart(2 * np.eye(2)))
    L = tensor_matrix(vf, g, 0.6, y)
    L2 = tensor_matrix(vf2, g2, 0.6, 2 * y)
    assert np.allclose(L2, L / 4, rtol=1e-6, atol=1e-8)


def test_galilean_chart_on_decay():
    vf = scalar(-1.0)
    chart = galilean_chart([0.7])
    d = tensoriality_defects(vf, euclidean(1), chart, 1.3, [0.5])
    assert d["tensor_defect"] < 1e-6
    # a pure translation has unit Jacobian, so the Lyapunov matrix survives it too
    assert d["lyapunov_defect"] < 1e-8


def test_dilation_breaks_lyapunov_matrix():
    d = tensoriality_defects(linear(A), euclidean(2), standard_charts(2)[1], 0.5, [1.0, 1.0])
    assert d["tensor_defect"] < 1e-6
    assert d["lyapunov_defect"] > 1e-2


@pytest.mark.parametrize("name", ["linear2d", "damped_oscillator", "vanderpol", "lorenz"])
def test_tensoriality_suite(name):
    entry = REGISTRY[name]
    vf = entry.build()
    metrics = [euclidean(vf.dim), scaled(exp_profile(0.4), euclidean(vf.dim)), quadratic_warp(vf.dim)]
    rng = np.random.default_rng(9)
    lyap = 0.0
    for g in metrics:
        for chart in standard_charts(vf.dim):
            for y in entry.sample_box(rng, 2):
                d = tensoriality_defects(vf, g, chart, float(rng.uniform(0, 2)), y)
                assert d["tensor_defect"] < 1e-6, (g.name, chart.name)
                lyap = max(lyap, d["lyapunov_defect"])
    assert lyap > 1e-2


def test_singular_chart_rejected():
    chart = FibreChart(lambda t, y: y, lambda t, y: y, lambda t, y: np.zeros((2, 2)), name="flat")
    with pytest.raises(ContractViolation):
        tensoriality_defects(linear(A), euclidean(2), chart, 0.0, [1.0, 1.0])


def test_shear_chart_roundtrip():
    chart = shear_chart(3)
    y = np.array([0.3, -1.2, 2.0])
    chart.check(0.8, y)
    assert np.allclose(chart.inverse(0.8, chart.forward(0.8, y)), y, atol=1e-14)


small = arrays(np.float64, (3, 3), elements=st.floats(-5, 5, allow_nan=False)).map(lambda a: a + a.T)


@settings(max_examples=60, deadline=None)
@given(small)
def test_margin_shift_keeps_negative_definite(m):
    ev = covariant_lyapunov_tensor(linear(m / 2 - 6.0 * np.eye(3)), euclidean(3), 0.0, np.zeros(3))
    if ev.definiteness == "negative_definite" and ev.eigen_max < -2 * ev.margin:
        shifted = ev.m + ev.margin / 2 * np.eye(3)
        lo, hi = np.linalg.eigvalsh(shifted)[[0, -1]]
        assert classify(lo, hi, ev.margin) == "negative_definite"


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (2,), elements=st.floats(-3, 3)), st.floats(0.0, 3.0))
def test_tensor_symmetric(y, t):
    L = tensor_matrix(REGISTRY["vanderpol"].build(), quadratic_warp(2), t, y)
    assert np.array_equal(L, L.T)
