"""Lyapunov matrix, covariant Lyapunov tensor and fibre coordinate changes."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import (
    ContractViolation,
    DerivativeProvenance,
    FibreMetric,
    RangeError,
    SymmetricForm,
    VectorField,
    fd_time_derivative,
)
from .integrate import IntegratorConfig, JacobiFrame, Trajectory, advance_with_variation

# neighbours of the identity probe are a few steps long; integrate them essentially exactly
_PROBE_CONFIG = IntegratorConfig(rel_tol=1e-13, abs_tol=1e-15)


@dataclass(frozen=True)
class TensorEvaluation(SymmetricForm):
    """Covariant Lyapunov tensor at one point, with derivative provenance."""

    provenance: Optional[DerivativeProvenance] = None
    t: float = 0.0
    y: Optional[np.ndarray] = None


def lyapunov_matrix(vf: VectorField, t: float, y) -> np.ndarray:
    """Matrix with entry ``(mu, lam) = d_mu gamma^lam`` (transpose of the Jacobian)."""
    return vf.jacobian(t, np.asarray(y, dtype=float)).T.copy()


def tensor_matrix(vf: VectorField, g: FibreMetric, t: float, y) -> np.ndarray:
    """Raw ``L_ab = d_t g_ab + gamma^l d_l g_ab + d_a gamma^l g_lb + d_b gamma^l g_al``."""
    y = np.asarray(y, dtype=float)
    G = g(t, y)
    jac = vf.jacobian(t, y)
    gamma = vf(t, y)
    L = g.d_t(t, y) + np.tensordot(gamma, g.d_y(t, y), axes=1) + jac.T @ G + G @ jac
    return 0.5 * (L + L.T)


def covariant_lyapunov_tensor(vf: VectorField, g: FibreMetric, t: float, y,
                              margin: Optional[float] = None) -> TensorEvaluation:
    if vf.dim != g.dim:
        raise ContractViolation("vector field and metric dimensions differ")
    y = np.asarray(y, dtype=float)
    base = SymmetricForm.from_matrix(tensor_matrix(vf, g, t, y), margin)
    return TensorEvaluation(
        base.m, base.eigen_min, base.eigen_max, base.definiteness, base.margin,
        DerivativeProvenance.of(vf, g), float(t), y.copy(),
    )


def variation_identity_sides(vf: VectorField, g: FibreMetric, traj: Trajectory,
                             frame: JacobiFrame, v0, t: float, dt_probe: float = 1e-5):
    """Both sides of ``L(s, s)(sbar, sbar) = d/dt g(sbar, sbar)`` at ``t``.

    The right-hand side is a central difference of the Jacobi quadratic
    form; its two neighbours are integrated from ``(s(t), sbar(t))`` so
    that interpolation error of the stored frame does not enter.
    """
    v0 = np.asarray(v0, dtype=float)
    if not (traj.t0 <= t - dt_probe and t + dt_probe <= traj.t1):
        raise RangeError(f"t={t} +- {dt_probe} not inside [{traj.t0}, {traj.t1}]")
    s = traj(t)
    sbar = frame(t) @ v0
    lhs = float(sbar @ tensor_matrix(vf, g, t, s) @ sbar)
    tp, tm = t + dt_probe, t - dt_probe
    q = []
    for tk in (tp, tm):
        sk, wk = advance_with_variation(vf, t, s, sbar[:, None], tk, _PROBE_CONFIG)
        wk = wk[:, 0]
        q.append(float(wk @ g(tk, sk) @ wk))
    rhs = (q[0] - q[1]) / (tp - tm)
    return lhs, rhs


def variation_identity_residual(vf: VectorField, g: FibreMetric, traj: Trajectory,
                                frame: JacobiFrame, v0, t: float, dt_probe: float = 1e-5) -> float:
    lhs, rhs = variation_identity_sides(vf, g, traj, frame, v0, t, dt_probe)
    return abs(lhs - rhs)


def term_scale(vf: VectorField, g: FibreMetric, t: float, y) -> float:
    """Size of the individual terms that add up to ``L`` (spectral norms)."""
    y = np.asarray(y, dtype=float)
    G = g(t, y)
    drift = np.tensordot(vf(t, y), g.d_y(t, y), axes=1)
    jg = vf.jacobian(t, y).T @ G
    return float(np.linalg.norm(g.d_t(t, y), 2) + np.linalg.norm(drift, 2) + 2 * np.linalg.norm(jg, 2))


def variation_identity_relative(vf: VectorField, g: FibreMetric, traj: Trajectory,
                                frame: JacobiFrame, v0, t: float, dt_probe: float = 1e-5) -> float:
    """Residual divided by ``|sbar|^2`` times :func:`term_scale`, so that it stays
    meaningful when ``L`` is close to zero by cancellation."""
    lhs, rhs = variation_identity_sides(vf, g, traj, frame, v0, t, dt_probe)
    sbar = frame(t) @ np.asarray(v0, dtype=float)
    scale = float(sbar @ sbar) * term_scale(vf, g, t, traj(t))
    return abs(lhs - rhs) / max(scale, abs(lhs), abs(rhs), 1e-300)


@dataclass(frozen=True)
class FibreChart:
    """Time-dependent change of fibre coordinates ``y' = forward(t, y)``.

    ``jacobian(t, y)`` has entry ``(a', a) = d y'^a' / d y^a``; ``dt(t, y)`` is
    ``d_t y'`` at fixed ``y`` and defaults to a central difference.
    """

    forward: Callable
    inverse: Callable
    jacobian: Callable
    dt: Optional[Callable] = None
    name: str = "chart"

    def time_rate(self, t: float, y) -> np.ndarray:
        if self.dt is not None:
            return np.asarray(self.dt(t, y), dtype=float)
        return fd_time_derivative(self.forward, t, y)

    def check(self, t: float, y, tol: float = 1e-8) -> None:
        y = np.asarray(y, dtype=float)
        back = np.asarray(self.inverse(t, self.forward(t, y)), dtype=float)
        if np.max(np.abs(back - y)) > tol * max(1.0, np.max(np.abs(y))):
            raise ContractViolation(f"{self.name}: inverse does not undo forward at t={t}")
        if np.linalg.cond(np.asarray(self.jacobian(t, y), dtype=float)) > 1e12:
            raise ContractViolation(f"{self.name}: singular chart Jacobian at t={t}")


def _chart_jacobian(chart: FibreChart, t, y):
    J = np.asarray(chart.jacobian(t, y), dtype=float)
    if not np.all(np.isfinite(J)) or np.linalg.cond(J) > 1e12:
        raise ContractViolation(f"{chart.name}: singular chart Jacobian at t={t}")
    return J


def push_through_chart(vf: VectorField, g: FibreMetric, chart: FibreChart):
    """Express ``(vf, g)`` in the coordinates of ``chart``.

    The new field is ``J gamma + d_t y'``; the new metric is
    ``J^-T g J^-1``. Neither carries analytic derivatives.
    """

    def new_field(t, yp):
        y = np.asarray(chart.inverse(t, yp), dtype=float)
        return _chart_jacobian(chart, t, y) @ vf(t, y) + chart.time_rate(t, y)

    def new_metric(t, yp):
        y = np.asarray(chart.inverse(t, yp), dtype=float)
        Jinv = np.linalg.inv(_chart_jacobian(chart, t, y))
        return Jinv.T @ g(t, y) @ Jinv

    vf2 = VectorField(vf.dim, new_field, None, f"{vf.name}@{chart.name}", vf.fd_scale)
    g2 = FibreMetric(g.dim, new_metric, None, None, f"{g.name}@{chart.name}", g.fd_scale)
    return vf2, g2


def tensoriality_defects(vf: VectorField, g: FibreMetric, chart: FibreChart, t: float, y) -> dict:
    """Compare both objects in the new chart against the two-index transformation laws.

    ``tensor_defect`` is relative to the norm of the transformed tensor;
    ``lyapunov_defect`` is relative to ``max(1, |l|)``.
    """
    y = np.asarray(y, dtype=float)
    yp = np.asarray(chart.forward(t, y), dtype=float)
    J = _chart_jacobian(chart, t, y)
    Jinv = np.linalg.inv(J)
    vf2, g2 = push_through_chart(vf, g, chart)

    L = tensor_matrix(vf, g, t, y)
    L_new = tensor_matrix(vf2, g2, t, yp)
    L_law = Jinv.T @ L @ Jinv
    scale = max(np.linalg.norm(L_law), np.linalg.norm(L_new), 1e-300)

    l = lyapunov_matrix(vf, t, y)
    l_new = lyapunov_matrix(vf2, t, yp)
    # entry (mu, lam): lower index mu, upper index lam
    l_law = Jinv.T @ l @ J.T
    return {
        "chart": chart.name,
        "tensor_defect": float(np.linalg.norm(L_new - L_law) / scale),
        "lyapunov_defect": float(np.linalg.norm(l_new - l_law) / max(1.0, np.linalg.norm(l_law))),
    }


def linear_chart(B, name: str = "linear") -> FibreChart:
    B = np.array(B, dtype=float)
    Binv = np.linalg.inv(B)
    return FibreChart(
        lambda t, y: B @ np.asarray(y, dtype=float),
        lambda t, yp: Binv @ np.asarray(yp, dtype=float),
        lambda t, y: B,
        lambda t, y: np.zeros(B.shape[0]),
        name,
    )


def identity_chart(dim: int) -> FibreChart:
    return linear_chart(np.eye(dim), "identity")


def galilean_chart(c) -> FibreChart:
    """``y' = y + c t``."""
    c = np.array(c, dtype=float)
    n = c.size
    return FibreChart(
        lambda t, y: np.asarray(y, dtype=float) + c * t,
        lambda t, yp: np.asarray(yp, dtype=float) - c * t,
        lambda t, y: np.eye(n),
        lambda t, y: c.copy(),
        "galilean",
    )


def dilation_chart(rates) -> FibreChart:
    """``y'_i = exp(r_i t) y_i``."""
    r = np.array(rates, dtype=float)
    return FibreChart(
        lambda t, y: np.exp(r * t) * np.asarray(y, dtype=float),
        lambda t, yp: np.exp(-r * t) * np.asarray(yp, dtype=float),
        lambda t, y: np.diag(np.exp(r * t)),
        lambda t, y: r * np.exp(r * t) * np.asarray(y, dtype=float),
        "dilation",
    )


def rotation_chart(dim: int, omega: float, plane=(0, 1)) -> FibreChart:
    """Rotation by angle ``omega t`` in one coordinate plane."""
    if dim < 2:
        raise ContractViolation("rotation chart needs dim >= 2")
    i, j = plane

    def R(t):
        c, s = np.cos(omega * t), np.sin(omega * t)
        m = np.eye(dim)
        m[i, i], m[i, j], m[j, i], m[j, j] = c, -s, s, c
        return m

    def Rdot(t):
        c, s = np.cos(omega * t), np.sin(omega * t)
        m = np.zeros((dim, dim))
        m[i, i], m[i, j], m[j, i], m[j, j] = -s, -c, c, -s
        return omega * m

    return FibreChart(
        lambda t, y: R(t) @ np.asarray(y, dtype=float),
        lambda t, yp: R(t).T @ np.asarray(yp, dtype=float),
        lambda t, y: R(t),
        lambda t, y: Rdot(t) @ np.asarray(y, dtype=float),
        "rotation",
    )


def shear_chart(dim: int, eps: float = 0.3, drift: float = 0.5) -> FibreChart:
    """Nonlinear triangular chart ``y'_i = y_i + eps sin(t) tanh(y_{i+1})``, last ``y'_n = y_n + drift t``."""

    def forward(t, y):
        y = np.asarray(y, dtype=float)
        out = y.copy()
        out[:-1] += eps * np.sin(t) * np.tanh(y[1:])
        out[-1] += drift * t
        return out

    def inverse(t, yp):
        yp = np.asarray(yp, dtype=float)
        y = np.empty_like(yp)
        y[-1] = yp[-1] - drift * t
        for k in range(dim - 2, -1, -1):
            y[k] = yp[k] - eps * np.sin(t) * np.tanh(y[k + 1])
        return y

    def jacobian(t, y):
        y = np.asarray(y, dtype=float)
        J = np.eye(dim)
        for k in range(dim - 1):
            J[k, k + 1] = eps * np.sin(t) / np.cosh(y[k + 1]) ** 2
        return J

    def dt(t, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros(dim)
        out[:-1] = eps * np.cos(t) * np.tanh(y[1:])
        out[-1] = drift
        return out

    if dim < 2:
        raise ContractViolation("shear chart needs dim >= 2")
    return FibreChart(forward, inverse, jacobian, dt, "shear")


def standard_charts(dim: int) -> list[FibreChart]:
    """Four time-dependent charts (two for ``dim == 1``)."""
    rates = 0.3 + 0.2 * np.arange(dim)
    charts = [galilean_chart(0.5 + 0.25 * np.arange(dim)), dilation_chart(rates)]
    if dim >= 2:
        charts += [rotation_chart(dim, 1.0), shear_chart(dim)]
    return charts
