"""Adaptive Dormand-Prince integration of trajectories and variation equations."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import EPS, BlowUpError, ContractViolation, RangeError, VectorField


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-11
    max_step: float = math.inf
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ContractViolation("IntegratorConfig: tolerances must be strictly positive")
        if not self.max_step > 0:
            raise ContractViolation("IntegratorConfig: max_step must be positive")
        if int(self.max_steps) < 1:
            raise ContractViolation("IntegratorConfig: max_steps must be positive")

    def as_dict(self) -> dict:
        return {
            "rel_tol": self.rel_tol,
            "abs_tol": self.abs_tol,
            "max_step": None if math.isinf(self.max_step) else self.max_step,
            "max_steps": int(self.max_steps),
        }


DEFAULT_CONFIG = IntegratorConfig()

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array(_A[6] + [0.0])
_E = np.array([
    71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40,
])

_SAFETY = 0.9
_FAC_MIN = 0.2
_FAC_MAX = 10.0
_BETA = 0.04
_EXPO = 0.2 - 0.75 * _BETA


def _finite_or_none(f: Callable, t, x):
    try:
        v = np.asarray(f(t, x), dtype=float)
    except (FloatingPointError, OverflowError, ArithmeticError):
        return None
    if not np.all(np.isfinite(v)):
        return None
    return v


def _initial_step(rhs, t0, x0, f0, direction, cfg):
    sk = cfg.abs_tol + cfg.rel_tol * np.abs(x0)
    d0 = np.sqrt(np.mean((x0 / sk) ** 2))
    d1 = np.sqrt(np.mean((f0 / sk) ** 2))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, cfg.max_step)
    x1 = x0 + direction * h0 * f0
    f1 = _finite_or_none(rhs, t0 + direction * h0, x1)
    if f1 is None:
        return h0 * 1e-3
    d2 = np.sqrt(np.mean(((f1 - f0) / sk) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, cfg.max_step)


def dopri(rhs: Callable, t0: float, x0, t1: float, cfg: IntegratorConfig = DEFAULT_CONFIG,
          store: bool = True):
    """Integrate ``x' = rhs(t, x)`` from ``t0`` to ``t1``.

    Returns ``(times, states, derivs)`` lists in integration order; with
    ``store=False`` only the endpoint is kept. Raises :class:`BlowUpError` on
    step-size underflow or when ``max_steps`` is exhausted.
    """
    x = np.array(x0, dtype=float)
    t = float(t0)
    t1 = float(t1)
    f = _finite_or_none(rhs, t, x)
    if f is None:
        raise BlowUpError("non-finite right-hand side at the initial point", t, x)
    times, states, derivs = [t], [x], [f]
    if t1 == t:
        return times, states, derivs
    direction = 1.0 if t1 > t else -1.0
    h = _initial_step(rhs, t, x, f, direction, cfg)
    err_old = 1e-4
    rejected = False
    steps = 0
    while True:
        if steps >= cfg.max_steps:
            raise BlowUpError(f"max_steps={cfg.max_steps} exceeded", t, x)
        remaining = abs(t1 - t)
        min_h = 16 * EPS * max(abs(t), abs(t1), 1e-300)
        if h < min_h:
            raise BlowUpError(f"step size underflow at t={t!r}", t, x)
        h = min(h, cfg.max_step)
        last = h >= remaining * (1 - 1e-12)
        if last:
            h = remaining
        hs = direction * h
        k = [f]
        ok = True
        for i in range(1, 7):
            xi = x.copy()
            for j, a in enumerate(_A[i]):
                if a != 0.0:
                    xi += (hs * a) * k[j]
            ti = t1 if (last and i >= 5) else t + _C[i] * hs
            ki = _finite_or_none(rhs, ti, xi)
            if ki is None:
                ok = False
                break
            k.append(ki)
        steps += 1
        if not ok:
            h *= _FAC_MIN
            rejected = True
            last = False
            continue
        x_new = x + hs * sum(b * ki for b, ki in zip(_B, k) if b != 0.0)
        err_vec = hs * sum(e * ki for e, ki in zip(_E, k) if e != 0.0)
        sk = np.maximum(cfg.abs_tol, cfg.rel_tol * np.maximum(np.abs(x), np.abs(x_new)))
        err = math.sqrt(float(np.mean((err_vec / sk) ** 2)))
        if not math.isfinite(err) or not np.all(np.isfinite(x_new)):
            h *= _FAC_MIN
            rejected = True
            continue
        if err <= 1.0:
            t = t1 if last else t + hs
            x = x_new
            f = k[6]
            if store:
                times.append(t)
                states.append(x)
                derivs.append(f)
            if last:
                break
            err = max(err, 1e-10)
            fac = _SAFETY * err ** (-_EXPO) * err_old ** _BETA
            fac = min(_FAC_MAX, max(_FAC_MIN, fac))
            if rejected:
                fac = min(fac, 1.0)
            h = h * fac
            err_old = err
            rejected = False
        else:
            fac = max(_FAC_MIN, _SAFETY * err ** (-_EXPO))
            h = h * fac
            rejected = True
    if not store:
        times, states, derivs = [t], [x], [f]
    return times, states, derivs


def _hermite(t, ta, tb, ya, yb, fa, fb):
    h = tb - ta
    s = (t - ta) / h
    s2 = s * s
    s3 = s2 * s
    return ((2 * s3 - 3 * s2 + 1) * ya + (s3 - 2 * s2 + s) * h * fa
            + (-2 * s3 + 3 * s2) * yb + (s3 - s2) * h * fb)


def _hermite_derivative(t, ta, tb, ya, yb, fa, fb):
    h = tb - ta
    s = (t - ta) / h
    s2 = s * s
    return ((6 * s2 - 6 * s) * (ya - yb) / h + (3 * s2 - 4 * s + 1) * fa
            + (3 * s2 - 2 * s) * fb)


class _Dense:
    """Knots sorted by increasing time with cubic Hermite interpolation."""

    def __init__(self, times, states, derivs):
        times = np.asarray(times, dtype=float)
        states = np.asarray(states, dtype=float)
        derivs = np.asarray(derivs, dtype=float)
        if times.size > 1 and times[-1] < times[0]:
            times, states, derivs = times[::-1], states[::-1], derivs[::-1]
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ContractViolation("knot times must be strictly monotone")
        self.times = times
        self.states = states
        self.derivs = derivs
        self.times.setflags(write=False)
        self.states.setflags(write=False)
        self.derivs.setflags(write=False)

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    def _locate(self, t: float) -> int:
        if not (self.t0 <= t <= self.t1):
            raise RangeError(f"t={t} outside [{self.t0}, {self.t1}]")
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return min(max(i, 0), len(self.times) - 2)

    def _value(self, t: float) -> np.ndarray:
        t = float(t)
        if len(self.times) == 1:
            if t != self.t0:
                raise RangeError(f"t={t} outside single-knot domain {self.t0}")
            return self.states[0].copy()
        i = self._locate(t)
        if t == self.times[i]:
            return self.states[i].copy()
        if t == self.times[i + 1]:
            return self.states[i + 1].copy()
        return _hermite(t, self.times[i], self.times[i + 1], self.states[i],
                        self.states[i + 1], self.derivs[i], self.derivs[i + 1])

    def _rate(self, t: float) -> np.ndarray:
        t = float(t)
        if len(self.times) == 1:
            return self.derivs[0].copy()
        i = self._locate(t)
        if t == self.times[i]:
            return self.derivs[i].copy()
        if t == self.times[i + 1]:
            return self.derivs[i + 1].copy()
        return _hermite_derivative(t, self.times[i], self.times[i + 1], self.states[i],
                                   self.states[i + 1], self.derivs[i], self.derivs[i + 1])


class Trajectory(_Dense):
    """Densely sampled solution ``s(t)``; knots are stored in increasing time."""

    def __init__(self, times, states, derivs, direction: float = 1.0):
        super().__init__(times, states, derivs)
        self.direction = direction

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def __call__(self, t: float) -> np.ndarray:
        return self._value(t)

    def derivative(self, t: float) -> np.ndarray:
        return self._rate(t)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def start(self) -> np.ndarray:
        return (self.states[0] if self.direction > 0 else self.states[-1]).copy()

    @property
    def end(self) -> np.ndarray:
        return (self.states[-1] if self.direction > 0 else self.states[0]).copy()


class JacobiFrame(_Dense):
    """Matrix solution ``M(t)`` of the variation equation along ``base``.

    Columns are Jacobi fields; with ``M(t0) = I`` this is the flow Jacobian.
    """

    def __init__(self, base: Trajectory, times, matrices, derivs):
        matrices = np.asarray(matrices, dtype=float)
        derivs = np.asarray(derivs, dtype=float)
        dim = base.dim
        super().__init__(times, matrices.reshape(len(matrices), dim * dim),
                         derivs.reshape(len(derivs), dim * dim))
        self.base = base
        self._dim = dim

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def matrices(self) -> np.ndarray:
        return self.states.reshape(-1, self._dim, self._dim)

    def __call__(self, t: float) -> np.ndarray:
        return self._value(t).reshape(self._dim, self._dim)

    def derivative(self, t: float) -> np.ndarray:
        return self._rate(t).reshape(self._dim, self._dim)

    def field(self, t: float, v0) -> np.ndarray:
        """Jacobi field ``M(t) v0``."""
        return self(t) @ np.asarray(v0, dtype=float)


def _check_inputs(vf: VectorField, t0, y0, t1):
    y0 = np.asarray(y0, dtype=float).reshape(-1)
    if y0.size != vf.dim:
        raise ContractViolation(f"initial state has {y0.size} components, field has {vf.dim}")
    if not np.all(np.isfinite(y0)):
        raise ContractViolation("initial state must be finite")
    if not (math.isfinite(t0) and math.isfinite(t1)):
        raise ContractViolation("integration bounds must be finite")
    return y0


def integrate_trajectory(vf: VectorField, t0: float, y0, t1: float,
                         cfg: IntegratorConfig = DEFAULT_CONFIG) -> Trajectory:
    y0 = _check_inputs(vf, t0, y0, t1)
    if t1 == t0:
        raise ContractViolation("integrate_trajectory requires t1 != t0")
    times, states, derivs = dopri(vf, t0, y0, t1, cfg)
    return Trajectory(times, states, derivs, 1.0 if t1 > t0 else -1.0)


def variation_rhs(vf: VectorField, ncols: Optional[int] = None) -> Callable:
    """Right-hand side of the joint system ``(y, M)`` packed as a flat vector."""
    n = vf.dim
    m = n if ncols is None else ncols

    def rhs(t, x):
        y = x[:n]
        M = x[n:].reshape(n, m)
        out = np.empty_like(x)
        out[:n] = vf(t, y)
        out[n:] = (vf.jacobian(t, y) @ M).ravel()
        return out

    return rhs


def integrate_with_variation(vf: VectorField, t0: float, y0, M0, t1: float,
                             cfg: IntegratorConfig = DEFAULT_CONFIG):
    y0 = _check_inputs(vf, t0, y0, t1)
    n = vf.dim
    M0 = np.asarray(M0, dtype=float).reshape(n, -1)
    if M0.shape != (n, n):
        raise ContractViolation("M0 must be a dim x dim matrix")
    if not np.all(np.isfinite(M0)):
        raise ContractViolation("M0 must be finite")
    if t1 == t0:
        raise ContractViolation("integrate_with_variation requires t1 != t0")
    x0 = np.concatenate([y0, M0.ravel()])
    times, states, derivs = dopri(variation_rhs(vf), t0, x0, t1, cfg)
    states = np.asarray(states)
    derivs = np.asarray(derivs)
    # knot 0 must carry M0 exactly
    states[0, n:] = M0.ravel()
    direction = 1.0 if t1 > t0 else -1.0
    traj = Trajectory(times, states[:, :n], derivs[:, :n], direction)
    frame = JacobiFrame(traj, times, states[:, n:], derivs[:, n:])
    return traj, frame


def advance_with_variation(vf: VectorField, t0: float, y0, M0, t1: float,
                           cfg: IntegratorConfig = DEFAULT_CONFIG):
    """Endpoint ``(y(t1), M(t1))`` of the joint system without storing knots."""
    n = vf.dim
    y0 = np.asarray(y0, dtype=float).reshape(n)
    M0 = np.asarray(M0, dtype=float).reshape(n, -1)
    if t1 == t0:
        return y0.copy(), M0.copy()
    x0 = np.concatenate([y0, M0.ravel()])
    _, states, _ = dopri(variation_rhs(vf, M0.shape[1]), t0, x0, t1, cfg, store=False)
    x = states[-1]
    return x[:n].copy(), x[n:].reshape(n, M0.shape[1]).copy()


def advance(vf: VectorField, t0: float, y0, t1: float,
            cfg: IntegratorConfig = DEFAULT_CONFIG) -> np.ndarray:
    y0 = np.asarray(y0, dtype=float).reshape(vf.dim)
    if t1 == t0:
        return y0.copy()
    _, states, _ = dopri(vf, t0, y0, t1, cfg, store=False)
    return states[-1].copy()


def flow_jacobian(vf: VectorField, t_from: float, y, t_to: float,
                  cfg: IntegratorConfig = DEFAULT_CONFIG):
    """Flow image ``Phi_{t_from -> t_to}(y)`` and its Jacobian in ``y``."""
    y = _check_inputs(vf, t_from, y, t_to)
    if t_to == t_from:
        return y.copy(), np.eye(vf.dim)
    return advance_with_variation(vf, t_from, y, np.eye(vf.dim), t_to, cfg)


def second_variation_rhs(vf: VectorField) -> Callable:
    """Joint system ``(y, M, H)`` with ``H[a, b, c] = d^2 y_a / d y0_b d y0_c``."""
    n = vf.dim

    def rhs(t, x):
        y = x[:n]
        M = x[n:n + n * n].reshape(n, n)
        H = x[n + n * n:].reshape(n, n, n)
        jac = vf.jacobian(t, y)
        out = np.empty_like(x)
        out[:n] = vf(t, y)
        out[n:n + n * n] = (jac @ M).ravel()
        dH = np.einsum("ad,dbc->abc", jac, H) + np.einsum("ade,db,ec->abc", vf.hessian(t, y), M, M)
        out[n + n * n:] = dH.ravel()
        return out

    return rhs


def flow_hessian(vf: VectorField, t_from: float, y, t_to: float,
                 cfg: IntegratorConfig = DEFAULT_CONFIG):
    """Flow image, its Jacobian and its second derivatives in ``y``."""
    y = _check_inputs(vf, t_from, y, t_to)
    n = vf.dim
    if t_to == t_from:
        return y.copy(), np.eye(n), np.zeros((n, n, n))
    x0 = np.concatenate([y, np.eye(n).ravel(), np.zeros(n ** 3)])
    _, states, _ = dopri(second_variation_rhs(vf), t_from, x0, t_to, cfg, store=False)
    x = states[-1]
    return x[:n].copy(), x[n:n + n * n].reshape(n, n).copy(), x[n + n * n:].reshape(n, n, n).copy()
