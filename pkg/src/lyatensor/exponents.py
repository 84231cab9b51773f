"""Lyapunov exponents measured in a time-dependent fibre metric."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    BlowUpError,
    ContractViolation,
    DegenerateInputError,
    FibreMetric,
    NumericFailure,
    VectorField,
)
from .integrate import (
    DEFAULT_CONFIG,
    IntegratorConfig,
    advance,
    advance_with_variation,
    integrate_trajectory,
)
from .stability import chord_distance

TAIL_FRACTION = 0.2
MAX_FRAME_CONDITION = 1e12
MAX_RETRIES = 4


@dataclass
class ExponentEstimate:
    value: float
    horizon: float
    renorm_interval: float
    convergence_trace: list
    metric_tag: str
    upper: float = math.nan
    saturated: bool = False
    blown_up: bool = False
    method: str = ""
    states: list = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        return {
            "value": float(self.value),
            "upper": float(self.upper),
            "horizon": float(self.horizon),
            "renorm_interval": float(self.renorm_interval),
            "metric": self.metric_tag,
            "method": self.method,
            "saturated": bool(self.saturated),
            "blown_up": bool(self.blown_up),
        }


def tail_limsup(trace, t0: float, horizon: float, fraction: float = TAIL_FRACTION) -> float:
    """Largest running estimate over the last ``fraction`` of the horizon."""
    cut = t0 + (1.0 - fraction) * horizon
    tail = [v for t, v in trace if t >= cut - 1e-12]
    if not tail:
        tail = [trace[-1][1]]
    return float(max(tail))


def _checkpoints(t0: float, horizon: float, interval: float) -> list:
    if not (horizon > 0 and interval > 0):
        raise ContractViolation("horizon and interval must be positive")
    n = max(1, int(math.ceil(horizon / interval - 1e-9)))
    return [t0 + min(k * interval, horizon) for k in range(1, n + 1)]


def _estimate(trace, t0, horizon, interval, tag, method, states=(), **flags) -> ExponentEstimate:
    return ExponentEstimate(
        value=float(trace[-1][1]),
        horizon=float(horizon),
        renorm_interval=float(interval),
        convergence_trace=[(float(t), float(v)) for t, v in trace],
        metric_tag=tag,
        upper=tail_limsup(trace, t0, horizon),
        method=method,
        states=[np.array(x) for x in states],
        **flags,
    )


def two_trajectory_exponent(vf: VectorField, g: FibreMetric, t0: float, y0, y0p, horizon: float,
                            cfg: IntegratorConfig = DEFAULT_CONFIG, sample_interval: Optional[float] = None,
                            saturation_fraction: float = 0.01) -> ExponentEstimate:
    """Growth rate of the chord distance between two solutions.

    The running estimate at time ``t`` is ``ln(rho_t / rho_t0) / (t - t0)``.
    When the Euclidean separation exceeds ``saturation_fraction`` of the
    anchor's extent, the companion is pulled back along the separation
    vector and the growth accumulated so far is banked.
    """
    y = np.array(y0, dtype=float)
    yp = np.array(y0p, dtype=float)
    rho0 = chord_distance(g, t0, y, yp)
    if not rho0 > 0:
        raise DegenerateInputError("two_trajectory_exponent: coincident initial states")
    sep0 = float(np.linalg.norm(yp - y))
    interval = sample_interval or horizon / 200.0

    blown_up = False
    try:
        anchor = integrate_trajectory(vf, t0, y, t0 + horizon, cfg)
        extent = float(np.linalg.norm(np.ptp(anchor.states, axis=0)))
    except BlowUpError:
        extent = 0.0
    max_sep = saturation_fraction * max(extent, float(np.linalg.norm(y)), 1.0)

    banked = 0.0
    rho_ref = rho0
    saturated = False
    trace = []
    states = []
    t = t0
    for t_next in _checkpoints(t0, horizon, interval):
        try:
            y = advance(vf, t, y, t_next, cfg)
            yp = advance(vf, t, yp, t_next, cfg)
        except BlowUpError:
            blown_up = True
            break
        t = t_next
        rho = chord_distance(g, t, y, yp)
        trace.append((t, (banked + math.log(rho / rho_ref)) / (t - t0)))
        states.append(y)
        sep = float(np.linalg.norm(yp - y))
        if sep > max_sep:
            saturated = True
            banked += math.log(rho / rho_ref)
            yp = y + (yp - y) * (sep0 / sep)
            rho_ref = chord_distance(g, t, y, yp)
    if not trace:
        raise BlowUpError("two_trajectory_exponent: blow-up before the first checkpoint", t)
    return _estimate(trace, t0, trace[-1][0] - t0, interval, g.name, "two_trajectory", states,
                     saturated=saturated, blown_up=blown_up)


def jacobi_exponent(vf: VectorField, g: FibreMetric, t0: float, y0, v0, horizon: float,
                    renorm_interval: float, cfg: IntegratorConfig = DEFAULT_CONFIG) -> ExponentEstimate:
    """Growth rate of one Jacobi field in the g(t)-norm, renormalised periodically."""
    y = np.array(y0, dtype=float)
    v = np.array(v0, dtype=float)
    nrm = g.norm(t0, y, v)
    if not nrm > 0:
        raise ContractViolation("jacobi_exponent: v0 must be non-zero")
    v = v / nrm
    total = 0.0
    trace = []
    states = []
    t = t0
    blown_up = False
    for t_next in _checkpoints(t0, horizon, renorm_interval):
        try:
            y, V = advance_with_variation(vf, t, y, v[:, None], t_next, cfg)
        except BlowUpError:
            blown_up = True
            break
        t = t_next
        w = V[:, 0]
        growth = g.norm(t, y, w)
        total += math.log(growth)
        v = w / growth
        trace.append((t, total / (t - t0)))
        states.append(y)
    if not trace:
        raise BlowUpError("jacobi_exponent: blow-up before the first renormalisation", t)
    return _estimate(trace, t0, trace[-1][0] - t0, renorm_interval, g.name, "jacobi", states,
                     blown_up=blown_up)


def g_orthonormalize(W: np.ndarray, G: np.ndarray):
    """Modified Gram-Schmidt of the columns of ``W`` in the inner product ``G``.

    Returns ``(Q, r)`` with ``Q^T G Q = I`` and ``r`` the diagonal growth factors.
    """
    Q = np.array(W, dtype=float)
    n = Q.shape[1]
    r = np.empty(n)
    for i in range(n):
        w = Q[:, i]
        for j in range(i):
            q = Q[:, j]
            w = w - (q @ G @ w) * q
        r[i] = math.sqrt(float(w @ G @ w))
        Q[:, i] = w / r[i]
    return Q, r


def _frame_condition(W, G) -> float:
    C = np.linalg.cholesky(G)
    s = np.linalg.svd(C.T @ W, compute_uv=False)
    return float(s[0] / s[-1]) if s[-1] > 0 else math.inf


def _spectrum_run(vf, g, t0, y0, horizon, interval, cfg):
    y = np.array(y0, dtype=float)
    G = g(t0, y)
    V = np.linalg.inv(np.linalg.cholesky(G)).T
    n = vf.dim
    totals = np.zeros(n)
    traces = [[] for _ in range(n)]
    states = []
    t = t0
    blown_up = False
    for t_next in _checkpoints(t0, horizon, interval):
        try:
            y, W = advance_with_variation(vf, t, y, V, t_next, cfg)
        except BlowUpError:
            blown_up = True
            break
        t = t_next
        G = g(t, y)
        if _frame_condition(W, G) > MAX_FRAME_CONDITION:
            return None
        V, r = g_orthonormalize(W, G)
        totals += np.log(r)
        for i in range(n):
            traces[i].append((t, totals[i] / (t - t0)))
        states.append(y)
    if not traces[0]:
        raise BlowUpError("exponent_spectrum: blow-up before the first renormalisation", t)
    return traces, states, blown_up


def exponent_spectrum(vf: VectorField, g: FibreMetric, t0: float, y0, horizon: float,
                      renorm_interval: float, cfg: IntegratorConfig = DEFAULT_CONFIG) -> list:
    """Full spectrum from a frame re-orthonormalised in the g(t)-inner product.

    If the evolved frame becomes too ill-conditioned between renormalisations
    the interval is halved and the run restarted, up to four times.
    """
    interval = float(renorm_interval)
    for _ in range(MAX_RETRIES + 1):
        result = _spectrum_run(vf, g, t0, y0, horizon, interval, cfg)
        if result is not None:
            break
        interval *= 0.5
    else:
        raise NumericFailure("exponent_spectrum: frame degenerated after repeated interval halving")
    traces, states, blown_up = result
    span = traces[0][-1][0] - t0
    estimates = [
        _estimate(tr, t0, span, interval, g.name, "spectrum", states, blown_up=blown_up)
        for tr in traces
    ]
    return sorted(estimates, key=lambda e: -e.value)
