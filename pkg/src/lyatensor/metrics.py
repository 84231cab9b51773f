"""Fibre metric constructors, including flow-pullback metrics."""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import ContractViolation, FibreMetric, VectorField
from .integrate import DEFAULT_CONFIG, IntegratorConfig, flow_hessian, flow_jacobian

# backward flows of dissipative systems escape to infinity; cap the work per evaluation
PULLBACK_CONFIG = IntegratorConfig(max_steps=100_000)


@dataclass(frozen=True)
class ScalarProfile:
    """Positive time profile ``h(t)`` with optional derivative."""

    h: Callable[[float], float]
    dh: Optional[Callable[[float], float]] = None
    name: str = "h"

    def __call__(self, t: float) -> float:
        v = float(self.h(t))
        if not (v > 0 and math.isfinite(v)):
            raise ContractViolation(f"profile {self.name} is not positive at t={t} (h={v})")
        return v

    def derivative(self, t: float) -> float:
        if self.dh is not None:
            return float(self.dh(t))
        step = np.cbrt(np.finfo(float).eps) * max(1.0, abs(t))
        return (self(t + step) - self(t - step)) / (2 * step)


def constant_profile(c: float = 1.0) -> ScalarProfile:
    return ScalarProfile(lambda t: c, lambda t: 0.0, f"const({c})")


def exp_profile(rate: float, t_ref: float = 0.0) -> ScalarProfile:
    """``h(t) = exp(rate (t - t_ref))``."""
    return ScalarProfile(
        lambda t: math.exp(rate * (t - t_ref)),
        lambda t: rate * math.exp(rate * (t - t_ref)),
        f"exp({rate}*(t-{t_ref}))",
    )


# h = exp(2 lam t) gives distance exponent lam; h = exp(lam t) gives lam / 2
CONVENTIONS = {"target": 2.0, "raw": 1.0}


def exponent_profile(lam: float, t_ref: float = 0.0, convention: str = "target") -> ScalarProfile:
    """Profile for a prescribed Lyapunov spectrum.

    ``convention="target"`` uses ``exp(2 lam t)`` so that chord distances and
    Jacobi norms grow exactly like ``exp(lam t)``; ``"raw"`` uses ``exp(lam t)``.
    """
    try:
        factor = CONVENTIONS[convention]
    except KeyError:
        raise ContractViolation(f"unknown convention {convention!r}") from None
    base = exp_profile(factor * lam, t_ref)
    label = "exp(2*lambda*t)" if factor == 2.0 else "exp(lambda*t)"
    return ScalarProfile(base.h, base.dh, f"{label}[lambda={lam}]")


def euclidean(dim: int) -> FibreMetric:
    if dim < 1:
        raise ContractViolation("euclidean: dim must be >= 1")
    eye = np.eye(dim)
    zero2 = np.zeros((dim, dim))
    zero3 = np.zeros((dim, dim, dim))
    return FibreMetric(dim, lambda t, y: eye, lambda t, y: zero2, lambda t, y: zero3, "euclidean")


def constant(G, name: str = "constant") -> FibreMetric:
    G = np.array(G, dtype=float)
    n = G.shape[0]
    return FibreMetric(n, lambda t, y: G, lambda t, y: np.zeros((n, n)),
                       lambda t, y: np.zeros((n, n, n)), name)


def scaled(profile: ScalarProfile, base: FibreMetric) -> FibreMetric:
    """``g(t, y) = h(t) base(t, y)`` with product-rule derivatives."""

    def ev(t, y):
        return profile(t) * base(t, y)

    def dt(t, y):
        return profile.derivative(t) * base(t, y) + profile(t) * base.d_t(t, y)

    dy = None
    if base.has_analytic_dy:
        def dy(t, y):
            return profile(t) * base.d_y(t, y)

    return FibreMetric(base.dim, ev, dt if (profile.dh is not None and base.has_analytic_dt) else None,
                       dy, f"{profile.name}*{base.name}", base.fd_scale)


def quadratic_warp(dim: int, eps: float = 0.1, profile: Optional[ScalarProfile] = None) -> FibreMetric:
    """``g(t, y) = h(t) (I + eps y y^T)``: anisotropic, state- and time-dependent."""
    if eps < 0:
        raise ContractViolation("quadratic_warp: eps must be non-negative")
    profile = profile or ScalarProfile(lambda t: 1.5 + math.sin(t), lambda t: math.cos(t), "1.5+sin(t)")
    eye = np.eye(dim)

    def core(y):
        y = np.asarray(y, dtype=float)
        return eye + eps * np.outer(y, y)

    def dcore(y):
        y = np.asarray(y, dtype=float)
        d = np.zeros((dim, dim, dim))
        for lam in range(dim):
            d[lam, lam, :] += eps * y
            d[lam, :, lam] += eps * y
        return d

    return FibreMetric(
        dim,
        lambda t, y: profile(t) * core(y),
        lambda t, y: profile.derivative(t) * core(y),
        lambda t, y: profile(t) * dcore(y),
        f"warp({eps})*{profile.name}",
    )


class FlowCache:
    """Memo of backward flow computations keyed by the exact ``(t, y)`` bits.

    ``get`` returns ``(y0, J)``; ``get_second`` also returns the flow's second
    derivatives. Thread-safe; a value is a pure function of its key, so
    lookups never change results.
    """

    def __init__(self, vf: VectorField, t_ref: float, cfg: IntegratorConfig, max_entries: int = 200_000):
        self.vf = vf
        self.t_ref = float(t_ref)
        self.cfg = cfg
        self.max_entries = max_entries
        self._first: dict = {}
        self._second: dict = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def _key(t, y):
        return float(t), np.ascontiguousarray(y, dtype=float).tobytes()

    def _store(self, table, key, value):
        with self._lock:
            self.misses += 1
            if len(table) >= self.max_entries:
                table.clear()
            table[key] = value

    def get(self, t: float, y):
        key = self._key(t, y)
        with self._lock:
            hit = self._first.get(key)
            if hit is not None:
                self.hits += 1
                return hit
        value = flow_jacobian(self.vf, float(t), np.asarray(y, dtype=float), self.t_ref, self.cfg)
        self._store(self._first, key, value)
        return value

    def get_second(self, t: float, y):
        key = self._key(t, y)
        with self._lock:
            hit = self._second.get(key)
            if hit is not None:
                self.hits += 1
                return hit
        value = flow_hessian(self.vf, float(t), np.asarray(y, dtype=float), self.t_ref, self.cfg)
        self._store(self._second, key, value)
        return value


@dataclass(frozen=True)
class PullbackMetric(FibreMetric):
    """``g(t, y) = h(t) J^T g0(y0) J`` with ``(y0, J)`` the flow map to ``t_ref`` and its Jacobian."""

    vf: Optional[VectorField] = None
    g0: Optional[FibreMetric] = None
    t_ref: float = 0.0
    profile: Optional[ScalarProfile] = None
    cfg: IntegratorConfig = DEFAULT_CONFIG
    flow_cache: Optional[FlowCache] = field(default=None, compare=False, repr=False)

    derivative_kind = "variational"


def _pullback_pieces(vf, g0, t_ref, cache, t, y):
    """Core ``J^T G0 J`` with its exact time and state derivatives.

    The backward flow ``Phi`` satisfies ``d_t Phi = -J gamma``, so
    ``d_t J = -H gamma - J Jac``; everything follows from ``(Phi, J, H)``.
    """
    y0, J, H = cache.get_second(t, y)
    G0 = g0(t_ref, y0)
    dG0 = g0.d_y(t_ref, y0)  # [k, i, j]
    core = J.T @ G0 @ J

    # d_c core_ab = H_iac G0_ij J_jb + J_ia G0_ij H_jbc + J_ia dG0_kij J_kc J_jb
    A = np.einsum("iac,ij,jb->cab", H, G0, J)
    dcore = A + A.transpose(0, 2, 1) + np.einsum("ia,kij,kc,jb->cab", J, dG0, J, J)

    gamma = vf(t, y)
    dPhi = -J @ gamma
    dJ = -np.einsum("iba,b->ia", H, gamma) - J @ vf.jacobian(t, y)
    B = dJ.T @ G0 @ J
    dtcore = B + B.T + J.T @ np.tensordot(dPhi, dG0, axes=1) @ J
    return core, dtcore, dcore


def flow_pullback(vf: VectorField, g0: FibreMetric, t_ref: float = 0.0,
                  profile: Optional[ScalarProfile] = None,
                  cfg: IntegratorConfig = PULLBACK_CONFIG) -> PullbackMetric:
    """Transport the reference-fibre metric ``g0(t_ref, .)`` along the flow.

    With ``h = 1`` the covariant Lyapunov tensor of ``(vf, g)`` vanishes;
    with :func:`exponent_profile` every metric Lyapunov exponent equals the
    prescribed value. Evaluating where the flow back to ``t_ref`` blows up
    raises :class:`~lyatensor.core.BlowUpError`. Derivatives come from the
    second-order variation equation, which uses ``vf.hessian``.
    """
    if vf.dim != g0.dim:
        raise ContractViolation("flow_pullback: dimension mismatch")
    profile = profile or constant_profile(1.0)
    cache = FlowCache(vf, t_ref, cfg)

    def ev(t, y):
        y0, J = cache.get(t, y)
        return profile(t) * (J.T @ g0(t_ref, y0) @ J)

    def dt(t, y):
        core, dtcore, _ = _pullback_pieces(vf, g0, t_ref, cache, t, y)
        return profile.derivative(t) * core + profile(t) * dtcore

    def dy(t, y):
        return profile(t) * _pullback_pieces(vf, g0, t_ref, cache, t, y)[2]

    return PullbackMetric(
        vf.dim, ev, dt, dy, f"pullback[{vf.name}, t_ref={t_ref}, {profile.name}]",
        g0.fd_scale, True, vf, g0, float(t_ref), profile, cfg, cache,
    )
