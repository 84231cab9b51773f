"""Instantwise chord distances and isometric stability certificates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from ._parallel import pmap
from .core import (
    BlowUpError,
    ContractViolation,
    DegenerateInputError,
    FibreMetric,
    RangeError,
    VectorField,
)
from .integrate import DEFAULT_CONFIG, IntegratorConfig, Trajectory, integrate_trajectory
from .tensor import covariant_lyapunov_tensor, tensor_matrix

N_PERTURBED = 8


@lru_cache(maxsize=32)
def _gauss_legendre(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _chord_quadrature(form, t, y1, u, quad_order):
    tau, w = _gauss_legendre(int(quad_order))
    total = 0.0
    for tk, wk in zip(tau, w):
        total += wk * float(u @ form(t, y1 + tk * u) @ u)
    return total


def chord_distance(g: FibreMetric, t: float, y1, y2, quad_order: int = 8, pieces: int = 1) -> float:
    """Upper bound on the g(t)-distance from the straight chord ``y1 -> y2``.

    With ``pieces == 1`` this is ``sqrt(int_0^1 g(t, y1 + tau u)(u, u) dtau)``,
    ``u = y2 - y1``; more pieces sum the same bound over sub-chords and
    tighten it towards the chord length.
    """
    if quad_order < 1 or pieces < 1:
        raise ContractViolation("quad_order and pieces must be >= 1")
    y1 = np.asarray(y1, dtype=float)
    u = (np.asarray(y2, dtype=float) - y1) / pieces
    total = 0.0
    for k in range(pieces):
        F = _chord_quadrature(g, t, y1 + k * u, u, quad_order)
        if F < 0:
            raise ContractViolation("metric is not positive along the chord")
        total += math.sqrt(F)
    return total


def chord_distance_rate(vf: VectorField, g: FibreMetric, t: float, y1, y2, quad_order: int = 8) -> float:
    """Rate of the chord bound, with the covariant tensor along the chord as integrand.

    Returns ``int L(u, u) dtau / (2 rho)``; negative whenever ``L`` is
    negative-definite on the chord.
    """
    y1 = np.asarray(y1, dtype=float)
    u = np.asarray(y2, dtype=float) - y1
    F = _chord_quadrature(g, t, y1, u, quad_order)
    if F <= 0:
        raise DegenerateInputError("chord_distance_rate: coincident points")
    rate = _chord_quadrature(lambda s, z: tensor_matrix(vf, g, s, z), t, y1, u, quad_order)
    return rate / (2.0 * math.sqrt(F))


def _directions(dim: int, n: int, skip: int = 0) -> np.ndarray:
    """Deterministic low-discrepancy unit vectors."""
    if dim == 1:
        return np.array([[1.0 if (k + skip) % 2 == 0 else -1.0] for k in range(n)])
    halton = qmc.Halton(d=dim, scramble=False)
    halton.fast_forward(1 + skip)
    pts = halton.random(n)
    z = ndtri(np.clip(pts, 1e-12, 1 - 1e-12))
    norms = np.linalg.norm(z, axis=1)
    z[norms < 1e-12] = 1.0
    return z / np.linalg.norm(z, axis=1, keepdims=True)


_SHELLS = (1.0 / 3.0, 2.0 / 3.0, 1.0)


def tube_offsets(g: FibreMetric, t: float, center, radius: float, n: int, skip: int = 0,
                 shells=_SHELLS) -> np.ndarray:
    """Offsets ``delta`` with ``g(t, center)(delta, delta) = (shell * radius)^2``."""
    G = g(t, center)
    C = np.linalg.cholesky(G)
    dirs = _directions(G.shape[0], n, skip)
    out = []
    for k, d in enumerate(dirs):
        r = radius * shells[k % len(shells)]
        out.append(r * np.linalg.solve(C.T, d))
    return np.array(out)


@dataclass
class StabilityCertificate:
    kind: str
    window: tuple
    tube_radius: float
    samples_checked: int
    eigen_max: float
    witness: Optional[dict] = None
    neutral: bool = False
    pair_times: list = field(default_factory=list)
    pair_distances: list = field(default_factory=list)
    monotone_violations: int = 0
    terminal_ratios: list = field(default_factory=list)
    distance_variation: float = 0.0
    blowups: list = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return self.kind != "not_certified"

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "window": [float(self.window[0]), float(self.window[1])],
            "tube_radius": float(self.tube_radius),
            "samples_checked": int(self.samples_checked),
            "eigen_max": float(self.eigen_max),
            "witness": self.witness,
            "neutral": bool(self.neutral),
            "monotone_violations": int(self.monotone_violations),
            "terminal_ratios": [float(r) for r in self.terminal_ratios],
            "distance_variation": float(self.distance_variation),
            "blowups": self.blowups,
        }


def _scan_tube(vf, g, anchor, radius, times, n_space):
    jobs = []
    for i, t in enumerate(times):
        c = anchor(t)
        jobs.append((t, c))
        for d in tube_offsets(g, t, c, radius, n_space, skip=i * n_space):
            jobs.append((t, c + d))
    return pmap(lambda job: covariant_lyapunov_tensor(vf, g, job[0], job[1]), jobs)


def _perturbed_pairs(vf, g, anchor, radius, times, cfg):
    t_start, t_end = times[0], times[-1]
    start = anchor(t_start)
    offsets = tube_offsets(g, t_start, start, radius, N_PERTURBED)

    def run(delta):
        try:
            traj = integrate_trajectory(vf, t_start, start + delta, t_end, cfg)
        except BlowUpError as exc:
            return None, {"t_reached": exc.t_reached, "message": str(exc)}
        return [chord_distance(g, t, anchor(t), traj(t)) for t in times], None

    return pmap(run, offsets)


def _certify(vf, g, anchor, tube_radius, t_start, t_end, n_time, n_space, cfg, asymptotic):
    if tube_radius <= 0 or n_time < 2 or n_space < 1:
        raise ContractViolation("tube_radius must be > 0, n_time >= 2, n_space >= 1")
    if not (anchor.t0 <= t_start < t_end <= anchor.t1):
        raise RangeError(f"window [{t_start}, {t_end}] not inside anchor [{anchor.t0}, {anchor.t1}]")
    times = np.linspace(t_start, t_end, n_time)
    evals = _scan_tube(vf, g, anchor, tube_radius, times, n_space)
    worst = max(evals, key=lambda e: e.eigen_max)
    all_nd = all(e.is_negative_definite for e in evals)
    neutral = (not all_nd) and all(e.eigen_max <= e.margin for e in evals)

    cert = StabilityCertificate(
        kind="not_certified",
        window=(float(t_start), float(t_end)),
        tube_radius=float(tube_radius),
        samples_checked=len(evals),
        eigen_max=float(worst.eigen_max),
        neutral=neutral,
        pair_times=[float(t) for t in times],
    )
    if not all_nd:
        cert.witness = {
            "t": float(worst.t),
            "y": [float(v) for v in worst.y],
            "eigen_max": float(worst.eigen_max),
            "definiteness": worst.definiteness,
        }

    variation = 0.0
    for dists, failure in _perturbed_pairs(vf, g, anchor, tube_radius, times, cfg):
        if failure is not None:
            cert.blowups.append(failure)
            continue
        cert.pair_distances.append([float(d) for d in dists])
        cert.monotone_violations += int(np.sum(np.diff(dists) > 0))
        cert.terminal_ratios.append(float(dists[-1] / dists[0]) if dists[0] > 0 else math.nan)
        d = np.asarray(dists)
        if d[0] > 0:
            variation = max(variation, float(np.max(np.abs(d - d[0])) / d[0]))
    cert.distance_variation = variation
    if all_nd and not asymptotic:
        cert.kind = "local_isometric"
    elif all_nd and cert.terminal_ratios and all(r < 1.0 for r in cert.terminal_ratios):
        cert.kind = "asymptotic_isometric"
    return cert


def certify_local(vf: VectorField, g: FibreMetric, anchor: Trajectory, tube_radius: float,
                  window, n_time: int = 11, n_space: int = 8,
                  cfg: IntegratorConfig = DEFAULT_CONFIG) -> StabilityCertificate:
    """Check negative-definiteness of the tensor on a g-tube around ``anchor``.

    Also integrates 8 perturbed solutions from the start of the window and
    records how often their chord distance to the anchor increased.
    """
    t_start, t_end = window
    return _certify(vf, g, anchor, tube_radius, t_start, t_end, n_time, n_space, cfg, False)


def certify_asymptotic(vf: VectorField, g: FibreMetric, anchor: Trajectory, tube_radius: float,
                       t0: float, horizon: float, n_time: int = 21, n_space: int = 8,
                       cfg: IntegratorConfig = DEFAULT_CONFIG) -> StabilityCertificate:
    """Certificate over ``[t0, t0 + horizon]`` that also requires every perturbed
    distance to end below where it started."""
    return _certify(vf, g, anchor, tube_radius, t0, t0 + horizon, n_time, n_space, cfg, True)
