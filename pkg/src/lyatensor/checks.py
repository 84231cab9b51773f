"""Built-in invariant suite run by ``lyatensor check``."""
from __future__ import annotations

import numpy as np

from .integrate import IntegratorConfig, flow_jacobian, integrate_with_variation

ROUND_TRIP_CONFIG = IntegratorConfig(rel_tol=1e-11, abs_tol=1e-13)
from .metrics import euclidean, flow_pullback, quadratic_warp
from .systems import REGISTRY
from .tensor import standard_charts, tensor_matrix, tensoriality_defects, variation_identity_relative


def _jacobian_check(entry, vf, rng):
    worst = 0.0
    for y in entry.sample_box(rng, 5):
        a = vf.jacobian(0.3, y)
        f = vf.fd_jacobian(0.3, y)
        worst = max(worst, float(np.max(np.abs(a - f)) / max(1.0, np.max(np.abs(a)))))
    return worst < 1e-6, worst


def _round_trip(entry, vf):
    a, b = entry.window
    y1, J = flow_jacobian(vf, a, entry.y0, b, ROUND_TRIP_CONFIG)
    _, K = flow_jacobian(vf, b, y1, a, ROUND_TRIP_CONFIG)
    err = float(np.linalg.norm(K @ J - np.eye(vf.dim)))
    return err < 1e-6, err


def _tensoriality(entry, vf, rng):
    worst = 0.0
    for g in (euclidean(vf.dim), quadratic_warp(vf.dim)):
        for y in entry.sample_box(rng, 2):
            for chart in standard_charts(vf.dim):
                worst = max(worst, tensoriality_defects(vf, g, chart, 0.7, y)["tensor_defect"])
    return worst < 1e-6, worst


def _identity(entry, vf, rng):
    a, b = entry.window
    g = quadratic_warp(vf.dim)
    traj, frame = integrate_with_variation(vf, a, entry.y0, np.eye(vf.dim), b)
    worst = 0.0
    for _ in range(5):
        t = float(rng.uniform(a + 1e-3, b - 1e-3))
        worst = max(worst, variation_identity_relative(vf, g, traj, frame, rng.standard_normal(vf.dim), t))
    return worst < 1e-5, worst


def _nullification(entry, vf):
    a, b = entry.window
    g = flow_pullback(vf, euclidean(vf.dim), a)
    traj, _ = integrate_with_variation(vf, a, entry.y0, np.eye(vf.dim), b)
    worst = 0.0
    for t in np.linspace(a, b, 4):
        y = traj(t)
        worst = max(worst, float(np.linalg.norm(tensor_matrix(vf, g, t, y)) / np.linalg.norm(g(t, y))))
    return worst < 1e-4, worst


def invariant_suite(seed: int = 0) -> list:
    """``[(name, passed, measured), ...]`` over every registered system."""
    rng = np.random.default_rng(seed)
    results = []
    for name, entry in REGISTRY.items():
        vf = entry.build()
        for label, fn in (
            ("jacobian_matches_fd", lambda: _jacobian_check(entry, vf, rng)),
            ("flow_round_trip", lambda: _round_trip(entry, vf)),
            ("tensoriality", lambda: _tensoriality(entry, vf, rng)),
            ("variation_identity", lambda: _identity(entry, vf, rng)),
            ("pullback_nullification", lambda: _nullification(entry, vf)),
        ):
            ok, value = fn()
            results.append((f"{name}.{label}", bool(ok), float(value)))
    return results
