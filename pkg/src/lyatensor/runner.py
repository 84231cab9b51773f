"""Orchestrates one configured analysis and writes report.json and series.csv."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import RunConfig
from .core import (
    FD_FACTOR,
    SYMMETRY_TOL,
    ContractViolation,
    DerivativeProvenance,
    LyatensorError,
    NumericFailure,
    RangeError,
)
from .exponents import (
    MAX_FRAME_CONDITION,
    TAIL_FRACTION,
    exponent_spectrum,
    jacobi_exponent,
    two_trajectory_exponent,
)
from .integrate import integrate_trajectory, integrate_with_variation
from .metrics import PULLBACK_CONFIG, constant_profile, euclidean, exponent_profile, flow_pullback, quadratic_warp, scaled
from .stability import certify_asymptotic, certify_local
from .systems import get_system
from .tensor import (
    covariant_lyapunov_tensor,
    standard_charts,
    tensoriality_defects,
    variation_identity_relative,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NOT_CERTIFIED = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

SCHEMA_VERSION = "v1"
REPORT_SCHEMA = "lyatensor-report/v1"

IDENTITY_TOL = {"analytic": 1e-5, "finite_difference": 1e-3}
TENSORIALITY_TOL = 1e-6


@dataclass
class Outcome:
    summary: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    certificate: dict | None = None
    estimates: list = field(default_factory=list)
    code: int = EXIT_OK


def build_metric(cfg: RunConfig, vf):
    m = cfg.metric
    dim = vf.dim
    if m["profile"] == "exponent":
        profile = exponent_profile(m["lambda"], m["t_ref"], m["convention"])
    else:
        profile = constant_profile(1.0)
    kind = m["kind"]
    if kind == "euclidean":
        return euclidean(dim)
    if kind == "scaled":
        return scaled(profile, euclidean(dim))
    if kind == "warp":
        return quadratic_warp(dim, m["eps"])
    return flow_pullback(vf, euclidean(dim), m["t_ref"], profile, PULLBACK_CONFIG)


def _clean(obj):
    """Make a structure JSON-safe: numpy scalars to floats, non-finite to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _row(t, state=None, eig=None, distance=None, exponents=None, residual=None):
    return {"t": t, "state": state, "eig": eig, "distance": distance,
            "exponents": exponents, "residual": residual}


def _fmt(v):
    if v is None:
        return ""
    v = float(v)
    return repr(v) if math.isfinite(v) else ""


def series_csv(rows, dim: int) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
    header = (["schema", "t"] + [f"state_{i}" for i in range(dim)] + ["eigen_min", "eigen_max", "distance"]
              + [f"exponent_{i}" for i in range(dim)] + ["residual"])
    writer.writerow(header)
    for r in rows:
        state = list(r["state"]) if r["state"] is not None else [None] * dim
        eig = r["eig"] or (None, None)
        ex = list(r["exponents"] or [])
        ex += [None] * (dim - len(ex))
        writer.writerow([SCHEMA_VERSION, _fmt(r["t"])] + [_fmt(x) for x in state]
                        + [_fmt(eig[0]), _fmt(eig[1]), _fmt(r["distance"])]
                        + [_fmt(x) for x in ex] + [_fmt(r["residual"])])
    return buf.getvalue()


def _tensor_scan(cfg, entry, vf, g):
    a, b = cfg.analysis["window"]
    traj = integrate_trajectory(vf, a, cfg.y0, b, cfg.integrator)
    out = Outcome()
    worst_ratio = 0.0
    counts: dict = {}
    for t in np.linspace(a, b, cfg.analysis["n_time"]):
        y = traj(t)
        ev = covariant_lyapunov_tensor(vf, g, t, y)
        ratio = float(np.linalg.norm(ev.m) / np.linalg.norm(g(t, y)))
        worst_ratio = max(worst_ratio, ratio)
        counts[ev.definiteness] = counts.get(ev.definiteness, 0) + 1
        out.rows.append(_row(t, y, (ev.eigen_min, ev.eigen_max), residual=ratio))
    out.summary = {
        "max_tensor_to_metric_ratio": worst_ratio,
        "eigen_max": max(r["eig"][1] for r in out.rows),
        "eigen_min": min(r["eig"][0] for r in out.rows),
        "definiteness_counts": dict(sorted(counts.items())),
    }
    return out


def _certify(cfg, entry, vf, g, asymptotic):
    an = cfg.analysis
    if asymptotic:
        t_start, t_end = an["t0"], an["t0"] + an["horizon"]
    else:
        t_start, t_end = an["window"]
    traj = integrate_trajectory(vf, t_start, cfg.y0, t_end, cfg.integrator)
    if asymptotic:
        cert = certify_asymptotic(vf, g, traj, an["tube_radius"], t_start, an["horizon"],
                                  an["n_time"], an["n_space"], cfg.integrator)
    else:
        cert = certify_local(vf, g, traj, an["tube_radius"], (t_start, t_end),
                             an["n_time"], an["n_space"], cfg.integrator)
    out = Outcome(certificate=cert.as_dict())
    for k, t in enumerate(cert.pair_times):
        y = traj(t)
        ev = covariant_lyapunov_tensor(vf, g, t, y)
        dist = max((d[k] for d in cert.pair_distances), default=None)
        out.rows.append(_row(t, y, (ev.eigen_min, ev.eigen_max), distance=dist))
    out.summary = {"certificate_kind": cert.kind, "certified": cert.certified}
    if not cert.certified:
        out.code = EXIT_NOT_CERTIFIED
    return out


def _default_v0(dim):
    return np.ones(dim) / math.sqrt(dim)


def _exponent(cfg, entry, vf, g):
    an = cfg.analysis
    y0 = np.array(cfg.y0)
    if an["method"] == "two_trajectory":
        direction = np.array(an["v0"]) if an["v0"] is not None else _default_v0(vf.dim)
        direction = direction / np.linalg.norm(direction)
        est = two_trajectory_exponent(vf, g, an["t0"], y0, y0 + an["separation"] * direction,
                                      an["horizon"], cfg.integrator, sample_interval=an["renorm"])
    else:
        v0 = np.array(an["v0"]) if an["v0"] is not None else _default_v0(vf.dim)
        est = jacobi_exponent(vf, g, an["t0"], y0, v0, an["horizon"], an["renorm"], cfg.integrator)
    out = Outcome(estimates=[est.as_dict()])
    for (t, v), y in zip(est.convergence_trace, est.states):
        out.rows.append(_row(t, y, exponents=[v]))
    out.summary = {"exponent": est.value, "upper": est.upper, "blown_up": est.blown_up,
                   "saturated": est.saturated}
    return out


def _spectrum(cfg, entry, vf, g):
    an = cfg.analysis
    ests = exponent_spectrum(vf, g, an["t0"], np.array(cfg.y0), an["horizon"], an["renorm"], cfg.integrator)
    out = Outcome(estimates=[e.as_dict() for e in ests])
    # traces share checkpoints; rows list the components in descending order of final value
    for k, ((t, _), y) in enumerate(zip(ests[0].convergence_trace, ests[0].states)):
        out.rows.append(_row(t, y, exponents=[e.convergence_trace[k][1] for e in ests]))
    values = [e.value for e in ests]
    out.summary = {"exponents": values, "sum": float(sum(values)),
                   "renorm_interval_used": ests[0].renorm_interval, "blown_up": ests[0].blown_up}
    return out


def _identity(cfg, entry, vf, g):
    an = cfg.analysis
    rng = np.random.default_rng(cfg.seed)
    a, b = an["window"]
    dt = an["dt_probe"]
    traj, frame = integrate_with_variation(vf, a, cfg.y0, np.eye(vf.dim), b, cfg.integrator)
    prov = DerivativeProvenance.of(vf, g)
    analytic = prov.jacobian == "analytic" and prov.metric_dt == "analytic" and prov.metric_dy == "analytic"
    tol = IDENTITY_TOL["analytic" if analytic else "finite_difference"]
    out = Outcome()
    worst = 0.0
    for _ in range(an["samples"]):
        t = float(rng.uniform(a + 2 * dt, b - 2 * dt))
        v0 = rng.standard_normal(vf.dim)
        r = variation_identity_relative(vf, g, traj, frame, v0, t, dt)
        worst = max(worst, r)
        out.rows.append(_row(t, traj(t), residual=r))
    out.rows.sort(key=lambda r: r["t"])
    out.summary = {"max_relative_residual": worst, "tolerance": tol, "passed": worst < tol}
    if not worst < tol:
        out.code = EXIT_NUMERIC
    return out


def _tensoriality(cfg, entry, vf, g):
    an = cfg.analysis
    rng = np.random.default_rng(cfg.seed)
    a, b = an["window"]
    charts = standard_charts(vf.dim)
    per_chart = {c.name: {"tensor_defect": 0.0, "lyapunov_defect": 0.0} for c in charts}
    out = Outcome()
    for y in entry.sample_box(rng, an["samples"]):
        t = float(rng.uniform(a, b))
        worst = 0.0
        for c in charts:
            d = tensoriality_defects(vf, g, c, t, y)
            slot = per_chart[c.name]
            slot["tensor_defect"] = max(slot["tensor_defect"], d["tensor_defect"])
            slot["lyapunov_defect"] = max(slot["lyapunov_defect"], d["lyapunov_defect"])
            worst = max(worst, d["tensor_defect"])
        out.rows.append(_row(t, y, residual=worst))
    out.rows.sort(key=lambda r: r["t"])
    max_tensor = max(s["tensor_defect"] for s in per_chart.values())
    max_lyap = max(s["lyapunov_defect"] for s in per_chart.values())
    out.summary = {"charts": per_chart, "max_tensor_defect": max_tensor, "max_lyapunov_defect": max_lyap,
                   "tolerance": TENSORIALITY_TOL, "passed": max_tensor < TENSORIALITY_TOL}
    if not max_tensor < TENSORIALITY_TOL:
        out.code = EXIT_NUMERIC
    return out


ANALYSES = {
    "tensor_scan": _tensor_scan,
    "certify_local": lambda c, e, v, g: _certify(c, e, v, g, False),
    "certify_asymptotic": lambda c, e, v, g: _certify(c, e, v, g, True),
    "exponent": _exponent,
    "spectrum": _spectrum,
    "identity_check": _identity,
    "tensoriality_check": _tensoriality,
}


def tolerances(cfg: RunConfig) -> dict:
    return {
        "integrator": cfg.integrator.as_dict(),
        "pullback_integrator": PULLBACK_CONFIG.as_dict() if cfg.metric["kind"] == "pullback" else None,
        "fd_step": {"factor": FD_FACTOR, "rule": "factor * max(1, |y_i|)"},
        "definiteness_margin": "1e-08 * (1 + |L|_2)",
        "symmetry_tol": SYMMETRY_TOL,
        "frame_condition_max": MAX_FRAME_CONDITION,
        "exponent_tail_fraction": TAIL_FRACTION,
    }


def execute(cfg: RunConfig):
    """Run the analysis in memory; returns ``(exit_code, report_dict, csv_text)``."""
    entry = get_system(cfg.system)
    vf = entry.build(**cfg.params)
    g = build_metric(cfg, vf)
    report = {
        "schema": REPORT_SCHEMA,
        "version": __version__,
        "config": cfg.as_dict(),
        "tolerances": tolerances(cfg),
        "provenance": DerivativeProvenance.of(vf, g).as_dict(),
        "metric_name": g.name,
        "h_convention": (cfg.metric["convention"] if cfg.metric["profile"] == "exponent"
                         and cfg.metric["kind"] in ("scaled", "pullback") else None),
    }
    try:
        out = ANALYSES[cfg.analysis["kind"]](cfg, entry, vf, g)
        status = {EXIT_OK: "ok", EXIT_NOT_CERTIFIED: "not_certified", EXIT_NUMERIC: "check_failed"}[out.code]
        report["error"] = None
    except (NumericFailure, ContractViolation, RangeError, LyatensorError, np.linalg.LinAlgError) as exc:
        out = Outcome(code=EXIT_NUMERIC)
        status = "numeric_failure"
        report["error"] = f"{type(exc).__name__}: {exc}"
    report.update({
        "status": status,
        "exit_code": out.code,
        "summary": out.summary,
        "certificate": out.certificate,
        "estimates": out.estimates,
    })
    return out.code, _clean(report), series_csv(out.rows, vf.dim)


def run(cfg: RunConfig, out_dir=".", quiet: bool = True) -> int:
    code, report, csv_text = execute(cfg)
    text = json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"
    try:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, cfg.outputs["report"]), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        with open(os.path.join(out_dir, cfg.outputs["series"]), "w", encoding="utf-8", newline="") as fh:
            fh.write(csv_text)
    except OSError as exc:
        print(f"lyatensor: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_IO
    if not quiet:
        print(f"{cfg.analysis['kind']} on {cfg.system}: {report['status']}")
        print(json.dumps(report["summary"], sort_keys=True, indent=2))
    return code
