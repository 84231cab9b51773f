"""Run configuration: a TOML document with dotted sections.

A minimal file::

    system.name = "lorenz"
    analysis.kind = "spectrum"

Every key is checked against the schema below; unknown keys are errors.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import LyatensorError
from .integrate import IntegratorConfig
from .systems import REGISTRY

ANALYSES = (
    "tensor_scan",
    "certify_local",
    "certify_asymptotic",
    "exponent",
    "spectrum",
    "identity_check",
    "tensoriality_check",
)
METRICS = ("euclidean", "scaled", "pullback", "warp")
PROFILES = ("constant", "exponent")
CONVENTIONS = ("target", "raw")
METHODS = ("jacobi", "two_trajectory")


class ConfigError(LyatensorError):
    """Invalid configuration; ``key`` names the offending entry when known."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


def _num(key, v, lo=-math.inf, hi=math.inf, lo_open=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {v!r}", key)
    v = float(v)
    if not math.isfinite(v) and hi != math.inf:
        raise ConfigError(f"{key}: must be finite", key)
    if v < lo or (lo_open and v == lo) or v > hi:
        bound = f"({lo}, {hi}]" if lo_open else f"[{lo}, {hi}]"
        raise ConfigError(f"{key}: {v} outside {bound}", key)
    return v


def _int(key, v, lo=0, hi=10**9):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{key}: expected an integer, got {v!r}", key)
    if not lo <= v <= hi:
        raise ConfigError(f"{key}: {v} outside [{lo}, {hi}]", key)
    return v


def _choice(key, v, options):
    if v not in options:
        raise ConfigError(f"{key}: {v!r} is not one of {list(options)}", key)
    return v


def _vector(key, v):
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{key}: expected a non-empty list of numbers", key)
    return tuple(_num(key, x) for x in v)


def _text(key, v):
    if not isinstance(v, str) or not v or "/" in v or "\\" in v:
        raise ConfigError(f"{key}: expected a plain file name", key)
    return v


# key -> (validator, default); None default means "derived later"
SCHEMA: dict[str, tuple] = {
    "system.name": (lambda k, v: _choice(k, v, tuple(REGISTRY)), None),
    "system.y0": (_vector, None),
    "metric.kind": (lambda k, v: _choice(k, v, METRICS), "euclidean"),
    "metric.profile": (lambda k, v: _choice(k, v, PROFILES), None),
    "metric.lambda": (lambda k, v: _num(k, v, -50.0, 50.0), 0.0),
    "metric.convention": (lambda k, v: _choice(k, v, CONVENTIONS), "target"),
    "metric.t_ref": (_num, 0.0),
    "metric.eps": (lambda k, v: _num(k, v, 0.0, 1e3), 0.1),
    "analysis.kind": (lambda k, v: _choice(k, v, ANALYSES), None),
    "analysis.method": (lambda k, v: _choice(k, v, METHODS), "jacobi"),
    "analysis.window": (_vector, None),
    "analysis.t0": (_num, None),
    "analysis.horizon": (lambda k, v: _num(k, v, 0.0, 1e6, lo_open=True), None),
    "analysis.renorm": (lambda k, v: _num(k, v, 0.0, 1e6, lo_open=True), 0.5),
    "analysis.tube_radius": (lambda k, v: _num(k, v, 0.0, 1e6, lo_open=True), 0.1),
    "analysis.n_time": (lambda k, v: _int(k, v, 2, 100_000), None),
    "analysis.n_space": (lambda k, v: _int(k, v, 1, 100_000), 8),
    "analysis.samples": (lambda k, v: _int(k, v, 1, 1_000_000), 20),
    "analysis.v0": (_vector, None),
    "analysis.separation": (lambda k, v: _num(k, v, 0.0, 1.0, lo_open=True), 1e-8),
    "analysis.dt_probe": (lambda k, v: _num(k, v, 0.0, 1.0, lo_open=True), 1e-5),
    "integrator.rel_tol": (lambda k, v: _num(k, v, 0.0, 1.0, lo_open=True), 1e-9),
    "integrator.abs_tol": (lambda k, v: _num(k, v, 0.0, 1.0, lo_open=True), 1e-11),
    "integrator.max_step": (lambda k, v: _num(k, v, 0.0, math.inf, lo_open=True), math.inf),
    "integrator.max_steps": (lambda k, v: _int(k, v, 1, 10**9), 10_000_000),
    "run.seed": (lambda k, v: _int(k, v, 0, 2**63 - 1), 0),
    "output.report": (_text, "report.json"),
    "output.series": (_text, "series.csv"),
}


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


@dataclass(frozen=True)
class RunConfig:
    system: str
    params: dict
    y0: tuple
    metric: dict
    analysis: dict
    integrator: IntegratorConfig
    seed: int = 0
    outputs: dict = field(default_factory=lambda: {"report": "report.json", "series": "series.csv"})

    def with_seed(self, seed: int) -> "RunConfig":
        return RunConfig(self.system, self.params, self.y0, self.metric, self.analysis,
                         self.integrator, _int("run.seed", seed, 0, 2**63 - 1), self.outputs)

    def as_dict(self) -> dict:
        integ = self.integrator.as_dict()
        return {
            "system": {"name": self.system, "params": dict(self.params), "y0": list(self.y0)},
            "metric": dict(self.metric),
            "analysis": {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.analysis.items()},
            "integrator": integ,
            "run": {"seed": self.seed},
            "output": dict(self.outputs),
        }


def parse_config(text: str) -> RunConfig:
    """Parse and validate a run configuration, filling documented defaults."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from None
    flat = _flatten(raw)

    values: dict[str, Any] = {}
    params: dict[str, float] = {}
    name = flat.get("system.name")
    if name is None:
        raise ConfigError("system.name is required", "system.name")
    entry = REGISTRY.get(name) if isinstance(name, str) else None
    if entry is None:
        raise ConfigError(f"system.name: unknown system {name!r}; known: {sorted(REGISTRY)}", "system.name")

    for key in sorted(flat):
        v = flat[key]
        if key.startswith("system.params."):
            p = key[len("system.params."):]
            if p not in entry.defaults:
                raise ConfigError(f"{key}: unknown parameter for {name} (known: {sorted(entry.defaults)})", key)
            params[p] = _num(key, v)
            continue
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", key)
        values[key] = SCHEMA[key][0](key, v)

    def get(key):
        return values.get(key, SCHEMA[key][1])

    kind = values.get("analysis.kind")
    if kind is None:
        raise ConfigError("analysis.kind is required", "analysis.kind")

    y0 = get("system.y0") or entry.y0
    if len(y0) != entry.dim:
        raise ConfigError(f"system.y0: expected {entry.dim} components", "system.y0")

    window = get("analysis.window") or entry.window
    if len(window) != 2 or not window[0] < window[1]:
        raise ConfigError("analysis.window: expected [start, end] with start < end", "analysis.window")
    t0 = get("analysis.t0")
    t0 = window[0] if t0 is None else t0
    horizon = get("analysis.horizon") or entry.horizon
    n_time = get("analysis.n_time") or (21 if kind == "certify_asymptotic" else 11)
    v0 = get("analysis.v0")
    if v0 is not None and len(v0) != entry.dim:
        raise ConfigError(f"analysis.v0: expected {entry.dim} components", "analysis.v0")

    mkind = get("metric.kind")
    profile = get("metric.profile")
    if profile is None:
        profile = "exponent" if ("metric.lambda" in values or mkind == "scaled") else "constant"
    metric = {
        "kind": mkind,
        "profile": profile,
        "lambda": get("metric.lambda"),
        "convention": get("metric.convention"),
        "t_ref": get("metric.t_ref"),
        "eps": get("metric.eps"),
    }
    analysis = {
        "kind": kind,
        "method": get("analysis.method"),
        "window": tuple(window),
        "t0": t0,
        "horizon": horizon,
        "renorm": get("analysis.renorm"),
        "tube_radius": get("analysis.tube_radius"),
        "n_time": n_time,
        "n_space": get("analysis.n_space"),
        "samples": get("analysis.samples"),
        "v0": None if v0 is None else tuple(v0),
        "separation": get("analysis.separation"),
        "dt_probe": get("analysis.dt_probe"),
    }
    integrator = IntegratorConfig(
        rel_tol=get("integrator.rel_tol"),
        abs_tol=get("integrator.abs_tol"),
        max_step=get("integrator.max_step"),
        max_steps=get("integrator.max_steps"),
    )
    return RunConfig(
        system=name,
        params={**entry.defaults, **params},
        y0=tuple(float(x) for x in y0),
        metric=metric,
        analysis=analysis,
        integrator=integrator,
        seed=get("run.seed"),
        outputs={"report": get("output.report"), "series": get("output.series")},
    )


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
