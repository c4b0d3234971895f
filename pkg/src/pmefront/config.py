"""Run configuration: strict parsing, serialization, and resolution.

Configs are structured key-value text (YAML) with fixed sections: grid,
model, drift, init, time, checks, expect, output.  Parsing is strict:
unknown keys, missing required keys, and out-of-range values are rejected
with the offending key path in the message.  A fully specified config
round-trips through ``serialize_config`` unchanged.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field as dc_field, replace
from importlib import resources

import numpy as np
import yaml

from .core import InitialDataSpec, Line, ModelParams, Periodic, make_grid
from .drift import make_field
from .errors import ConfigError, DomainError
from .oracles import (
    barenblatt_density,
    build_initial_density,
    traveling_wave_density,
)

__all__ = [
    "GridConfig",
    "ModelConfig",
    "InitConfig",
    "TimeConfig",
    "SimConfig",
    "CHECK_NAMES",
    "parse_config",
    "serialize_config",
    "fingerprint",
    "apply_overrides",
    "load_preset",
    "preset_names",
    "resolve",
    "ResolvedConfig",
]

CHECK_NAMES = (
    "darcy",
    "aronson_benilan",
    "lipschitz",
    "envelope",
    "classify",
    "nondegeneracy",
    "boundary_identity",
    "barrier_certificates",
)

PROFILES = ("barenblatt", "traveling_wave", "torus_stationary",
            "bump_stationary", "custom")
_PROFILE_GAMMA = {"barenblatt": 1.0, "traveling_wave": 1.0,
                  "torus_stationary": 2.0, "bump_stationary": 2.0}
_CLASSIFICATIONS = ("WaitingTime", "ExpandingRelative")


@dataclass(frozen=True)
class GridConfig:
    topology: str
    n_cells: int
    period: float | None = None
    xmin: float | None = None
    xmax: float | None = None
    containment: str = "envelope"


@dataclass(frozen=True)
class ModelConfig:
    m: float
    fb_threshold: float = 1.0e-6
    cfl_safety: float = 0.4
    dt_max: float = 1.0e-2


@dataclass(frozen=True)
class InitConfig:
    profile: str
    gamma: float
    growth_constant: float = 1.0
    analytic: bool = False
    params: dict = dc_field(default_factory=dict)


@dataclass(frozen=True)
class TimeConfig:
    t_start: float
    t_end: float
    output_stride: float


@dataclass(frozen=True)
class SimConfig:
    grid: GridConfig
    model: ModelConfig
    drift_v: dict
    drift_w: dict
    init: InitConfig
    time: TimeConfig
    checks: tuple = ()
    expect: dict = dc_field(default_factory=dict)
    output_directory: str = "out"


def _require(mapping: dict, key: str, path: str):
    if key not in mapping:
        raise ConfigError(f"missing required key '{path}.{key}'")
    return mapping[key]


def _reject_unknown(mapping: dict, known, path: str):
    extra = set(mapping) - set(known)
    if extra:
        raise ConfigError(
            f"unknown key '{path}.{sorted(extra)[0]}' (strict mode)"
        )


def _as_float(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{path}' must be a number, got {value!r}")
    return float(value)


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"'{path}' must be an integer, got {value!r}")
    return int(value)


def _parse_grid(d: dict) -> GridConfig:
    if not isinstance(d, dict):
        raise ConfigError("'grid' must be a mapping")
    _reject_unknown(d, ("topology", "n_cells", "period", "xmin", "xmax",
                        "containment"), "grid")
    topology = _require(d, "topology", "grid")
    n_cells = _as_int(_require(d, "n_cells", "grid"), "grid.n_cells")
    if n_cells < 8:
        raise ConfigError(f"'grid.n_cells' must be at least 8, got {n_cells}")
    containment = d.get("containment", "envelope")
    if containment not in ("envelope", "runtime"):
        raise ConfigError(
            f"'grid.containment' must be 'envelope' or 'runtime', "
            f"got {containment!r}"
        )
    if topology == "periodic":
        if "xmin" in d or "xmax" in d:
            raise ConfigError("'grid.xmin'/'grid.xmax' invalid for periodic topology")
        period = _as_float(_require(d, "period", "grid"), "grid.period")
        if period <= 0.0:
            raise ConfigError(f"'grid.period' must be positive, got {period}")
        return GridConfig("periodic", n_cells, period=period,
                          containment=containment)
    if topology == "line":
        if "period" in d:
            raise ConfigError("'grid.period' invalid for line topology")
        xmin = _as_float(_require(d, "xmin", "grid"), "grid.xmin")
        xmax = _as_float(_require(d, "xmax", "grid"), "grid.xmax")
        if not xmax > xmin:
            raise ConfigError(
                f"'grid.xmax' must exceed 'grid.xmin', got [{xmin}, {xmax}]"
            )
        return GridConfig("line", n_cells, xmin=xmin, xmax=xmax,
                          containment=containment)
    raise ConfigError(
        f"'grid.topology' must be 'periodic' or 'line', got {topology!r}"
    )


def _parse_model(d: dict) -> ModelConfig:
    if not isinstance(d, dict):
        raise ConfigError("'model' must be a mapping")
    _reject_unknown(d, ("m", "fb_threshold", "cfl_safety", "dt_max"), "model")
    m = _as_float(_require(d, "m", "model"), "model.m")
    if not m > 1.0:
        raise ConfigError(f"'model.m' must exceed 1, got {m}")
    fb = _as_float(d.get("fb_threshold", 1.0e-6), "model.fb_threshold")
    cfl = _as_float(d.get("cfl_safety", 0.4), "model.cfl_safety")
    dt_max = _as_float(d.get("dt_max", 1.0e-2), "model.dt_max")
    if not 0.0 < fb < 1.0:
        raise ConfigError(f"'model.fb_threshold' must lie in (0, 1), got {fb}")
    if not 0.0 < cfl < 1.0:
        raise ConfigError(f"'model.cfl_safety' must lie in (0, 1), got {cfl}")
    if not dt_max > 0.0:
        raise ConfigError(f"'model.dt_max' must be positive, got {dt_max}")
    return ModelConfig(m=m, fb_threshold=fb, cfl_safety=cfl, dt_max=dt_max)


def _parse_field_spec(d, path: str) -> dict:
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError(f"'{path}' must be a mapping with a 'kind' key")
    spec = dict(d)
    kind = spec["kind"]
    try:
        make_field(kind, **{k: v for k, v in spec.items() if k != "kind"})
    except DomainError as exc:
        raise ConfigError(f"'{path}': {exc}") from None
    return spec


def _parse_init(d: dict) -> InitConfig:
    if not isinstance(d, dict):
        raise ConfigError("'init' must be a mapping")
    _reject_unknown(d, ("profile", "gamma", "growth_constant", "analytic",
                        "params"), "init")
    profile = _require(d, "profile", "init")
    if profile not in PROFILES:
        raise ConfigError(
            f"'init.profile' must be one of {list(PROFILES)}, got {profile!r}"
        )
    if "gamma" in d:
        gamma = _as_float(d["gamma"], "init.gamma")
    elif profile in _PROFILE_GAMMA:
        gamma = _PROFILE_GAMMA[profile]
    else:
        raise ConfigError("'init.gamma' is required for custom profiles")
    if not 0.0 < gamma <= 2.0:
        raise ConfigError(f"'init.gamma' must lie in (0, 2], got {gamma}")
    growth_constant = _as_float(d.get("growth_constant", 1.0),
                                "init.growth_constant")
    analytic = d.get("analytic", False)
    if not isinstance(analytic, bool):
        raise ConfigError("'init.analytic' must be a boolean")
    if analytic and profile not in ("barenblatt", "traveling_wave"):
        raise ConfigError(
            f"'init.analytic' requires a closed-form profile, not {profile!r}"
        )
    params = d.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("'init.params' must be a mapping")
    _validate_profile_params(profile, params)
    return InitConfig(profile=profile, gamma=gamma,
                      growth_constant=growth_constant, analytic=analytic,
                      params=dict(params))


def _validate_profile_params(profile: str, params: dict):
    known = {
        "barenblatt": ("t0", "mass"),
        "traveling_wave": ("c",),
        "torus_stationary": (),
        "bump_stationary": ("xmin", "xmax"),
        "custom": ("path",),
    }[profile]
    _reject_unknown(params, known, "init.params")
    if profile == "barenblatt":
        if _as_float(params.get("t0", 1.0), "init.params.t0") <= 0.0:
            raise ConfigError("'init.params.t0' must be positive")
        if _as_float(params.get("mass", 1.0), "init.params.mass") <= 0.0:
            raise ConfigError("'init.params.mass' must be positive")
    if profile == "traveling_wave":
        if _as_float(params.get("c", 1.0), "init.params.c") <= 0.0:
            raise ConfigError("'init.params.c' must be positive")
    if profile == "bump_stationary":
        lo = _as_float(_require(params, "xmin", "init.params"),
                       "init.params.xmin")
        hi = _as_float(_require(params, "xmax", "init.params"),
                       "init.params.xmax")
        if not hi > lo:
            raise ConfigError("'init.params' interval is empty")
    if profile == "custom" and "path" not in params:
        raise ConfigError("'init.params.path' is required for custom profiles")


def _parse_time(d: dict) -> TimeConfig:
    if not isinstance(d, dict):
        raise ConfigError("'time' must be a mapping")
    _reject_unknown(d, ("t_start", "t_end", "output_stride"), "time")
    t_start = _as_float(d.get("t_start", 0.0), "time.t_start")
    t_end = _as_float(_require(d, "t_end", "time"), "time.t_end")
    stride = _as_float(_require(d, "output_stride", "time"),
                       "time.output_stride")
    if t_start < 0.0:
        raise ConfigError(f"'time.t_start' must be non-negative, got {t_start}")
    if t_end < t_start:
        raise ConfigError(
            f"'time.t_end' ({t_end}) must not precede t_start ({t_start})"
        )
    if stride <= 0.0:
        raise ConfigError(f"'time.output_stride' must be positive, got {stride}")
    return TimeConfig(t_start=t_start, t_end=t_end, output_stride=stride)


def parse_config(text: str, overrides=()) -> SimConfig:
    """Parse and validate config text; ``overrides`` are section.key=value
    strings applied before validation."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping of sections")
    raw = apply_overrides(raw, overrides)
    _reject_unknown(raw, ("grid", "model", "drift", "init", "time", "checks",
                          "expect", "output"), "config")
    for section in ("grid", "model", "drift", "init", "time"):
        if section not in raw:
            raise ConfigError(f"missing required section '{section}'")
    drift = raw["drift"]
    if not isinstance(drift, dict):
        raise ConfigError("'drift' must be a mapping")
    _reject_unknown(drift, ("v", "w"), "drift")
    v_spec = _parse_field_spec(drift.get("v", {"kind": "zero"}), "drift.v")
    w_spec = _parse_field_spec(drift.get("w", {"kind": "zero"}), "drift.w")

    checks = raw.get("checks", [])
    if not isinstance(checks, list):
        raise ConfigError("'checks' must be a list of diagnostic names")
    for name in checks:
        if name not in CHECK_NAMES:
            raise ConfigError(
                f"unknown check '{name}'; choose from {list(CHECK_NAMES)}"
            )

    expect = raw.get("expect", {})
    if not isinstance(expect, dict):
        raise ConfigError("'expect' must be a mapping")
    _reject_unknown(expect, ("classification",), "expect")
    if "classification" in expect and expect["classification"] not in _CLASSIFICATIONS:
        raise ConfigError(
            f"'expect.classification' must be one of {list(_CLASSIFICATIONS)}"
        )

    output = raw.get("output", {})
    if not isinstance(output, dict):
        raise ConfigError("'output' must be a mapping")
    _reject_unknown(output, ("directory",), "output")
    outdir = output.get("directory", "out")
    if not isinstance(outdir, str):
        raise ConfigError("'output.directory' must be a string")

    cfg = SimConfig(
        grid=_parse_grid(raw["grid"]),
        model=_parse_model(raw["model"]),
        drift_v=v_spec,
        drift_w=w_spec,
        init=_parse_init(raw["init"]),
        time=_parse_time(raw["time"]),
        checks=tuple(checks),
        expect=dict(expect),
        output_directory=outdir,
    )
    _cross_checks(cfg)
    return cfg


def _cross_checks(cfg: SimConfig):
    if cfg.init.profile == "torus_stationary" and cfg.grid.topology != "periodic":
        raise ConfigError(
            "'init.profile' torus_stationary requires 'grid.topology' periodic"
        )
    if cfg.init.profile == "barenblatt":
        t0 = cfg.init.params.get("t0", 1.0)
        if abs(t0 - cfg.time.t_start) > 1e-12 * max(1.0, t0):
            raise ConfigError(
                f"'time.t_start' ({cfg.time.t_start}) must equal the "
                f"source-solution origin 'init.params.t0' ({t0})"
            )


def as_dict(cfg: SimConfig) -> dict:
    grid = {"topology": cfg.grid.topology, "n_cells": cfg.grid.n_cells,
            "containment": cfg.grid.containment}
    if cfg.grid.topology == "periodic":
        grid["period"] = cfg.grid.period
    else:
        grid["xmin"] = cfg.grid.xmin
        grid["xmax"] = cfg.grid.xmax
    return {
        "grid": grid,
        "model": {"m": cfg.model.m, "fb_threshold": cfg.model.fb_threshold,
                  "cfl_safety": cfg.model.cfl_safety,
                  "dt_max": cfg.model.dt_max},
        "drift": {"v": dict(cfg.drift_v), "w": dict(cfg.drift_w)},
        "init": {"profile": cfg.init.profile, "gamma": cfg.init.gamma,
                 "growth_constant": cfg.init.growth_constant,
                 "analytic": cfg.init.analytic,
                 "params": dict(cfg.init.params)},
        "time": {"t_start": cfg.time.t_start, "t_end": cfg.time.t_end,
                 "output_stride": cfg.time.output_stride},
        "checks": list(cfg.checks),
        "expect": dict(cfg.expect),
        "output": {"directory": cfg.output_directory},
    }


def serialize_config(cfg: SimConfig) -> str:
    """Canonical YAML for the config; stable across runs for fingerprinting."""
    return yaml.safe_dump(as_dict(cfg), sort_keys=True,
                          default_flow_style=False)


def fingerprint(cfg: SimConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()[:16]


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings onto the raw mapping."""
    out = {k: (dict(v) if isinstance(v, dict) else v) for k, v in raw.items()}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not of the form key=value")
        path, _, value_text = item.partition("=")
        keys = path.strip().split(".")
        if not all(keys):
            raise ConfigError(f"override '{item}' has an empty key path")
        try:
            value = yaml.safe_load(value_text)
        except yaml.YAMLError:
            raise ConfigError(f"override '{item}' has an unparseable value")
        node = out
        for k in keys[:-1]:
            nxt = node.get(k)
            if not isinstance(nxt, dict):
                nxt = {}
                node[k] = nxt
            node = nxt
        node[keys[-1]] = value
    return out


def preset_names():
    root = resources.files("pmefront").joinpath("presets")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_preset(name: str, overrides=()) -> SimConfig:
    """Load a shipped preset configuration by name."""
    path = resources.files("pmefront").joinpath("presets", f"{name}.yaml")
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(
            f"unknown preset '{name}'; available: {preset_names()}"
        ) from None
    return parse_config(text, overrides=overrides)


@dataclass
class ResolvedConfig:
    """Config materialized into domain objects, ready to run."""

    grid: object
    params: ModelParams
    v_field: object
    w_field: object
    init_spec: InitialDataSpec
    rho0: object
    t_start: float
    t_end: float
    stride: float
    containment: str
    profile: str
    sampler: object
    checks: tuple
    expect: dict


def resolve(cfg: SimConfig) -> ResolvedConfig:
    """Materialize grid, fields, and initial data from a validated config."""
    if cfg.grid.topology == "periodic":
        topo = Periodic(cfg.grid.period)
    else:
        topo = Line(cfg.grid.xmin, cfg.grid.xmax)
    grid = make_grid(topo, cfg.grid.n_cells)
    params = ModelParams(m=cfg.model.m, fb_threshold=cfg.model.fb_threshold,
                         cfl_safety=cfg.model.cfl_safety,
                         dt_max=cfg.model.dt_max)
    v_field = make_field(cfg.drift_v["kind"],
                         **{k: v for k, v in cfg.drift_v.items() if k != "kind"})
    w_field = make_field(cfg.drift_w["kind"],
                         **{k: v for k, v in cfg.drift_w.items() if k != "kind"})
    init_params = dict(cfg.init.params)
    if cfg.init.profile == "traveling_wave":
        init_params["t0"] = cfg.time.t_start
    init_spec = InitialDataSpec(profile=cfg.init.profile, gamma=cfg.init.gamma,
                                growth_constant=cfg.init.growth_constant,
                                params=init_params)
    rho0 = build_initial_density(init_spec, grid, params)

    sampler = None
    if cfg.init.profile == "barenblatt":
        mass = init_params.get("mass", 1.0)

        def sampler(x, t, m=params.m, mass=mass):
            return barenblatt_density(x, t, m, mass)
    elif cfg.init.profile == "traveling_wave":
        c = init_params.get("c", 1.0)

        def sampler(x, t, m=params.m, c=c):
            return traveling_wave_density(x, t, c, m)

    return ResolvedConfig(
        grid=grid, params=params, v_field=v_field, w_field=w_field,
        init_spec=init_spec, rho0=rho0, t_start=cfg.time.t_start,
        t_end=cfg.time.t_end, stride=cfg.time.output_stride,
        containment=cfg.grid.containment, profile=cfg.init.profile,
        sampler=sampler, checks=cfg.checks, expect=dict(cfg.expect),
    )
