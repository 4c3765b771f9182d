"""Versioned JSON run configuration.

A configuration is a JSON object; every block is optional and falls back to
the defaults below.  Temperatures may be given in natural units (``t_w``) or
in kelvin (``t_w_kelvin``), never both.  See README for the full schema.
"""

from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import units
from .analysis import SampleRanges
from .atoms import SystemSpec
from .environment import (
    EnvironmentModel,
    EquilibriumBlackbody,
    LambdaRule,
    NonlocalRule,
    Tabulated,
    ToyLorentzianSlab,
    TwoTemperatureFlat,
)
from .errors import ConfigError, OteError

SCHEMA_VERSION = 1

SCAN_PROVIDER = {"kind": "toy_slab", "amplitude": 10.0, "width": 0.02, "decay_length": 5.0, "background": 0.0}
SAMPLE_PROVIDER = {"kind": "toy_slab", "amplitude": 10.0, "width": 0.01, "decay_length": 30.0, "background": 1.0}

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "system": {
        "omega1": 0.9,
        "omega2": 0.1,
        "resonant_index": 2,
        "z": 1.0,
        "r": 1.0,
        "dipole_scales": [1.0, 1.0, 1.0],
        "body_dipole_scale": 1.0,
    },
    "environment": {
        "t_w_kelvin": 300.0,
        "t_s_kelvin": 200.0,
        "provider": None,  # command default: SCAN_PROVIDER, or SAMPLE_PROVIDER for sample/optimize
        "lambda": {"kind": "inverse_cube", "prefactor": 100.0, "r0": 1.0},
        "nonlocal": {"kind": "coherence", "coherence_length": 10.0, "phase": 0.0},
    },
    "solver": {"tolerance": 1e-10, "dt": None, "t_final": None, "samples": 20},
    "evolve": {"initial": "ground"},
    "scan": {
        "z": {"start": 0.1, "stop": 30.0, "num": 40, "spacing": "log"},
        "dT_kelvin": {"start": -270.0, "stop": 270.0, "num": 37, "spacing": "linear"},
    },
    "sample": {
        "n": 100,
        "seed": 0,
        "z": [0.9, 100.0],
        "t_w_kelvin": [50.0, 500.0],
        "t_s_offset_kelvin": [-500.0, 0.0],
        "t_s_floor_kelvin": 20.0,
        "grid": 64,
    },
    "optimize": {"grid": 64, "annotate": True},
    "workers": None,
    "output": {"path": None, "format": None, "kelvin": True, "summary": None, "draws": None},
}

TOP_LEVEL = set(DEFAULTS)


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if path == "" and key not in TOP_LEVEL:
            raise ConfigError(f"unknown configuration key {where!r}")
        if isinstance(out.get(key), dict) and isinstance(value, dict) and key not in ("provider", "z", "dT_kelvin", "dT"):
            out[key] = _merge(out[key], value, where + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None, overrides=()) -> dict:
    """Defaults <- file <- ``key.path=json`` overrides."""
    raw = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"configuration file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"configuration file is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a JSON object")
        if "schema_version" not in raw:
            raise ConfigError("configuration lacks 'schema_version'")
        if raw["schema_version"] != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {raw['schema_version']!r} (expected {SCHEMA_VERSION})")
        scan = raw.get("scan", {})
        if isinstance(scan, dict) and "dT" in scan and "dT_kelvin" in scan:
            raise ConfigError("scan: give either dT or dT_kelvin, not both")
        base_dir = os.path.dirname(os.path.abspath(path))
    else:
        base_dir = os.getcwd()
    cfg = _merge(DEFAULTS, raw)
    for item in overrides:
        _apply_override(cfg, item)
    cfg["_base_dir"] = base_dir
    return cfg


def _apply_override(cfg, item):
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key.path=value")
    key, text = item.split("=", 1)
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = text
    parts = key.split(".")
    if parts[0] not in TOP_LEVEL:
        raise ConfigError(f"unknown configuration key {parts[0]!r}")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = value


def _number(block, key, where, positive=False):
    v = block.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where}.{key} must be a finite number, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{where}.{key} must be > 0, got {v!r}")
    return float(v)


def _temperature(block, name, where):
    natural, kelvin = block.get(name), block.get(f"{name}_kelvin")
    if natural is not None and kelvin is not None:
        raise ConfigError(f"{where}: give either {name} or {name}_kelvin, not both")
    if natural is not None:
        return _number(block, name, where, positive=True)
    if kelvin is not None:
        return units.from_kelvin(_number(block, f"{name}_kelvin", where, positive=True))
    raise ConfigError(f"{where}: {name} (or {name}_kelvin) is required")


def build_system(cfg) -> SystemSpec:
    s = cfg["system"]
    try:
        scales = tuple(float(x) for x in s.get("dipole_scales", (1.0, 1.0, 1.0)))
        if len(scales) != 3:
            raise ConfigError("system.dipole_scales needs three entries")
        return SystemSpec.build(
            _number(s, "omega1", "system", True),
            _number(s, "omega2", "system", True),
            int(s.get("resonant_index", 2)),
            _number(s, "z", "system", True),
            _number(s, "r", "system", True),
            scales,
            float(s.get("body_dipole_scale", 1.0)),
        )
    except (OteError, ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid system: {exc}") from exc


def build_provider(spec, base_dir="."):
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("environment.provider must be an object with a 'kind'")
    kind = spec["kind"]
    args = {k: v for k, v in spec.items() if k != "kind"}
    try:
        if kind == "blackbody":
            return EquilibriumBlackbody()
        if kind == "flat":
            if "per_channel" in args:
                args["per_channel"] = tuple(
                    sorted((str(k), float(v[0]), float(v[1])) for k, v in args["per_channel"].items())
                )
            return TwoTemperatureFlat(**args)
        if kind == "toy_slab":
            return ToyLorentzianSlab(**args)
        if kind == "tabulated":
            path = args.get("path")
            if not path:
                raise ConfigError("tabulated provider needs a 'path'")
            full = path if os.path.isabs(path) else os.path.join(base_dir, path)
            if not os.path.exists(full):
                raise ConfigError(f"tabulated provider file not found: {full}")
            return Tabulated.from_csv(full)
    except ConfigError:
        raise
    except (OteError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid provider {kind!r}: {exc}") from exc
    raise ConfigError(f"unknown provider kind {kind!r} (blackbody, flat, toy_slab, tabulated)")


def build_environment(cfg, command="steady") -> EnvironmentModel:
    e = cfg["environment"]
    spec = e.get("provider")
    if spec is None:
        spec = SAMPLE_PROVIDER if command in ("sample", "optimize") else SCAN_PROVIDER
    provider = build_provider(spec, cfg.get("_base_dir", "."))
    try:
        lam = LambdaRule(**e.get("lambda", {}))
        nl = NonlocalRule(**e.get("nonlocal", {}))
        return EnvironmentModel(_temperature(e, "t_w", "environment"), _temperature(e, "t_s", "environment"),
                                provider, lam, nl)
    except ConfigError:
        raise
    except (OteError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid environment: {exc}") from exc


@dataclass(frozen=True)
class SolverSettings:
    tolerance: float
    dt: float | None
    t_final: float | None
    samples: int


def build_solver(cfg) -> SolverSettings:
    s = cfg["solver"]
    tol = _number(s, "tolerance", "solver", positive=True)
    dt = None if s.get("dt") is None else _number(s, "dt", "solver", positive=True)
    tf = None if s.get("t_final") is None else _number(s, "t_final", "solver", positive=True)
    samples = s.get("samples", 20)
    if not isinstance(samples, int) or samples < 1:
        raise ConfigError("solver.samples must be a positive integer")
    return SolverSettings(tol, dt, tf, samples)


def _grid(spec, where):
    if isinstance(spec, list):
        vals = np.array(spec, dtype=float)
    elif isinstance(spec, dict):
        try:
            start, stop, num = float(spec["start"]), float(spec["stop"]), int(spec["num"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{where} needs start, stop and num") from exc
        if num < 1:
            raise ConfigError(f"{where}.num must be >= 1")
        spacing = spec.get("spacing", "linear")
        if spacing == "log":
            if not (start > 0 and stop > 0):
                raise ConfigError(f"{where}: log spacing needs positive bounds")
            vals = np.geomspace(start, stop, num)
        elif spacing == "linear":
            vals = np.linspace(start, stop, num)
        else:
            raise ConfigError(f"{where}.spacing must be 'linear' or 'log'")
    else:
        raise ConfigError(f"{where} must be a list or a start/stop/num object")
    if vals.size == 0 or not np.all(np.isfinite(vals)):
        raise ConfigError(f"{where} must be a non-empty finite grid")
    return vals


def build_scan_grids(cfg):
    s = cfg["scan"]
    z = _grid(s["z"], "scan.z")
    if np.any(z <= 0):
        raise ConfigError("scan.z must be positive")
    if s.get("dT") is not None:
        dt = _grid(s["dT"], "scan.dT")
    else:
        dt = units.from_kelvin(_grid(s["dT_kelvin"], "scan.dT_kelvin"))
    return z, dt


def build_sample(cfg):
    s = cfg["sample"]
    n, seed, grid = s.get("n"), s.get("seed"), s.get("grid", 64)
    for name, v in (("n", n), ("seed", seed), ("grid", grid)):
        if isinstance(v, bool) or not isinstance(v, int) or v < (1 if name != "seed" else 0):
            raise ConfigError(f"sample.{name} must be a {'positive' if name != 'seed' else 'non-negative'} integer")
    try:
        ranges = SampleRanges(
            tuple(s["z"]), tuple(s["t_w_kelvin"]), tuple(s["t_s_offset_kelvin"]), float(s["t_s_floor_kelvin"])
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid sample ranges: {exc}") from exc
    return n, seed, grid, ranges


def workers(cfg):
    w = cfg.get("workers")
    if w is None:
        env = os.environ.get("OTEMACHINE_WORKERS")
        if env is None or env == "":
            return 1
        try:
            w = int(env)
        except ValueError as exc:
            raise ConfigError(f"OTEMACHINE_WORKERS must be an integer, got {env!r}") from exc
    if isinstance(w, bool) or not isinstance(w, int) or w < 1:
        raise ConfigError(f"workers must be a positive integer, got {w!r}")
    return w


def public_view(cfg) -> dict:
    """Configuration as echoed into outputs (no machine-specific paths)."""
    return {k: v for k, v in cfg.items() if not k.startswith("_")}
