"""Run configuration: a TOML file of sections, validated against a fixed schema.

Keys carry their units in the name (``t1_ns``, ``bin_width_ps``). Unknown
sections or keys are rejected with the offending key path.
"""

from __future__ import annotations

import copy
import math
import sys
from dataclasses import dataclass

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError


@dataclass(frozen=True)
class Key:
    kind: str  # float, int, bool, str, floats, ints
    default: object = None
    help: str = ""


SCHEMA: dict[str, dict[str, Key]] = {
    "emitter": {
        "t1_ns": Key("float", 1.9, "radiative lifetime T1"),
        "t2_star_ns": Key("float", 2.4, "pure-dephasing time T2*; omit or 'inf' for none"),
    },
    "visibility": {
        "dt_ns": Key("floats", None, "post-selection widths; default 0.1..6 T1"),
        "t2_star_sweep_ns": Key("floats", None, "several T2* values instead of emitter.t2_star_ns; inf for none"),
        "grid_points": Key("int", 256),
        "rtol": Key("float", 1e-7),
    },
    "map": {
        "gamma_star_over_gamma_sp": Key("floats", None, "dephasing grid; default 0.05..5 (25 points)"),
        "dt_over_t1": Key("floats", None, "window grid; default 0.1..6 (60 points)"),
        "grid_points": Key("int", 256),
        "rtol": Key("float", 1e-7),
        "workers": Key("int", 1),
        "tau_v_ns": Key("floats", None, "measured decay times to invert"),
        "self_test": Key("bool", False, "check the invert(forward) round trip"),
    },
    "purcell": {
        "f_p": Key("floats", [1.0, 3.0, 7.0, 15.0, 30.0]),
        "v_target": Key("floats", []),
        "allow_inhibition": Key("bool", False),
    },
    "generate": {
        "mode": Key("str", "HBT", "HBT, HOM_parallel or HOM_orthogonal"),
        "n_pulses": Key("int", 10**6),
        "rep_period_ns": Key("float", 12.5),
        "p_background": Key("float", 0.0),
        "detector_jitter_sigma_ns": Key("float", 0.0),
        "loss": Key("float", 1.0, "per-photon survival probability"),
        "seed": Key("int", None),
    },
    "analysis": {
        "bin_width_ps": Key("int", 100),
        "max_delay_periods": Key("int", 5),
        "integration_halfwidth_ps": Key("int", None, "default min(3 T1, period/2 - bin)"),
        "normalization_peaks": Key("ints", [-5, -4, -3, -2, 2, 3, 4, 5]),
        "window_start_ns": Key("float", 0.0),
        "window_width_ns": Key("float", None, "no post-selection when omitted"),
        "jitter_sigma_ns": Key("float", 0.0),
        "t1_ns": Key("float", None, "lifetime for the default halfwidth; fitted when omitted"),
    },
    "lifetime": {
        "bin_width_ps": Key("int", 100),
        "fit_range_ns": Key("floats", None, "[t_lo, t_hi]"),
        "jitter_sigma_ns": Key("float", 0.0),
    },
}


def _coerce(path: str, kind: str, value):
    def number(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            if isinstance(v, str) and v.strip().lower() in ("inf", "+inf"):
                return math.inf
            raise ConfigError(f"{path}: expected a number, got {v!r}")
        return float(v)

    def integer(v):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{path}: expected an integer, got {v!r}")
        return v

    if value is None:
        return None
    if kind == "float":
        return number(value)
    if kind == "int":
        return integer(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true or false, got {value!r}")
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"{path}: expected a list, got {value!r}")
    conv = number if kind == "floats" else integer
    return [conv(v) for v in value]


def defaults() -> dict:
    return {sec: {k: copy.deepcopy(spec.default) for k, spec in keys.items()} for sec, keys in SCHEMA.items()}


def merge(base: dict, overrides: dict, origin: str = "config") -> dict:
    """Validate ``overrides`` against the schema and lay it over ``base``."""
    out = copy.deepcopy(base)
    if not isinstance(overrides, dict):
        raise ConfigError(f"{origin}: top level must be a table of sections")
    for section, table in overrides.items():
        if section not in SCHEMA:
            raise ConfigError(f"{origin}: unknown section [{section}]")
        if not isinstance(table, dict):
            raise ConfigError(f"{origin}: [{section}] must be a table")
        for key, value in table.items():
            path = f"{section}.{key}"
            if key not in SCHEMA[section]:
                raise ConfigError(f"{origin}: unknown key {path}")
            out[section][key] = _coerce(path, SCHEMA[section][key].kind, value)
    return out


def load(path) -> dict:
    """Defaults overlaid with the TOML file at ``path``."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return merge(defaults(), data, str(path))
