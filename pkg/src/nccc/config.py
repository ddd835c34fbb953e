"""Scenario configuration files.

Configs are JSON.  Quantities are strings with a unit suffix, for example
``"20us"``, ``"1.5MB"`` or ``"100Gbps"``, and are normalized to seconds,
bits and bits per second on load.  Bare numbers are taken as SI base units.
"""

from __future__ import annotations

import json
import re
from copy import deepcopy
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import jsonschema

from .congestion_events import ConfigurationError

TIME_UNITS = {"ns": 1e-9, "us": 1e-6, "µs": 1e-6, "ms": 1e-3, "s": 1.0}
DATA_UNITS = {
    "bit": 1.0, "kbit": 1e3, "Mbit": 1e6, "Gbit": 1e9,
    "B": 8.0, "kB": 8e3, "KB": 8e3, "MB": 8e6, "GB": 8e9,
}
RATE_UNITS = {"bps": 1.0, "kbps": 1e3, "Mbps": 1e6, "Gbps": 1e9, "Tbps": 1e12}

_QTY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-zµ]*)\s*$")


def parse_quantity(value, units: dict[str, float], what: str) -> float:
    if isinstance(value, bool):
        raise ConfigurationError(f"{what}: expected a quantity, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    m = _QTY.match(str(value))
    if not m:
        raise ConfigurationError(f"{what}: cannot parse {value!r}")
    num, unit = m.groups()
    if not unit:
        return float(num)
    if unit not in units:
        raise ConfigurationError(f"{what}: unknown unit {unit!r} (expected one of {', '.join(units)})")
    return float(num) * units[unit]


def seconds(v, what="time"):
    return parse_quantity(v, TIME_UNITS, what)


def bits(v, what="data"):
    return parse_quantity(v, DATA_UNITS, what)


def bps(v, what="rate"):
    return parse_quantity(v, RATE_UNITS, what)


_Q = {"type": ["string", "number"]}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "nccc scenario",
    "type": "object",
    "required": ["scenario", "horizon"],
    "additionalProperties": False,
    "properties": {
        "scenario": {"enum": ["vegas", "aimd_fairness", "dcqcn_burst", "custom"]},
        "description": {"type": "string"},
        "horizon": _Q,
        "resolution": _Q,
        "seed": {"type": "integer", "minimum": 0},
        "output": {"type": "string"},
        "delta_r": _Q,
        "path_server": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["rate", "token_bucket", "window"]},
                "rate": _Q,
                "burst": _Q,
                "window": _Q,
            },
        },
        "sources": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "integer"},
                    "initial_burst": _Q,
                    "rate": _Q,
                    "bursts": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["at", "size"],
                            "additionalProperties": False,
                            "properties": {"at": _Q, "size": _Q},
                        },
                    },
                    "periodic_bursts": {
                        "type": "object",
                        "required": ["start", "period", "size", "count"],
                        "additionalProperties": False,
                        "properties": {"start": _Q, "period": _Q, "size": _Q,
                                       "count": {"type": "integer", "minimum": 0}},
                    },
                    "r_o": _Q,
                },
            },
        },
        "cca": {
            "type": "object",
            "required": ["kind"],
            "properties": {"kind": {"enum": ["rate_aimd", "window_aimd", "vegas"]}},
        },
        "dcqcn": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["pfc", "dcqcn", "dcqcn_nopfc"]},
                "modes": {"type": "array", "items": {"enum": ["pfc", "dcqcn", "dcqcn_nopfc"]}},
                "n_senders": {"type": "integer", "minimum": 1},
                "burst_size": _Q,
                "line_rate": _Q,
                "k_min": _Q,
                "k_max": _Q,
                "p_max": {"type": "number", "minimum": 0, "maximum": 1},
                "beta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "r_ai": _Q,
                "delta_tau_inc": _Q,
                "delta_tau_ecn": _Q,
                "tau_o": _Q,
                "red_unit": _Q,
            },
        },
    },
    "allOf": [
        {"if": {"properties": {"scenario": {"const": "dcqcn_burst"}}},
         "then": {"required": ["dcqcn", "seed"]},
         "else": {"required": ["sources", "cca", "path_server", "delta_r"]}},
    ],
}


@dataclass
class ScenarioConfig:
    """A validated config with every quantity in SI base units."""

    kind: str
    horizon: float
    resolution: float
    seed: int
    output: str
    raw: dict
    path: Path | None = None

    def section(self, name: str) -> dict:
        return self.raw.get(name, {})


def validate(raw: dict) -> list[str]:
    """Field-level schema diagnostics; empty when ``raw`` is valid."""
    v = jsonschema.Draft202012Validator(SCHEMA)
    out = []
    for e in sorted(v.iter_errors(raw), key=lambda e: list(e.absolute_path)):
        loc = "/".join(str(p) for p in e.absolute_path) or "<root>"
        out.append(f"{loc}: {e.message}")
    return out


def load_config(path, seed: int | None = None, mode: str | None = None) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(raw, seed=seed, mode=mode, path=path)


def from_dict(raw: dict, seed: int | None = None, mode: str | None = None, path=None) -> ScenarioConfig:
    errors = validate(raw)
    if errors:
        raise ConfigurationError("schema violation:\n  " + "\n  ".join(errors))
    raw = deepcopy(raw)
    if seed is not None:
        raw["seed"] = int(seed)
    if mode is not None:
        if raw["scenario"] != "dcqcn_burst":
            raise ConfigurationError("--mode only applies to dcqcn_burst scenarios")
        raw["dcqcn"]["mode"] = mode
        raw["dcqcn"].pop("modes", None)
    horizon = seconds(raw["horizon"], "horizon")
    if horizon <= 0:
        raise ConfigurationError("horizon: must be positive")
    res = seconds(raw.get("resolution", "1us"), "resolution")
    if res <= 0:
        raise ConfigurationError("resolution: must be positive")
    out = raw.get("output") or f"out/{raw['scenario']}"
    return ScenarioConfig(raw["scenario"], horizon, res, int(raw.get("seed", 0)), out, raw, path)


__all__ = [
    "SCHEMA",
    "ScenarioConfig",
    "bits",
    "bps",
    "from_dict",
    "load_config",
    "parse_quantity",
    "seconds",
    "validate",
]
