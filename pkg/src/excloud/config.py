"""Experiment configuration files.

A config is a JSON object validated against the schema of its subcommand
before any work starts; unknown keys are errors.  Every config may carry a
free-text ``provenance`` note (JSON has no comments) recording where its
tolerances came from.
"""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema

from . import rates

__all__ = ["SCHEMAS", "load_config", "validate", "resolve_env", "ConfigError", "BUILDERS"]


class ConfigError(ValueError):
    pass


BUILDERS = {
    "homogeneous": rates.homogeneous,
    "dog_sheep": rates.dog_sheep,
    "one_sheep_many_dogs": rates.one_sheep_many_dogs,
    "factorial": rates.factorial,
    "dog_and_n_sheep": rates.dog_and_n_sheep,
}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_int1 = {"type": "integer", "minimum": 1}
_int0 = {"type": "integer", "minimum": 0}
_seed = {"type": "integer", "minimum": 0, "maximum": 2**64 - 1}
_interval = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

_ENV = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"golden": {"enum": sorted(rates.GOLDEN)}},
            "required": ["golden"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "builder": {"enum": sorted(BUILDERS)},
                "args": {"type": "object"},
            },
            "required": ["builder"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "prefix": {"type": "array", "items": {"type": "array", "items": _nonneg,
                                                      "minItems": 2, "maxItems": 2}},
                "tail": {"type": "object"},
                "name": {"type": "string"},
            },
            "required": ["tail"],
            "additionalProperties": False,
        },
    ]
}

_INITIAL = {
    "oneOf": [
        {"const": "heaviside"},
        {
            "type": "object",
            "properties": {"kind": {"const": "heaviside"}},
            "required": ["kind"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "gaps"},
                "gaps": {"type": "object", "patternProperties": {"^[1-9][0-9]*$": _int0},
                         "additionalProperties": False},
                "x1": {"type": "integer"},
            },
            "required": ["kind", "gaps"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "product_geometric"},
                "rho": {"oneOf": [_nonneg, {"type": "array", "items": _nonneg}]},
                "n_trunc": _int1,
            },
            "required": ["kind", "rho", "n_trunc"],
            "additionalProperties": False,
        },
    ]
}

_COMMON = {
    "subcommand": {"type": "string"},
    "provenance": {"type": "string"},
    "env": _ENV,
    "seed": _seed,
    "replicates": _int1,
}


def _schema(props: dict, required=("env",)) -> dict:
    return {
        "type": "object",
        "properties": {**_COMMON, **props},
        "required": list(required),
        "additionalProperties": False,
    }


SCHEMAS = {
    "traffic": _schema(
        {
            "K": _int1,
            "v": {"type": "array", "items": _num},
            "finite_N": {"type": "array", "items": _int1},
            "expect": {
                "type": "object",
                "properties": {
                    "v0": _num,
                    "V_left": _num,
                    "V_right": _num,
                    "V_right_open": {"type": "boolean"},
                    "V_empty": {"type": "boolean"},
                    "VF": {"type": "string"},
                    "rtol": _pos,
                    "atol": _nonneg,
                },
                "additionalProperties": False,
            },
        }
    ),
    "classify": _schema({"tolerance": _pos, "Kmax": _int1}),
    "simulate": _schema(
        {
            "initial": _INITIAL,
            "horizon": _nonneg,
            "snapshot_times": {"type": "array", "items": _nonneg},
            "snapshot_count": _int1,
            "window": _int1,
            "hist_max": _int1,
            "burn_in": _nonneg,
            "boundary": {"enum": ["semi_infinite", "lower", "upper"]},
            "N": _int1,
            "customer_cap": _int1,
            "frontier_cap": _int1,
            "record_x1": {"type": "boolean"},
            "csv": {"type": "boolean"},
        },
        required=("env", "horizon"),
    ),
    "couple": _schema(
        {
            "mode": {"enum": ["sandwich", "two_class"]},
            "N": {"type": "array", "items": _int1, "minItems": 1},
            "window": _nonneg,
            "cap": _int1,
            "initial": _INITIAL,
            "lower": _INITIAL,
            "upper": _INITIAL,
            "random_pairs": {
                "type": "object",
                "properties": {"queues": _int1, "max_count": _int1},
                "required": ["queues", "max_count"],
                "additionalProperties": False,
            },
            "min_arrows": _int0,
            "csv": {"type": "boolean"},
            "csv_stride": _int1,
        },
        required=("env", "mode", "window"),
    ),
    "oracle": _schema(
        {
            "N": _int1,
            "C": _int1,
            "boundary": {"enum": ["lower", "finite"]},
            "mode": {"enum": ["stationary", "transient"]},
            "t": _nonneg,
            "initial_state": {"type": "array", "items": _int0},
            "max_boundary_mass": _pos,
            "compare_product_form": {
                "type": "object",
                "properties": {"truncate": {"type": "boolean"}, "tv_max": _pos},
                "required": ["tv_max"],
                "additionalProperties": False,
            },
        },
        required=("env", "N", "C", "mode"),
    ),
    "converge": _schema(
        {
            "mode": {"enum": ["time_average", "terminal_joint", "oracle_transient"]},
            "initial": _INITIAL,
            "horizon": _pos,
            "burn_in": _nonneg,
            "queues": _int1,
            "hist_max": _int1,
            "boundary": {"enum": ["semi_infinite", "lower", "upper"]},
            "N": _int1,
            "C": _int1,
            "customer_cap": _int1,
            "rho": {"oneOf": [{"enum": ["minimal", "finite"]},
                              {"type": "array", "items": _nonneg}]},
            "aggregate": {"enum": ["median", "pooled"]},
            "tv_max": _pos,
        },
        required=("env", "mode", "horizon", "tv_max"),
    ),
    "speed": _schema(
        {
            "horizon": _pos,
            "batches": _int1,
            "burn_in": _nonneg,
            "initial": _INITIAL,
            "expected": _num,
            "tolerance": _pos,
        },
        required=("env", "horizon"),
    ),
    "scaling": _schema(
        {
            "initial": _INITIAL,
            "t_min": _pos,
            "t_max": _pos,
            "slope_replicates": _int1,
            "median_slope": _interval,
            "terminal_ratio": _interval,
            "escape": {
                "type": "object",
                "properties": {
                    "level": {"type": "integer"},
                    "times": {"type": "array", "items": _pos, "minItems": 1},
                    "min_final_fraction": {"type": "number", "minimum": 0, "maximum": 1},
                },
                "required": ["level", "times"],
                "additionalProperties": False,
            },
        },
        required=("env", "t_min", "t_max"),
    ),
}


def validate(cfg: dict, subcommand: str) -> dict:
    if subcommand not in SCHEMAS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    try:
        jsonschema.validate(cfg, SCHEMAS[subcommand])
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {e.message}") from None
    if cfg.get("subcommand", subcommand) != subcommand:
        raise ConfigError(f"config is for {cfg['subcommand']!r}, not {subcommand!r}")
    return cfg


def load_config(path, subcommand: str) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return validate(cfg, subcommand)


def resolve_env(spec: dict) -> rates.RateEnvironment:
    if "golden" in spec:
        return rates.GOLDEN[spec["golden"]]
    if "builder" in spec:
        try:
            return BUILDERS[spec["builder"]](**spec.get("args", {}))
        except TypeError as e:
            raise ConfigError(f"bad builder args: {e}") from None
    try:
        return rates.RateEnvironment.from_dict(spec)
    except (KeyError, ValueError) as e:
        raise ConfigError(f"bad environment: {e}") from None
