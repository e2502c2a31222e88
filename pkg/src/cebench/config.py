"""JSON run-configuration parsing and schema validation for the CLI."""

from __future__ import annotations

import json

import jsonschema

from .channel import build_grid, load_profile, make_profile, preset_profile
from .generate import GeneratorSpec
from .impairments import ImpairmentConfig, ImpairmentToggles, dist_from_spec

import numpy as np


class ConfigError(ValueError):
    """Invalid run configuration (bad JSON, schema violation, bad values)."""


_DIST_SCHEMA = {
    "type": "object",
    "properties": {
        "type": {"enum": ["const", "uniform", "normal", "empirical"]},
        "value": {"type": "number"},
        "low": {"type": "number"},
        "high": {"type": "number"},
        "mean": {"type": "number"},
        "std": {"type": "number"},
        "path": {"type": "string"},
    },
    "required": ["type"],
}

_GRID_SCHEMA = {
    "type": "object",
    "properties": {
        "n_prb": {"type": "integer", "minimum": 1},
        "scs_hz": {"type": "number", "exclusiveMinimum": 0},
        "comb": {"enum": [1, 2]},
        "dmrs_symbols": {
            "type": "array", "items": {"type": "integer", "minimum": 0, "maximum": 13},
            "minItems": 1,
        },
        "n_ant": {"type": "integer", "minimum": 1},
        "symbol_duration_s": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["n_prb"],
}

_PROFILE_SCHEMA = {
    "type": "object",
    "properties": {
        "preset": {"enum": ["short", "medium", "long"]},
        "path": {"type": "string"},
        "delays_ns": {"type": "array", "items": {"type": "number"}},
        "powers_db": {"type": "array", "items": {"type": "number"}},
        "doppler_hz": {"type": "number", "minimum": 0},
        "rician_k": {
            "anyOf": [
                {"type": "number", "minimum": 0},
                {"type": "array", "items": {"type": "number", "minimum": 0}},
            ]
        },
    },
}

_IMPAIRMENT_SCHEMA = {
    "type": "object",
    "properties": {
        "to_dist": _DIST_SCHEMA,
        "cfo_dist": _DIST_SCHEMA,
        "rx_filter_db": {"type": "array", "items": {"type": "number"}},
        "dc_indices": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "dc_leak_amp": {"type": "number", "minimum": 0},
        "ant_gains_db": {"type": "array", "items": {"type": "number"}},
        "snr_grid_db": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "toggles": {
            "type": "object",
            "properties": {k: {"type": "boolean"} for k in
                           ("to", "cfo", "rx_filter", "dc", "ant_scale", "awgn")},
            "additionalProperties": False,
        },
    },
}

GENERATE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "generate run configuration",
    "type": "object",
    "properties": {
        "grid": _GRID_SCHEMA,
        "profile": _PROFILE_SCHEMA,
        "impairments": _IMPAIRMENT_SCHEMA,
        "n_records": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
    },
    "required": ["grid", "n_records"],
}

ABLATE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "ablation run configuration",
    "type": "object",
    "properties": {
        "cases": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "name": {"enum": ["All", "TO Off", "Filt. Off", "Scaling Off"]},
                    "model": {"type": "string"},
                },
                "required": ["name", "model"],
            },
            "minItems": 1,
        },
        "snr_grid_db": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "test": {
            "type": "object",
            "properties": {
                "grid": _GRID_SCHEMA,
                "profile": _PROFILE_SCHEMA,
                "impairments": _IMPAIRMENT_SCHEMA,
            },
            "required": ["grid"],
        },
        "records_per_snr": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
    },
    "required": ["cases", "snr_grid_db", "test", "records_per_snr"],
}


def load_json_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")


def validate(obj: dict, schema: dict, path="config") -> None:
    try:
        jsonschema.validate(obj, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "(root)"
        raise ConfigError(f"{path}: schema violation at {where}: {exc.message}")


def parse_grid(obj: dict):
    try:
        return build_grid(
            n_prb=obj["n_prb"],
            scs_hz=obj.get("scs_hz", 30e3),
            comb=obj.get("comb", 2),
            dmrs_symbols=obj.get("dmrs_symbols", (2, 7, 11)),
            n_ant=obj.get("n_ant", 2),
            symbol_duration_s=obj.get("symbol_duration_s"),
        )
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}")


def parse_profile(obj: dict | None):
    obj = obj or {"preset": "medium"}
    try:
        if "path" in obj:
            return load_profile(obj["path"])
        if "preset" in obj:
            return preset_profile(
                obj["preset"],
                doppler_hz=obj.get("doppler_hz", 0.0),
                rician_k=obj.get("rician_k", 0.0),
            )
        delays = [d * 1e-9 for d in obj["delays_ns"]]
        powers = [10 ** (db / 10.0) for db in obj["powers_db"]]
        return make_profile(
            delays, powers,
            rician_k=obj.get("rician_k", 0.0), doppler_hz=obj.get("doppler_hz", 0.0),
        )
    except (KeyError, ValueError, OSError) as exc:
        raise ConfigError(f"profile: {exc}")


def parse_impairments(obj: dict | None, n_ant: int) -> ImpairmentConfig:
    obj = obj or {}
    try:
        kwargs = {}
        if "to_dist" in obj:
            kwargs["to_dist"] = dist_from_spec(obj["to_dist"])
        if "cfo_dist" in obj:
            kwargs["cfo_dist"] = dist_from_spec(obj["cfo_dist"])
        if "rx_filter_db" in obj:
            kwargs["rx_filter"] = np.asarray(
                [10 ** (db / 20.0) for db in obj["rx_filter_db"]], dtype=complex
            )
        if "dc_indices" in obj:
            kwargs["dc_indices"] = tuple(int(i) for i in obj["dc_indices"])
        if "dc_leak_amp" in obj:
            kwargs["dc_leak_amp"] = float(obj["dc_leak_amp"])
        kwargs["ant_gains_db"] = tuple(
            float(g) for g in obj.get("ant_gains_db", [0.0] * n_ant)
        )
        if len(kwargs["ant_gains_db"]) != n_ant:
            raise ConfigError(
                f"impairments: ant_gains_db needs {n_ant} entries, "
                f"got {len(kwargs['ant_gains_db'])}"
            )
        if "snr_grid_db" in obj:
            kwargs["snr_grid_db"] = tuple(float(s) for s in obj["snr_grid_db"])
        if "toggles" in obj:
            kwargs["toggles"] = ImpairmentToggles(**obj["toggles"])
        return ImpairmentConfig(**kwargs)
    except (KeyError, ValueError, OSError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"impairments: {exc}")


def parse_generator_spec(obj: dict) -> tuple[GeneratorSpec, int, int]:
    """Returns (spec, n_records, seed) from a validated generate config."""
    grid = parse_grid(obj["grid"])
    profile = parse_profile(obj.get("profile"))
    impairments = parse_impairments(obj.get("impairments"), grid.n_ant)
    return (
        GeneratorSpec(grid=grid, profile=profile, impairments=impairments),
        int(obj["n_records"]),
        int(obj.get("seed", 0)),
    )
