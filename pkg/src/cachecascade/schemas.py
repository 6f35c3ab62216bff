"""Schemas of every file the CLI writes, and a checker for them."""
from __future__ import annotations

import csv
import fnmatch
import json
import math
import os

import jsonschema

__all__ = ["JSON_SCHEMAS", "CSV_COLUMNS", "schema_for", "validate_file", "OutputInvalid"]


class OutputInvalid(ValueError):
    """A file does not match its documented schema."""


_num = {"type": "number"}
_num_or_null = {"type": ["number", "null"]}
_int = {"type": "integer", "minimum": 0}

_level_model = {
    "type": "object",
    "required": ["level", "t_c", "residual", "iterations", "capacity", "degenerate", "items",
                 "input_rate", "hit_ratio", "hit_ratio_origin", "miss_rate", "pruned", "empty"],
    "additionalProperties": False,
    "properties": {
        "level": {"type": "integer", "minimum": 1},
        "t_c": _num_or_null,
        "residual": _num_or_null,
        "iterations": _int,
        "capacity": {"type": "integer", "minimum": 1},
        "degenerate": {"type": "boolean"},
        "items": _int,
        "input_rate": _num,
        "hit_ratio": _num_or_null,
        "hit_ratio_origin": _num_or_null,
        "miss_rate": _num,
        "pruned": _int,
        "empty": {"type": "boolean"},
        "max_series_terms": {"type": ["integer", "null"]},
        "table": {"type": ["string", "null"]},
        "densities": {"type": "array", "items": {"type": "string"}},
    },
}

_scenario_echo = {"type": "object"}

SOLVE = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "solve.json",
    "type": "object",
    "required": ["kind", "scenario", "numerics", "levels"],
    "additionalProperties": False,
    "properties": {
        "kind": {"const": "solve"},
        "scenario": {"type": "string"},
        "numerics": {"type": "object"},
        "levels": {"type": "array", "minItems": 1, "items": _level_model},
        "hits_table": {"type": "string"},
    },
}

SIMULATE = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "simulate.json",
    "type": "object",
    "required": ["kind", "scenario", "seed", "warmup", "measured", "elapsed", "levels", "traces"],
    "additionalProperties": False,
    "properties": {
        "kind": {"const": "simulate"},
        "scenario": {"type": "string"},
        "seed": {"type": "integer"},
        "warmup": _int,
        "measured": {"type": "integer", "minimum": 1},
        "elapsed": _num,
        "levels": {"type": "array", "minItems": 1, "items": {
            "type": "object",
            "required": ["level", "requests", "hits", "misses", "hit_ratio", "items"],
            "additionalProperties": False,
            "properties": {
                "level": {"type": "integer", "minimum": 1},
                "requests": _int, "hits": _int, "misses": _int,
                "hit_ratio": _num_or_null,
                "items": {"type": "object", "required": ["id", "hits", "misses"],
                          "properties": {k: {"type": "array", "items": {"type": "integer"}}
                                         for k in ("id", "hits", "misses")}},
            }}},
        "traces": {"type": "array", "items": {
            "type": "object",
            "required": ["level", "item", "samples", "lag1_autocorrelation"],
            "properties": {"level": {"type": "integer"}, "item": {"type": "integer"},
                           "samples": _int, "lag1_autocorrelation": _num_or_null,
                           "empty": {"type": "boolean"}}}},
        "traces_table": {"type": ["string", "null"]},
    },
}

COMPARE = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "compare.json",
    "type": "object",
    "required": ["kind", "scenario", "levels", "max_abs_delta", "ks"],
    "additionalProperties": False,
    "properties": {
        "kind": {"const": "compare"},
        "scenario": {"type": "string"},
        "min_requests": _int,
        "levels": {"type": "array", "items": {
            "type": "object",
            "required": ["level", "H_model", "H_sim", "delta", "max_abs_item_delta"],
            "properties": {"level": {"type": "integer"}, "H_model": _num_or_null, "H_sim": _num_or_null,
                           "delta": _num_or_null, "max_abs_item_delta": _num_or_null,
                           "items_compared": _int}}},
        "max_abs_delta": _num_or_null,
        "ks": {"type": "array", "items": {
            "type": "object",
            "required": ["level", "item", "samples", "statistic", "pvalue", "below_tc"],
            "properties": {"level": {"type": "integer"}, "item": {"type": "integer"}, "samples": _int,
                           "statistic": _num_or_null, "pvalue": _num_or_null, "below_tc": _num_or_null}}},
        "table": {"type": "string"},
    },
}

JSON_SCHEMAS = {"solve.json": SOLVE, "simulate.json": SIMULATE, "compare.json": COMPARE}

# column name -> cell type ("int", "float", "str"); "float" admits inf/nan
CSV_COLUMNS = {
    "level*.csv": [("x", "int"), ("H", "float"), ("miss_mean", "float"), ("miss_var", "float"),
                   ("miss_cv2", "float"), ("q_miss", "float")],
    "pdf_*.csv": [("t", "float"), ("pdf", "float")],
    "traces.csv": [("level", "int"), ("item", "int"), ("gap", "float")],
    "compare.csv": [("level", "str"), ("item", "str"), ("H_model", "float"), ("H_sim", "float"),
                    ("delta", "float"), ("sim_requests", "int")],
    "sweep.csv": [("scenario", "str"), ("family", "str"), ("cv", "float"), ("level", "int"),
                  ("H_model", "float"), ("H_sim", "float"), ("delta", "float")],
}


def schema_for(path):
    """Return ``("json", schema)``, ``("csv", columns)``, ``("hits", None)`` or ``("scenario", None)``."""
    base = os.path.basename(path)
    if base in JSON_SCHEMAS:
        return "json", JSON_SCHEMAS[base]
    if base == "hits.csv":
        return "hits", None
    for pattern, cols in CSV_COLUMNS.items():
        if fnmatch.fnmatch(base, pattern):
            return "csv", cols
    if base.endswith((".yaml", ".yml")):
        return "scenario", None
    raise OutputInvalid(f"{path}: no schema is registered for this file name")


def _cell(value, kind, where):
    if kind == "str":
        return
    try:
        v = float(value) if kind == "float" else int(value)
    except ValueError:
        raise OutputInvalid(f"{where}: expected {kind}, got {value!r}") from None
    if kind == "float" and value.strip().lower() not in ("inf", "nan", "-inf") and not math.isfinite(v):
        raise OutputInvalid(f"{where}: bad number {value!r}")


def _check_csv(path, columns):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise OutputInvalid(f"{path}: empty file")
    expect = [c for c, _ in columns]
    if rows[0] != expect:
        raise OutputInvalid(f"{path}:1: header {rows[0]} != {expect}")
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(columns):
            raise OutputInvalid(f"{path}:{i}: expected {len(columns)} cells, got {len(row)}")
        for value, (name, kind) in zip(row, columns):
            if value == "" and kind == "float":
                continue
            _cell(value, kind, f"{path}:{i}:{name}")


def _check_hits(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["x"] or len(rows[0]) < 2 or any(
            c != f"H_level{k}" for k, c in enumerate(rows[0][1:], start=1)):
        raise OutputInvalid(f"{path}:1: header must be x, H_level1, ..., H_levelL")
    _check_csv(path, [("x", "int")] + [(c, "float") for c in rows[0][1:]])


def validate_file(path) -> str:
    """Check ``path`` against its schema; returns the schema name, raises :class:`OutputInvalid`."""
    kind, schema = schema_for(path)
    if kind == "json":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise OutputInvalid(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
        try:
            jsonschema.validate(doc, schema)
        except jsonschema.ValidationError as exc:
            loc = "/".join(str(p) for p in exc.absolute_path)
            raise OutputInvalid(f"{path}: {loc or '<root>'}: {exc.message}") from None
        return schema["title"]
    if kind == "hits":
        _check_hits(path)
        return "hits.csv"
    if kind == "scenario":
        from .scenario import ScenarioError, load_scenario

        try:
            load_scenario(path)
        except ScenarioError as exc:
            raise OutputInvalid(str(exc)) from None
        return "scenario v1"
    _check_csv(path, schema)
    return os.path.basename(path)
