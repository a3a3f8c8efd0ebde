"""Schemas for every file the command-line driver writes.

JSON summaries are checked with :mod:`jsonschema`.  CSV tables are checked
against a column list and a per-column type (every row of tables the
driver writes is checked; the event log is replay-validated instead).
"""

from __future__ import annotations

import re

import jsonschema

_num = {"anyOf": [{"type": "number"}, {"enum": ["inf", "-inf", "nan"]}]}
_num_or_null = {"anyOf": [_num, {"type": "null"}]}

JSON_SCHEMAS = {
    "manifest": {
        "type": "object",
        "required": ["subcommand", "argv", "config_sha256", "seed", "versions", "outputs", "created"],
        "properties": {
            "subcommand": {"type": "string"},
            "argv": {"type": "array", "items": {"type": "string"}},
            "config_sha256": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
            "seed": {"type": ["integer", "null"]},
            "versions": {"type": "object", "additionalProperties": {"type": "string"}},
            "outputs": {"type": "object", "additionalProperties": {"type": "string"}},
            "created": {"type": "string"},
        },
    },
    "error": {
        "type": "object",
        "required": ["error", "kind", "message", "exit_code"],
        "properties": {"error": {"const": True}, "kind": {"type": "string"},
                       "message": {"type": "string"}, "exit_code": {"enum": [2, 3]}},
    },
    "rate": {
        "type": "object",
        "required": ["which", "value", "tail_bound", "terms"],
        "properties": {"which": {"type": "string"}, "value": _num, "tail_bound": _num,
                       "terms": {"type": "array", "items": _num}},
    },
    "rare_event": {
        "type": "object",
        "required": ["event", "n", "naive", "is"],
        "properties": {
            "event": {"type": "string"}, "n": {"type": "integer"},
            "naive": {"$ref": "#/$defs/estimate"}, "is": {"$ref": "#/$defs/estimate"},
        },
        "$defs": {"estimate": {
            "type": "object",
            "required": ["p_hat", "stderr", "ess", "reps", "excluded"],
            "properties": {"p_hat": _num, "stderr": _num, "ess": _num,
                           "reps": {"type": "integer"}, "excluded": {"type": "integer"}},
        }},
    },
    "lln": {
        "type": "object",
        "required": ["n", "reps", "tv"],
        "properties": {"n": {"type": "integer"}, "reps": {"type": "integer"},
                       "tv": {"type": "array", "items": {"type": "number"}},
                       "tv_tail_law": {"type": "array", "items": {"type": "number"}}},
    },
    "minimize": {
        "type": "object",
        "required": ["constraints", "value", "residual", "measure", "start_values"],
        "properties": {"constraints": {"type": "string"}, "value": _num, "residual": _num,
                       "measure": {"type": "array", "items": {"type": "number"}},
                       "start_values": {"type": "array", "items": _num}},
    },
    "contract": {
        "type": "object",
        "required": ["J_min", "I_value", "gap"],
        "properties": {"J_min": _num, "I_value": _num, "gap": _num},
    },
}

_INT = r"-?\d+"
_FLOAT = r"[-+]?(\d+\.?\d*([eE][-+]?\d+)?|\.\d+([eE][-+]?\d+)?|inf|nan)"
_NAME = r"[^,]+"
_OPT = r"[^,]*"

CSV_SCHEMAS = {
    "degree_measure": ["k", "value"],
    "pair_measure": ["k", "parent_color", "child_color", "value"],
    "path_measure": ["t", "k", "parent_color", "child_color", "value"],
    "lln": ["replica", "n", "kmax", "tv", "tv_tail_law"],
    "oracle_outcomes": ["outcome", "vertex_colors", "events", "numerator", "denominator"],
    "oracle_law": ["measure", "numerator", "denominator"],
    "decay_scan": ["n", "p_hat", "stderr", "rate", "method", "exact", "predicted"],
}

_COLUMN_TYPES = {
    "k": rf"({_INT}|tail|weight)", "t": _FLOAT, "value": _FLOAT, "parent_color": _NAME, "child_color": _NAME,
    "replica": _INT, "n": _INT, "kmax": _INT, "tv": _FLOAT, "tv_tail_law": _FLOAT,
    "outcome": _INT, "vertex_colors": _NAME, "events": _NAME, "numerator": _INT,
    "denominator": _INT, "measure": _NAME, "p_hat": _FLOAT, "stderr": _FLOAT,
    "rate": _FLOAT, "method": r"(oracle|is|naive)", "exact": rf"({_INT}/{_INT})?", "predicted": _OPT,
}


class SchemaError(ValueError):
    pass


def validate_json(kind: str, obj) -> None:
    try:
        jsonschema.validate(obj, JSON_SCHEMAS[kind])
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"{kind} output violates its schema: {exc.message}") from exc


def validate_csv(kind: str, text: str) -> None:
    columns = CSV_SCHEMAS[kind]
    lines = text.rstrip("\n").split("\n")
    if lines[0] != ",".join(columns):
        raise SchemaError(f"{kind}: header {lines[0]!r} != {','.join(columns)!r}")
    patterns = [re.compile(rf"^{_COLUMN_TYPES[c]}$") for c in columns]
    for i, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != len(columns):
            raise SchemaError(f"{kind}: line {i} has {len(fields)} fields, expected {len(columns)}")
        for col, pat, val in zip(columns, patterns, fields):
            if not pat.match(val):
                raise SchemaError(f"{kind}: line {i} column {col!r} has invalid value {val!r}")
