"""Instance file schemas and loaders.

Every loader rejects malformed files with :class:`SchemaError`, whose message
names the file and the JSON path of the offending field.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import jsonschema

from .cloudalloc import CloudInstance
from .joinorder import Query, log_coefficients
from .txsched import Workload

__all__ = ["SchemaError", "SCHEMAS", "PROBLEMS", "load_json", "load_instance", "parse_instance"]

PROBLEMS = ("join", "tx", "cloud")

_NUMBER = {"type": "number"}
_STRING_LIST = {"type": "array", "items": {"type": "string"}}

SCHEMAS: dict[str, dict[str, Any]] = {
    "join": {
        "type": "object",
        "required": ["relations"],
        "properties": {
            "relations": {
                "type": "array",
                "minItems": 2,
                "items": {
                    "type": "object",
                    "required": ["name", "cardinality"],
                    "properties": {"name": {"type": "string"}, "cardinality": {"type": "number", "minimum": 1}},
                },
            },
            "predicates": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["a", "b", "selectivity"],
                    "properties": {
                        "a": {"type": "integer", "minimum": 0},
                        "b": {"type": "integer", "minimum": 0},
                        "selectivity": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                    },
                },
            },
        },
    },
    "tx": {
        "type": "object",
        "required": ["transactions"],
        "properties": {
            "isolation": {"enum": ["serializable", "snapshot"]},
            "transactions": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["id"],
                    "properties": {"id": {"type": "string"}, "reads": _STRING_LIST, "writes": _STRING_LIST},
                },
            },
        },
    },
    "cloud": {
        "type": "object",
        "required": ["tasks", "vms", "pms"],
        "properties": {
            "unit": {"type": "number", "exclusiveMinimum": 0},
            "tasks": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["id", "demand"],
                    "properties": {"id": {"type": "string"}, "demand": {"type": "number", "exclusiveMinimum": 0}},
                },
            },
            "vms": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["id", "capacity", "footprint"],
                    "properties": {
                        "id": {"type": "string"},
                        "capacity": {"type": "number", "exclusiveMinimum": 0},
                        "footprint": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
            },
            "pms": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["id", "capacity", "carbon_rate"],
                    "properties": {
                        "id": {"type": "string"},
                        "capacity": {"type": "number", "exclusiveMinimum": 0},
                        "carbon_rate": {"type": "number", "minimum": 0},
                    },
                },
            },
        },
    },
}


class SchemaError(ValueError):
    """An instance file does not match its schema."""


def _field(err: jsonschema.ValidationError) -> str:
    path = err.json_path
    if err.validator == "required":
        missing = err.message.split("'")[1] if "'" in err.message else "?"
        path = f"{path}.{missing}"
    return path


def load_json(path: str | Path) -> Any:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc


def parse_instance(problem: str, data: Any, source: str = "<data>"):
    """Validate ``data`` against the problem schema and build the domain object."""
    if problem not in SCHEMAS:
        raise ValueError(f"unknown problem {problem!r}; expected one of {PROBLEMS}")
    validator = jsonschema.Draft202012Validator(SCHEMAS[problem])
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise SchemaError(f"{source}: field {_field(err)}: {err.message}")
    try:
        if problem == "join":
            q = Query.from_dict(data)
            log_coefficients(q)
            return q
        if problem == "tx":
            return Workload.from_dict(data)
        return CloudInstance.from_dict(data, unit=float(data.get("unit", 1.0)))
    except ValueError as exc:
        raise SchemaError(f"{source}: {exc}") from exc


def load_instance(problem: str, path: str | Path):
    return parse_instance(problem, load_json(path), str(path))
