"""Bundled JSON Schemas and validation helpers.

Every serialized surface (records, judgments, matrices, artifacts, API
responses, metrics reports) has a schema file in this package so other
tools can validate our output without importing Python code.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from typing import Any

from jsonschema import Draft202012Validator

from ..errors import InvalidInput

__all__ = ["SCHEMA_NAMES", "load_schema", "iter_errors", "validate_payload"]

SCHEMA_NAMES = (
    "record",
    "candidate",
    "judgment",
    "flag",
    "group",
    "matrix",
    "artifact",
    "api_error",
    "health",
    "metrics_report",
)


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict[str, Any]:
    if name not in SCHEMA_NAMES:
        raise InvalidInput(
            f"unknown schema {name!r}; expected one of {', '.join(SCHEMA_NAMES)}")
    raw = resources.files(__name__).joinpath(f"{name}.schema.json").read_text("utf-8")
    return json.loads(raw)


@lru_cache(maxsize=None)
def _validator(name: str) -> Draft202012Validator:
    schema = load_schema(name)
    Draft202012Validator.check_schema(schema)
    return Draft202012Validator(schema)


def iter_errors(name: str, payload: Any) -> list[str]:
    """All validation problems as readable strings, empty when valid."""
    return [
        f"{'/'.join(str(p) for p in error.absolute_path) or '<root>'}: "
        f"{error.message}"
        for error in _validator(name).iter_errors(payload)
    ]


def validate_payload(name: str, payload: Any) -> None:
    """Raise InvalidInput with all problems when payload fails the schema."""
    problems = iter_errors(name, payload)
    if problems:
        raise InvalidInput(
            f"payload failed {name} schema: " + "; ".join(problems))
