"""JSON Schema for signature documents returned by NL clients."""

from __future__ import annotations

import json
from decimal import Decimal
from typing import Any

import jsonschema

from ..errors import MalformedResponse
from ..schema import NUMERIC_TYPES, SchemaModel
from ..signature import AGGREGATES, OPERATORS

_DATE = {"type": "string", "pattern": r"^\d{4}-\d{2}-\d{2}$"}
_SCALAR = {"type": ["string", "number"]}


def document_schema(schema: SchemaModel) -> dict[str, Any]:
    """Response schema with the controlled vocabulary baked in as enums."""
    columns = sorted(schema.all_columns())
    numeric = sorted(c for c in columns if schema.column_type(c) in NUMERIC_TYPES)
    facts = sorted(f.name for f in schema.fact_tables)
    measure_names = [f"{a}({c})" for a in ("SUM", "MIN", "MAX", "AVG", "COUNT") for c in numeric] + ["COUNT(*)"]
    measure_names += [f"COUNT(DISTINCT {c})" for c in columns]
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "type": "object",
        "additionalProperties": False,
        "required": ["fact", "measures", "levels", "filters"],
        "properties": {
            "fact": {"enum": facts},
            "measures": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["agg", "expr"],
                    "properties": {"agg": {"enum": list(AGGREGATES)}, "expr": {"enum": columns + ["*"]}},
                },
            },
            "levels": {"type": "array", "items": {"enum": columns}},
            "filters": {
                "type": "array",
                "items": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["col", "op"],
                    "properties": {
                        "col": {"enum": columns},
                        "op": {"enum": list(OPERATORS)},
                        "val": {"anyOf": [_SCALAR, {"type": "array", "items": _SCALAR, "minItems": 1}]},
                    },
                },
            },
            "time_window": {
                "type": "object",
                "additionalProperties": False,
                "required": ["start", "end"],
                "properties": {"start": _DATE, "end": _DATE, "open_ended": {"type": "boolean"}},
            },
            "post_agg": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "having": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["col", "op", "val"],
                            "properties": {
                                "col": {"enum": measure_names},
                                "op": {"enum": ["=", "!=", "<", "<=", ">", ">="]},
                                "val": {"type": "number"},
                            },
                        },
                    },
                    "order_by": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["expr", "dir"],
                            "properties": {"expr": {"enum": columns + measure_names}, "dir": {"enum": ["ASC", "DESC"]}},
                        },
                    },
                    "limit": {"type": "integer", "minimum": 0},
                },
            },
            "metric_id": {"type": "string"},
        },
    }


class DocumentValidator:
    def __init__(self, schema: SchemaModel):
        self.schema_doc = document_schema(schema)
        self.text = json.dumps(self.schema_doc, sort_keys=True, indent=1)
        self._validator = jsonschema.Draft202012Validator(self.schema_doc)

    def check(self, doc: Any) -> None:
        # Decimal is not a JSON Schema number for jsonschema; validate a float view
        errors = sorted(self._validator.iter_errors(_floatify(doc)), key=lambda e: list(e.absolute_path))
        if errors:
            e = errors[0]
            where = "/".join(str(p) for p in e.absolute_path) or "<root>"
            raise MalformedResponse(f"{where}: {e.message}")


def _floatify(doc: Any) -> Any:
    if isinstance(doc, dict):
        return {k: _floatify(v) for k, v in doc.items()}
    if isinstance(doc, list):
        return [_floatify(v) for v in doc]
    if isinstance(doc, Decimal):
        return float(doc)
    return doc
