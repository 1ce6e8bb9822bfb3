"""Signature validation between canonicalization and cache lookup.

Checks run in a fixed order so bypass details are deterministic:
columns and types, time window, join path, residual constructs.
"""

from __future__ import annotations

import datetime as dt

from .errors import AmbiguousJoinPath, Bypass, BypassCode, UnreachableColumn
from .schema import NUMERIC_TYPES, SchemaModel, resolve_join_path
from .signature import COMPARISONS, LIST_OPS, NULL_OPS, IntentSignature

# a failed validation never stores anything; kept as a constant on purpose
STORE_ON_VALIDATION_FAILURE = False


def _literal_fits(ctype: str, value) -> bool:
    if ctype in NUMERIC_TYPES:
        return not isinstance(value, (str, bool))
    if ctype == "text":
        return isinstance(value, str)
    if ctype == "date":
        if not isinstance(value, str):
            return False
        try:
            dt.date.fromisoformat(value)
        except ValueError:
            return False
        return len(value) == 10
    return False


def _check_columns(sig: IntentSignature, schema: SchemaModel) -> None:
    if not schema.has_table(sig.fact) or not schema.is_fact(sig.fact):
        raise Bypass(BypassCode.UNKNOWN_COLUMN, f"unknown fact table {sig.fact!r}")
    for m in sig.measures:
        if m.expr == "*":
            continue
        ctype = schema.column_type(m.expr)
        if ctype is None:
            raise Bypass(BypassCode.UNKNOWN_COLUMN, m.expr)
        if m.agg in ("SUM", "AVG") and ctype not in NUMERIC_TYPES:
            raise Bypass(BypassCode.TYPE_MISMATCH, f"{m.agg} over {ctype} column {m.expr}")
    for level in sig.levels:
        if schema.column_type(level) is None:
            raise Bypass(BypassCode.UNKNOWN_COLUMN, level)
    time_col = schema.time_column(sig.fact)
    for p in sig.filters:
        ctype = schema.column_type(p.col)
        if ctype is None:
            raise Bypass(BypassCode.UNKNOWN_COLUMN, p.col)
        if p.col == time_col:
            raise Bypass(BypassCode.UNRESOLVED_TIME_WINDOW, f"filter on time column {p.col} outside the window")
        if p.op in NULL_OPS:
            continue
        if p.op == "LIKE" and ctype != "text":
            raise Bypass(BypassCode.TYPE_MISMATCH, f"LIKE on {ctype} column {p.col}")
        values = p.val if p.op in LIST_OPS else (p.val,)
        for v in values:
            if not _literal_fits(ctype, v):
                raise Bypass(BypassCode.TYPE_MISMATCH, f"literal {v!r} for {ctype} column {p.col}")
    pa = sig.post_agg
    if pa is not None:
        names = set(sig.measure_names)
        for p in pa.having:
            if p.col not in names:
                raise Bypass(BypassCode.UNKNOWN_COLUMN, f"HAVING on {p.col}, which is not a selected measure")
            if p.op not in COMPARISONS or isinstance(p.val, str):
                raise Bypass(BypassCode.TYPE_MISMATCH, f"HAVING {p.col} {p.op} {p.val!r}")
        outputs = set(sig.output_names)
        for o in pa.order_by:
            if o.expr not in outputs:
                raise Bypass(BypassCode.UNKNOWN_COLUMN, f"ORDER BY {o.expr}, which is not an output column")


def _check_window(sig: IntentSignature, schema: SchemaModel) -> None:
    if sig.time_window is None:
        return
    if schema.time_column(sig.fact) is None:
        raise Bypass(BypassCode.UNRESOLVED_TIME_WINDOW, f"fact {sig.fact!r} has no time column")
    w = sig.time_window
    if not (isinstance(w.start, dt.date) and isinstance(w.end, dt.date)) or not w.start < w.end:
        raise Bypass(BypassCode.UNRESOLVED_TIME_WINDOW, "time window lacks concrete bounds")


def _check_join_path(sig: IntentSignature, schema: SchemaModel) -> None:
    try:
        resolve_join_path(schema, sig.fact, sig.referenced_columns())
    except AmbiguousJoinPath as exc:
        raise Bypass(BypassCode.AMBIGUOUS_JOIN_PATH, str(exc)) from exc
    except UnreachableColumn as exc:
        raise Bypass(BypassCode.UNKNOWN_COLUMN, str(exc)) from exc


def _check_residual(sig: IntentSignature) -> None:
    if not sig.measures:
        raise Bypass(BypassCode.UNSUPPORTED_CONSTRUCT, "signature has no measures")
    pa = sig.post_agg
    if pa is not None and pa.limit is not None and pa.limit < 0:
        raise Bypass(BypassCode.UNSUPPORTED_CONSTRUCT, "negative LIMIT")


def validate_signature(sig: IntentSignature, schema: SchemaModel) -> None:
    """Return None when valid; raise Bypass otherwise. Never mutates ``sig``."""
    _check_columns(sig, schema)
    _check_window(sig, schema)
    _check_join_path(sig, schema)
    _check_residual(sig)


def validation_verdict(sig: IntentSignature, schema: SchemaModel) -> Bypass | None:
    try:
        validate_signature(sig, schema)
    except Bypass as exc:
        return exc
    return None
