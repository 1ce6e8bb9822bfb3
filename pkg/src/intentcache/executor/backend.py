"""Backend contract and signature execution."""

from __future__ import annotations

from dataclasses import replace
from typing import Any, Protocol, runtime_checkable

from ..errors import BackendError
from ..schema import SchemaModel
from ..signature import IntentSignature, normalize
from ..sqlcanon import render_sql
from ..table import ResultTable
from .reference import having_holds, output_columns
from .sqlbackend import coerce_value


@runtime_checkable
class Backend(Protocol):
    def execute(self, sql: str) -> ResultTable: ...

    def snapshot_id(self) -> str: ...


def conform(table: ResultTable, sig: IntentSignature, schema: SchemaModel) -> ResultTable:
    """Relabel a backend result with canonical names, types, roles and ordering."""
    columns = output_columns(sig, schema)
    if len(table.columns) != len(columns):
        raise BackendError(f"backend returned {len(table.columns)} columns, expected {len(columns)}")
    rows = [tuple(coerce_value(v, c.type) for v, c in zip(r, columns)) for r in table.rows]
    order_by: tuple[tuple[int, bool], ...] = ()
    limited = False
    pa = sig.post_agg
    if pa is not None and pa.order_by:
        names = [c.name for c in columns]
        order_by = tuple((names.index(o.expr), o.desc) for o in pa.order_by)
    if pa is not None and pa.limit is not None:
        # a full page may have been cut; a short page cannot have been
        limited = len(rows) >= pa.limit
    return ResultTable(columns, rows, order_by=order_by, limited=limited)


def execute_signature(sig: IntentSignature, backend: Any, schema: SchemaModel) -> ResultTable:
    """render_sql, then backend.execute, then conform to the signature's columns."""
    sig = normalize(sig)
    if sig.levels or not sig.has_having:
        return conform(backend.execute(render_sql(sig, schema)), sig, schema)
    # sqlite before 3.39 rejects HAVING without GROUP BY, so filter the single row here
    pa = sig.post_agg
    table = conform(backend.execute(render_sql(replace(sig, post_agg=None), schema)), sig, schema)
    names = table.names
    rows = [r for r in table.rows if all(having_holds(r[names.index(p.col)], p) for p in pa.having)]
    if pa.limit is not None:
        rows = rows[: pa.limit]
    return conform(ResultTable(table.columns, rows), sig, schema)
