"""Generic SQL-over-connection backend, with an sqlite adapter out of the box."""

from __future__ import annotations

import datetime as dt
import sqlite3
import threading
from typing import Any

from ..errors import BackendError
from ..schema import SchemaModel, dimension_path
from ..table import Column, ResultTable
from .star import StarData

_SQL_TYPES = {"int": "INTEGER", "float": "REAL", "text": "TEXT", "date": "TEXT"}


def _infer_type(values: list[Any]) -> str:
    kinds = {type(v) for v in values if v is not None}
    if not kinds:
        return "text"
    if kinds <= {int}:
        return "int"
    if kinds <= {int, float}:
        return "float"
    return "text"


class SqlBackend:
    """Runs SQL text on a DB-API connection.

    ``connect`` is a zero-argument callable returning a connection; each
    thread gets its own. Dates live as ISO-8601 text, which orders the same
    way as the dates themselves.
    """

    name = "sql"

    def __init__(self, connect, schema: SchemaModel | None = None, snapshot: str = "0"):
        self._connect = connect
        self.schema = schema
        self._snapshot = snapshot
        self._local = threading.local()
        self.executions = 0

    def _conn(self):
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = self._connect()
            self._local.conn = conn
        return conn

    def snapshot_id(self) -> str:
        return self._snapshot

    def execute(self, sql: str) -> ResultTable:
        self.executions += 1
        try:
            cur = self._conn().execute(sql)
            rows = [tuple(r) for r in cur.fetchall()]
            names = [d[0] for d in cur.description or ()]
        except Exception as exc:  # DB-API drivers raise their own hierarchies
            raise BackendError(f"{type(exc).__name__}: {exc}") from exc
        cols = tuple(Column(n, _infer_type([r[i] for r in rows])) for i, n in enumerate(names))
        return ResultTable(cols, rows)

    def level_pairs(self, child: str, parent: str) -> list[tuple[Any, Any]]:
        if self.schema is None:
            raise BackendError("level_pairs needs a schema")
        ct, pt = child.partition(".")[0], parent.partition(".")[0]
        joins = "".join(
            f" JOIN {s.to_table} ON {s.from_table}.{s.fk_column} = {s.to_table}.{s.key_column}"
            for s in dimension_path(self.schema, ct, pt).steps
        )
        table = self.execute(f"SELECT DISTINCT {child}, {parent} FROM {ct}{joins}")
        ctype, ptype = self.schema.column_type(child), self.schema.column_type(parent)
        return [(_coerce(c, ctype), _coerce(p, ptype)) for c, p in table.rows]

    @classmethod
    def sqlite(cls, path: str, schema: SchemaModel | None = None, snapshot: str = "0") -> "SqlBackend":
        def connect():
            conn = sqlite3.connect(path, check_same_thread=False)
            conn.execute("PRAGMA case_sensitive_like = ON")
            return conn

        return cls(connect, schema, snapshot)

    @classmethod
    def from_star(cls, data: StarData) -> "SqlBackend":
        """Private in-memory sqlite copy of ``data`` (one shared-cache database)."""
        uri = f"file:intentcache_{id(data)}_{data.fingerprint()}?mode=memory&cache=shared"

        def connect():
            conn = sqlite3.connect(uri, uri=True, check_same_thread=False)
            conn.execute("PRAGMA case_sensitive_like = ON")
            return conn

        keeper = connect()
        populate_sqlite(keeper, data)
        backend = cls(connect, data.schema, data.fingerprint())
        backend._keeper = keeper  # the shared in-memory database lives while one connection is open
        return backend


def populate_sqlite(conn: sqlite3.Connection, data: StarData) -> None:
    for tname, table in data.tables.items():
        cols = ", ".join(f"{c} {_SQL_TYPES[col.type]}" for c, col in table.columns.items())
        conn.execute(f"DROP TABLE IF EXISTS {tname}")
        conn.execute(f"CREATE TABLE {tname} ({cols})")
        marks = ", ".join("?" for _ in table.columns)
        rows = [tuple(v.isoformat() if isinstance(v, dt.date) else v for v in r) for r in table.rows()]
        conn.executemany(f"INSERT INTO {tname} VALUES ({marks})", rows)
    conn.commit()


def _coerce(v: Any, ctype: str | None) -> Any:
    if v is None:
        return None
    if ctype == "date" and isinstance(v, str):
        return dt.date.fromisoformat(v)
    if ctype == "float":
        return float(v)
    if ctype == "int":
        return int(v)
    return v


coerce_value = _coerce
