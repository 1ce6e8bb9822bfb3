"""Reference executor: evaluates a signature directly over StarData.

It doubles as the default backend and the correctness oracle. It shares no
code with the derivation module.
"""

from __future__ import annotations

import bisect
import datetime as dt
import re
import threading
from decimal import Decimal
from functools import cmp_to_key
from typing import Any

import numpy as np

from ..errors import BackendError, Bypass
from ..schema import SchemaModel, dimension_path, resolve_join_path
from ..signature import IntentSignature, Measure, Predicate, normalize
from ..table import Column, ResultTable
from . import kernels
from .star import ColumnData, StarData, decode_value


def like_regex(pattern: str) -> re.Pattern:
    """SQL LIKE (case-sensitive, no escape character) as a compiled regex."""
    out = []
    for ch in pattern:
        if ch == "%":
            out.append(".*")
        elif ch == "_":
            out.append(".")
        else:
            out.append(re.escape(ch))
    return re.compile("".join(out), re.DOTALL)


def _encode_literal(col: ColumnData, v: Any) -> Any:
    if col.type == "date":
        return dt.date.fromisoformat(str(v)).toordinal()
    if col.type in ("int", "float"):
        return float(v) if isinstance(v, Decimal) else v
    return v


def _text_codes(col: ColumnData, op: str, v: str) -> np.ndarray:
    """Codes of dictionary entries satisfying ``entry op v`` (dictionary is sorted)."""
    d = col.dictionary
    lo, hi = bisect.bisect_left(d, v), bisect.bisect_right(d, v)
    n = len(d)
    ranges = {
        "=": (lo, hi),
        "<": (0, lo),
        "<=": (0, hi),
        ">": (hi, n),
        ">=": (lo, n),
    }
    if op == "!=":
        return np.array([i for i in range(n) if i < lo or i >= hi], dtype=np.int64)
    a, b = ranges[op]
    return np.arange(a, b, dtype=np.int64)


def predicate_mask(col: ColumnData, values: np.ndarray, valid: np.ndarray, p: Predicate) -> np.ndarray:
    """Rows where ``p`` is TRUE under three-valued logic."""
    if p.op == "IS_NULL":
        return ~valid
    if p.op == "IS_NOT_NULL":
        return valid.copy()
    if col.type == "text":
        if p.op == "LIKE":
            rx = like_regex(p.val)
            codes = np.array([i for i, s in enumerate(col.dictionary) if rx.fullmatch(s)], dtype=np.int64)
            hit = np.isin(values, codes)
        elif p.op in ("IN", "NOT_IN"):
            lookup = {s: i for i, s in enumerate(col.dictionary)}
            codes = np.array([lookup[s] for s in p.val if s in lookup], dtype=np.int64)
            hit = np.isin(values, codes)
            if p.op == "NOT_IN":
                hit = ~hit
        else:
            hit = np.isin(values, _text_codes(col, p.op, p.val))
        return hit & valid
    if p.op in ("IN", "NOT_IN"):
        lits = np.array([_encode_literal(col, v) for v in p.val])
        hit = np.isin(values, lits)
        if p.op == "NOT_IN":
            hit = ~hit
        return hit & valid
    lit = _encode_literal(col, p.val)
    hit = {
        "=": np.equal,
        "!=": np.not_equal,
        "<": np.less,
        "<=": np.less_equal,
        ">": np.greater,
        ">=": np.greater_equal,
    }[p.op](values, lit)
    return hit & valid


def _dense_codes(values: np.ndarray, valid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dense group codes; NULL gets code 0 when present. Returns (codes, uniques)."""
    uniq, inv = np.unique(values[valid], return_inverse=True)
    codes = np.zeros(len(values), dtype=np.int64)
    codes[valid] = inv + 1
    return codes, uniq


def _measure_type(schema: SchemaModel, m: Measure) -> str:
    if m.agg in ("COUNT", "COUNT_DISTINCT"):
        return "int"
    if m.agg == "AVG":
        return "float"
    ctype = schema.column_type(m.expr)
    if m.agg == "SUM":
        return "int" if ctype == "int" else "float"
    return ctype


def output_columns(sig: IntentSignature, schema: SchemaModel) -> tuple[Column, ...]:
    cols = [Column(lv, schema.column_type(lv), "level") for lv in sig.levels]
    cols += [Column(m.name, _measure_type(schema, m), "measure") for m in sig.measures]
    return tuple(cols)


def _null_first_cmp(a: Any, b: Any) -> int:
    if a is None or b is None:
        return (a is not None) - (b is not None)
    return (a > b) - (a < b)


def order_rows(rows: list[tuple], keys: list[tuple[int, bool]]) -> list[tuple]:
    """SQL ordering: NULLs first for ASC, last for DESC."""

    def cmp(r1: tuple, r2: tuple) -> int:
        for idx, desc in keys:
            c = _null_first_cmp(r1[idx], r2[idx])
            if c:
                return -c if desc else c
        return 0

    return sorted(rows, key=cmp_to_key(cmp))


def having_holds(value: Any, p: Predicate) -> bool:
    if value is None:
        return False
    lit = float(p.val) if isinstance(p.val, Decimal) else p.val
    return {
        "=": value == lit,
        "!=": value != lit,
        "<": value < lit,
        "<=": value <= lit,
        ">": value > lit,
        ">=": value >= lit,
    }[p.op]


def reference_execute(sig: IntentSignature, data: StarData) -> ResultTable:
    sig = normalize(sig)
    schema = data.schema
    path = resolve_join_path(schema, sig.fact, sig.referenced_columns())
    n = data.tables[sig.fact].n_rows
    rows_of: dict[str, np.ndarray] = {sig.fact: np.arange(n, dtype=np.int64)}
    for step in path.steps:
        rows_of[step.to_table] = data.fk_index[(step.from_table, step.fk_column)][rows_of[step.from_table]]

    def gather(qualified: str) -> tuple[ColumnData, np.ndarray, np.ndarray]:
        table = qualified.partition(".")[0]
        col = data.column(qualified)
        idx = rows_of[table]
        return col, col.values[idx], col.valid[idx]

    mask = np.ones(n, dtype=bool)
    for p in sig.filters:
        col, vals, valid = gather(p.col)
        mask &= predicate_mask(col, vals, valid, p)
    if sig.time_window is not None:
        tc = schema.time_column(sig.fact)
        _, vals, valid = gather(tc)
        w = sig.time_window
        mask &= valid & (vals >= w.start.toordinal()) & (vals < w.end.toordinal())
    sel = np.flatnonzero(mask)

    # group ids over selected rows
    level_info = []
    if sig.levels:
        per_level = []
        for lv in sig.levels:
            col, vals, valid = gather(lv)
            codes, uniq = _dense_codes(vals[sel], valid[sel])
            per_level.append(codes)
            level_info.append((col, uniq))
        stacked = np.stack(per_level, axis=1) if len(sel) else np.zeros((0, len(per_level)), dtype=np.int64)
        group_keys, gid = np.unique(stacked, axis=0, return_inverse=True)
        gid = np.asarray(gid, dtype=np.int64).reshape(-1)
        ngroups = len(group_keys)
    else:
        gid = np.zeros(len(sel), dtype=np.int64)
        group_keys = np.zeros((1, 0), dtype=np.int64)
        ngroups = 1  # aggregates without GROUP BY always return one row

    measure_cols: list[list[Any]] = []
    for m in sig.measures:
        if m.expr == "*":
            counts = kernels.group_count(gid, ngroups, np.ones(len(sel), dtype=np.uint8))
            measure_cols.append([int(c) for c in counts])
            continue
        col, vals, valid = gather(m.expr)
        v, ok = vals[sel], valid[sel].astype(np.uint8)
        v = np.ascontiguousarray(v)
        if m.agg == "COUNT":
            measure_cols.append([int(c) for c in kernels.group_count(gid, ngroups, ok)])
        elif m.agg == "COUNT_DISTINCT":
            keep = ok.astype(bool)
            pairs = np.unique(np.stack([gid[keep], v[keep].astype(np.float64) if v.dtype.kind == "f" else v[keep]], axis=1), axis=0) if keep.any() else np.zeros((0, 2))
            counts = np.bincount(pairs[:, 0].astype(np.int64), minlength=ngroups) if len(pairs) else np.zeros(ngroups, dtype=np.int64)
            measure_cols.append([int(c) for c in counts])
        elif m.agg in ("SUM", "AVG"):
            sums, counts = kernels.group_sum(gid, ngroups, v, ok)
            if m.agg == "SUM":
                measure_cols.append([None if c == 0 else (int(s) if col.type == "int" else float(s)) for s, c in zip(sums, counts)])
            else:
                measure_cols.append([None if c == 0 else float(s) / int(c) for s, c in zip(sums, counts)])
        else:
            fn = kernels.group_min if m.agg == "MIN" else kernels.group_max
            out, counts = fn(gid, ngroups, v, ok)
            measure_cols.append([None if c == 0 else decode_value(col, x) for x, c in zip(out, counts)])

    rows = []
    for g in range(ngroups):
        key = []
        for j, (col, uniq) in enumerate(level_info):
            code = int(group_keys[g, j])
            key.append(None if code == 0 else decode_value(col, uniq[code - 1]))
        rows.append(tuple(key) + tuple(mc[g] for mc in measure_cols))

    columns = output_columns(sig, schema)
    names = [c.name for c in columns]
    pa = sig.post_agg
    order_by: tuple[tuple[int, bool], ...] = ()
    limited = False
    if pa is not None and pa.having:
        rows = [r for r in rows if all(having_holds(r[names.index(p.col)], p) for p in pa.having)]
    if pa is not None and pa.order_by:
        order_by = tuple((names.index(o.expr), o.desc) for o in pa.order_by)
        rows = order_rows(rows, list(order_by))
    else:
        rows = order_rows(rows, [(i, False) for i in range(len(sig.levels))])
    if pa is not None and pa.limit is not None:
        limited = len(rows) > pa.limit
        rows = rows[: pa.limit]
    return ResultTable(columns, rows, order_by=order_by, limited=limited)


def dimension_pairs(data: StarData, child: str, parent: str) -> list[tuple[Any, Any]]:
    """Distinct (child, parent) value pairs over the child's table, following FKs when needed."""
    ct, pt = child.partition(".")[0], parent.partition(".")[0]
    path = dimension_path(data.schema, ct, pt)
    idx = np.arange(data.tables[ct].n_rows, dtype=np.int64)
    for step in path.steps:
        idx = data.fk_index[(step.from_table, step.fk_column)][idx]
    ccol, pcol = data.column(child), data.column(parent)
    seen = set()
    out = []
    for i, j in zip(range(len(ccol)), idx):
        pair = (ccol.decode(i), pcol.decode(int(j)))
        if pair not in seen:
            seen.add(pair)
            out.append(pair)
    return out


class ReferenceBackend:
    """Backend over the reference executor.

    SQL inside the supported subset runs on the reference executor. Anything
    else (window functions, CTEs, ...) falls through to a lazily built sqlite
    mirror so bypassed requests still execute.
    """

    name = "reference"

    def __init__(self, data: StarData, passthrough: bool = True):
        self.data = data
        self.schema = data.schema
        self.passthrough = passthrough
        self._mirror = None
        self._lock = threading.Lock()
        self._snapshot = data.fingerprint()
        self.executions = 0

    def snapshot_id(self) -> str:
        return self._snapshot

    def execute(self, sql: str) -> ResultTable:
        from ..sqlcanon import sql_to_signature

        self.executions += 1
        try:
            sig = sql_to_signature(sql, self.schema)
        except Bypass as exc:
            if not self.passthrough:
                raise BackendError(f"reference executor cannot run this query: {exc}") from exc
            return self._sqlite().execute(sql)
        return reference_execute(sig, self.data)

    def execute_signature(self, sig: IntentSignature) -> ResultTable:
        self.executions += 1
        return reference_execute(sig, self.data)

    def level_pairs(self, child: str, parent: str) -> list[tuple[Any, Any]]:
        return dimension_pairs(self.data, child, parent)

    def _sqlite(self):
        with self._lock:
            if self._mirror is None:
                from .sqlbackend import SqlBackend

                self._mirror = SqlBackend.from_star(self.data)
            return self._mirror
