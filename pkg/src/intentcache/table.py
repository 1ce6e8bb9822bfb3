"""ResultTable: the unit of execution output and cache payload."""

from __future__ import annotations

import datetime as dt
import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any


@dataclass(frozen=True)
class Column:
    name: str
    type: str  # int | float | text | date
    role: str = "value"  # level | measure | value


def _norm(v: Any) -> Any:
    if isinstance(v, dt.date):
        return v.isoformat()
    if isinstance(v, Decimal):
        return float(v)
    if isinstance(v, bool):
        return int(v)
    return v


def values_equal(a: Any, b: Any, rel_tol: float = 1e-9) -> bool:
    a, b = _norm(a), _norm(b)
    if a is None or b is None:
        return a is None and b is None
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        if isinstance(a, int) and isinstance(b, int):
            return a == b
        if math.isnan(a) or math.isnan(b):
            return math.isnan(a) and math.isnan(b)
        return math.isclose(a, b, rel_tol=rel_tol, abs_tol=0.0) or a == b
    return a == b


def _sort_key(row: Sequence[Any]) -> tuple:
    out = []
    for v in row:
        v = _norm(v)
        if v is None:
            out.append((0, 0))
        elif isinstance(v, (int, float)):
            # rounding keeps float noise from reordering otherwise-equal rows
            out.append((1, float(f"{v:.9g}")))
        else:
            out.append((2, str(v)))
    return tuple(out)


@dataclass
class ResultTable:
    columns: tuple[Column, ...]
    rows: list[tuple] = field(default_factory=list)
    # (column index, descending) pairs when row order is significant
    order_by: tuple[tuple[int, bool], ...] = ()
    limited: bool = False

    def __post_init__(self) -> None:
        self.columns = tuple(self.columns)
        width = len(self.columns)
        self.rows = [tuple(r) for r in self.rows]
        for r in self.rows:
            if len(r) != width:
                raise ValueError(f"row width {len(r)} != column count {width}")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def ordered(self) -> bool:
        return bool(self.order_by)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[tuple]:
        return iter(self.rows)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def column_values(self, name: str) -> list[Any]:
        i = self.index(name)
        return [r[i] for r in self.rows]

    def pairs(self, child: str, parent: str) -> list[tuple[Any, Any]]:
        ci, pi = self.index(child), self.index(parent)
        return [(r[ci], r[pi]) for r in self.rows]

    def to_dicts(self) -> list[dict[str, Any]]:
        names = self.names
        return [dict(zip(names, r)) for r in self.rows]

    def equals(self, other: "ResultTable", rel_tol: float = 1e-9) -> bool:
        """Semantic equality: positional columns, multiset rows unless ordered.

        Ordered tables compare run-by-run over equal sort keys; when the result
        was cut by LIMIT, the last run is compared by sort key only.
        """
        if len(self.columns) != len(other.columns) or len(self.rows) != len(other.rows):
            return False
        order_by = self.order_by or other.order_by
        if not order_by:
            return _rows_match(self.rows, other.rows, rel_tol)
        keys = [i for i, _ in order_by]
        a_runs = _runs(self.rows, keys, rel_tol)
        b_runs = _runs(other.rows, keys, rel_tol)
        if len(a_runs) != len(b_runs):
            return False
        limited = self.limited or other.limited
        for n, (ra, rb) in enumerate(zip(a_runs, b_runs)):
            if len(ra) != len(rb):
                return False
            if not all(values_equal(ra[0][k], rb[0][k], rel_tol) for k in keys):
                return False
            if limited and n == len(a_runs) - 1:
                continue
            if not _rows_match(ra, rb, rel_tol):
                return False
        return True

    def pretty(self, max_rows: int = 20) -> str:
        names = self.names
        body = [["NULL" if v is None else str(_norm(v)) for v in r] for r in self.rows[:max_rows]]
        widths = [max([len(n)] + [len(r[i]) for r in body]) for i, n in enumerate(names)]
        lines = [" | ".join(n.ljust(w) for n, w in zip(names, widths))]
        lines.append("-+-".join("-" * w for w in widths))
        lines += [" | ".join(v.ljust(w) for v, w in zip(r, widths)) for r in body]
        if len(self.rows) > max_rows:
            lines.append(f"... ({len(self.rows)} rows)")
        return "\n".join(lines)


def _rows_match(a: Sequence[tuple], b: Sequence[tuple], rel_tol: float) -> bool:
    sa = sorted(a, key=_sort_key)
    sb = sorted(b, key=_sort_key)
    return all(
        len(x) == len(y) and all(values_equal(u, v, rel_tol) for u, v in zip(x, y)) for x, y in zip(sa, sb)
    )


def _runs(rows: Sequence[tuple], keys: list[int], rel_tol: float) -> list[list[tuple]]:
    runs: list[list[tuple]] = []
    for r in rows:
        if runs and all(values_equal(runs[-1][0][k], r[k], rel_tol) for k in keys):
            runs[-1].append(r)
        else:
            runs.append([r])
    return runs
