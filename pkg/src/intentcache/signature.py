"""OLAP intent signatures: normalization, canonical serialization, hashing.

The canonical serialization is a frozen grammar (``docs/signature_format.md``):
compact JSON, object keys sorted, absent optional fields omitted, literal
values in canonical form. The cache key is the SHA-256 of its UTF-8 bytes.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import math
import re
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, replace
from decimal import Decimal, InvalidOperation
from typing import Any, Union

from .errors import MalformedComponent

AGGREGATES = ("SUM", "COUNT", "MIN", "MAX", "AVG", "COUNT_DISTINCT")
OPERATORS = ("=", "!=", "<", "<=", ">", ">=", "IN", "NOT_IN", "LIKE", "IS_NULL", "IS_NOT_NULL")
COMPARISONS = ("=", "!=", "<", "<=", ">", ">=")
LIST_OPS = ("IN", "NOT_IN")
NULL_OPS = ("IS_NULL", "IS_NOT_NULL")

_OP_ALIASES = {
    "==": "=",
    "<>": "!=",
    "NOT IN": "NOT_IN",
    "IS NULL": "IS_NULL",
    "IS NOT NULL": "IS_NOT_NULL",
}

Literal = Union[str, int, Decimal]
Value = Union[Literal, tuple, None]
SignatureKey = str

_MEASURE_RE = re.compile(r"^\s*(SUM|COUNT|MIN|MAX|AVG)\s*\(\s*(DISTINCT\s+)?([^()]+?)\s*\)\s*$", re.I)


# -- literals --------------------------------------------------------------


def canonical_literal(v: Any) -> Literal:
    """Canonical form of a scalar literal.

    Integers stay integers; decimals lose trailing zeros and integral decimals
    become integers; dates become ISO-8601 strings; strings are kept verbatim.
    """
    if isinstance(v, bool) or v is None:
        raise MalformedComponent(f"unsupported literal {v!r}")
    if isinstance(v, int):
        return v
    if isinstance(v, float):
        if not math.isfinite(v):
            raise MalformedComponent(f"non-finite literal {v!r}")
        v = Decimal(repr(v))
    if isinstance(v, Decimal):
        if not v.is_finite():
            raise MalformedComponent(f"non-finite literal {v!r}")
        if v == v.to_integral_value():
            return int(v)
        return v.normalize()
    if isinstance(v, dt.datetime):
        raise MalformedComponent("timestamp literals are not supported")
    if isinstance(v, dt.date):
        return v.isoformat()
    if isinstance(v, str):
        return v
    raise MalformedComponent(f"unsupported literal {v!r}")


def decimal_text(d: Decimal) -> str:
    s = format(d.normalize(), "f")
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    return s


def _literal_order(v: Literal) -> tuple:
    if isinstance(v, str):
        return (1, 0, v)
    return (0, v, "")


# -- canonical JSON --------------------------------------------------------


def canonical_json(obj: Any) -> str:
    if isinstance(obj, Mapping):
        return "{" + ",".join(f"{json.dumps(k)}:{canonical_json(obj[k])}" for k in sorted(obj)) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(canonical_json(x) for x in obj) + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, Decimal):
        return decimal_text(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if obj is None:
        return "null"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# -- components ------------------------------------------------------------


@dataclass(frozen=True)
class Measure:
    agg: str
    expr: str

    @classmethod
    def of(cls, agg: str, expr: str, distinct: bool = False) -> "Measure":
        agg = agg.strip().upper().replace(" ", "_")
        expr = expr.strip().lower()
        if distinct:
            if agg not in ("COUNT", "COUNT_DISTINCT"):
                raise MalformedComponent(f"DISTINCT is only allowed with COUNT, not {agg}")
            agg = "COUNT_DISTINCT"
        if agg not in AGGREGATES:
            raise MalformedComponent(f"unknown aggregate {agg!r}")
        if expr == "*" and agg != "COUNT":
            raise MalformedComponent(f"{agg}(*) is not allowed")
        if not expr:
            raise MalformedComponent("empty measure expression")
        return cls(agg, expr)

    @classmethod
    def parse(cls, text: str) -> "Measure":
        """Inverse of ``name``: ``SUM(sales.amount)``, ``COUNT(DISTINCT x)``."""
        m = _MEASURE_RE.match(text)
        if not m:
            raise MalformedComponent(f"not a measure reference: {text!r}")
        return cls.of(m.group(1), m.group(3), distinct=bool(m.group(2)))

    @property
    def distinct(self) -> bool:
        return self.agg == "COUNT_DISTINCT"

    @property
    def name(self) -> str:
        if self.distinct:
            return f"COUNT(DISTINCT {self.expr})"
        return f"{self.agg}({self.expr})"

    def to_doc(self) -> dict:
        return {"agg": self.agg, "expr": self.expr}


@dataclass(frozen=True)
class Predicate:
    col: str
    op: str
    val: Value = None

    def to_doc(self) -> dict:
        d: dict[str, Any] = {"col": self.col, "op": self.op}
        if self.op not in NULL_OPS:
            d["val"] = list(self.val) if isinstance(self.val, tuple) else self.val
        return d

    def sort_key(self) -> tuple[str, str, str]:
        return (self.col, self.op, canonical_json(self.val))


@dataclass(frozen=True)
class TimeWindow:
    start: dt.date
    end: dt.date
    open_ended: bool = False

    def to_doc(self) -> dict:
        d: dict[str, Any] = {"start": self.start.isoformat(), "end": self.end.isoformat()}
        if self.open_ended:
            d["open_ended"] = True
        return d

    def intersects(self, start: dt.date, end: dt.date) -> bool:
        return self.start < end and start < self.end


@dataclass(frozen=True)
class OrderItem:
    expr: str
    desc: bool = False

    def to_doc(self) -> dict:
        return {"dir": "DESC" if self.desc else "ASC", "expr": self.expr}


@dataclass(frozen=True)
class PostAggregation:
    having: tuple[Predicate, ...] = ()
    order_by: tuple[OrderItem, ...] = ()
    limit: int | None = None

    @property
    def empty(self) -> bool:
        return not self.having and not self.order_by and self.limit is None

    def to_doc(self) -> dict:
        d: dict[str, Any] = {}
        if self.having:
            d["having"] = [p.to_doc() for p in self.having]
        if self.order_by:
            d["order_by"] = [o.to_doc() for o in self.order_by]
        if self.limit is not None:
            d["limit"] = self.limit
        return d


@dataclass(frozen=True)
class IntentSignature:
    fact: str
    measures: tuple[Measure, ...]
    levels: tuple[str, ...] = ()
    filters: tuple[Predicate, ...] = ()
    time_window: TimeWindow | None = None
    post_agg: PostAggregation | None = None
    metric_id: str | None = None
    scope: str | None = None
    _normalized: bool = field(default=False, repr=False, compare=False)

    # -- derived views --

    @property
    def has_order_or_limit(self) -> bool:
        return self.post_agg is not None and (bool(self.post_agg.order_by) or self.post_agg.limit is not None)

    @property
    def has_having(self) -> bool:
        return self.post_agg is not None and bool(self.post_agg.having)

    @property
    def deterministic(self) -> bool:
        """False for LIMIT without ORDER BY, whose legal results are not unique."""
        return not (self.post_agg is not None and self.post_agg.limit is not None and not self.post_agg.order_by)

    @property
    def measure_names(self) -> list[str]:
        return [m.name for m in self.measures]

    @property
    def output_names(self) -> list[str]:
        return list(self.levels) + self.measure_names

    def referenced_columns(self) -> set[str]:
        cols = set(self.levels) | {p.col for p in self.filters}
        cols |= {m.expr for m in self.measures if m.expr != "*"}
        return cols

    def to_doc(self) -> dict:
        d: dict[str, Any] = {
            "fact": self.fact,
            "measures": [m.to_doc() for m in self.measures],
            "levels": list(self.levels),
            "filters": [p.to_doc() for p in self.filters],
        }
        if self.time_window is not None:
            d["time_window"] = self.time_window.to_doc()
        if self.post_agg is not None and not self.post_agg.empty:
            d["post_agg"] = self.post_agg.to_doc()
        if self.metric_id is not None:
            d["metric_id"] = self.metric_id
        if self.scope is not None:
            d["scope"] = self.scope
        return d

    def with_scope(self, scope: str | None) -> "IntentSignature":
        return replace(self, scope=scope)


# -- normalization ---------------------------------------------------------


def _norm_measure(m: Any) -> Measure:
    if isinstance(m, Measure):
        return Measure.of(m.agg, m.expr)
    if isinstance(m, Mapping):
        try:
            return Measure.of(str(m["agg"]), str(m["expr"]), bool(m.get("distinct", False)))
        except KeyError as exc:
            raise MalformedComponent(f"measure missing {exc}") from exc
    if isinstance(m, str):
        return Measure.parse(m)
    if isinstance(m, (tuple, list)) and len(m) in (2, 3):
        return Measure.of(str(m[0]), str(m[1]), bool(m[2]) if len(m) == 3 else False)
    raise MalformedComponent(f"bad measure {m!r}")


def _norm_predicate(p: Any, measure_ref: bool = False) -> Predicate:
    if isinstance(p, Predicate):
        col, op, val = p.col, p.op, p.val
    elif isinstance(p, Mapping):
        try:
            col, op, val = p["col"], p["op"], p.get("val")
        except KeyError as exc:
            raise MalformedComponent(f"predicate missing {exc}") from exc
    elif isinstance(p, (tuple, list)) and len(p) in (2, 3):
        col, op, val = p[0], p[1], p[2] if len(p) == 3 else None
    else:
        raise MalformedComponent(f"bad predicate {p!r}")
    if not isinstance(col, str) or not col:
        raise MalformedComponent(f"bad predicate column {col!r}")
    col = Measure.parse(col).name if measure_ref else col.strip().lower()
    op = str(op).strip().upper()
    op = _OP_ALIASES.get(op, op)
    if op not in OPERATORS:
        raise MalformedComponent(f"unknown operator {op!r}")
    if op in NULL_OPS:
        return Predicate(col, op, None)
    if op in LIST_OPS:
        if isinstance(val, (str, bytes)) or not isinstance(val, Iterable):
            raise MalformedComponent(f"{op} needs a literal list")
        items = sorted({canonical_literal(v) for v in val}, key=_literal_order)
        if not items:
            raise MalformedComponent(f"empty {op} list")
        if len(items) == 1:
            return Predicate(col, "=" if op == "IN" else "!=", items[0])
        return Predicate(col, op, tuple(items))
    if isinstance(val, (list, tuple, set)):
        raise MalformedComponent(f"{op} takes a single literal")
    lit = canonical_literal(val)
    if op == "LIKE" and not isinstance(lit, str):
        raise MalformedComponent("LIKE needs a string pattern")
    return Predicate(col, op, lit)


def _norm_date(v: Any) -> dt.date:
    if isinstance(v, dt.datetime):
        raise MalformedComponent("time window bounds must be dates")
    if isinstance(v, dt.date):
        return v
    try:
        return dt.date.fromisoformat(str(v))
    except ValueError as exc:
        raise MalformedComponent(f"bad date {v!r}") from exc


def _norm_window(w: Any) -> TimeWindow | None:
    if w is None:
        return None
    if isinstance(w, TimeWindow):
        start, end, open_ended = w.start, w.end, w.open_ended
    elif isinstance(w, Mapping):
        try:
            start, end = w["start"], w["end"]
        except KeyError as exc:
            raise MalformedComponent(f"time window missing {exc}") from exc
        open_ended = bool(w.get("open_ended", False))
    else:
        raise MalformedComponent(f"bad time window {w!r}")
    start, end = _norm_date(start), _norm_date(end)
    if not start < end:
        raise MalformedComponent(f"empty time window [{start}, {end})")
    return TimeWindow(start, end, open_ended)


def _norm_order_expr(e: str) -> str:
    if _MEASURE_RE.match(e):
        return Measure.parse(e).name
    return e.strip().lower()


def _norm_post_agg(pa: Any) -> PostAggregation | None:
    if pa is None:
        return None
    if isinstance(pa, PostAggregation):
        having, order_by, limit = pa.having, pa.order_by, pa.limit
    elif isinstance(pa, Mapping):
        having, order_by, limit = pa.get("having") or (), pa.get("order_by") or (), pa.get("limit")
    else:
        raise MalformedComponent(f"bad post aggregation {pa!r}")
    hv = sorted({_norm_predicate(p, measure_ref=True) for p in having}, key=Predicate.sort_key)
    ob = []
    for o in order_by:
        if isinstance(o, OrderItem):
            item = OrderItem(_norm_order_expr(o.expr), o.desc)
        elif isinstance(o, Mapping):
            direction = str(o.get("dir", "ASC")).upper()
            if direction not in ("ASC", "DESC"):
                raise MalformedComponent(f"bad order direction {direction!r}")
            item = OrderItem(_norm_order_expr(str(o["expr"])), direction == "DESC")
        elif isinstance(o, (tuple, list)) and len(o) == 2:
            item = OrderItem(_norm_order_expr(str(o[0])), str(o[1]).upper() == "DESC")
        else:
            raise MalformedComponent(f"bad order item {o!r}")
        if item.expr not in [x.expr for x in ob]:
            ob.append(item)
    if limit is not None:
        if isinstance(limit, bool) or not isinstance(limit, (int, Decimal)) or int(limit) != limit or limit < 0:
            raise MalformedComponent(f"bad limit {limit!r}")
        limit = int(limit)
    out = PostAggregation(tuple(hv), tuple(ob), limit)
    return None if out.empty else out


def normalize(sig: IntentSignature) -> IntentSignature:
    """Canonical form: sorted/deduplicated lists, canonical literals. Idempotent."""
    if sig._normalized:
        return sig
    if not isinstance(sig.fact, str) or not sig.fact.strip():
        raise MalformedComponent("signature needs a fact table")
    measures = sorted({_norm_measure(m) for m in sig.measures}, key=lambda m: (m.agg, m.expr))
    levels = sorted({str(lv).strip().lower() for lv in sig.levels})
    filters = sorted({_norm_predicate(p) for p in sig.filters}, key=Predicate.sort_key)
    for name in levels:
        if "." not in name:
            raise MalformedComponent(f"level {name!r} is not qualified")
    for p in filters:
        if "." not in p.col:
            raise MalformedComponent(f"filter column {p.col!r} is not qualified")
    for m in measures:
        if m.expr != "*" and "." not in m.expr:
            raise MalformedComponent(f"measure expression {m.expr!r} is not qualified")
    for name, value in (("metric_id", sig.metric_id), ("scope", sig.scope)):
        if value is not None and not isinstance(value, str):
            raise MalformedComponent(f"{name} must be a string")
    return IntentSignature(
        fact=sig.fact.strip().lower(),
        measures=tuple(measures),
        levels=tuple(levels),
        filters=tuple(filters),
        time_window=_norm_window(sig.time_window),
        post_agg=_norm_post_agg(sig.post_agg),
        metric_id=sig.metric_id,
        scope=sig.scope,
        _normalized=True,
    )


def make_signature(
    fact: str,
    measures: Iterable[Any],
    levels: Iterable[str] = (),
    filters: Iterable[Any] = (),
    time_window: Any = None,
    post_agg: Any = None,
    metric_id: str | None = None,
    scope: str | None = None,
) -> IntentSignature:
    """Build and normalize a signature from loose components."""
    return normalize(
        IntentSignature(
            fact, tuple(measures), tuple(levels), tuple(filters), time_window, post_agg, metric_id, scope
        )
    )


def from_document(doc: Mapping[str, Any]) -> IntentSignature:
    if not isinstance(doc, Mapping):
        raise MalformedComponent("signature document must be an object")
    unknown = set(doc) - {"fact", "measures", "levels", "filters", "time_window", "post_agg", "metric_id", "scope"}
    if unknown:
        raise MalformedComponent(f"unknown signature fields {sorted(unknown)}")
    for key in ("measures", "levels", "filters"):
        if key in doc and not isinstance(doc[key], list):
            raise MalformedComponent(f"{key} must be a list")
    try:
        return make_signature(
            fact=doc.get("fact", ""),
            measures=doc.get("measures") or (),
            levels=doc.get("levels") or (),
            filters=doc.get("filters") or (),
            time_window=doc.get("time_window"),
            post_agg=doc.get("post_agg"),
            metric_id=doc.get("metric_id"),
            scope=doc.get("scope"),
        )
    except (InvalidOperation, TypeError) as exc:
        raise MalformedComponent(str(exc)) from exc


def canonical_serialize(sig: IntentSignature) -> str:
    return canonical_json(normalize(sig).to_doc())


def signature_key(sig: IntentSignature) -> SignatureKey:
    return hashlib.sha256(canonical_serialize(sig).encode("utf-8")).hexdigest()


def parse_document_text(text: str) -> Any:
    """JSON decode keeping decimals exact."""
    return json.loads(text, parse_float=Decimal)
