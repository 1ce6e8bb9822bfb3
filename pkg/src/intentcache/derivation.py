"""Roll-up and filter-down answers from cached entries.

Everything here is plain Python over cached rows and deliberately shares no
code with the reference executor, so oracle comparisons stay independent.
"""

from __future__ import annotations

import datetime as dt
import math
import re
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from typing import Any

from .schema import Level, LevelRelation, SchemaModel, check_summarizable, level_relation
from .signature import IntentSignature, Predicate, canonical_json, normalize
from .table import Column, ResultTable

COMPOSABLE = frozenset({"SUM", "COUNT", "MIN", "MAX"})

# (child level, parent level) -> iterable of (child value, parent value)
LevelMapper = Callable[[str, str], Iterable[tuple[Any, Any]]]


class RejectReason(str, Enum):
    NON_COMPOSABLE_AGGREGATE = "NonComposableAggregate"
    NOT_SUMMARIZABLE = "NotSummarizable"
    ORDER_LIMIT_PRESENT = "OrderLimitPresent"
    FILTER_MISMATCH = "FilterMismatch"
    FILTER_ATTRIBUTE_MISSING = "FilterAttributeMissing"
    GRAIN_MISMATCH = "GrainMismatch"
    MEASURE_MISSING = "MeasureMissing"
    CACHED_HAVING = "CachedHaving"
    NO_MAPPING = "NoMapping"


@dataclass(frozen=True)
class Reject:
    reason: RejectReason
    detail: str = ""

    def __bool__(self) -> bool:
        return False


class MappingGap(Exception):
    """A cached child value has no parent in the mapping."""


@dataclass(frozen=True)
class LevelMapping:
    requested: str
    cached: str
    mapping: dict | None = None  # None: identity
    source: str = "identity"  # identity | dimension


@dataclass
class DerivationPlan:
    kind: str  # RollUp | FilterDown
    request: IntentSignature
    source: Any  # CacheEntry with result loaded
    columns: tuple[Column, ...]
    level_mapping: tuple[LevelMapping, ...] = ()
    extra_filters: tuple[Predicate, ...] = ()
    notes: list[str] = field(default_factory=list)

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "source": self.source.key,
            "level_mapping": [
                {"requested": m.requested, "cached": m.cached, "source": m.source} for m in self.level_mapping
            ],
            "extra_filters": [p.to_doc() for p in self.extra_filters],
        }


def _filters_key(sig: IntentSignature) -> list[str]:
    return [canonical_json(p.to_doc()) for p in sig.filters]


def _order_or_limit(request: IntentSignature, cached: IntentSignature) -> Reject | None:
    if request.has_order_or_limit:
        return Reject(RejectReason.ORDER_LIMIT_PRESENT, "request has ORDER BY or LIMIT")
    if cached.has_order_or_limit:
        return Reject(RejectReason.ORDER_LIMIT_PRESENT, "cached entry has ORDER BY or LIMIT")
    return None


def _non_composable(request: IntentSignature) -> Reject | None:
    bad = [m.name for m in request.measures if m.agg not in COMPOSABLE]
    if bad:
        return Reject(RejectReason.NON_COMPOSABLE_AGGREGATE, ", ".join(bad))
    return None


# -- roll-up ---------------------------------------------------------------


def can_rollup(
    request: IntentSignature,
    cached: Any,
    schema: SchemaModel,
    mapper: LevelMapper | None = None,
) -> DerivationPlan | Reject:
    request = normalize(request)
    csig = cached.signature
    # Reject is falsy, so test against None rather than chaining with `or`
    for rej in (_non_composable(request), _order_or_limit(request, csig)):
        if rej is not None:
            return rej
    if csig.has_having:
        return Reject(RejectReason.CACHED_HAVING, "cached groups were cut by HAVING")
    if (csig.fact, csig.scope) != (request.fact, request.scope):
        return Reject(RejectReason.FILTER_MISMATCH, "different fact table or scope")
    if _filters_key(csig) != _filters_key(request) or csig.time_window != request.time_window:
        return Reject(RejectReason.FILTER_MISMATCH, "filters or time window differ")
    missing = [m for m in request.measure_names if m not in csig.measure_names]
    if missing:
        return Reject(RejectReason.MEASURE_MISSING, ", ".join(missing))

    cached_rows = cached.result.rows if cached.result is not None else []
    cached_names = list(csig.output_names)
    mappings = []
    for lv in request.levels:
        if lv in csig.levels:
            mappings.append(LevelMapping(lv, lv))
            continue
        finer = [c for c in csig.levels if _is_ancestor(schema, lv, c)]
        if not finer:
            return Reject(RejectReason.GRAIN_MISMATCH, f"no cached level at or below {lv}")
        if mapper is None:
            return Reject(RejectReason.NO_MAPPING, f"no mapping source for {finer[0]} -> {lv}")
        child = finer[0]
        ci = cached_names.index(child)
        present = {r[ci] for r in cached_rows}
        pairs = [(c, p) for c, p in mapper(child, lv) if c in present]
        # NULL is an ordinary value here: a NULL child maps to whatever parent its rows carry
        if not check_summarizable(schema, Level.parse(child), Level.parse(lv), pairs):
            return Reject(RejectReason.NOT_SUMMARIZABLE, f"{child} -> {lv} is not functional")
        mappings.append(LevelMapping(lv, child, dict(pairs), "dimension"))

    ctypes = dict(zip(cached_names, [c.type for c in cached.result.columns])) if cached.result is not None else {}
    columns = tuple(Column(lv, schema.column_type(lv), "level") for lv in request.levels) + tuple(
        Column(m, ctypes.get(m, ""), "measure") for m in request.measure_names
    )
    return DerivationPlan("RollUp", request, cached, columns, tuple(mappings))


def _is_ancestor(schema: SchemaModel, parent: str, child: str) -> bool:
    try:
        return level_relation(schema, Level.parse(parent), Level.parse(child)) is LevelRelation.ANCESTOR_OF
    except KeyError:
        return False


def _combine(agg: str, values: list[Any]) -> Any:
    if agg == "COUNT":
        return sum(values)
    present = [v for v in values if v is not None]
    if not present:
        return None
    if agg == "SUM":
        if all(isinstance(v, int) for v in present):
            return sum(present)
        return math.fsum(present)
    return min(present) if agg == "MIN" else max(present)


def apply_rollup(plan: DerivationPlan) -> ResultTable:
    if plan.kind != "RollUp":
        raise ValueError("not a roll-up plan")
    req = plan.request
    src = plan.source.result
    names = src.names
    level_idx = [names.index(m.cached) for m in plan.level_mapping]
    measure_idx = [names.index(n) for n in req.measure_names]
    aggs = [m.agg for m in req.measures]
    groups: dict[tuple, list[list[Any]]] = {}
    for row in src.rows:
        key = []
        for m, i in zip(plan.level_mapping, level_idx):
            v = row[i]
            if m.mapping is not None:
                if v not in m.mapping:
                    raise MappingGap(f"{m.cached}={v!r} has no {m.requested}")
                v = m.mapping[v]
            key.append(v)
        acc = groups.setdefault(tuple(key), [[] for _ in aggs])
        for j, i in enumerate(measure_idx):
            acc[j].append(row[i])
    if not req.levels and not groups:
        groups[()] = [[] for _ in aggs]
    rows = [k + tuple(_combine(a, vals) for a, vals in zip(aggs, acc)) for k, acc in groups.items()]
    rows = _apply_having(rows, req, plan.columns)
    rows.sort(key=lambda r: tuple(_null_first(v) for v in r[: len(req.levels)]))
    return ResultTable(plan.columns, rows)


# -- filter-down -------------------------------------------------------------


def can_filterdown(request: IntentSignature, cached: Any) -> DerivationPlan | Reject:
    request = normalize(request)
    csig = cached.signature
    # Reject is falsy, so test against None rather than chaining with `or`
    for rej in (_non_composable(request), _order_or_limit(request, csig)):
        if rej is not None:
            return rej
    if csig.has_having:
        return Reject(RejectReason.CACHED_HAVING, "cached groups were cut by HAVING")
    if (
        (csig.fact, csig.scope) != (request.fact, request.scope)
        or csig.levels != request.levels
        or csig.measure_names != request.measure_names
        or csig.time_window != request.time_window
    ):
        return Reject(RejectReason.GRAIN_MISMATCH, "levels, measures or time window differ")
    have = set(_filters_key(csig))
    want = {canonical_json(p.to_doc()): p for p in request.filters}
    if not have < set(want):
        return Reject(RejectReason.FILTER_MISMATCH, "cached filters are not a strict subset")
    extra = tuple(p for k, p in want.items() if k not in have)
    missing = sorted({p.col for p in extra} - set(csig.levels))
    if missing:
        return Reject(RejectReason.FILTER_ATTRIBUTE_MISSING, ", ".join(missing))
    columns = cached.result.columns if cached.result is not None else ()
    return DerivationPlan("FilterDown", request, cached, tuple(columns), extra_filters=extra)


def _like(pattern: str) -> re.Pattern:
    parts = [".*" if ch == "%" else "." if ch == "_" else re.escape(ch) for ch in pattern]
    return re.compile("".join(parts), re.DOTALL)


def _literal_for(value: Any, lit: Any) -> Any:
    if isinstance(value, dt.date) and isinstance(lit, str):
        return dt.date.fromisoformat(lit)
    if isinstance(value, float) and isinstance(lit, Decimal):
        return float(lit)
    return lit


def predicate_true(value: Any, p: Predicate) -> bool:
    """Three-valued logic collapsed to TRUE vs not-TRUE."""
    if p.op == "IS_NULL":
        return value is None
    if p.op == "IS_NOT_NULL":
        return value is not None
    if value is None:
        return False
    if p.op in ("IN", "NOT_IN"):
        hit = any(value == _literal_for(value, v) for v in p.val)
        return hit if p.op == "IN" else not hit
    if p.op == "LIKE":
        return bool(_like(p.val).fullmatch(value))
    lit = _literal_for(value, p.val)
    if p.op == "=":
        return value == lit
    if p.op == "!=":
        return value != lit
    if p.op == "<":
        return value < lit
    if p.op == "<=":
        return value <= lit
    if p.op == ">":
        return value > lit
    return value >= lit


def apply_filterdown(plan: DerivationPlan) -> ResultTable:
    if plan.kind != "FilterDown":
        raise ValueError("not a filter-down plan")
    src = plan.source.result
    idx = [(src.names.index(p.col), p) for p in plan.extra_filters]
    rows = [r for r in src.rows if all(predicate_true(r[i], p) for i, p in idx)]
    rows = _apply_having(rows, plan.request, plan.columns)
    return ResultTable(plan.columns, rows)


# -- shared tail ---------------------------------------------------------------


def _null_first(v: Any) -> tuple:
    return (0, "") if v is None else (1, v)


def _apply_having(rows: list[tuple], req: IntentSignature, columns: tuple[Column, ...]) -> list[tuple]:
    if not req.has_having:
        return rows
    names = [c.name for c in columns]
    preds = [(names.index(p.col), p) for p in req.post_agg.having]
    return [r for r in rows if all(predicate_true(r[i], p) for i, p in preds)]


@dataclass
class Derived:
    result: ResultTable
    plan: DerivationPlan
    rejected: list[tuple[str, Reject]] = field(default_factory=list)


def try_derive(
    request: IntentSignature,
    store: Any,
    schema: SchemaModel,
    mapper: LevelMapper | None = None,
) -> Derived | None:
    """Filter-down candidates first, then roll-up; the first plan that applies wins."""
    request = normalize(request)
    if request.has_order_or_limit or _non_composable(request) is not None:
        return None
    attempts = [("FilterDown", e) for e in store.find_filterdown_candidates(request)]
    attempts += [("RollUp", e) for e in store.find_rollup_candidates(request, schema)]
    rejected: list[tuple[str, Reject]] = []
    for kind, meta in attempts:
        entry = store.load_entry(meta.key)
        if entry is None:
            continue
        plan = can_filterdown(request, entry) if kind == "FilterDown" else can_rollup(request, entry, schema, mapper)
        if isinstance(plan, Reject):
            rejected.append((entry.key, plan))
            continue
        try:
            result = apply_filterdown(plan) if kind == "FilterDown" else apply_rollup(plan)
        except MappingGap as exc:
            rejected.append((entry.key, Reject(RejectReason.NO_MAPPING, str(exc))))
            continue
        store.touch(entry.key)
        store.record_derived_hit()
        return Derived(result, plan, rejected)
    return None
