"""Cache methods compared by the benchmark.

TextCache and ASTCache key SQL text at two strengths of syntactic
normalization and skip NL entirely. NlToSqlAst sends NL through a recorded
NL-to-SQL rendering and then keys like ASTCache. SigCache is the pipeline.
"""

from __future__ import annotations

import hashlib
import re
import time
from collections import OrderedDict
from dataclasses import dataclass
from typing import Any

import sqlglot
from sqlglot import exp

from ..pipeline import BYPASS, DERIVED_HIT, EXACT_HIT, MISS, Pipeline, Request
from ..table import ResultTable
from .workload import WorkItem

HIT, DERIVED, MISSED, BYPASSED = "hit", "derived", "miss", "bypass"
_PROVENANCE = {EXACT_HIT: HIT, DERIVED_HIT: DERIVED, MISS: MISSED, BYPASS: BYPASSED}


@dataclass
class Outcome:
    kind: str  # hit | derived | miss | bypass
    key: str | None
    result: ResultTable | None
    latency_ms: float
    executed: bool


class LruCache:
    """Key -> result with an optional entry-count bound."""

    def __init__(self, capacity: int | None = None):
        self.capacity = capacity
        self._d: OrderedDict[str, ResultTable] = OrderedDict()

    def get(self, key: str) -> ResultTable | None:
        v = self._d.get(key)
        if v is not None:
            self._d.move_to_end(key)
        return v

    def put(self, key: str, value: ResultTable) -> None:
        self._d[key] = value
        self._d.move_to_end(key)
        while self.capacity is not None and len(self._d) > self.capacity:
            self._d.popitem(last=False)

    def __len__(self) -> int:
        return len(self._d)


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


_QUOTED = re.compile(r"('(?:[^']|'')*')")


def text_key(sql: str) -> str:
    """Whitespace-collapsed, case-folded SQL; string literals keep their case."""
    parts = _QUOTED.split(" ".join(sql.split()))
    return _digest("".join(p if k % 2 else p.lower() for k, p in enumerate(parts)))


def ast_key(sql: str) -> str:
    """Serialized AST after alias resolution and formatting normalization.

    Table aliases are replaced by table names and identifiers are lowercased.
    Nothing is reordered and no literal or interval is rewritten.
    """
    tree = sqlglot.parse_one(sql, read="sqlite")
    aliases: dict[str, str] = {}
    for t in tree.find_all(exp.Table):
        if t.alias:
            aliases[t.alias.lower()] = t.name.lower()
            t.set("alias", None)
    for c in tree.find_all(exp.Column):
        if c.table and c.table.lower() in aliases:
            c.set("table", exp.to_identifier(aliases[c.table.lower()]))
    return _digest(tree.sql(dialect="sqlite", normalize=True))


class KeyedMethod:
    """Shared miss path for the syntactic baselines: execute the SQL text as written."""

    name = "keyed"

    def __init__(self, backend: Any, capacity: int | None = None):
        self.backend = backend
        self.cache = LruCache(capacity)

    def sql_for(self, item: WorkItem) -> str | None:
        return item.payload if item.kind == "SQL" else None

    def key(self, sql: str) -> str:
        raise NotImplementedError

    def handle(self, item: WorkItem) -> Outcome:
        t0 = time.perf_counter()
        sql = self.sql_for(item)
        if sql is None:
            return Outcome(BYPASSED, None, None, (time.perf_counter() - t0) * 1000, False)
        key = self.key(sql)
        hit = self.cache.get(key)
        if hit is not None:
            return Outcome(HIT, key, hit, (time.perf_counter() - t0) * 1000, False)
        result = self.backend.execute(sql)
        self.cache.put(key, result)
        return Outcome(MISSED, key, result, (time.perf_counter() - t0) * 1000, True)


class TextCache(KeyedMethod):
    name = "TextCache"

    def key(self, sql: str) -> str:
        return text_key(sql)


class ASTCache(KeyedMethod):
    name = "ASTCache"

    def key(self, sql: str) -> str:
        return ast_key(sql)


class NlToSqlAst(ASTCache):
    """NL requests replay a recorded SQL rendering (question -> SQL text)."""

    name = "NlToSqlAst"

    def __init__(self, backend: Any, recorded: dict[str, str], capacity: int | None = None):
        super().__init__(backend, capacity)
        self.recorded = recorded

    def sql_for(self, item: WorkItem) -> str | None:
        if item.kind == "SQL":
            return item.payload
        return self.recorded.get(item.payload)


class SigCache:
    name = "SigCache"

    def __init__(self, pipeline: Pipeline):
        self.pipeline = pipeline

    def handle(self, item: WorkItem) -> Outcome:
        t0 = time.perf_counter()
        if item.kind == "SQL":
            req = Request.sql(item.payload)
        else:
            req = Request.nl(item.payload, item.anchor_date)
        resp = self.pipeline.handle(req)
        kind = _PROVENANCE[resp.provenance.kind]
        executed = kind == MISSED or (kind == BYPASSED and resp.result is not None)
        return Outcome(kind, resp.key, resp.result, (time.perf_counter() - t0) * 1000, executed)


METHODS = ("TextCache", "ASTCache", "NlToSqlAst", "SigCache")
