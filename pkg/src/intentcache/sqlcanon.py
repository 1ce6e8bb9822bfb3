"""SQL -> IntentSignature for the supported aggregation subset, and back.

Supported: one SELECT over a single fact table, INNER JOINs along declared
foreign keys, conjunctive WHERE (plus OR over equalities on one column),
GROUP BY, HAVING over selected aggregates, ORDER BY, LIMIT. Everything else
raises ``Bypass`` so the request runs uncached.
"""

from __future__ import annotations

import datetime as dt
import re
from collections.abc import Iterable
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from typing import Any

import sqlglot
from sqlglot import exp
from sqlglot.errors import ParseError as SqlglotParseError
from sqlglot.errors import TokenError

from .errors import AmbiguousJoinPath, Bypass, BypassCode, UnreachableColumn
from .schema import SchemaModel, resolve_join_path
from .signature import (
    COMPARISONS,
    IntentSignature,
    Measure,
    OrderItem,
    PostAggregation,
    Predicate,
    TimeWindow,
    canonical_literal,
    decimal_text,
    normalize,
)

_AGG_NODES = {exp.Sum: "SUM", exp.Count: "COUNT", exp.Min: "MIN", exp.Max: "MAX", exp.Avg: "AVG"}
_CMP_NODES = {exp.EQ: "=", exp.NEQ: "!=", exp.LT: "<", exp.LTE: "<=", exp.GT: ">", exp.GTE: ">="}
_FLIP = {"=": "=", "!=": "!=", "<": ">", "<=": ">=", ">": "<", ">=": "<="}
_NEGATE = {"=": "!=", "!=": "=", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}
_ISO_DATE = re.compile(r"^\d{4}-\d{2}-\d{2}$")
_ISO_TIMESTAMP = re.compile(r"^\d{4}-\d{2}-\d{2}[ T]\d{2}:\d{2}")
_INT = re.compile(r"^\d+$")
_ONE_DAY = dt.timedelta(days=1)


@dataclass(frozen=True)
class QueryAst:
    text: str
    tree: exp.Expression


def _bypass(code: BypassCode, detail: str) -> Bypass:
    return Bypass(code, detail)


def _unsupported(detail: str) -> Bypass:
    return Bypass(BypassCode.UNSUPPORTED_CONSTRUCT, detail)


# -- parse + scope ---------------------------------------------------------


def parse_sql(text: str) -> QueryAst:
    try:
        statements = [s for s in sqlglot.parse(text) if s is not None]
    except (SqlglotParseError, TokenError) as exc:
        raise _bypass(BypassCode.PARSE_FAILURE, str(exc).splitlines()[0]) from exc
    if len(statements) != 1:
        raise _bypass(BypassCode.PARSE_FAILURE, f"expected one statement, got {len(statements)}")
    return QueryAst(text, statements[0])


def scope_check(ast: QueryAst) -> None:
    """Raise Bypass(UnsupportedConstruct) for constructs outside the subset."""
    tree = ast.tree
    if isinstance(tree, (exp.Union, exp.Intersect, exp.Except)) or tree.find(exp.Union, exp.Intersect, exp.Except):
        raise _unsupported("set operation")
    if not isinstance(tree, exp.Select):
        raise _unsupported(f"{type(tree).__name__} statement")
    if tree.find(exp.Window):
        raise _unsupported("window function")
    with_ = tree.args.get("with_") or tree.args.get("with")
    if with_ is not None or tree.find(exp.CTE):
        raise _unsupported("recursive CTE" if with_ is not None and with_.args.get("recursive") else "CTE")
    if tree.find(exp.Lateral):
        raise _unsupported("lateral join")
    if tree.find(exp.Subquery) or any(s is not tree for s in tree.find_all(exp.Select)):
        raise _unsupported("subquery")
    if tree.args.get("distinct") is not None:
        raise _unsupported("DISTINCT outside COUNT")
    for node in tree.find_all(exp.Distinct):
        if not isinstance(node.parent, exp.Count):
            raise _unsupported("DISTINCT outside COUNT")
    for key in ("offset", "qualify", "pivots", "laterals", "connect", "fetch"):
        if tree.args.get(key):
            raise _unsupported(key.upper())
    for join in tree.args.get("joins") or []:
        side = (join.args.get("side") or "").upper()
        kind = (join.args.get("kind") or "").upper()
        if side:
            raise _unsupported(f"{side} OUTER join")
        if kind and kind != "INNER":
            raise _unsupported(f"{kind} join")
        if join.args.get("using"):
            raise _unsupported("JOIN ... USING")
        on = join.args.get("on")
        if on is None:
            raise _unsupported("join without ON condition")
        while isinstance(on, exp.Paren):
            on = on.this
        if not (isinstance(on, exp.EQ) and isinstance(on.this, exp.Column) and isinstance(on.expression, exp.Column)):
            raise _unsupported("non-equi join")
    group = tree.args.get("group")
    if group is not None and any(group.args.get(k) for k in ("rollup", "cube", "grouping_sets")):
        raise _unsupported("GROUP BY ROLLUP/CUBE/GROUPING SETS")


# -- literals --------------------------------------------------------------


def _literal(node: exp.Expression) -> tuple[str, Any] | None:
    """(kind, value) for literal nodes; None when ``node`` is not a literal."""
    while isinstance(node, exp.Paren):
        node = node.this
    if isinstance(node, exp.Null):
        return ("null", None)
    if isinstance(node, exp.Boolean):
        return ("bool", node.this)
    if isinstance(node, exp.Neg):
        inner = _literal(node.this)
        if inner is None or inner[0] != "num":
            return None
        return ("num", -inner[1])
    if isinstance(node, exp.Literal):
        if node.is_string:
            return ("str", node.this)
        text = str(node.this)
        try:
            return ("num", int(text) if _INT.match(text) else Decimal(text))
        except InvalidOperation:
            return None
    if isinstance(node, exp.Cast) and isinstance(node.this, exp.Literal) and node.this.is_string:
        target = node.args["to"].this
        if target == exp.DataType.Type.DATE:
            return ("date", node.this.this)
        if target in (exp.DataType.Type.TIMESTAMP, exp.DataType.Type.DATETIME):
            return ("timestamp", node.this.this)
    return None


class _Resolver:
    """Alias resolution and literal coercion for one query."""

    def __init__(self, tree: exp.Select, schema: SchemaModel):
        self.schema = schema
        self.aliases: dict[str, str] = {}
        self.tables: list[str] = []
        from_ = tree.args.get("from_") or tree.args.get("from")
        if from_ is None:
            raise _unsupported("no FROM clause")
        sources = [from_.this] + [j.this for j in tree.args.get("joins") or []]
        for src in sources:
            if not isinstance(src, exp.Table):
                raise _unsupported(f"{type(src).__name__} in FROM")
            if src.args.get("db") or src.args.get("catalog"):
                raise _unsupported("schema-qualified table")
            name = src.name.lower()
            if not schema.has_table(name):
                raise _bypass(BypassCode.UNKNOWN_COLUMN, f"unknown table {name!r}")
            if name in self.tables:
                raise _bypass(BypassCode.AMBIGUOUS_JOIN_PATH, f"self-join on {name!r}")
            alias = (src.alias or name).lower()
            if alias in self.aliases:
                raise _bypass(BypassCode.UNKNOWN_COLUMN, f"duplicate alias {alias!r}")
            self.aliases[alias] = name
            self.tables.append(name)
        facts = [t for t in self.tables if schema.is_fact(t)]
        if not facts:
            raise _unsupported("no fact table in FROM")
        if len(facts) > 1:
            raise _bypass(BypassCode.MULTIPLE_FACT_TABLES, ", ".join(facts))
        self.fact = facts[0]
        self.time_column = schema.time_column(self.fact)

    def column(self, col: exp.Column) -> str:
        if col.args.get("db") or col.args.get("catalog"):
            raise _unsupported("schema-qualified column")
        name = col.name.lower()
        if col.table:
            alias = col.table.lower()
            table = self.aliases.get(alias)
            if table is None:
                raise _bypass(BypassCode.UNKNOWN_COLUMN, f"unknown table alias {alias!r}")
            if name not in self.schema.table_columns(table):
                raise _bypass(BypassCode.UNKNOWN_COLUMN, f"{table}.{name}")
            return f"{table}.{name}"
        hits = [t for t in self.tables if name in self.schema.table_columns(t)]
        if not hits:
            raise _bypass(BypassCode.UNKNOWN_COLUMN, name)
        if len(hits) > 1:
            raise _bypass(BypassCode.UNKNOWN_COLUMN, f"ambiguous column reference {name!r}")
        return f"{hits[0]}.{name}"

    def coerce(self, col: str, lit: tuple[str, Any]) -> Any:
        kind, value = lit
        ctype = self.schema.column_type(col)
        if kind == "null":
            raise _unsupported(f"comparison with NULL on {col}")
        if kind == "bool":
            raise _bypass(BypassCode.TYPE_MISMATCH, f"boolean literal for {col}")
        if ctype in ("int", "float"):
            if kind != "num":
                raise _bypass(BypassCode.TYPE_MISMATCH, f"{kind} literal for numeric column {col}")
            return canonical_literal(value)
        if ctype == "text":
            if kind != "str":
                raise _bypass(BypassCode.TYPE_MISMATCH, f"{kind} literal for text column {col}")
            return value
        if ctype == "date":
            if kind in ("str", "date") and _ISO_DATE.match(value):
                try:
                    return dt.date.fromisoformat(value).isoformat()
                except ValueError:
                    pass
            if kind == "timestamp" or (kind == "str" and _ISO_TIMESTAMP.match(value)):
                if col == self.time_column:
                    raise _bypass(BypassCode.UNRESOLVED_TIME_WINDOW, f"sub-day bound {value!r}")
                raise _bypass(BypassCode.TYPE_MISMATCH, f"timestamp literal for date column {col}")
            raise _bypass(BypassCode.TYPE_MISMATCH, f"{value!r} is not an ISO date for {col}")
        raise _bypass(BypassCode.TYPE_MISMATCH, f"unsupported column type for {col}")

    def aggregate(self, node: exp.Expression) -> Measure | None:
        agg = _AGG_NODES.get(type(node))
        if agg is None:
            if isinstance(node, exp.AggFunc):
                raise _unsupported(f"aggregate {type(node).__name__.upper()}")
            return None
        arg = node.this
        distinct = False
        if isinstance(arg, exp.Distinct):
            if agg != "COUNT":
                raise _unsupported("DISTINCT outside COUNT")
            if len(arg.expressions) != 1:
                raise _unsupported("multi-column COUNT(DISTINCT)")
            arg, distinct = arg.expressions[0], True
        if node.expressions:
            raise _unsupported("multi-argument aggregate")
        if isinstance(arg, exp.Star):
            if agg != "COUNT" or distinct:
                raise _unsupported(f"{agg}(*)")
            return Measure.of("COUNT", "*")
        if not isinstance(arg, exp.Column):
            raise _unsupported("expression inside aggregate")
        return Measure.of(agg, self.column(arg), distinct)


# -- WHERE -----------------------------------------------------------------


def _conjuncts(node: exp.Expression | None) -> list[exp.Expression]:
    if node is None:
        return []
    while isinstance(node, exp.Paren):
        node = node.this
    if isinstance(node, exp.And):
        return _conjuncts(node.this) + _conjuncts(node.expression)
    return [node]


def _disjuncts(node: exp.Expression) -> list[exp.Expression]:
    while isinstance(node, exp.Paren):
        node = node.this
    if isinstance(node, exp.Or):
        return _disjuncts(node.this) + _disjuncts(node.expression)
    return [node]


def _comparison(node: exp.Expression, res: _Resolver, negate: bool = False) -> Predicate:
    op = _CMP_NODES[type(node)]
    left, right = node.this, node.expression
    if isinstance(left, exp.Column) and isinstance(right, exp.Column):
        raise _unsupported("column-to-column comparison")
    if not isinstance(left, exp.Column):
        left, right, op = right, left, _FLIP[op]
    if not isinstance(left, exp.Column):
        raise _unsupported("comparison without a column")
    lit = _literal(right)
    if lit is None:
        raise _unsupported("comparison against a non-literal expression")
    col = res.column(left)
    return Predicate(col, _NEGATE[op] if negate else op, res.coerce(col, lit))


def _in_list(node: exp.In, res: _Resolver) -> tuple[str, list[Any]]:
    if node.args.get("query") is not None or node.args.get("unnest") is not None:
        raise _unsupported("subquery")
    if not isinstance(node.this, exp.Column):
        raise _unsupported("IN over a non-column expression")
    col = res.column(node.this)
    values = []
    for item in node.expressions:
        lit = _literal(item)
        if lit is None:
            raise _unsupported("IN list with non-literal")
        values.append(res.coerce(col, lit))
    return col, values


def _predicates(node: exp.Expression, res: _Resolver) -> list[Predicate]:
    while isinstance(node, exp.Paren):
        node = node.this
    if type(node) in _CMP_NODES:
        return [_comparison(node, res)]
    if isinstance(node, exp.Between):
        if not isinstance(node.this, exp.Column):
            raise _unsupported("BETWEEN over a non-column expression")
        col = res.column(node.this)
        lo, hi = _literal(node.args["low"]), _literal(node.args["high"])
        if lo is None or hi is None:
            raise _unsupported("BETWEEN with non-literal bounds")
        return [Predicate(col, ">=", res.coerce(col, lo)), Predicate(col, "<=", res.coerce(col, hi))]
    if isinstance(node, exp.In):
        col, values = _in_list(node, res)
        return [Predicate(col, "IN", tuple(values))]
    if isinstance(node, exp.Is):
        if isinstance(node.this, exp.Column) and isinstance(node.expression, exp.Null):
            return [Predicate(res.column(node.this), "IS_NULL")]
        raise _unsupported("IS over a non-NULL operand")
    if isinstance(node, exp.Like):
        if not isinstance(node.this, exp.Column) or node.args.get("escape"):
            raise _unsupported("LIKE form")
        col = res.column(node.this)
        lit = _literal(node.expression)
        if lit is None or lit[0] != "str":
            raise _unsupported("LIKE with non-string pattern")
        if res.schema.column_type(col) != "text":
            raise _bypass(BypassCode.TYPE_MISMATCH, f"LIKE on non-text column {col}")
        return [Predicate(col, "LIKE", lit[1])]
    if isinstance(node, exp.Not):
        inner = node.this
        while isinstance(inner, exp.Paren):
            inner = inner.this
        if type(inner) in _CMP_NODES:
            return [_comparison(inner, res, negate=True)]
        if isinstance(inner, exp.In):
            col, values = _in_list(inner, res)
            return [Predicate(col, "NOT_IN", tuple(values))]
        if isinstance(inner, exp.Is) and isinstance(inner.this, exp.Column) and isinstance(inner.expression, exp.Null):
            return [Predicate(res.column(inner.this), "IS_NOT_NULL")]
        raise _unsupported(f"NOT {type(inner).__name__.upper()}")
    if isinstance(node, exp.Or):
        col = None
        values: list[Any] = []
        for part in _disjuncts(node):
            if isinstance(part, exp.EQ):
                p = _comparison(part, res)
                pcol, pvals = p.col, [p.val]
            elif isinstance(part, exp.In):
                pcol, pvals = _in_list(part, res)
            else:
                raise _unsupported("disjunction")
            if col is not None and pcol != col:
                raise _unsupported("disjunction across columns")
            col = pcol
            values += pvals
        return [Predicate(col, "IN", tuple(values))]
    raise _unsupported(f"predicate {type(node).__name__}")


def extract_time_window(
    conjuncts: Iterable[Predicate], schema: SchemaModel, fact: str
) -> tuple[TimeWindow | None, list[Predicate]]:
    """Fold predicates on the fact's time column into one half-open window."""
    time_col = schema.time_column(fact)
    remaining: list[Predicate] = []
    lower: dt.date | None = None
    upper: dt.date | None = None
    for p in conjuncts:
        if time_col is None or p.col != time_col:
            remaining.append(p)
            continue
        if p.op not in ("=", "<", "<=", ">", ">="):
            raise _bypass(BypassCode.UNRESOLVED_TIME_WINDOW, f"{p.op} on time column does not form an interval")
        d = dt.date.fromisoformat(str(p.val))
        lo = {"=": d, ">=": d, ">": d + _ONE_DAY}.get(p.op)
        hi = {"=": d + _ONE_DAY, "<": d, "<=": d + _ONE_DAY}.get(p.op)
        if lo is not None:
            lower = lo if lower is None else max(lower, lo)
        if hi is not None:
            upper = hi if upper is None else min(upper, hi)
    if lower is None and upper is None:
        return None, remaining
    if lower is None or upper is None:
        raise _bypass(BypassCode.UNRESOLVED_TIME_WINDOW, "time window has only one bound")
    if not lower < upper:
        raise _bypass(BypassCode.UNRESOLVED_TIME_WINDOW, f"empty time window [{lower}, {upper})")
    return TimeWindow(lower, upper), remaining


# -- SELECT / GROUP BY / HAVING / ORDER BY ---------------------------------


def _int_literal(node: exp.Expression) -> int | None:
    lit = _literal(node)
    if lit is not None and lit[0] == "num" and isinstance(lit[1], int):
        return lit[1]
    return None


def canonicalize_sql(ast: QueryAst, schema: SchemaModel, scope: str | None = None) -> IntentSignature:
    """Deterministic SQL -> signature. Raises Bypass for anything outside the subset."""
    tree = ast.tree
    if not isinstance(tree, exp.Select):
        raise _unsupported(f"{type(tree).__name__} statement")
    res = _Resolver(tree, schema)

    for join in tree.args.get("joins") or []:
        on = join.args["on"]
        while isinstance(on, exp.Paren):
            on = on.this
        a, b = res.column(on.this), res.column(on.expression)
        if schema.fk_between(a, b) is None:
            raise _unsupported(f"join condition {a} = {b} is not a declared foreign key")

    # select list: canonical name per item, plus aliases for HAVING/ORDER BY
    items: list[tuple[str, str]] = []  # (kind, canonical name)
    aliases: dict[str, tuple[str, str]] = {}
    measures: list[Measure] = []
    select_levels: list[str] = []
    for node in tree.expressions:
        alias = None
        if isinstance(node, exp.Alias):
            alias, node = node.alias.lower(), node.this
        if isinstance(node, exp.Star):
            raise _unsupported("SELECT *")
        m = res.aggregate(node)
        if m is not None:
            measures.append(m)
            item = ("measure", m.name)
        elif isinstance(node, exp.Column):
            col = res.column(node)
            select_levels.append(col)
            item = ("level", col)
        else:
            raise _unsupported(f"select expression {type(node).__name__}")
        items.append(item)
        if alias:
            aliases[alias] = item
    if not measures:
        raise _unsupported("no aggregate in SELECT")

    group_cols: list[str] = []
    group = tree.args.get("group")
    for node in group.expressions if group is not None else []:
        ordinal = _int_literal(node)
        if ordinal is not None:
            if not 1 <= ordinal <= len(items) or items[ordinal - 1][0] != "level":
                raise _unsupported(f"GROUP BY ordinal {ordinal}")
            group_cols.append(items[ordinal - 1][1])
        elif isinstance(node, exp.Column):
            try:
                group_cols.append(res.column(node))
            except Bypass:
                item = aliases.get(node.name.lower()) if not node.table else None
                if item is None or item[0] != "level":
                    raise
                group_cols.append(item[1])
        else:
            raise _unsupported("GROUP BY expression")
    if set(group_cols) != set(select_levels):
        raise _unsupported("SELECT grouping columns differ from GROUP BY")

    where = tree.args.get("where")
    preds: list[Predicate] = []
    for c in _conjuncts(where.this if where is not None else None):
        preds += _predicates(c, res)
    window, filters = extract_time_window(preds, schema, res.fact)

    measure_names = {m.name for m in measures}

    def measure_ref(node: exp.Expression) -> str:
        m = res.aggregate(node)
        if m is not None:
            if m.name not in measure_names:
                raise _unsupported(f"{m.name} is not in the SELECT list")
            return m.name
        if isinstance(node, exp.Column) and not node.table and aliases.get(node.name.lower(), ("",))[0] == "measure":
            return aliases[node.name.lower()][1]
        raise _unsupported("HAVING must compare a selected aggregate with a literal")

    having: list[Predicate] = []
    hv = tree.args.get("having")
    for c in _conjuncts(hv.this if hv is not None else None):
        if isinstance(c, exp.Between):
            ref = measure_ref(c.this)
            bounds = [_literal(c.args["low"]), _literal(c.args["high"])]
            if any(b is None or b[0] != "num" for b in bounds):
                raise _bypass(BypassCode.TYPE_MISMATCH, "HAVING bound must be numeric")
            having += [Predicate(ref, ">=", bounds[0][1]), Predicate(ref, "<=", bounds[1][1])]
            continue
        if type(c) not in _CMP_NODES:
            raise _unsupported(f"HAVING {type(c).__name__}")
        op = _CMP_NODES[type(c)]
        left, right = c.this, c.expression
        if _literal(left) is not None:
            left, right, op = right, left, _FLIP[op]
        lit = _literal(right)
        if lit is None:
            raise _unsupported("HAVING against a non-literal")
        if lit[0] != "num":
            raise _bypass(BypassCode.TYPE_MISMATCH, "HAVING literal must be numeric")
        having.append(Predicate(measure_ref(left), op, lit[1]))

    order_by: list[OrderItem] = []
    order = tree.args.get("order")
    for o in order.expressions if order is not None else []:
        desc = bool(o.args.get("desc"))
        nulls_first = o.args.get("nulls_first")
        if nulls_first is not None and bool(nulls_first) != (not desc):
            raise _unsupported("non-default NULLS FIRST/LAST")
        node = o.this
        ordinal = _int_literal(node)
        if ordinal is not None:
            if not 1 <= ordinal <= len(items):
                raise _unsupported(f"ORDER BY ordinal {ordinal}")
            ref = items[ordinal - 1][1]
        elif isinstance(node, exp.Column) and not node.table and node.name.lower() in aliases:
            ref = aliases[node.name.lower()][1]
        elif isinstance(node, exp.Column):
            ref = res.column(node)
            if ref not in select_levels:
                raise _unsupported(f"ORDER BY {ref} which is not selected")
        else:
            m = res.aggregate(node)
            if m is None:
                raise _unsupported("ORDER BY expression")
            if m.name not in measure_names:
                raise _unsupported(f"ORDER BY {m.name} which is not selected")
            ref = m.name
        order_by.append(OrderItem(ref, desc))

    limit = None
    lim = tree.args.get("limit")
    if lim is not None:
        limit = _int_literal(lim.expression if isinstance(lim, exp.Limit) else lim)
        if limit is None:
            raise _unsupported("non-literal LIMIT")

    sig = IntentSignature(
        fact=res.fact,
        measures=tuple(measures),
        levels=tuple(select_levels),
        filters=tuple(filters),
        time_window=window,
        post_agg=PostAggregation(tuple(having), tuple(order_by), limit),
        scope=scope,
    )
    sig = normalize(sig)
    try:
        resolve_join_path(schema, sig.fact, sig.referenced_columns())
    except AmbiguousJoinPath as exc:
        raise _bypass(BypassCode.AMBIGUOUS_JOIN_PATH, str(exc)) from exc
    except UnreachableColumn as exc:
        raise _bypass(BypassCode.UNKNOWN_COLUMN, str(exc)) from exc
    return sig


def sql_to_signature(text: str, schema: SchemaModel, scope: str | None = None) -> IntentSignature:
    """parse -> scope_check -> canonicalize in one call."""
    ast = parse_sql(text)
    scope_check(ast)
    return canonicalize_sql(ast, schema, scope)


# -- rendering -------------------------------------------------------------


def render_literal(v: Any) -> str:
    if isinstance(v, str):
        return "'" + v.replace("'", "''") + "'"
    if isinstance(v, bool):
        raise TypeError("boolean literal")
    if isinstance(v, int):
        return str(v)
    if isinstance(v, Decimal):
        return decimal_text(v)
    if isinstance(v, dt.date):
        return f"'{v.isoformat()}'"
    raise TypeError(f"cannot render {v!r}")


def render_predicate(p: Predicate) -> str:
    if p.op == "IS_NULL":
        return f"{p.col} IS NULL"
    if p.op == "IS_NOT_NULL":
        return f"{p.col} IS NOT NULL"
    if p.op in ("IN", "NOT_IN"):
        items = ", ".join(render_literal(v) for v in p.val)
        return f"{p.col} {'IN' if p.op == 'IN' else 'NOT IN'} ({items})"
    if p.op == "LIKE":
        return f"{p.col} LIKE {render_literal(p.val)}"
    assert p.op in COMPARISONS
    return f"{p.col} {'<>' if p.op == '!=' else p.op} {render_literal(p.val)}"


def render_sql(sig: IntentSignature, schema: SchemaModel) -> str:
    """Plain SQL for a validated signature; joins follow the FK path."""
    sig = normalize(sig)
    path = resolve_join_path(schema, sig.fact, sig.referenced_columns())
    lines = ["SELECT " + ", ".join(sig.output_names), f"FROM {sig.fact}"]
    for s in path.steps:
        lines.append(f"JOIN {s.to_table} ON {s.from_table}.{s.fk_column} = {s.to_table}.{s.key_column}")
    conds = [render_predicate(p) for p in sig.filters]
    if sig.time_window is not None:
        tc = schema.time_column(sig.fact)
        conds.append(f"{tc} >= '{sig.time_window.start.isoformat()}'")
        conds.append(f"{tc} < '{sig.time_window.end.isoformat()}'")
    if conds:
        lines.append("WHERE " + "\n  AND ".join(conds))
    if sig.levels:
        lines.append("GROUP BY " + ", ".join(sig.levels))
    pa = sig.post_agg
    if pa is not None:
        if pa.having:
            lines.append("HAVING " + " AND ".join(render_predicate(p) for p in pa.having))
        if pa.order_by:
            lines.append("ORDER BY " + ", ".join(f"{o.expr} {'DESC' if o.desc else 'ASC'}" for o in pa.order_by))
        if pa.limit is not None:
            lines.append(f"LIMIT {pa.limit}")
    return "\n".join(lines)
