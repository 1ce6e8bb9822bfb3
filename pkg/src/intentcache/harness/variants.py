"""SQL surface variants of an intent, grouped into seven rewrite classes.

Every variant renders the same intent. The classes mirror how dashboards,
notebooks and hand-written SQL differ in practice:

- ``whitespace_case``: keyword case and layout
- ``alias_rename``: table alias scheme (none, short, long, with or without AS)
- ``join_order``: JOIN order and ON operand order
- ``predicate_order``: WHERE conjunct order and literal-on-the-left comparisons
- ``group_by``: GROUP BY permutation and ordinal references
- ``between``: the time window as BETWEEN or as other inequality pairs
- ``in_list``: IN-list value order, or the same list as an OR of equalities
"""

from __future__ import annotations

import datetime as dt
import itertools
import random
import re
from dataclasses import dataclass, field, replace
from typing import Any

from ..errors import VerificationFailure
from ..schema import SchemaModel, resolve_join_path
from ..signature import LIST_OPS, IntentSignature, Predicate, normalize
from ..sqlcanon import render_literal, render_predicate, render_sql
from ..table import ResultTable

CLASSES = ("whitespace_case", "alias_rename", "join_order", "predicate_order", "group_by", "between", "in_list")
# classes whose variants a formatting/alias-normalizing AST key cannot merge with the base
REORDER_CLASSES = frozenset({"join_order", "predicate_order", "group_by", "between", "in_list"})


@dataclass(frozen=True)
class Style:
    aliases: tuple[tuple[str, str], ...] | None = None  # None: bare table names
    as_keyword: bool = False
    join_order: tuple[int, ...] | None = None
    flip_on: tuple[int, ...] = ()
    pred_order: tuple[int, ...] | None = None
    literal_left: tuple[int, ...] = ()
    group_order: tuple[int, ...] | None = None
    group_ordinal: bool = False
    window: str = "halfopen"  # halfopen | between | closed | open_low
    in_orders: tuple[tuple[int, tuple[int, ...]], ...] = ()
    in_as_or: tuple[int, ...] = ()
    keywords: str = "upper"  # upper | lower | title
    layout: str = "lines"  # lines | one | indent | ragged


@dataclass(frozen=True)
class Variant:
    text: str
    cls: str  # one of CLASSES, or "canonical"
    style: Style = field(default_factory=Style, compare=False)


_KEYWORDS = ("SELECT", "FROM", "JOIN", "ON", "WHERE", "AND", "OR", "GROUP BY", "HAVING", "ORDER BY", "LIMIT", "BETWEEN", "IN", "AS", "DESC", "ASC", "NOT", "IS", "NULL", "LIKE")


def _short_aliases(tables: list[str]) -> tuple[tuple[str, str], ...]:
    used: set[str] = set()
    out = []
    for t in tables:
        a = t[0]
        if a in used:
            a = t[:2]
        used.add(a)
        out.append((t, a))
    return tuple(out)


class _Renderer:
    def __init__(self, sig: IntentSignature, schema: SchemaModel):
        self.sig = normalize(sig)
        self.schema = schema
        self.path = resolve_join_path(schema, self.sig.fact, self.sig.referenced_columns())
        self.tables = [self.sig.fact] + [s.to_table for s in self.path.steps]
        self.time_col = schema.time_column(self.sig.fact) if self.sig.time_window else None

    def base_style(self) -> Style:
        return Style(aliases=_short_aliases(self.tables))

    # -- pieces -----------------------------------------------------------------

    def _col(self, qualified: str, st: Style) -> str:
        table, _, col = qualified.partition(".")
        amap = dict(st.aliases or ())
        return f"{amap.get(table, table)}.{col}"

    def _table_ref(self, table: str, st: Style) -> str:
        amap = dict(st.aliases or ())
        if table not in amap:
            return table
        return f"{table} AS {amap[table]}" if st.as_keyword else f"{table} {amap[table]}"

    def _measure(self, m: Any, st: Style) -> str:
        if m.expr == "*":
            return "COUNT(*)"
        if m.agg == "COUNT_DISTINCT":
            return f"COUNT(DISTINCT {self._col(m.expr, st)})"
        return f"{m.agg}({self._col(m.expr, st)})"

    def _predicate(self, i: int, p: Predicate, st: Style) -> str:
        col = self._col(p.col, st)
        if p.op in LIST_OPS:
            vals = list(p.val)
            order = dict(st.in_orders).get(i)
            if order is not None:
                vals = [vals[k] for k in order]
            if i in st.in_as_or and p.op == "IN":
                return "(" + " OR ".join(f"{col} = {render_literal(v)}" for v in vals) + ")"
            return render_predicate(replace(p, col=col, val=tuple(vals)))
        if i in st.literal_left and p.op in _FLIP:
            op = "<>" if p.op == "!=" else p.op
            return f"{render_literal(p.val)} {_FLIP[op]} {col}"
        return render_predicate(replace(p, col=col))

    def _window(self, st: Style, base: int) -> list[tuple[int, str]]:
        if self.sig.time_window is None:
            return []
        w = self.sig.time_window
        col = self._col(self.time_col, st)
        last = (w.end - dt.timedelta(days=1)).isoformat()
        s, e = w.start.isoformat(), w.end.isoformat()
        before = (w.start - dt.timedelta(days=1)).isoformat()
        if st.window == "between":
            return [(base, f"{col} BETWEEN '{s}' AND '{last}'")]
        lo = f"{col} > '{before}'" if st.window == "open_low" else f"{col} >= '{s}'"
        hi = f"{col} <= '{last}'" if st.window == "closed" else f"{col} < '{e}'"
        if base in st.literal_left:
            lo = f"'{s}' <= {col}" if st.window != "open_low" else f"'{before}' < {col}"
        if base + 1 in st.literal_left:
            hi = f"'{last}' >= {col}" if st.window == "closed" else f"'{e}' > {col}"
        return [(base, lo), (base + 1, hi)]

    def conjuncts(self, st: Style) -> list[str]:
        items = [(i, self._predicate(i, p, st)) for i, p in enumerate(self.sig.filters)]
        items += self._window(st, len(self.sig.filters))
        texts = [t for _, t in items]
        if st.pred_order is not None:
            texts = [texts[k] for k in st.pred_order if k < len(texts)]
        return texts

    def n_conjuncts(self, window: str = "halfopen") -> int:
        w = 0 if self.sig.time_window is None else (1 if window == "between" else 2)
        return len(self.sig.filters) + w

    # -- whole statement --------------------------------------------------------

    def render(self, st: Style) -> str:
        sig = self.sig
        select = [self._col(lv, st) for lv in sig.levels] + [self._measure(m, st) for m in sig.measures]
        clauses = [("SELECT", ", ".join(select)), ("FROM", self._table_ref(sig.fact, st))]
        steps = list(self.path.steps)
        if st.join_order is not None:
            steps = [steps[k] for k in st.join_order]
        for k, s in enumerate(steps):
            left = self._col(f"{s.from_table}.{s.fk_column}", st)
            right = self._col(f"{s.to_table}.{s.key_column}", st)
            on = f"{right} = {left}" if k in st.flip_on else f"{left} = {right}"
            clauses.append(("JOIN", f"{self._table_ref(s.to_table, st)} ON {on}"))
        conds = self.conjuncts(st)
        if conds:
            clauses.append(("WHERE", " AND ".join(conds)))
        if sig.levels:
            refs = [self._col(lv, st) for lv in sig.levels]
            idx = list(range(len(refs)))
            if st.group_order is not None:
                idx = list(st.group_order)
            items = [str(k + 1) if st.group_ordinal else refs[k] for k in idx]
            clauses.append(("GROUP BY", ", ".join(items)))
        pa = sig.post_agg
        if pa is not None:
            by_name = {m.name: self._measure(m, st) for m in sig.measures}
            by_name.update({lv: self._col(lv, st) for lv in sig.levels})
            if pa.having:
                having = []
                for p in pa.having:
                    having.append(render_predicate(replace(p, col=by_name[p.col])))
                clauses.append(("HAVING", " AND ".join(having)))
            if pa.order_by:
                clauses.append(("ORDER BY", ", ".join(f"{by_name[o.expr]} {'DESC' if o.desc else 'ASC'}" for o in pa.order_by)))
            if pa.limit is not None:
                clauses.append(("LIMIT", str(pa.limit)))
        return _layout(clauses, st)


_FLIP = {"=": "=", "!=": "<>", "<>": "<>", "<": ">", ">": "<", "<=": ">=", ">=": "<="}


def _case(kw: str, how: str) -> str:
    return {"upper": kw.upper(), "lower": kw.lower(), "title": kw.title()}[how]


def _kw_case(text: str, how: str) -> str:
    """Re-case SQL keywords outside string literals."""
    if how == "upper":
        return text
    out = []
    parts = text.split("'")
    for n, part in enumerate(parts):
        if n % 2 == 0:
            for kw in sorted(_KEYWORDS, key=len, reverse=True):
                part = _replace_word(part, kw, _case(kw, how))
            for fn in ("SUM", "COUNT", "AVG", "MIN", "MAX", "DISTINCT"):
                part = _replace_word(part, fn, _case(fn, how))
        out.append(part)
    return "'".join(out)


def _replace_word(text: str, word: str, repl: str) -> str:
    return re.sub(r"(?<![\w.])" + re.escape(word) + r"(?![\w])", repl, text)


def _layout(clauses: list[tuple[str, str]], st: Style) -> str:
    if st.layout == "one":
        text = " ".join(f"{k} {v}" for k, v in clauses)
    elif st.layout == "indent":
        text = "\n".join(f"{k}\n    {v.replace(' AND ', chr(10) + '    AND ')}" for k, v in clauses)
    elif st.layout == "ragged":
        text = "\n".join(f"  {k}   {v}\t" for k, v in clauses)
    else:
        text = "\n".join(f"{k} {v}" for k, v in clauses)
    return _kw_case(text, st.keywords)


def _perms(n: int, rng: random.Random, limit: int = 24) -> list[tuple[int, ...]]:
    ident = tuple(range(n))
    perms = [p for p in itertools.permutations(range(n)) if p != ident] if n <= 5 else []
    if n > 5:
        seen = set()
        while len(seen) < limit:
            p = list(ident)
            rng.shuffle(p)
            if tuple(p) != ident:
                seen.add(tuple(p))
        perms = sorted(seen)
    rng.shuffle(perms)
    return perms[:limit]


def class_candidates(r: _Renderer, cls: str, rng: random.Random) -> list[Style]:
    """Styles for one class, each differing from the base only in that class's knob."""
    base = r.base_style()
    sig = r.sig
    if cls == "whitespace_case":
        first = [("lower", "one"), ("upper", "indent"), ("title", "ragged")]
        rest = [(k, l) for k in ("lower", "title", "upper") for l in ("lines", "one", "indent", "ragged")]
        combos = first + [c for c in rest if c not in first and c != ("upper", "lines")]
        return [replace(base, keywords=k, layout=l) for k, l in combos]
    if cls == "alias_rename":
        schemes = [
            (None, False),
            (tuple((t, f"{t[:3]}_{k}") for k, t in enumerate(r.tables)), True),
            (base.aliases, True),
            (tuple((t, f"t{k}") for k, t in enumerate(r.tables)), False),
            (tuple((t, f"{t}_x") for t in r.tables), False),
            (tuple((t, chr(ord("z") - k)) for k, t in enumerate(r.tables)), True),
        ]
        return [replace(base, aliases=a, as_keyword=kw) for a, kw in schemes]
    if cls == "join_order":
        n = len(r.path.steps)
        out = [replace(base, join_order=p) for p in _perms(n, rng)]
        out += [replace(base, flip_on=tuple(range(n)))] if n else []
        out += [replace(base, join_order=p, flip_on=(0,)) for p in _perms(n, rng)[:2]]
        return out
    if cls == "predicate_order":
        n = r.n_conjuncts()
        out = [replace(base, pred_order=p) for p in _perms(n, rng)]
        flippable = [i for i, p in enumerate(sig.filters) if p.op in _FLIP]
        flippable += list(range(len(sig.filters), n))
        for k in flippable:
            out.insert(min(1, len(out)), replace(base, literal_left=(k,)))
        return out
    if cls == "group_by":
        n = len(sig.levels)
        out = [replace(base, group_order=p) for p in _perms(n, rng)]
        if n:
            out.insert(min(1, len(out)), replace(base, group_ordinal=True))
            rev = tuple(reversed(range(n)))
            if n > 1:
                out.append(replace(base, group_order=rev, group_ordinal=True))
        return out
    if cls == "between":
        if sig.time_window is None:
            return []
        return [replace(base, window="between"), replace(base, window="closed"), replace(base, window="open_low")]
    if cls == "in_list":
        out = []
        for i, p in enumerate(sig.filters):
            if p.op != "IN" or len(p.val) < 2:
                continue
            for perm in _perms(len(p.val), rng, limit=4):
                out.append(replace(base, in_orders=((i, perm),)))
            out.insert(min(1, len(out)), replace(base, in_as_or=(i,)))
        return out
    raise ValueError(f"unknown variant class {cls!r}")


def generate_variants(
    sig: IntentSignature,
    schema: SchemaModel,
    n: int = 21,
    seed: int = 0,
    gold: ResultTable | None = None,
    backend: Any = None,
) -> list[Variant]:
    """``n`` distinct SQL texts for ``sig``: ``n // 7`` per class, backfilled when a class runs dry.

    With ``gold`` and ``backend`` each text is executed and compared to the
    gold result; a mismatch raises VerificationFailure.
    """
    if n <= 0:
        return []
    r = _Renderer(sig, schema)
    if n == 1:
        out = [Variant(render_sql(sig, schema), "canonical")]
    else:
        rng = random.Random(seed)
        pools = {c: class_candidates(r, c, rng) for c in CLASSES}
        seen: set[str] = {r.render(r.base_style())}
        picked: dict[str, list[Variant]] = {c: [] for c in CLASSES}
        spare: dict[str, list[Variant]] = {c: [] for c in CLASSES}
        per = n // len(CLASSES)
        for c in CLASSES:
            for st in pools[c]:
                text = r.render(st)
                if text in seen:
                    continue
                seen.add(text)
                (picked[c] if len(picked[c]) < per else spare[c]).append(Variant(text, c, st))
        out = [v for c in CLASSES for v in picked[c]]
        # backfill round-robin from classes with spare candidates
        while len(out) < n and any(spare.values()):
            for c in CLASSES:
                if spare[c] and len(out) < n:
                    out.append(spare[c].pop(0))
        if len(out) < n:
            raise ValueError(f"only {len(out)} distinct variants available, asked for {n}")
    if gold is not None and backend is not None:
        verify_variants(out, sig, schema, gold, backend)
    return out


def verify_variants(variants: list[Variant], sig: IntentSignature, schema: SchemaModel, gold: ResultTable, backend: Any) -> None:
    from ..executor.backend import conform

    for v in variants:
        got = conform(backend.execute(v.text), sig, schema)
        if not got.equals(gold):
            raise VerificationFailure(f"variant ({v.cls}) differs from gold:\n{v.text}")


def expected_key_counts(variants: list[Variant]) -> dict[str, int]:
    """Distinct keys each method should see, derived from the class labels alone.

    TextCache merges only the whitespace/case class into one key; ASTCache also
    merges alias renames into it; SigCache merges everything.
    """
    classes = [v.cls for v in variants]
    ws = classes.count("whitespace_case")
    alias = classes.count("alias_rename")
    others = len(classes) - ws - alias
    return {
        "TextCache": (1 if ws else 0) + alias + others,
        "ASTCache": (1 if ws or alias else 0) + others,
        "SigCache": 1 if classes else 0,
    }
