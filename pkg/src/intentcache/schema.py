"""Star/snowflake schema model: tables, foreign keys, hierarchies.

The schema is declared in a YAML document (see ``docs/schema_format.md``)::

    schema_version: retail-1
    fact_tables:
      - name: sales
        time_column: sale_date
        measures: {quantity: int, gross_amount: float}
        attributes: {date_id: int, store_id: int, sale_date: date}
    dimensions:
      - name: stores
        key: store_id
        attributes: {store_id: int, city: text, region: text}
    foreign_keys:
      - {table: sales, column: store_id, references: stores, key: store_id}
    hierarchies:
      - {dimension: stores, levels: [region, city]}
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import yaml

from .errors import (
    AmbiguousJoinPath,
    IntegrityError,
    ParseError,
    UnknownLevel,
    UnreachableColumn,
)

NUMERIC_TYPES = frozenset({"int", "float"})
COLUMN_TYPES = frozenset({"int", "float", "text", "date"})


@dataclass(frozen=True)
class FactTable:
    name: str
    measures: tuple[tuple[str, str], ...]
    degenerate_attributes: tuple[tuple[str, str], ...] = ()
    time_column: str | None = None

    @property
    def columns(self) -> dict[str, str]:
        return dict(self.degenerate_attributes + self.measures)


@dataclass(frozen=True)
class DimensionTable:
    name: str
    key: str
    attributes: tuple[tuple[str, str], ...]

    @property
    def columns(self) -> dict[str, str]:
        return dict(self.attributes)


@dataclass(frozen=True)
class ForeignKey:
    table: str
    column: str
    references: str
    key: str


@dataclass(frozen=True)
class Level:
    dimension: str
    column: str

    @property
    def qualified(self) -> str:
        return f"{self.dimension}.{self.column}"

    @classmethod
    def parse(cls, qualified: str) -> "Level":
        table, _, column = qualified.lower().partition(".")
        if not column:
            raise UnknownLevel(qualified)
        return cls(table, column)


@dataclass(frozen=True)
class Hierarchy:
    dimension: str
    levels: tuple[Level, ...]  # coarsest first


@dataclass(frozen=True)
class JoinStep:
    from_table: str
    fk_column: str
    to_table: str
    key_column: str


@dataclass(frozen=True)
class JoinPath:
    steps: tuple[JoinStep, ...] = ()

    @property
    def tables(self) -> list[str]:
        return [s.to_table for s in self.steps]


class LevelRelation(str, Enum):
    EQUAL = "Equal"
    ANCESTOR_OF = "AncestorOf"
    DESCENDANT_OF = "DescendantOf"
    UNRELATED = "Unrelated"


@dataclass(frozen=True)
class SchemaModel:
    fact_tables: tuple[FactTable, ...]
    dimensions: tuple[DimensionTable, ...] = ()
    foreign_keys: tuple[ForeignKey, ...] = ()
    hierarchies: tuple[Hierarchy, ...] = ()
    schema_version: str = "0"
    _tables: dict[str, dict[str, str]] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        tables: dict[str, dict[str, str]] = {}
        for t in (*self.fact_tables, *self.dimensions):
            tables[t.name] = t.columns
        object.__setattr__(self, "_tables", tables)

    # -- lookups -----------------------------------------------------------

    @property
    def table_names(self) -> list[str]:
        return list(self._tables)

    def has_table(self, name: str) -> bool:
        return name in self._tables

    def is_fact(self, name: str) -> bool:
        return any(f.name == name for f in self.fact_tables)

    def fact(self, name: str) -> FactTable:
        for f in self.fact_tables:
            if f.name == name:
                return f
        raise KeyError(name)

    def dimension(self, name: str) -> DimensionTable:
        for d in self.dimensions:
            if d.name == name:
                return d
        raise KeyError(name)

    def table_columns(self, table: str) -> dict[str, str]:
        return self._tables[table]

    def column_type(self, qualified: str) -> str | None:
        table, _, column = qualified.partition(".")
        return self._tables.get(table, {}).get(column)

    def has_column(self, qualified: str) -> bool:
        return self.column_type(qualified) is not None

    def time_column(self, fact: str) -> str | None:
        tc = self.fact(fact).time_column
        return f"{fact}.{tc}" if tc else None

    def fk_between(self, a: str, b: str) -> ForeignKey | None:
        """The FK matching the column equality ``a = b`` (either orientation)."""
        for fk in self.foreign_keys:
            src = f"{fk.table}.{fk.column}"
            dst = f"{fk.references}.{fk.key}"
            if {a, b} == {src, dst}:
                return fk
        return None

    def all_columns(self) -> list[str]:
        return [f"{t}.{c}" for t, cols in self._tables.items() for c in cols]


# -- loading ---------------------------------------------------------------


def _columns(spec: Any, where: str) -> tuple[tuple[str, str], ...]:
    if spec is None:
        return ()
    if isinstance(spec, Mapping):
        items = list(spec.items())
    elif isinstance(spec, list):
        items = []
        for item in spec:
            if isinstance(item, Mapping) and "name" in item:
                items.append((item["name"], item.get("type")))
            elif isinstance(item, Mapping) and len(item) == 1:
                items.extend(item.items())
            else:
                raise ParseError(f"{where}: bad column entry {item!r}")
    else:
        raise ParseError(f"{where}: expected a mapping of column -> type")
    out = []
    for name, typ in items:
        typ = str(typ).lower()
        if typ not in COLUMN_TYPES:
            raise ParseError(f"{where}: column {name!r} has unknown type {typ!r}")
        out.append((str(name).lower(), typ))
    return tuple(out)


def load_schema(source: str | Path | Mapping[str, Any]) -> SchemaModel:
    """Build a SchemaModel from a YAML path, YAML text, or an already-parsed mapping."""
    if isinstance(source, Mapping):
        doc = source
    else:
        text = source
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).exists()):
            text = Path(source).read_text(encoding="utf-8")
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ParseError(f"invalid YAML: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise ParseError("schema document must be a mapping")
    try:
        facts = tuple(
            FactTable(
                name=str(f["name"]).lower(),
                measures=_columns(f.get("measures"), f"fact {f['name']}"),
                degenerate_attributes=_columns(f.get("attributes"), f"fact {f['name']}"),
                time_column=str(f["time_column"]).lower() if f.get("time_column") else None,
            )
            for f in doc.get("fact_tables") or []
        )
        dims = tuple(
            DimensionTable(
                name=str(d["name"]).lower(),
                key=str(d["key"]).lower(),
                attributes=_columns(d.get("attributes"), f"dimension {d['name']}"),
            )
            for d in doc.get("dimensions") or []
        )
        fks = tuple(
            ForeignKey(
                table=str(k["table"]).lower(),
                column=str(k["column"]).lower(),
                references=str(k["references"]).lower(),
                key=str(k["key"]).lower(),
            )
            for k in doc.get("foreign_keys") or []
        )
        hier = tuple(
            Hierarchy(
                dimension=str(h["dimension"]).lower(),
                levels=tuple(Level(str(h["dimension"]).lower(), str(c).lower()) for c in h["levels"]),
            )
            for h in doc.get("hierarchies") or []
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"missing or malformed field: {exc}") from exc
    if not facts:
        raise ParseError("schema declares no fact table")
    dims = tuple(_with_key(d) for d in dims)
    model = SchemaModel(facts, dims, fks, hier, str(doc.get("schema_version", "0")))
    _check_integrity(model)
    return model


def _with_key(d: DimensionTable) -> DimensionTable:
    if d.key in dict(d.attributes):
        return d
    return DimensionTable(d.name, d.key, ((d.key, "int"),) + d.attributes)


def _check_integrity(model: SchemaModel) -> None:
    seen: set[str] = set()
    for t in (*model.fact_tables, *model.dimensions):
        if t.name in seen:
            raise IntegrityError(f"duplicate table name {t.name!r}")
        seen.add(t.name)
        attrs = t.measures + t.degenerate_attributes if isinstance(t, FactTable) else t.attributes
        names = [n for n, _ in attrs]
        if len(names) != len(set(names)):
            raise IntegrityError(f"duplicate column in {t.name!r}")
    for f in model.fact_tables:
        for name, typ in f.measures:
            if typ not in NUMERIC_TYPES:
                raise IntegrityError(f"measure {f.name}.{name} is not numeric")
        if f.time_column is not None:
            typ = f.columns.get(f.time_column)
            if typ != "date":
                raise IntegrityError(f"time column {f.name}.{f.time_column} must have type date")
    for fk in model.foreign_keys:
        if not model.has_column(f"{fk.table}.{fk.column}"):
            raise IntegrityError(f"foreign key column {fk.table}.{fk.column} does not exist")
        if fk.references not in {d.name for d in model.dimensions}:
            raise IntegrityError(f"foreign key references unknown dimension {fk.references!r}")
        if model.dimension(fk.references).key != fk.key:
            raise IntegrityError(f"foreign key must reference the key of {fk.references!r}")
    for h in model.hierarchies:
        if h.dimension not in {d.name for d in model.dimensions}:
            raise IntegrityError(f"hierarchy on unknown dimension {h.dimension!r}")
        cols = [lv.column for lv in h.levels]
        if len(cols) != len(set(cols)):
            raise IntegrityError(f"hierarchy on {h.dimension!r} repeats a level")
        for lv in h.levels:
            if not model.has_column(lv.qualified):
                raise IntegrityError(f"hierarchy level {lv.qualified} does not exist")


# -- join paths ------------------------------------------------------------


def _paths_to(schema: SchemaModel, start: str, target: str) -> list[tuple[JoinStep, ...]]:
    out: list[tuple[JoinStep, ...]] = []

    def walk(table: str, path: tuple[JoinStep, ...], visited: frozenset[str]) -> None:
        if table == target:
            out.append(path)
            return
        for fk in schema.foreign_keys:
            if fk.table == table and fk.references not in visited:
                step = JoinStep(fk.table, fk.column, fk.references, fk.key)
                walk(fk.references, path + (step,), visited | {fk.references})

    walk(start, (), frozenset({start}))
    return out


def resolve_join_path(schema: SchemaModel, fact: str, referenced: Iterable[str]) -> JoinPath:
    """Unique FK path from ``fact`` covering every table in ``referenced``.

    Raises AmbiguousJoinPath when a referenced table is reachable along two or
    more FK routes (role-playing dimensions, diamonds) and UnreachableColumn
    when it is not reachable at all.
    """
    if not schema.is_fact(fact):
        raise KeyError(f"unknown fact table {fact!r}")
    tables = sorted({c.partition(".")[0] for c in referenced} - {fact})
    steps: list[JoinStep] = []
    for table in tables:
        if not schema.has_table(table):
            raise UnreachableColumn(f"unknown table {table!r}")
        paths = _paths_to(schema, fact, table)
        if not paths:
            raise UnreachableColumn(f"no foreign-key route from {fact!r} to {table!r}")
        if len(paths) > 1:
            raise AmbiguousJoinPath(f"{len(paths)} foreign-key routes from {fact!r} to {table!r}")
        for step in paths[0]:
            if step not in steps:
                steps.append(step)
    # parents before children, then by name, so rendering is stable
    depth = {fact: 0}
    ordered: list[JoinStep] = []
    pending = list(steps)
    while pending:
        ready = sorted((s for s in pending if s.from_table in depth), key=lambda s: (s.to_table, s.fk_column))
        for s in ready:
            depth[s.to_table] = depth[s.from_table] + 1
            ordered.append(s)
            pending.remove(s)
    return JoinPath(tuple(ordered))


def dimension_path(schema: SchemaModel, start: str, target: str) -> JoinPath:
    """Unique FK path between two tables (snowflake chains); empty when equal."""
    if start == target:
        return JoinPath()
    paths = _paths_to(schema, start, target)
    if not paths:
        raise UnreachableColumn(f"no foreign-key route from {start!r} to {target!r}")
    if len(paths) > 1:
        raise AmbiguousJoinPath(f"{len(paths)} foreign-key routes from {start!r} to {target!r}")
    return JoinPath(paths[0])


# -- hierarchies -----------------------------------------------------------


def _check_level(schema: SchemaModel, level: Level) -> None:
    if not schema.has_column(level.qualified):
        raise UnknownLevel(level.qualified)


def level_relation(schema: SchemaModel, a: Level, b: Level) -> LevelRelation:
    """How ``a`` relates to ``b``: AncestorOf means ``a`` is coarser than ``b``."""
    _check_level(schema, a)
    _check_level(schema, b)
    if a == b:
        return LevelRelation.EQUAL
    if a.dimension != b.dimension:
        return LevelRelation.UNRELATED
    for h in schema.hierarchies:
        if a in h.levels and b in h.levels:
            return LevelRelation.ANCESTOR_OF if h.levels.index(a) < h.levels.index(b) else LevelRelation.DESCENDANT_OF
    return LevelRelation.UNRELATED


def check_summarizable(schema: SchemaModel, child: Level, parent: Level, data: Any) -> bool:
    """True iff every child value maps to exactly one parent value in ``data``.

    ``data`` is either a ResultTable holding both columns or an iterable of
    ``(child_value, parent_value)`` pairs. NULL is treated as an ordinary value.
    """
    _check_level(schema, child)
    _check_level(schema, parent)
    if child == parent:
        return True
    rel = level_relation(schema, parent, child)
    if rel is not LevelRelation.ANCESTOR_OF:
        raise ValueError(f"{parent.qualified} is not an ancestor of {child.qualified}")
    pairs = data.pairs(child.qualified, parent.qualified) if hasattr(data, "pairs") else data
    seen: dict[Any, Any] = {}
    for c, p in pairs:
        if c in seen and seen[c] != p:
            return False
        seen[c] = p
    return True
