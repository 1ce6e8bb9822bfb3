"""In-memory columnar star data.

Every column is a numpy array plus a validity mask. Text is dictionary
encoded against a sorted dictionary (so code order is string order), dates
are stored as proleptic ordinals. FK columns are resolved once into row
index arrays so joins are plain gathers.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..errors import DataError
from ..schema import SchemaModel


@dataclass
class ColumnData:
    type: str
    values: np.ndarray
    valid: np.ndarray
    dictionary: list[str] | None = None

    def __len__(self) -> int:
        return len(self.values)

    def decode(self, i: int) -> Any:
        if not self.valid[i]:
            return None
        return decode_value(self, self.values[i])

    def to_list(self) -> list[Any]:
        return [self.decode(i) for i in range(len(self))]


def decode_value(col: ColumnData, raw: Any) -> Any:
    if col.type == "text":
        return col.dictionary[int(raw)]
    if col.type == "date":
        return dt.date.fromordinal(int(raw))
    if col.type == "int":
        return int(raw)
    return float(raw)


@dataclass
class TableData:
    name: str
    columns: dict[str, ColumnData]

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def rows(self) -> list[tuple]:
        lists = [c.to_list() for c in self.columns.values()]
        return list(zip(*lists))


@dataclass
class StarData:
    schema: SchemaModel
    tables: dict[str, TableData]
    # (table, fk column) -> row index into the referenced table
    fk_index: dict[tuple[str, str], np.ndarray] = field(default_factory=dict)

    def column(self, qualified: str) -> ColumnData:
        table, _, name = qualified.partition(".")
        return self.tables[table].columns[name]

    def fingerprint(self) -> str:
        h = hashlib.sha256(self.schema.schema_version.encode())
        for tname in sorted(self.tables):
            for cname, col in sorted(self.tables[tname].columns.items()):
                h.update(f"{tname}.{cname}".encode())
                h.update(np.ascontiguousarray(col.values).tobytes())
                h.update(np.ascontiguousarray(col.valid).tobytes())
                if col.dictionary is not None:
                    h.update("\x00".join(col.dictionary).encode())
        return h.hexdigest()[:16]

    @classmethod
    def from_columns(cls, schema: SchemaModel, tables: Mapping[str, Mapping[str, Sequence[Any]]]) -> "StarData":
        """Build from ``{table: {column: values}}`` with None for NULL."""
        out: dict[str, TableData] = {}
        for tname in schema.table_names:
            if tname not in tables:
                raise DataError(f"missing data for table {tname!r}")
            spec = schema.table_columns(tname)
            given = {k.lower(): v for k, v in tables[tname].items()}
            missing = set(spec) - set(given)
            if missing:
                raise DataError(f"table {tname!r} lacks columns {sorted(missing)}")
            extra = set(given) - set(spec)
            if extra:
                raise DataError(f"table {tname!r} has undeclared columns {sorted(extra)}")
            lengths = {len(v) for v in given.values()}
            if len(lengths) > 1:
                raise DataError(f"table {tname!r} has ragged columns")
            out[tname] = TableData(tname, {c: encode_column(f"{tname}.{c}", t, given[c]) for c, t in spec.items()})
        data = cls(schema, out)
        data.build_fk_index()
        return data

    @classmethod
    def from_rows(cls, schema: SchemaModel, tables: Mapping[str, Sequence[Mapping[str, Any]]]) -> "StarData":
        cols: dict[str, dict[str, list]] = {}
        for tname in schema.table_names:
            rows = tables.get(tname, [])
            names = list(schema.table_columns(tname))
            cols[tname] = {c: [r.get(c) for r in rows] for c in names}
        return cls.from_columns(schema, cols)

    def build_fk_index(self) -> None:
        for fk in self.schema.foreign_keys:
            src = self.tables[fk.table].columns[fk.column]
            dst = self.tables[fk.references].columns[fk.key]
            if not dst.valid.all():
                raise DataError(f"NULL key in {fk.references}.{fk.key}")
            keys = dst.values
            if len(np.unique(keys)) != len(keys):
                raise DataError(f"duplicate key in {fk.references}.{fk.key}")
            order = np.argsort(keys, kind="stable")
            sorted_keys = keys[order]
            bad = np.flatnonzero(~src.valid)
            if len(bad):
                raise DataError(f"NULL foreign key {fk.table}.{fk.column} at row {int(bad[0])}")
            pos = np.searchsorted(sorted_keys, src.values)
            pos_c = np.minimum(pos, max(len(sorted_keys) - 1, 0))
            hit = (pos < len(sorted_keys)) & (sorted_keys[pos_c] == src.values) if len(sorted_keys) else np.zeros(len(pos), bool)
            if not hit.all():
                row = int(np.flatnonzero(~hit)[0])
                raise DataError(
                    f"orphan foreign key {fk.table}.{fk.column}={src.decode(row)!r} at row {row} "
                    f"(no {fk.references}.{fk.key})"
                )
            self.fk_index[(fk.table, fk.column)] = order[pos_c].astype(np.int64)


def encode_column(where: str, ctype: str, raw: Sequence[Any]) -> ColumnData:
    if isinstance(raw, np.ndarray) and raw.dtype != object:
        valid = np.ones(len(raw), dtype=bool)
        if ctype == "float":
            valid = ~np.isnan(raw)
            return ColumnData(ctype, np.where(valid, raw, 0.0).astype(np.float64), valid)
        if ctype == "int":
            return ColumnData(ctype, raw.astype(np.int64), valid)
        raw = raw.tolist()
    values = list(raw)
    valid = np.array([v is not None for v in values], dtype=bool)
    try:
        if ctype == "int":
            arr = np.array([_as_int(v) if v is not None else 0 for v in values], dtype=np.int64)
        elif ctype == "float":
            floats = [float(v) if v is not None else 0.0 for v in values]
            arr = np.array(floats, dtype=np.float64)
            nan = np.isnan(arr)
            valid &= ~nan
            arr[nan] = 0.0
        elif ctype == "date":
            arr = np.array([_as_date(v).toordinal() if v is not None else 0 for v in values], dtype=np.int64)
        elif ctype == "text":
            for v in values:
                if v is not None and not isinstance(v, str):
                    raise TypeError(f"expected text, got {v!r}")
            dictionary = sorted({v for v in values if v is not None})
            lookup = {s: i for i, s in enumerate(dictionary)}
            arr = np.array([lookup[v] if v is not None else 0 for v in values], dtype=np.int64)
            return ColumnData(ctype, arr, valid, dictionary)
        else:
            raise TypeError(f"unknown type {ctype}")
    except (TypeError, ValueError) as exc:
        raise DataError(f"{where}: {exc}") from exc
    return ColumnData(ctype, arr, valid)


def _as_int(v: Any) -> int:
    if isinstance(v, bool):
        raise TypeError(f"expected int, got {v!r}")
    if isinstance(v, float) and not v.is_integer():
        raise ValueError(f"expected int, got {v!r}")
    return int(v)


def _as_date(v: Any) -> dt.date:
    if isinstance(v, dt.datetime):
        return v.date()
    if isinstance(v, dt.date):
        return v
    return dt.date.fromisoformat(str(v))


# -- files -----------------------------------------------------------------

_PARSERS = {"int": int, "float": float, "text": str, "date": dt.date.fromisoformat}


def load_star_data(schema: SchemaModel, directory: str | Path) -> StarData:
    """Read ``<table>.csv`` per table. Header cells are ``name:type``; empty fields are NULL."""
    directory = Path(directory)
    tables: dict[str, dict[str, list]] = {}
    for tname in schema.table_names:
        path = directory / f"{tname}.csv"
        if not path.exists():
            raise DataError(f"missing data file {path}")
        spec = schema.table_columns(tname)
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file") from None
            names = []
            for cell in header:
                name, _, typ = cell.partition(":")
                name = name.strip().lower()
                if name not in spec:
                    raise DataError(f"{path}: undeclared column {name!r}")
                if typ and typ.strip().lower() != spec[name]:
                    raise DataError(f"{path}: column {name!r} declared {typ!r}, schema says {spec[name]!r}")
                names.append(name)
            cols: dict[str, list] = {n: [] for n in names}
            for lineno, row in enumerate(reader, start=2):
                if len(row) != len(names):
                    raise DataError(f"{path}:{lineno}: expected {len(names)} fields, got {len(row)}")
                for n, cell in zip(names, row):
                    if cell == "":
                        cols[n].append(None)
                        continue
                    try:
                        cols[n].append(_PARSERS[spec[n]](cell))
                    except ValueError as exc:
                        raise DataError(f"{path}:{lineno}: column {n!r}: {exc}") from exc
        tables[tname] = cols
    return StarData.from_columns(schema, tables)


def write_star_data(data: StarData, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for tname, table in data.tables.items():
        with (directory / f"{tname}.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([f"{c}:{col.type}" for c, col in table.columns.items()])
            for row in table.rows():
                w.writerow(["" if v is None else (v.isoformat() if isinstance(v, dt.date) else repr(v) if isinstance(v, float) else v) for v in row])
