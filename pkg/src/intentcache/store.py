"""Persistent result store keyed by signature key.

Layout under the cache root::

    results/<key>.parquet   result table, column roles in the file metadata
    meta/index.sqlite       metadata index used for candidate lookup and LRU
    MANIFEST                format version, schema version, prompt hash

A put writes the result to a temp file, renames it into place, then commits
the index row. Opening the store runs a repair pass that drops index rows
without a file and files without an index row. ``root=None`` keeps
everything in memory (used by sweeps and tests).
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import os
import sqlite3
import threading
import time
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import pyarrow as pa
import pyarrow.parquet as pq

from .errors import StorageError
from .schema import Level, LevelRelation, SchemaModel, level_relation
from .signature import IntentSignature, canonical_json, canonical_serialize, from_document, normalize, parse_document_text, signature_key
from .table import Column, ResultTable

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
_META_KEY = b"intentcache"
_ARROW_TYPES = {"int": pa.int64(), "float": pa.float64(), "text": pa.string(), "date": pa.date32()}

_DDL = """
CREATE TABLE IF NOT EXISTS entries (
    key TEXT PRIMARY KEY,
    scope TEXT,
    fact TEXT NOT NULL,
    measures TEXT NOT NULL,
    levels TEXT NOT NULL,
    filters TEXT NOT NULL,
    window_start TEXT,
    window_end TEXT,
    open_ended INTEGER NOT NULL DEFAULT 0,
    post_agg INTEGER NOT NULL DEFAULT 0,
    signature TEXT NOT NULL,
    origin TEXT NOT NULL,
    snapshot_id TEXT,
    created_at REAL NOT NULL,
    last_access INTEGER NOT NULL,
    size_bytes INTEGER NOT NULL,
    n_rows INTEGER NOT NULL,
    derived_from TEXT
);
CREATE INDEX IF NOT EXISTS entries_lookup ON entries (fact, filters, window_start, window_end);
CREATE INDEX IF NOT EXISTS entries_lru ON entries (last_access);
"""


@dataclass
class CacheEntry:
    key: str
    signature: IntentSignature
    columns: tuple[Column, ...]
    snapshot_id: str | None = None
    origin: str = "SQL"
    size_bytes: int = 0
    n_rows: int = 0
    created_at: float = 0.0
    last_access: int = 0
    derived_from: str | None = None
    result: ResultTable | None = field(default=None, repr=False)

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]


@dataclass
class StoreStats:
    entries: int = 0
    bytes: int = 0
    hits: int = 0
    misses: int = 0
    evictions: int = 0
    derived_hits: int = 0

    def as_dict(self) -> dict[str, int]:
        return dict(self.__dict__)


# -- result (de)serialization -------------------------------------------


def _table_meta(result: ResultTable, key: str) -> dict:
    return {
        "key": key,
        "columns": [[c.name, c.type, c.role] for c in result.columns],
        "order_by": [list(o) for o in result.order_by],
        "limited": result.limited,
    }


def _to_arrow(result: ResultTable, key: str) -> pa.Table:
    arrays = []
    for i, c in enumerate(result.columns):
        arrays.append(pa.array([r[i] for r in result.rows], type=_ARROW_TYPES[c.type]))
    names = [f"c{i}" for i in range(len(result.columns))]
    schema = pa.schema(
        [pa.field(n, a.type) for n, a in zip(names, arrays)],
        metadata={_META_KEY: json.dumps(_table_meta(result, key)).encode()},
    )
    return pa.Table.from_arrays(arrays, schema=schema)


def _from_meta(meta: dict, rows: list[tuple]) -> ResultTable:
    cols = tuple(Column(*c) for c in meta["columns"])
    return ResultTable(cols, rows, order_by=tuple(tuple(o) for o in meta["order_by"]), limited=bool(meta["limited"]))


def _from_arrow(table: pa.Table) -> tuple[dict, ResultTable]:
    raw = (table.schema.metadata or {}).get(_META_KEY)
    if raw is None:
        raise StorageError("result file lacks intentcache metadata")
    meta = json.loads(raw)
    if table.num_columns != len(meta["columns"]):
        raise StorageError("result file column count does not match its header")
    lists = [table.column(i).to_pylist() for i in range(table.num_columns)]
    rows = list(zip(*lists)) if lists else []
    if not lists:
        rows = [()] * table.num_rows
    return meta, _from_meta(meta, rows)


def write_result_file(path: Path, result: ResultTable, key: str, fmt: str = "parquet") -> None:
    if fmt == "parquet":
        pq.write_table(_to_arrow(result, key), path)
        return
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write("# " + json.dumps(_table_meta(result, key)) + "\n")
        w = csv.writer(fh)
        w.writerow([c.name for c in result.columns])
        for r in result.rows:
            w.writerow(["\\N" if v is None else (v.isoformat() if isinstance(v, dt.date) else repr(v) if isinstance(v, float) else v) for v in r])


def read_result_file(path: Path) -> tuple[dict, ResultTable]:
    if path.suffix == ".parquet":
        return _from_arrow(pq.read_table(path))
    with path.open(newline="", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise StorageError(f"{path}: missing header line")
        meta = json.loads(first[2:])
        reader = csv.reader(fh)
        next(reader)
        parse = {"int": int, "float": float, "text": str, "date": dt.date.fromisoformat}
        types = [c[1] for c in meta["columns"]]
        rows = [tuple(None if v == "\\N" else parse[t](v) for v, t in zip(r, types)) for r in reader]
    return meta, _from_meta(meta, rows)


# -- store ------------------------------------------------------------------


class CacheStore:
    def __init__(
        self,
        root: str | Path | None = None,
        *,
        capacity_bytes: int | None = None,
        capacity_entries: int | None = None,
        schema_version: str | None = None,
        prompt_hash: str | None = None,
        result_format: str = "parquet",
    ):
        if capacity_bytes is not None and capacity_entries is not None:
            raise ValueError("give capacity_bytes or capacity_entries, not both")
        self.root = Path(root) if root is not None else None
        self.capacity_bytes = capacity_bytes
        self.capacity_entries = capacity_entries
        self.result_format = result_format
        self._lock = threading.RLock()
        self._mem: dict[str, ResultTable] = {}
        self._stats = StoreStats()
        if self.root is None:
            self._db = sqlite3.connect(":memory:", check_same_thread=False)
        else:
            (self.root / "results").mkdir(parents=True, exist_ok=True)
            (self.root / "meta").mkdir(parents=True, exist_ok=True)
            self._db = sqlite3.connect(self.root / "meta" / "index.sqlite", check_same_thread=False)
        self._db.executescript(_DDL)
        self._db.commit()
        self.manifest = self._load_manifest()
        if self.root is not None:
            self.repair()
        if schema_version is not None and self.manifest.get("schema_version") not in (None, schema_version):
            log.info("schema version changed (%s -> %s); purging cache", self.manifest.get("schema_version"), schema_version)
            self.purge()
        self.manifest.update(
            {k: v for k, v in (("schema_version", schema_version), ("prompt_hash", prompt_hash)) if v is not None}
        )
        self._write_manifest()
        row = self._db.execute("SELECT COALESCE(MAX(last_access), 0) FROM entries").fetchone()
        self._clock = int(row[0])

    # -- manifest / repair ---------------------------------------------------

    def _load_manifest(self) -> dict:
        if self.root is None or not (self.root / "MANIFEST").exists():
            return {"format_version": FORMAT_VERSION}
        try:
            doc = json.loads((self.root / "MANIFEST").read_text(encoding="utf-8"))
        except ValueError as exc:
            raise StorageError(f"unreadable MANIFEST: {exc}") from exc
        if doc.get("format_version") != FORMAT_VERSION:
            raise StorageError(f"cache format {doc.get('format_version')} is not {FORMAT_VERSION}")
        return doc

    def _write_manifest(self) -> None:
        if self.root is None:
            return
        tmp = self.root / "MANIFEST.tmp"
        tmp.write_text(json.dumps(self.manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        os.replace(tmp, self.root / "MANIFEST")

    def _path(self, key: str) -> Path:
        ext = "parquet" if self.result_format == "parquet" else "csv"
        return self.root / "results" / f"{key}.{ext}"

    def _existing_path(self, key: str) -> Path | None:
        for ext in ("parquet", "csv"):
            p = self.root / "results" / f"{key}.{ext}"
            if p.exists():
                return p
        return None

    def repair(self) -> dict[str, int]:
        """Drop dangling index rows, orphan result files and temp files."""
        with self._lock:
            if self.root is None:
                return {"dangling": 0, "orphans": 0}
            results = self.root / "results"
            keys = {k for (k,) in self._db.execute("SELECT key FROM entries")}
            dangling = [k for k in keys if self._existing_path(k) is None]
            for k in dangling:
                self._db.execute("DELETE FROM entries WHERE key = ?", (k,))
            self._db.commit()
            orphans = 0
            for p in results.iterdir():
                if p.name.endswith(".tmp") or p.name.split(".")[0] not in keys:
                    p.unlink(missing_ok=True)
                    orphans += 1
            return {"dangling": len(dangling), "orphans": orphans}

    # -- core operations ------------------------------------------------------

    def _tick(self) -> int:
        self._clock += 1
        return self._clock

    def _load(self, key: str) -> ResultTable:
        if self.root is None:
            return self._mem[key]
        path = self._existing_path(key)
        if path is None:
            raise StorageError(f"result file for {key} is missing")
        meta, table = read_result_file(path)
        if meta.get("key") != key:
            raise StorageError(f"result file for {key} carries key {meta.get('key')}")
        return table

    def _entry(self, row: sqlite3.Row | tuple, with_result: bool) -> CacheEntry:
        (key, _scope, _fact, _m, _l, _f, _ws, _we, _oe, _pa, sig_text, origin, snap, created, last, size, n_rows, derived) = row
        sig = from_document(parse_document_text(sig_text))
        entry = CacheEntry(
            key=key,
            signature=sig,
            columns=(),
            snapshot_id=snap,
            origin=origin,
            size_bytes=size,
            n_rows=n_rows,
            created_at=created,
            last_access=last,
            derived_from=derived,
        )
        if with_result:
            entry.result = self._load(key)
            entry.columns = entry.result.columns
            expected = sig.output_names
            if entry.result.names != expected:
                raise StorageError(f"entry {key}: columns {entry.result.names} != signature outputs {expected}")
        else:
            entry.columns = tuple(Column(n, "", r) for n, r in zip(sig.output_names, ["level"] * len(sig.levels) + ["measure"] * len(sig.measures)))
        return entry

    def get_exact(self, key: str, touch: bool = True) -> CacheEntry | None:
        with self._lock:
            row = self._db.execute("SELECT * FROM entries WHERE key = ?", (key,)).fetchone()
            if row is None:
                self._stats.misses += 1
                return None
            try:
                entry = self._entry(row, with_result=True)
            except Exception as exc:  # corrupt file, bad metadata, bad signature text
                log.warning("purging corrupt cache entry %s: %s", key, exc)
                self._delete([key])
                self._stats.misses += 1
                return None
            if touch:
                entry.last_access = self._tick()
                self._db.execute("UPDATE entries SET last_access = ? WHERE key = ?", (entry.last_access, key))
                self._db.commit()
            self._stats.hits += 1
            return entry

    def contains(self, key: str) -> bool:
        with self._lock:
            return self._db.execute("SELECT 1 FROM entries WHERE key = ?", (key,)).fetchone() is not None

    def put(
        self,
        sig: IntentSignature,
        result: ResultTable,
        *,
        origin: str = "SQL",
        snapshot_id: str | None = None,
        derived_from: str | None = None,
    ) -> list[str]:
        """Store ``result`` under the signature's key; return evicted keys."""
        sig = normalize(sig)
        key = signature_key(sig)
        if result.names != sig.output_names:
            raise StorageError(f"result columns {result.names} do not match signature outputs {sig.output_names}")
        with self._lock:
            if self.root is None:
                size = _to_arrow(result, key).nbytes
            else:
                path = self._path(key)
                tmp = path.with_name(path.name + ".tmp")
                try:
                    write_result_file(tmp, result, key, self.result_format)
                    size = tmp.stat().st_size
                except OSError as exc:
                    tmp.unlink(missing_ok=True)
                    raise StorageError(f"writing {tmp}: {exc}") from exc
            if self.capacity_bytes is not None and size > self.capacity_bytes:
                log.warning("entry %s (%d bytes) exceeds cache capacity %d; not stored", key, size, self.capacity_bytes)
                if self.root is not None:
                    tmp.unlink(missing_ok=True)
                return []
            if self.capacity_entries is not None and self.capacity_entries <= 0:
                if self.root is not None:
                    tmp.unlink(missing_ok=True)
                return []
            if self.root is None:
                self._mem[key] = result
            else:
                old = self._existing_path(key)
                if old is not None and old != path:
                    old.unlink(missing_ok=True)
                os.replace(tmp, path)
            w = sig.time_window
            doc_filters = canonical_json([p.to_doc() for p in sig.filters])
            try:
                self._db.execute(
                    "INSERT OR REPLACE INTO entries VALUES (?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?,?)",
                    (
                        key,
                        sig.scope,
                        sig.fact,
                        json.dumps(sig.measure_names),
                        json.dumps(list(sig.levels)),
                        doc_filters,
                        w.start.isoformat() if w else None,
                        w.end.isoformat() if w else None,
                        int(bool(w and w.open_ended)),
                        int(sig.post_agg is not None),
                        canonical_serialize(sig),
                        origin,
                        snapshot_id,
                        time.time(),
                        self._tick(),
                        size,
                        len(result.rows),
                        derived_from,
                    ),
                )
                self._db.commit()
            except sqlite3.Error as exc:
                self._db.rollback()
                if self.root is None:
                    self._mem.pop(key, None)
                else:
                    self._path(key).unlink(missing_ok=True)
                raise StorageError(f"index update failed: {exc}") from exc
            return self._evict(protect=key)

    def _over_budget(self) -> bool:
        n, total = self._db.execute("SELECT COUNT(*), COALESCE(SUM(size_bytes), 0) FROM entries").fetchone()
        if self.capacity_entries is not None and n > self.capacity_entries:
            return True
        return self.capacity_bytes is not None and total > self.capacity_bytes

    def _evict(self, protect: str | None = None) -> list[str]:
        evicted: list[str] = []
        while self._over_budget():
            row = self._db.execute(
                "SELECT key FROM entries WHERE key != ? ORDER BY last_access ASC LIMIT 1", (protect or "",)
            ).fetchone()
            if row is None:
                break
            self._delete([row[0]])
            evicted.append(row[0])
            self._stats.evictions += 1
        return evicted

    def _delete(self, keys: Iterable[str]) -> None:
        keys = list(keys)
        for k in keys:
            self._db.execute("DELETE FROM entries WHERE key = ?", (k,))
        self._db.commit()
        for k in keys:
            if self.root is None:
                self._mem.pop(k, None)
            else:
                p = self._existing_path(k)
                if p is not None:
                    p.unlink(missing_ok=True)

    # -- candidates ------------------------------------------------------------

    def _rows(self, sql: str, args: tuple) -> list[tuple]:
        with self._lock:
            return self._db.execute(sql, args).fetchall()

    def _same_frame(self, sig: IntentSignature) -> tuple[str, tuple]:
        w = sig.time_window
        sql = (
            "SELECT * FROM entries WHERE fact = ? AND scope IS ? AND window_start IS ? AND window_end IS ?"
            " AND open_ended = ?"
        )
        args = (sig.fact, sig.scope, w.start.isoformat() if w else None, w.end.isoformat() if w else None, int(bool(w and w.open_ended)))
        return sql, args

    def find_rollup_candidates(self, sig: IntentSignature, schema: SchemaModel) -> list[CacheEntry]:
        """Entries at the same filters/window whose grain is at least as fine, smallest first."""
        sig = normalize(sig)
        key = signature_key(sig)
        sql, args = self._same_frame(sig)
        sql += " AND filters = ? ORDER BY size_bytes ASC, key ASC"
        rows = self._rows(sql, args + (canonical_json([p.to_doc() for p in sig.filters]),))
        wanted = set(sig.measure_names)
        out = []
        for row in rows:
            if row[0] == key:
                continue
            if not wanted <= set(json.loads(row[3])):
                continue
            cached_levels = json.loads(row[4])
            if all(any(_covers(schema, lv, c) for c in cached_levels) for lv in sig.levels):
                out.append(self._entry(row, with_result=False))
        return out

    def find_filterdown_candidates(self, sig: IntentSignature) -> list[CacheEntry]:
        """Entries at the same grain/measures/window whose filters are a strict subset."""
        sig = normalize(sig)
        sql, args = self._same_frame(sig)
        sql += " AND levels = ? AND measures = ? ORDER BY size_bytes ASC, key ASC"
        rows = self._rows(sql, args + (json.dumps(list(sig.levels)), json.dumps(sig.measure_names)))
        wanted = {canonical_json(p.to_doc()) for p in sig.filters}
        out = []
        for row in rows:
            cached = {canonical_json(d) for d in parse_document_text(row[5])}
            if not cached < wanted:
                continue
            extra_cols = {p.col for p in sig.filters if canonical_json(p.to_doc()) not in cached}
            if extra_cols <= set(json.loads(row[4])):
                out.append(self._entry(row, with_result=False))
        return out

    def load_entry(self, key: str) -> CacheEntry | None:
        """Entry with its result, without counting a hit or touching recency."""
        with self._lock:
            row = self._db.execute("SELECT * FROM entries WHERE key = ?", (key,)).fetchone()
            if row is None:
                return None
            try:
                return self._entry(row, with_result=True)
            except Exception as exc:
                log.warning("purging corrupt cache entry %s: %s", key, exc)
                self._delete([key])
                return None

    def touch(self, key: str) -> None:
        with self._lock:
            self._db.execute("UPDATE entries SET last_access = ? WHERE key = ?", (self._tick(), key))
            self._db.commit()

    # -- invalidation / maintenance -------------------------------------------

    def invalidate(self, snapshot: dict[str, Any] | str | Path) -> list[str]:
        """Apply a snapshot descriptor ``{schema_version, updated_ranges: [[start, end), ...]}``.

        A schema change purges everything. Otherwise an entry goes when its
        window intersects an updated range, when it is open-ended, or when it
        has no window at all (it aggregates over every partition).
        """
        if not isinstance(snapshot, dict):
            snapshot = json.loads(Path(snapshot).read_text(encoding="utf-8"))
        with self._lock:
            version = snapshot.get("schema_version")
            if version is not None and version != self.manifest.get("schema_version"):
                purged = self.purge()
                self.manifest["schema_version"] = version
                self._write_manifest()
                return purged
            ranges = [(dt.date.fromisoformat(str(a)), dt.date.fromisoformat(str(b))) for a, b in snapshot.get("updated_ranges") or []]
            if not ranges:
                return []
            doomed = []
            for key, ws, we, oe in self._db.execute("SELECT key, window_start, window_end, open_ended FROM entries"):
                if oe or ws is None:
                    doomed.append(key)
                    continue
                s, e = dt.date.fromisoformat(ws), dt.date.fromisoformat(we)
                if any(s < b and a < e for a, b in ranges):
                    doomed.append(key)
            self._delete(doomed)
            return sorted(doomed)

    def purge(self) -> list[str]:
        with self._lock:
            keys = sorted(k for (k,) in self._db.execute("SELECT key FROM entries"))
            self._delete(keys)
            return keys

    def keys(self) -> list[str]:
        with self._lock:
            return [k for (k,) in self._db.execute("SELECT key FROM entries ORDER BY last_access ASC")]

    def entries(self) -> list[CacheEntry]:
        with self._lock:
            return [self._entry(r, with_result=False) for r in self._db.execute("SELECT * FROM entries ORDER BY key")]

    def record_derived_hit(self) -> None:
        with self._lock:
            self._stats.derived_hits += 1

    def stats(self) -> dict[str, int]:
        with self._lock:
            n, total = self._db.execute("SELECT COUNT(*), COALESCE(SUM(size_bytes), 0) FROM entries").fetchone()
            self._stats.entries, self._stats.bytes = int(n), int(total)
            return self._stats.as_dict()

    def __len__(self) -> int:
        with self._lock:
            return int(self._db.execute("SELECT COUNT(*) FROM entries").fetchone()[0])

    def close(self) -> None:
        with self._lock:
            self._db.close()

    def __enter__(self) -> "CacheStore":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()


def _covers(schema: SchemaModel, requested: str, cached: str) -> bool:
    """True when the cached level equals the requested one or is finer in a declared hierarchy."""
    if requested == cached:
        return True
    try:
        rel = level_relation(schema, Level.parse(requested), Level.parse(cached))
    except KeyError:
        return False
    return rel is LevelRelation.ANCESTOR_OF

