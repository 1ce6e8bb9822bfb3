import datetime as dt
import json

import pytest

from intentcache.errors import StorageError
from intentcache.signature import make_signature, signature_key
from intentcache.store import CacheStore
from intentcache.table import Column, ResultTable


def sig_for(k: int, window=None, open_ended=False):
    w = None
    if window is not None:
        w = {"start": window[0], "end": window[1], "open_ended": open_ended}
    return make_signature("sales", ["SUM(sales.amount)"], ["stores.region"],
                          [{"col": "sales.quantity", "op": ">=", "val": k}], w)


def result(rows=(("North", 1.5), ("South", None))):
    cols = (Column("stores.region", "text", "level"), Column("SUM(sales.amount)", "float", "measure"))
    return ResultTable(cols, list(rows))


@pytest.fixture(params=["memory", "parquet", "csv"])
def store(request, tmp_path):
    if request.param == "memory":
        s = CacheStore()
    else:
        s = CacheStore(tmp_path / "c", result_format=request.param)
    yield s
    s.close()


def test_put_and_get(store):
    sig = sig_for(1)
    assert store.get_exact(signature_key(sig)) is None
    assert store.put(sig, result()) == []
    entry = store.get_exact(signature_key(sig))
    assert entry.result.equals(result())
    assert entry.result.rows == result().rows
    assert entry.signature == sig
    assert store.contains(signature_key(sig))
    assert store.stats()["hits"] == 1 and store.stats()["misses"] == 1


def test_put_rejects_mismatched_columns(store):
    bad = ResultTable((Column("stores.city", "text", "level"), Column("SUM(sales.amount)", "float", "measure")), [])
    with pytest.raises(StorageError):
        store.put(sig_for(1), bad)


def test_entry_lru_eviction():
    store = CacheStore(capacity_entries=3)
    keys = [signature_key(sig_for(k)) for k in range(4)]
    for k in range(3):
        store.put(sig_for(k), result())
    store.get_exact(keys[0])  # 0 is now most recent; 1 is the LRU victim
    assert store.put(sig_for(3), result()) == [keys[1]]
    assert sorted(store.keys()) == sorted([keys[0], keys[2], keys[3]])
    assert store.stats()["evictions"] == 1


def test_byte_capacity_and_oversized_entry(tmp_path):
    probe = CacheStore(tmp_path / "probe")
    probe.put(sig_for(0), result())
    size = probe.entries()[0].size_bytes
    store = CacheStore(tmp_path / "c", capacity_bytes=2 * size + size // 2)
    for k in range(3):
        store.put(sig_for(k), result())
    assert len(store) == 2
    tiny = CacheStore(tmp_path / "tiny", capacity_bytes=10)
    assert tiny.put(sig_for(0), result()) == []
    assert len(tiny) == 0
    with pytest.raises(ValueError):
        CacheStore(capacity_bytes=1, capacity_entries=1)


def test_persistence_and_repair(tmp_path):
    root = tmp_path / "c"
    with CacheStore(root, schema_version="v1") as s:
        s.put(sig_for(1), result())
        s.put(sig_for(2), result())
    key1, key2 = signature_key(sig_for(1)), signature_key(sig_for(2))
    (root / "results" / f"{key2}.parquet").unlink()  # dangling index row
    (root / "results" / "deadbeef.parquet").write_bytes(b"x")  # orphan file
    (root / "results" / f"{key1}.parquet.tmp").write_bytes(b"x")  # interrupted write
    with CacheStore(root, schema_version="v1") as s:
        assert s.keys() == [key1]
        assert s.get_exact(key1).result.equals(result())
    assert sorted(p.name for p in (root / "results").iterdir()) == [f"{key1}.parquet"]
    assert json.loads((root / "MANIFEST").read_text())["schema_version"] == "v1"


def test_corrupt_file_is_purged(tmp_path):
    root = tmp_path / "c"
    s = CacheStore(root)
    s.put(sig_for(1), result())
    key = signature_key(sig_for(1))
    (root / "results" / f"{key}.parquet").write_bytes(b"not parquet")
    assert s.get_exact(key) is None
    assert not s.contains(key)


def test_schema_version_change_purges(tmp_path):
    root = tmp_path / "c"
    with CacheStore(root, schema_version="v1") as s:
        s.put(sig_for(1), result())
    with CacheStore(root, schema_version="v2") as s:
        assert len(s) == 0


def test_format_version_mismatch(tmp_path):
    root = tmp_path / "c"
    CacheStore(root).close()
    (root / "MANIFEST").write_text(json.dumps({"format_version": 99}))
    with pytest.raises(StorageError):
        CacheStore(root)


def test_invalidate(store):
    closed_jan = sig_for(1, ("2024-01-01", "2024-02-01"))
    closed_mar = sig_for(2, ("2024-03-01", "2024-04-01"))
    open_feb = sig_for(3, ("2024-02-01", "2024-03-01"), open_ended=True)
    no_window = sig_for(4)
    for s in (closed_jan, closed_mar, open_feb, no_window):
        store.put(s, result())
    gone = store.invalidate({"updated_ranges": [["2024-03-15", "2024-03-16"]]})
    assert gone == sorted(signature_key(s) for s in (closed_mar, open_feb, no_window))
    assert store.keys() == [signature_key(closed_jan)]
    assert store.invalidate({"updated_ranges": []}) == []


def test_invalidate_schema_version_purges_all(store, tmp_path):
    store.put(sig_for(1, ("2024-01-01", "2024-02-01")), result())
    path = tmp_path / "snap.json"
    path.write_text(json.dumps({"schema_version": "other", "updated_ranges": []}))
    assert len(store.invalidate(path)) == 1
    assert len(store) == 0


def test_values_roundtrip_types(tmp_path):
    cols = (Column("dates.day", "date", "level"), Column("sales.channel", "text", "level"),
            Column("COUNT(*)", "int", "measure"), Column("SUM(sales.amount)", "float", "measure"))
    rows = [(dt.date(2024, 1, 2), "on,line", 3, 0.1 + 0.2), (None, "x", 0, None)]
    sig = make_signature("sales", ["COUNT(*)", "SUM(sales.amount)"], ["dates.day", "sales.channel"])
    for fmt in ("parquet", "csv"):
        s = CacheStore(tmp_path / fmt, result_format=fmt)
        s.put(sig, ResultTable(cols, rows))
        assert s.get_exact(signature_key(sig)).result.rows == rows


def test_candidate_lookup(store, schema):
    fine = make_signature("sales", ["SUM(sales.amount)"], ["stores.city", "sales.channel"])
    store.put(fine, ResultTable((Column("sales.channel", "text", "level"), Column("stores.city", "text", "level"),
                                 Column("SUM(sales.amount)", "float", "measure")), []))
    coarse = make_signature("sales", ["SUM(sales.amount)"], ["stores.region"])
    assert [e.key for e in store.find_rollup_candidates(coarse, schema)] == [signature_key(fine)]
    other_measure = make_signature("sales", ["MAX(sales.amount)"], ["stores.region"])
    assert store.find_rollup_candidates(other_measure, schema) == []
    narrower = make_signature("sales", ["SUM(sales.amount)"], ["stores.city", "sales.channel"],
                              [("sales.channel", "=", "online")])
    assert [e.key for e in store.find_filterdown_candidates(narrower)] == [signature_key(fine)]
    off_grain = make_signature("sales", ["SUM(sales.amount)"], ["stores.city", "sales.channel"],
                               [("products.category", "=", "toys")])
    assert store.find_filterdown_candidates(off_grain) == []


def test_purge_and_stats_on_fresh(store):
    assert store.stats() == {"entries": 0, "bytes": 0, "hits": 0, "misses": 0, "evictions": 0, "derived_hits": 0}
    store.put(sig_for(1), result())
    assert store.purge() == [signature_key(sig_for(1))]
    assert len(store) == 0
