import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from intentcache.errors import BackendError, DataError
from intentcache.executor import _kernels_py, kernels
from intentcache.executor.backend import execute_signature
from intentcache.executor.reference import ReferenceBackend, reference_execute
from intentcache.executor.sqlbackend import SqlBackend
from intentcache.executor.star import StarData, load_star_data, write_star_data
from intentcache.signature import make_signature
from intentcache.sqlcanon import sql_to_signature

from conftest import FIXTURES
from sigs import random_signature

D = dt.date


@pytest.fixture(scope="module")
def fig2_data(fig2_schema):
    sales = [
        # id, region, product, date, amount
        (1, 1, 1, D(2024, 1, 5), 100.0),
        (2, 1, 1, D(2024, 3, 31), 50.5),
        (3, 2, 1, D(2024, 2, 1), 20.0),
        (4, 2, 2, D(2024, 2, 1), 999.0),  # toys, filtered out
        (5, 1, 1, D(2024, 4, 1), 7.0),  # outside the window
        (6, 3, 1, D(2024, 1, 9), None),  # NULL amount, NULL region name
    ]
    return StarData.from_rows(fig2_schema, {
        "sales": [dict(zip(("sale_id", "region_id", "product_id", "sale_date", "amount"), r)) for r in sales],
        "regions": [{"id": 1, "region_name": "North"}, {"id": 2, "region_name": "South"}, {"id": 3, "region_name": None}],
        "products": [{"id": 1, "category": "electronics"}, {"id": 2, "category": "toys"}],
    })


def test_fig2_example_by_hand(fig2_schema, fig2_data):
    sql = (FIXTURES / "sql" / "fig2.sql").read_text()
    sig = sql_to_signature(sql, fig2_schema)
    expected = [(None, None), ("North", 150.5), ("South", 20.0)]
    got = reference_execute(sig, fig2_data)
    assert got.rows == expected
    sql_backend = SqlBackend.from_star(fig2_data)
    assert execute_signature(sig, sql_backend, fig2_schema).rows == expected
    # the raw text also runs on sqlite, under its own column names
    assert sorted(sql_backend.execute(sql).rows, key=str) == sorted(expected, key=str)


def test_null_semantics(fig2_schema, fig2_data):
    count = make_signature("sales", ["COUNT(*)", "COUNT(sales.amount)", "MIN(sales.amount)"])
    assert reference_execute(count, fig2_data).rows == [(6, 5, 7.0)]
    empty = make_signature("sales", ["SUM(sales.amount)", "COUNT(*)"], filters=[("sales.amount", ">", 10_000)])
    assert reference_execute(empty, fig2_data).rows == [(0, None)]  # COUNT(*) sorts before SUM
    nulls = make_signature("sales", ["COUNT(*)"], ["regions.region_name"], [("regions.region_name", "IS_NULL")])
    assert reference_execute(nulls, fig2_data).rows == [(None, 1)]
    ne = make_signature("sales", ["COUNT(*)"], filters=[("regions.region_name", "!=", "North")])
    assert reference_execute(ne, fig2_data).rows == [(2,)]  # NULL region is not != 'North'


@settings(max_examples=150, deadline=None)
@given(st.randoms(use_true_random=False))
def test_reference_matches_sqlite(data, rnd):
    sig = random_signature(rnd)
    if not sig.deterministic:
        return
    ref = reference_execute(sig, data)
    got = execute_signature(sig, _sqlite(data), data.schema)
    assert ref.equals(got), f"{sig.to_doc()}\n{ref.pretty()}\n{got.pretty()}"


_SQLITE = {}


def _sqlite(data):
    if id(data) not in _SQLITE:
        _SQLITE[id(data)] = SqlBackend.from_star(data)
    return _SQLITE[id(data)]


def test_reference_backend_passthrough(data):
    backend = ReferenceBackend(data)
    table = backend.execute("WITH t AS (SELECT channel FROM sales) SELECT COUNT(*) FROM t")
    assert table.rows == [(data.tables["sales"].n_rows,)]
    strict = ReferenceBackend(data, passthrough=False)
    with pytest.raises(BackendError):
        strict.execute("WITH t AS (SELECT channel FROM sales) SELECT COUNT(*) FROM t")


def test_level_pairs_agree(data):
    ref, sql = ReferenceBackend(data), _sqlite(data)
    for child, parent in [("stores.city", "stores.region"), ("dates.month", "dates.year"), ("products.product_name", "products.category")]:
        assert sorted(ref.level_pairs(child, parent)) == sorted(sql.level_pairs(child, parent))


def test_sqlite_file_backend(tmp_path, data):
    import sqlite3

    from intentcache.executor.sqlbackend import populate_sqlite

    path = tmp_path / "star.sqlite"
    conn = sqlite3.connect(path)
    populate_sqlite(conn, data)
    conn.close()
    backend = SqlBackend.sqlite(str(path), data.schema, "snap")
    sig = make_signature("sales", ["SUM(sales.quantity)"], ["sales.channel"])
    assert execute_signature(sig, backend, data.schema).equals(reference_execute(sig, data))
    with pytest.raises(BackendError):
        backend.execute("SELECT nope FROM nowhere")


def test_star_data_csv_roundtrip(tmp_path, fig2_schema, fig2_data):
    write_star_data(fig2_data, tmp_path)
    back = load_star_data(fig2_schema, tmp_path)
    assert back.fingerprint() == fig2_data.fingerprint()
    (tmp_path / "regions.csv").write_text("id:int,region_name:text\n1\n")
    with pytest.raises(DataError):
        load_star_data(fig2_schema, tmp_path)


def test_star_data_rejects_bad_input(fig2_schema):
    with pytest.raises(DataError):
        StarData.from_columns(fig2_schema, {"sales": {}, "regions": {}})
    with pytest.raises(DataError):
        StarData.from_columns(fig2_schema, {
            "sales": {"sale_id": [1], "region_id": [1], "product_id": [1], "sale_date": ["2024-01-01"], "amount": [1.0], "x": [1]},
            "regions": {"id": [1], "region_name": ["a"]},
            "products": {"id": [1], "category": ["c"]},
        })


@pytest.mark.parametrize("dtype", [np.float64, np.int64])
def test_kernels_match_fallback(dtype):
    rng = np.random.default_rng(3)
    n, groups = 10_000, 37
    gid = rng.integers(0, groups - 1, n).astype(np.int64)  # last group stays empty
    values = (rng.normal(size=n) * 100).astype(dtype) if dtype is np.float64 else rng.integers(-50, 50, n).astype(dtype)
    valid = (rng.random(n) > 0.1).astype(np.uint8)
    np.testing.assert_array_equal(kernels.group_count(gid, groups, valid), _kernels_py.group_count(gid, groups, valid))
    for name in ("group_sum", "group_min", "group_max"):
        a = getattr(kernels, name)(gid, groups, values, valid)
        b = getattr(_kernels_py, name)(gid, groups, values, valid)
        for x, y in zip(a, b):
            np.testing.assert_allclose(x, y, rtol=1e-12)


def test_compiled_kernels_present():
    # the package builds the extension on install; the fallback is for source checkouts
    assert kernels.BACKEND in ("cython", "python")
    pytest.importorskip("intentcache.executor._kernels")
    assert kernels.BACKEND == "cython"


def test_env_var_forces_fallback():
    import os
    import subprocess
    import sys

    env = {**os.environ, "INTENTCACHE_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", "from intentcache.executor import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
