import pytest

from intentcache.errors import Bypass, BypassCode
from intentcache.signature import signature_key
from intentcache.sqlcanon import render_sql, sql_to_signature

from sigs import random_signatures

BASE = """
SELECT stores.region, SUM(sales.amount) FROM sales
JOIN stores ON sales.store_id = stores.store_id
JOIN products ON sales.product_id = products.product_id
WHERE products.category IN ('toys', 'home') AND sales.quantity >= 2
  AND sales.sale_date >= '2024-01-01' AND sales.sale_date < '2024-04-01'
GROUP BY stores.region
"""

EQUIVALENT = [
    # aliases, keyword case, layout
    """select s2.region, sum(f.amount) as rev from sales f join stores s2 on f.store_id = s2.store_id
       join products p on p.product_id = f.product_id
       where p.category in ('home','toys') and f.quantity >= 2 and f.sale_date >= '2024-01-01' and f.sale_date < '2024-04-01'
       group by s2.region""",
    # join order, predicate order, flipped comparison
    """SELECT stores.region, SUM(sales.amount) FROM sales
       JOIN products ON sales.product_id = products.product_id
       JOIN stores ON stores.store_id = sales.store_id
       WHERE sales.sale_date < '2024-04-01' AND 2 <= sales.quantity
         AND '2024-01-01' <= sales.sale_date AND products.category IN ('home', 'toys')
       GROUP BY 1""",
    # BETWEEN on the time column, OR chain for IN, NOT for >=
    """SELECT stores.region, SUM(sales.amount) FROM sales
       JOIN stores ON sales.store_id = stores.store_id
       JOIN products ON sales.product_id = products.product_id
       WHERE (products.category = 'toys' OR products.category = 'home') AND NOT sales.quantity < 2
         AND sales.sale_date BETWEEN '2024-01-01' AND '2024-03-31'
       GROUP BY stores.region""",
    # group by select alias
    """SELECT stores.region AS r, SUM(sales.amount) FROM sales
       JOIN stores ON sales.store_id = stores.store_id
       JOIN products ON sales.product_id = products.product_id
       WHERE products.category IN ('toys', 'home') AND sales.quantity >= 2
         AND sales.sale_date >= '2024-01-01' AND sales.sale_date <= '2024-03-31'
       GROUP BY r""",
]


def test_base_signature(schema):
    sig = sql_to_signature(BASE, schema)
    doc = sig.to_doc()
    assert doc["levels"] == ["stores.region"]
    assert doc["measures"] == [{"agg": "SUM", "expr": "sales.amount"}]
    assert doc["time_window"] == {"start": "2024-01-01", "end": "2024-04-01"}
    assert {"col": "products.category", "op": "IN", "val": ["home", "toys"]} in doc["filters"]


@pytest.mark.parametrize("sql", EQUIVALENT)
def test_equivalent_variants_share_key(schema, sql):
    assert signature_key(sql_to_signature(sql, schema)) == signature_key(sql_to_signature(BASE, schema))


def test_literal_case_is_significant(schema):
    a = sql_to_signature(BASE, schema)
    b = sql_to_signature(BASE.replace("'toys'", "'Toys'"), schema)
    assert signature_key(a) != signature_key(b)


def test_scope_separates_keys(schema):
    assert signature_key(sql_to_signature(BASE, schema, scope="tenant-a")) != signature_key(sql_to_signature(BASE, schema))


@pytest.mark.parametrize(
    "where, expected",
    [
        ("sales.sale_date = '2024-02-29'", ("2024-02-29", "2024-03-01")),
        ("sales.sale_date > '2024-01-31' AND sales.sale_date <= '2024-02-29'", ("2024-02-01", "2024-03-01")),
        ("sales.sale_date >= '2024-01-01' AND sales.sale_date < '2024-06-01' AND sales.sale_date < '2024-03-01'", ("2024-01-01", "2024-03-01")),
    ],
)
def test_time_window_folding(schema, where, expected):
    sig = sql_to_signature(f"SELECT COUNT(*) FROM sales WHERE {where}", schema)
    assert (sig.time_window.start.isoformat(), sig.time_window.end.isoformat()) == expected
    assert not sig.filters


@pytest.mark.parametrize(
    "sql, code",
    [
        ("SELECT COUNT(*) FROM sales WHERE sales.sale_date >= '2024-01-01'", BypassCode.UNRESOLVED_TIME_WINDOW),
        ("SELECT COUNT(*) FROM sales WHERE sales.sale_date >= '2024-03-01' AND sales.sale_date < '2024-01-01'", BypassCode.UNRESOLVED_TIME_WINDOW),
        ("WITH t AS (SELECT * FROM sales) SELECT COUNT(*) FROM t", BypassCode.UNSUPPORTED_CONSTRUCT),
        ("SELECT COUNT(*) FROM sales WHERE sales.store_id IN (SELECT store_id FROM stores)", BypassCode.UNSUPPORTED_CONSTRUCT),
        ("SELECT stores.region, COUNT(*) FROM sales LEFT JOIN stores ON sales.store_id = stores.store_id GROUP BY stores.region", BypassCode.UNSUPPORTED_CONSTRUCT),
        ("SELECT sales.channel, SUM(sales.amount) OVER () FROM sales", BypassCode.UNSUPPORTED_CONSTRUCT),
        ("SELECT COUNT(*) FROM sales UNION SELECT COUNT(*) FROM sales", BypassCode.UNSUPPORTED_CONSTRUCT),
        ("SELECT sales.channel FROM sales", BypassCode.UNSUPPORTED_CONSTRUCT),
        ("SELECT COUNT(*) FROM sales WHERE sales.channel = 'a' OR sales.quantity = 1", BypassCode.UNSUPPORTED_CONSTRUCT),
        ("SELECT SUM(sales.nope) FROM sales", BypassCode.UNKNOWN_COLUMN),
        ("SELEC COUNT(*) FROM sales", BypassCode.PARSE_FAILURE),
        ("SELECT COUNT(*) FROM sales; SELECT 1", BypassCode.PARSE_FAILURE),
    ],
)
def test_out_of_subset_bypasses(schema, sql, code):
    with pytest.raises(Bypass) as exc:
        sql_to_signature(sql, schema)
    assert exc.value.code is code


def test_post_aggregation_is_kept(schema):
    sig = sql_to_signature(
        "SELECT stores.region, SUM(sales.amount) AS rev FROM sales JOIN stores ON sales.store_id = stores.store_id "
        "GROUP BY stores.region HAVING SUM(sales.amount) > 100 ORDER BY rev DESC LIMIT 3",
        schema,
    )
    pa = sig.to_doc()["post_agg"]
    assert pa["having"] == [{"col": "SUM(sales.amount)", "op": ">", "val": 100}]
    assert pa["order_by"] == [{"dir": "DESC", "expr": "SUM(sales.amount)"}]
    assert pa["limit"] == 3
    assert sig.deterministic


def test_limit_without_order_is_nondeterministic(schema):
    sig = sql_to_signature("SELECT sales.channel, COUNT(*) FROM sales GROUP BY sales.channel LIMIT 1", schema)
    assert not sig.deterministic


def test_render_roundtrip(schema):
    for sig in random_signatures(150, seed=11):
        assert sql_to_signature(render_sql(sig, schema), schema) == sig
