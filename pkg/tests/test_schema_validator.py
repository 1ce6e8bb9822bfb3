import copy

import pytest
import yaml

from intentcache.errors import AmbiguousJoinPath, Bypass, BypassCode, IntegrityError, ParseError, UnknownLevel
from intentcache.schema import Level, LevelRelation, check_summarizable, level_relation, load_schema, resolve_join_path
from intentcache.signature import from_document, make_signature
from intentcache.validator import validate_signature, validation_verdict

# a fact with two routes to the same dimension (role-playing dates)
ROLE_PLAYING = {
    "schema_version": "rp-1",
    "fact_tables": [{
        "name": "orders", "time_column": "placed",
        "measures": {"total": "float"},
        "attributes": {"placed": "date", "ship_day": "int", "order_day": "int"},
    }],
    "dimensions": [{"name": "days", "key": "id", "attributes": {"id": "int", "weekday": "text"}}],
    "foreign_keys": [
        {"table": "orders", "column": "ship_day", "references": "days", "key": "id"},
        {"table": "orders", "column": "order_day", "references": "days", "key": "id"},
    ],
}


def test_retail_schema_shape(schema):
    assert schema.schema_version == "retail-1"
    assert [f.name for f in schema.fact_tables] == ["sales"]
    assert schema.time_column("sales") == "sales.sale_date"
    assert schema.column_type("products.category") == "text"
    assert schema.column_type("nope.nope") is None


def test_level_relations(schema):
    year, month, region = Level.parse("dates.year"), Level.parse("dates.month"), Level.parse("stores.region")
    assert level_relation(schema, year, month) is LevelRelation.ANCESTOR_OF
    assert level_relation(schema, month, year) is LevelRelation.DESCENDANT_OF
    assert level_relation(schema, year, region) is LevelRelation.UNRELATED
    assert level_relation(schema, year, year) is LevelRelation.EQUAL
    with pytest.raises(UnknownLevel):
        level_relation(schema, Level.parse("dates.decade"), year)


def test_summarizability_check(schema):
    child, parent = Level.parse("stores.city"), Level.parse("stores.region")
    assert check_summarizable(schema, child, parent, [("Bergen", "North"), ("Cadiz", "South"), ("Bergen", "North")])
    assert not check_summarizable(schema, child, parent, [("Bergen", "North"), ("Bergen", "South")])
    with pytest.raises(ValueError):
        check_summarizable(schema, parent, child, [])


def test_join_path_is_stable(schema):
    path = resolve_join_path(schema, "sales", {"stores.region", "products.category", "sales.amount"})
    assert path.tables == ["products", "stores"]


def test_ambiguous_join_path():
    rp = load_schema(ROLE_PLAYING)
    with pytest.raises(AmbiguousJoinPath):
        resolve_join_path(rp, "orders", {"days.weekday"})
    sig = make_signature("orders", ["SUM(orders.total)"], ["days.weekday"])
    assert validation_verdict(sig, rp).code is BypassCode.AMBIGUOUS_JOIN_PATH


@pytest.mark.parametrize(
    "mutate, exc",
    [
        (lambda d: d.update(fact_tables=[]), ParseError),
        (lambda d: d["fact_tables"][0]["measures"].update(total="text"), IntegrityError),
        (lambda d: d["fact_tables"][0]["attributes"].update(placed="int"), IntegrityError),
        (lambda d: d["foreign_keys"].append({"table": "orders", "column": "zzz", "references": "days", "key": "id"}), IntegrityError),
        (lambda d: d["foreign_keys"].append({"table": "orders", "column": "ship_day", "references": "days", "key": "weekday"}), IntegrityError),
        (lambda d: d.update(hierarchies=[{"dimension": "days", "levels": ["weekday", "weekday"]}]), IntegrityError),
        (lambda d: d["dimensions"].append(copy.deepcopy(d["dimensions"][0])), IntegrityError),
    ],
)
def test_schema_integrity(mutate, exc):
    doc = copy.deepcopy(ROLE_PLAYING)
    mutate(doc)
    with pytest.raises(exc):
        load_schema(doc)


def test_schema_from_yaml_text():
    assert load_schema(yaml.safe_dump(ROLE_PLAYING)).schema_version == "rp-1"
    with pytest.raises(ParseError):
        load_schema("- just\n- a list\n")


BASE = {"fact": "sales", "measures": [{"agg": "SUM", "expr": "sales.amount"}], "levels": ["stores.region"]}


@pytest.mark.parametrize(
    "extra, code",
    [
        ({"fact": "returns"}, BypassCode.UNKNOWN_COLUMN),
        ({"levels": ["stores.planet"]}, BypassCode.UNKNOWN_COLUMN),
        ({"measures": [{"agg": "SUM", "expr": "sales.channel"}]}, BypassCode.TYPE_MISMATCH),
        ({"measures": [{"agg": "AVG", "expr": "products.brand"}]}, BypassCode.TYPE_MISMATCH),
        ({"filters": [{"col": "sales.quantity", "op": "=", "val": "three"}]}, BypassCode.TYPE_MISMATCH),
        ({"filters": [{"col": "sales.quantity", "op": "LIKE", "val": "3%"}]}, BypassCode.TYPE_MISMATCH),
        ({"filters": [{"col": "dates.day", "op": "=", "val": "yesterday"}]}, BypassCode.TYPE_MISMATCH),
        ({"filters": [{"col": "sales.sale_date", "op": ">=", "val": "2024-01-01"}]}, BypassCode.UNRESOLVED_TIME_WINDOW),
        ({"post_agg": {"having": [{"col": "COUNT(*)", "op": ">", "val": 1}]}}, BypassCode.UNKNOWN_COLUMN),
        ({"post_agg": {"order_by": [{"expr": "stores.city"}]}}, BypassCode.UNKNOWN_COLUMN),
    ],
)
def test_validator_rejects(schema, extra, code):
    sig = from_document({**BASE, **extra})
    with pytest.raises(Bypass) as exc:
        validate_signature(sig, schema)
    assert exc.value.code is code


def test_validator_accepts_and_does_not_mutate(schema):
    sig = from_document({**BASE, "filters": [{"col": "dates.day", "op": ">=", "val": "2024-01-05"}],
                         "post_agg": {"order_by": [{"expr": "SUM(sales.amount)", "dir": "DESC"}], "limit": 2}})
    before = sig.to_doc()
    assert validation_verdict(sig, schema) is None
    assert sig.to_doc() == before
