import pytest

from intentcache.derivation import (
    Reject,
    RejectReason,
    apply_filterdown,
    apply_rollup,
    can_filterdown,
    can_rollup,
    predicate_true,
    try_derive,
)
from intentcache.executor.reference import ReferenceBackend, reference_execute
from intentcache.signature import Predicate, make_signature, signature_key
from intentcache.store import CacheStore

from fuzz import broken_hierarchy, run_fuzz

WINDOW = {"start": "2024-01-01", "end": "2024-07-01"}
FILTERS = [("sales.channel", "=", "online")]


def sig(levels, measures=("SUM(sales.amount)", "COUNT(*)"), filters=FILTERS, pa=None):
    return make_signature("sales", measures, levels, filters, WINDOW, pa)


def cached_entry(data, s):
    store = CacheStore()
    store.put(s, reference_execute(s, data))
    return store, store.load_entry(signature_key(s))


def test_rollup_matches_execution(data):
    backend = ReferenceBackend(data)
    _, entry = cached_entry(data, sig(["stores.city", "dates.month"]))
    for levels in (["stores.region", "dates.quarter"], ["dates.year"], [], ["stores.city"]):
        req = sig(levels, measures=("SUM(sales.amount)",))
        plan = can_rollup(req, entry, data.schema, backend.level_pairs)
        assert not isinstance(plan, Reject), plan
        assert apply_rollup(plan).equals(reference_execute(req, data))


def test_filterdown_matches_execution(data):
    _, entry = cached_entry(data, sig(["stores.city", "products.category"]))
    req = sig(["stores.city", "products.category"], filters=FILTERS + [("products.category", "IN", ["toys", "home"]), ("stores.city", "LIKE", "B%")])
    plan = can_filterdown(req, entry)
    assert not isinstance(plan, Reject), plan
    assert apply_filterdown(plan).equals(reference_execute(req, data))


@pytest.mark.parametrize(
    "req, reason",
    [
        (sig(["stores.region"], measures=("AVG(sales.amount)",)), RejectReason.NON_COMPOSABLE_AGGREGATE),
        (sig(["stores.region"], measures=("COUNT(DISTINCT sales.store_id)",)), RejectReason.NON_COMPOSABLE_AGGREGATE),
        (sig(["stores.region"], pa={"order_by": [{"expr": "stores.region"}]}), RejectReason.ORDER_LIMIT_PRESENT),
        (sig(["stores.region"], pa={"limit": 2}), RejectReason.ORDER_LIMIT_PRESENT),
        (sig(["stores.region"], filters=[]), RejectReason.FILTER_MISMATCH),
        (sig(["stores.region"], measures=("MAX(sales.cost)",)), RejectReason.MEASURE_MISSING),
        (sig(["products.category"]), RejectReason.GRAIN_MISMATCH),
    ],
)
def test_rollup_rejections(data, req, reason):
    _, entry = cached_entry(data, sig(["stores.city", "dates.month"]))
    rej = can_rollup(req, entry, data.schema, ReferenceBackend(data).level_pairs)
    assert isinstance(rej, Reject) and rej.reason is reason
    assert not rej  # falsy by design


def test_rollup_needs_a_mapping_source(data):
    _, entry = cached_entry(data, sig(["stores.city"]))
    rej = can_rollup(sig(["stores.region"]), entry, data.schema, mapper=None)
    assert rej.reason is RejectReason.NO_MAPPING


def test_rollup_rejects_non_functional_mapping(data):
    broken = broken_hierarchy(data)
    _, entry = cached_entry(broken, sig(["stores.city"]))
    rej = can_rollup(sig(["stores.region"]), entry, broken.schema, ReferenceBackend(broken).level_pairs)
    assert rej.reason is RejectReason.NOT_SUMMARIZABLE
    # the same request is fine once the bad city is filtered out of the cached entry
    narrow = FILTERS + [("stores.city", "!=", "Bergen")]
    _, entry = cached_entry(broken, sig(["stores.city"], filters=narrow))
    plan = can_rollup(sig(["stores.region"], filters=narrow), entry, broken.schema, ReferenceBackend(broken).level_pairs)
    assert apply_rollup(plan).equals(reference_execute(sig(["stores.region"], filters=narrow), broken))


def test_cached_entry_with_order_or_having(data):
    for pa in ({"order_by": [{"expr": "stores.city"}], "limit": 3}, {"having": [{"col": "COUNT(*)", "op": ">", "val": 5}]}):
        _, entry = cached_entry(data, sig(["stores.city"], pa=pa))
        assert isinstance(can_rollup(sig(["stores.region"]), entry, data.schema, ReferenceBackend(data).level_pairs), Reject)
        assert isinstance(can_filterdown(sig(["stores.city"], filters=FILTERS + [("stores.city", "=", "Bergen")]), entry), Reject)


def test_filterdown_rejections(data):
    _, entry = cached_entry(data, sig(["stores.city"]))
    missing = can_filterdown(sig(["stores.city"], filters=FILTERS + [("products.brand", "=", "gale")]), entry)
    assert missing.reason is RejectReason.FILTER_ATTRIBUTE_MISSING
    same = can_filterdown(sig(["stores.city"]), entry)
    assert same.reason is RejectReason.FILTER_MISMATCH
    other_grain = can_filterdown(sig(["stores.region"], filters=FILTERS + [("stores.region", "=", "North")]), entry)
    assert other_grain.reason is RejectReason.GRAIN_MISMATCH


def test_request_with_having_is_derivable(data):
    backend = ReferenceBackend(data)
    _, entry = cached_entry(data, sig(["stores.city"]))
    req = sig(["stores.region"], pa={"having": [{"col": "COUNT(*)", "op": ">=", "val": 300}]})
    plan = can_rollup(req, entry, data.schema, backend.level_pairs)
    assert apply_rollup(plan).equals(reference_execute(req, data))


def test_try_derive_prefers_filterdown_and_records(data):
    store = CacheStore()
    for s in (sig(["stores.city"]), sig(["stores.region"])):
        store.put(s, reference_execute(s, data))
    req = sig(["stores.region"], filters=FILTERS + [("stores.region", "=", "North")])
    out = try_derive(req, store, data.schema, ReferenceBackend(data).level_pairs)
    assert out.plan.kind == "FilterDown"
    assert out.plan.source.key == signature_key(sig(["stores.region"]))
    assert out.result.equals(reference_execute(req, data))
    assert store.stats()["derived_hits"] == 1
    assert try_derive(sig(["stores.region"], measures=("AVG(sales.amount)",)), store, data.schema) is None


@pytest.mark.parametrize(
    "value, p, expected",
    [
        (None, Predicate("x.y", "IS_NULL"), True),
        (None, Predicate("x.y", "=", "a"), False),
        (None, Predicate("x.y", "!=", "a"), False),
        ("abc", Predicate("x.y", "LIKE", "a_c"), True),
        ("a%c", Predicate("x.y", "LIKE", "a%"), True),
        ("ABC", Predicate("x.y", "LIKE", "a%"), False),
        (3, Predicate("x.y", "NOT_IN", (1, 2)), True),
        (None, Predicate("x.y", "NOT_IN", (1, 2)), False),
    ],
)
def test_predicate_semantics(value, p, expected):
    assert predicate_true(value, p) is expected


def test_fuzz_small(data):
    stats = run_fuzz([data, broken_hierarchy(data)], 200, seed=1)
    assert stats.violations == 0 and stats.mismatches == 0
    assert stats.plans > 0 and stats.must_reject > 0
