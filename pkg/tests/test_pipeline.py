import threading

import pytest

from intentcache.config import PolicyConfig
from intentcache.errors import BackendError, BypassCode
from intentcache.nl.canonicalizer import NlCanonicalizer, NlRequest
from intentcache.nl.clients import FixtureClient, FixtureRecord
from intentcache.pipeline import Pipeline, Request
from intentcache.sqlcanon import render_sql

I01_SQL = """
SELECT s.region, SUM(f.amount) FROM sales f
JOIN stores s ON f.store_id = s.store_id JOIN products p ON f.product_id = p.product_id
WHERE f.sale_date < '2024-04-01' AND p.category = 'electronics' AND f.sale_date >= '2024-01-01'
GROUP BY s.region
"""


@pytest.fixture
def intent(env):
    return env.intents[0]


@pytest.fixture
def question(env):
    return env.paraphrases["i01"][0].question


def test_exact_hit_after_miss(env, intent):
    p = env.pipeline()
    first = p.handle(Request.sql(intent.sql))
    assert first.provenance.kind == "Miss"
    assert first.result.equals(intent.gold)
    second = p.handle(Request.sql(I01_SQL))  # same intent, different text
    assert second.provenance.kind == "ExactHit" and not second.provenance.cross_surface
    assert second.key == first.key and second.result.equals(intent.gold)
    assert "total" in second.timings and "lookup" in second.timings


def test_cross_surface_hit(env, intent, question):
    p = env.pipeline()
    p.handle(Request.sql(intent.sql))
    resp = p.handle(Request.nl(question))
    assert resp.provenance.kind == "ExactHit"
    assert resp.provenance.origin == "SQL" and resp.provenance.cross_surface
    assert resp.confidence == 1.0


def test_nl_first_then_sql(env, intent, question):
    p = env.pipeline()
    assert p.handle(Request.nl(question)).provenance.kind == "Miss"
    resp = p.handle(Request.sql(intent.sql))
    assert resp.provenance.kind == "ExactHit" and resp.provenance.origin == "NL"


def test_sql_bypass_executes_and_is_not_stored(env):
    p = env.pipeline()
    text = "WITH t AS (SELECT channel FROM sales) SELECT COUNT(*) FROM t"
    resp = p.handle(Request.sql(text))
    assert resp.provenance.kind == "Bypass"
    assert resp.provenance.reason.code is BypassCode.UNSUPPORTED_CONSTRUCT
    assert resp.result.rows == [(env.data.tables["sales"].n_rows,)]
    assert len(p.store) == 0


def test_unknown_column_bypasses(env):
    p = env.pipeline()
    out = p.explain(Request.sql("SELECT SUM(nope) FROM sales"))
    assert out["decision"] == "Bypass" and out["reason"]["code"] == BypassCode.UNKNOWN_COLUMN.value
    # the raw text still goes to the backend, which reports its own error
    with pytest.raises(BackendError):
        p.handle(Request.sql("SELECT SUM(nope) FROM sales"))


def test_derived_hit(env):
    p = env.pipeline()
    fine = ("SELECT st.city, d.month, SUM(f.amount), COUNT(*) FROM sales f JOIN stores st ON f.store_id = st.store_id "
            "JOIN dates d ON f.date_id = d.date_id GROUP BY st.city, d.month")
    coarse = ("SELECT st.region, SUM(f.amount) FROM sales f JOIN stores st ON f.store_id = st.store_id GROUP BY st.region")
    p.handle(Request.sql(fine))
    resp = p.handle(Request.sql(coarse))
    assert resp.provenance.kind == "DerivedHit"
    assert resp.provenance.derivation["kind"] == "RollUp"
    assert resp.result.equals(env.reference.execute_signature(resp.signature))
    # the derived result is stored, so the next request is exact
    assert p.handle(Request.sql(coarse)).provenance.kind == "ExactHit"
    off = env.pipeline(policy=PolicyConfig(derivations_enabled=False))
    off.handle(Request.sql(fine))
    assert off.handle(Request.sql(coarse)).provenance.kind == "Miss"


def test_sql_seeded_only(env, intent, question):
    p = env.pipeline(policy=PolicyConfig(sql_seeded_only=True))
    assert p.handle(Request.nl(question)).provenance.kind == "Miss"
    assert len(p.store) == 0
    p.handle(Request.sql(intent.sql))
    assert p.handle(Request.nl(question)).provenance.kind == "ExactHit"


def test_low_confidence_bypass_runs_candidate(env, intent):
    doc = intent.signature.to_doc()
    nl = NlCanonicalizer(env.schema, FixtureClient([FixtureRecord("revenue by region, roughly", doc, 0.2)]))
    p = env.pipeline(nl=nl)
    resp = p.handle(Request.nl("revenue by region, roughly"))
    assert resp.provenance.kind == "Bypass" and resp.provenance.reason.code is BypassCode.LOW_CONFIDENCE
    assert resp.result.equals(intent.gold)
    assert len(p.store) == 0
    lax = env.pipeline(policy=PolicyConfig(confidence_threshold=None), nl=nl)
    assert lax.handle(Request.nl("revenue by region, roughly")).provenance.kind == "Miss"


def test_nl_client_error_bypasses_without_result(env):
    resp = env.pipeline().handle(Request.nl("a question nobody recorded"))
    assert resp.provenance.kind == "Bypass" and resp.result is None
    assert resp.provenance.reason.code is BypassCode.CLIENT_ERROR


def test_verify_nl_hits(env, intent):
    # a confident answer that ignores the period named in the question
    doc = {k: v for k, v in intent.signature.to_doc().items() if k != "time_window"}
    nl = NlCanonicalizer(env.schema, FixtureClient([FixtureRecord("electronics revenue by region in 2023", doc, 0.95)]))
    strict = env.pipeline(policy=PolicyConfig(verify_nl_hits=True), nl=nl)
    strict.handle(Request.sql(render_sql(nl.canonicalize(NlRequest("electronics revenue by region in 2023")).signature, env.schema)))
    resp = strict.handle(Request.nl("electronics revenue by region in 2023"))
    assert resp.provenance.kind == "Bypass" and resp.provenance.reason.code is BypassCode.POLICY_REJECT
    loose = env.pipeline(store=strict.store, nl=nl)
    assert loose.handle(Request.nl("electronics revenue by region in 2023")).provenance.kind == "ExactHit"


def test_scope_separates_entries(env, intent):
    p = env.pipeline()
    p.handle(Request.sql(intent.sql, scope="tenant-a"))
    assert p.handle(Request.sql(intent.sql, scope="tenant-b")).provenance.kind == "Miss"
    assert p.handle(Request.sql(intent.sql, scope="tenant-a")).provenance.kind == "ExactHit"


def test_concurrent_identical_requests_execute_once(env, intent):
    calls = []

    class Counting:
        def __init__(self, inner):
            self.inner = inner

        def execute_signature(self, sig):
            calls.append(sig)
            return self.inner.execute_signature(sig)

        def __getattr__(self, name):
            return getattr(self.inner, name)

    p = Pipeline(env.schema, Counting(env.reference), env.store())
    out = []
    threads = [threading.Thread(target=lambda: out.append(p.handle(Request.sql(intent.sql)))) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(calls) == 1
    assert sorted(r.provenance.kind for r in out).count("Miss") == 1


def test_explain(env, intent, question):
    p = env.pipeline()
    before = p.explain(Request.sql(intent.sql))
    assert before["decision"] == "Miss" and before["key"] == intent.key and "SELECT" in before["sql"]
    assert len(p.store) == 0
    p.handle(Request.sql(intent.sql))
    assert p.explain(Request.nl(question))["decision"] == "ExactHit"
    bad = p.explain(Request.sql("SELECT * FROM sales"))
    assert bad["decision"] == "Bypass" and bad["reason"]["code"]


def test_nl_without_canonicalizer(env):
    p = Pipeline(env.schema, env.reference)
    with pytest.raises(RuntimeError):
        p.handle(Request.nl("anything"))
    with pytest.raises(ValueError):
        Request("GRAPHQL", "{}")
