import json
from collections import Counter

import pytest

from intentcache.errors import MissingFixture
from intentcache.harness.baselines import ast_key, text_key
from intentcache.harness.experiments import run_bench
from intentcache.harness.intents import generate_nl_fixtures
from intentcache.harness.variants import CLASSES, expected_key_counts, generate_variants
from intentcache.harness.workload import ORDERINGS, WorkItem, Workload, base_items, intent_variants, order
from intentcache.sqlcanon import sql_to_signature
from intentcache.signature import signature_key

from conftest import FIXTURES


def test_text_key():
    assert text_key("SELECT  a\nFROM t WHERE x = 'Ab'") == text_key("select a from T where X = 'Ab'")
    assert text_key("SELECT a FROM t WHERE x = 'Ab'") != text_key("SELECT a FROM t WHERE x = 'ab'")
    assert text_key("SELECT a FROM t f") != text_key("SELECT a FROM t g")


def test_ast_key():
    a = "SELECT f.amount FROM sales AS f WHERE f.channel = 'online'"
    b = "select g.amount from SALES g where g.channel='online'"
    assert ast_key(a) == ast_key(b)
    # no reordering beyond aliases and formatting
    assert ast_key("SELECT a FROM t WHERE x = 1 AND y = 2") != ast_key("SELECT a FROM t WHERE y = 2 AND x = 1")
    assert ast_key("SELECT a FROM t WHERE x IN (1, 2)") != ast_key("SELECT a FROM t WHERE x IN (2, 1)")


@pytest.fixture(scope="module")
def variants(env):
    return intent_variants(env.intents, env.schema, 21, 7, env.reference)


def test_variants_are_distinct_and_equivalent(env, variants):
    for it in env.intents:
        vs = variants[it.id]
        assert len(vs) == 21 and len({v.text for v in vs}) == 21
        assert {v.cls for v in vs} <= set(CLASSES)
        assert {signature_key(sql_to_signature(v.text, env.schema)) for v in vs} == {it.key}


def test_expected_key_counts_match_fixture(env, variants):
    fixture = json.loads((FIXTURES / "variant_key_counts.json").read_text())
    assert fixture["n"] == 21 and fixture["seed"] == 7
    for it in env.intents:
        vs = variants[it.id]
        want = fixture["intents"][it.id]
        assert dict(Counter(v.cls for v in vs)) == want["classes"]
        assert expected_key_counts(vs) == {m: want[m] for m in ("TextCache", "ASTCache", "SigCache")}
        # the counts are what the keying functions actually produce
        assert len({text_key(v.text) for v in vs}) == want["TextCache"]
        assert len({ast_key(v.text) for v in vs}) == want["ASTCache"]


def test_variant_edge_cases(env):
    sig = env.intents[0].signature
    assert generate_variants(sig, env.schema, 0) == []
    (only,) = generate_variants(sig, env.schema, 1)
    assert only.cls == "canonical"
    assert [v.text for v in generate_variants(sig, env.schema, 14, seed=3)] == [v.text for v in generate_variants(sig, env.schema, 14, seed=3)]
    with pytest.raises(ValueError):
        generate_variants(sig, env.schema, 10_000)


def _per_intent():
    return {i: [WorkItem("SQL", f"{i}-{k}", i) for k in range(n)] for i, n in (("a", 3), ("b", 2), ("c", 3))}


@pytest.mark.parametrize("ordering", ORDERINGS)
def test_orderings_keep_request_count(ordering):
    w = order(_per_intent(), ordering, seed=1)
    assert len(w) == 8
    if ordering != "zipf":
        assert Counter(x.payload for x in w) == Counter(x.payload for v in _per_intent().values() for x in v)


def test_interleaved_is_round_robin():
    w = order(_per_intent(), "interleaved")
    assert [x.payload for x in w] == ["a-0", "b-0", "c-0", "a-1", "b-1", "c-1", "a-2", "c-2"]
    with pytest.raises(ValueError):
        order(_per_intent(), "lifo")


def test_zipf_is_skewed():
    per = {f"i{k:02d}": [WorkItem("SQL", f"{k}", f"i{k:02d}")] * 20 for k in range(10)}
    counts = Counter(x.intent_id for x in order(per, "zipf", seed=2))
    assert sum(counts.values()) == 200
    assert counts.most_common(1)[0][1] > 200 / 10 * 2


def test_workload_roundtrip(tmp_path, env, variants):
    items = base_items(env.intents[:2], variants, env.paraphrases, repetitions=1, nl_per_intent=2)
    w = order(items, "random", seed=5)
    w.save(tmp_path / "w.jsonl")
    back = Workload.load(tmp_path / "w.jsonl")
    assert back.items == w.items
    assert {x.kind for x in back} == {"SQL", "NL"}
    (tmp_path / "bad.jsonl").write_text('{"kind": "SQL"}\n')
    with pytest.raises(ValueError):
        Workload.load(tmp_path / "bad.jsonl")


def test_generate_nl_fixtures(env):
    assert generate_nl_fixtures("i01", 0) == []
    two = generate_nl_fixtures(env.intents[0], 2)
    assert [q for q, _ in two] == [r.question for r in env.paraphrases["i01"][:2]]
    with pytest.raises(MissingFixture):
        generate_nl_fixtures("i99", 1)
    with pytest.raises(MissingFixture):
        generate_nl_fixtures("i01", 1000)


def test_bench_is_reproducible(env):
    a = run_bench(env, ordering="random", n_variants=7, repetitions=1)
    b = run_bench(env, ordering="random", n_variants=7, repetitions=1)
    assert a.as_dict(timings=False) == b.as_dict(timings=False)
    sig = a.by_method("SigCache")
    assert sig.false_hits == 0 and sig.total == a.workload["requests"]
    assert sig.hit_rate > a.by_method("TextCache").hit_rate
