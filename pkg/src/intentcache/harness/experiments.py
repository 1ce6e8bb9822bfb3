"""Experiment drivers: method comparison, capacity sweep, derivation drill, gating, overheads."""

from __future__ import annotations

import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Sequence

from ..config import PROFILES, PolicyConfig
from ..errors import Bypass
from ..executor.reference import reference_execute
from ..nl.canonicalizer import NlCanonicalizer, NlMemo, NlRequest
from ..nl.clients import FixtureClient
from ..pipeline import BYPASS, DERIVED_HIT, EXACT_HIT, Request
from ..signature import IntentSignature, from_document, signature_key
from ..sqlcanon import render_sql
from ..table import Column, ResultTable
from ..validator import validation_verdict
from .baselines import DERIVED, HIT, METHODS, ASTCache, NlToSqlAst, SigCache, TextCache
from .env import Env
from .intents import load_adversarial
from .report import FalseHit, MethodReport, RunReport, Tally
from .variants import Variant
from .workload import WorkItem, Workload, base_items, intent_variants, order

CAPACITIES = (10, 25, 50, 75, 100)
THRESHOLDS = (0.3, 0.5, 0.7, 0.9)


# -- method comparison ----------------------------------------------------------


def recorded_sql(variants: dict[str, list[Variant]], paraphrases: dict[str, list[Any]]) -> dict[str, str]:
    """Question -> SQL text an NL-to-SQL front end produced for it.

    Fixtures may carry their own ``sql``. Otherwise paraphrase k of an intent
    is rendered as that intent's variant 2k (mod n), so different phrasings
    yield differently written SQL for the same intent.
    """
    out = {}
    for iid, recs in paraphrases.items():
        vs = variants.get(iid)
        for k, rec in enumerate(recs):
            if rec.sql:
                out[rec.question] = rec.sql
            elif vs:
                out[rec.question] = vs[(2 * k) % len(vs)].text
    return out


def make_method(name: str, env: Env, variants: dict[str, list[Variant]], capacity: int | None = None, policy: PolicyConfig | None = None):
    if name == "TextCache":
        return TextCache(env.backend, capacity)
    if name == "ASTCache":
        return ASTCache(env.backend, capacity)
    if name == "NlToSqlAst":
        return NlToSqlAst(env.backend, recorded_sql(variants, env.paraphrases), capacity)
    if name == "SigCache":
        return SigCache(env.pipeline(env.store(capacity_entries=capacity), policy=policy))
    raise ValueError(f"unknown method {name!r}; choose from {METHODS}")


def run_method(method: Any, workload: Iterable[WorkItem], gold: dict[str, ResultTable], audit: str = "gold", backend: Any = None) -> MethodReport:
    """Replay ``workload``; every hit is compared with the intent's gold result.

    Gold results equal direct execution of every variant (checked when the
    variants are generated). ``audit="direct"`` re-executes each hit's SQL
    instead, which is slower but does not lean on that check.
    """
    tally = Tally(method.name)
    for item in workload:
        out = method.handle(item)
        false_hit = False
        if out.kind in (HIT, DERIVED):
            if audit == "direct" and item.kind == "SQL" and backend is not None:
                expect = backend.execute(item.payload)
            else:
                expect = gold[item.intent_id]
            false_hit = not out.result.equals(expect)
        tally.add(item, out, false_hit)
    return tally.finish()


def run_bench(
    env: Env,
    ordering: str = "sequential",
    methods: Sequence[str] = METHODS,
    seed: int | None = None,
    n_variants: int | None = None,
    repetitions: int | None = None,
    capacity: int | None = None,
    policy: PolicyConfig | None = None,
    strict: bool = True,
    workload: Workload | None = None,
    audit: str = "gold",
) -> RunReport:
    cfg = env.config
    seed = cfg.seed if seed is None else seed
    n_variants = cfg.variants if n_variants is None else n_variants
    repetitions = cfg.repetitions if repetitions is None else repetitions
    variants = intent_variants(env.intents, env.schema, n_variants, seed, env.reference)
    if workload is None:
        workload = order(base_items(env.intents, variants, env.paraphrases, repetitions), ordering, seed)
    gold = {it.id: it.gold for it in env.intents}
    reports = [run_method(make_method(m, env, variants, capacity, policy), workload, gold, audit, env.backend) for m in methods]
    report = RunReport(
        {
            "ordering": workload.ordering,
            "seed": seed,
            "requests": len(workload),
            "sql": sum(w.kind == "SQL" for w in workload),
            "nl": sum(w.kind == "NL" for w in workload),
            "intents": len(workload.intents()),
            "variants": n_variants,
            "repetitions": repetitions,
            "snapshot": env.backend.snapshot_id(),
        },
        reports,
    )
    bad = [m.method for m in reports if m.false_hits]
    if strict and bad:
        raise FalseHit(f"false hits in {bad}:\n{report.table()}")
    return report


# -- capacity sweep ---------------------------------------------------------------


@dataclass
class SweepReport:
    distinct_keys: int
    capacities: tuple[int, ...]
    entries: dict[int, int]  # percent -> entry budget
    rates: dict[str, dict[int, float]] = field(default_factory=dict)  # ordering -> percent -> hit rate

    def table(self) -> str:
        head = f"{'ordering':<12}" + "".join(f"{str(p) + '%':>8}" for p in self.capacities)
        lines = [head, "-" * len(head)]
        for ordering, row in self.rates.items():
            lines.append(f"{ordering:<12}" + "".join(f"{row[p]:8.1f}" for p in self.capacities))
        return "\n".join(lines)

    def as_dict(self) -> dict:
        return asdict(self)


def run_capacity_sweep(
    env: Env,
    orderings: Sequence[str] = ("sequential", "random", "interleaved", "zipf"),
    capacities: Sequence[int] = CAPACITIES,
    seed: int | None = None,
    repetitions: int | None = None,
    n_variants: int | None = None,
) -> SweepReport:
    """SigCache hit rate per ordering at entry budgets relative to the distinct key count."""
    cfg = env.config
    seed = cfg.seed if seed is None else seed
    repetitions = cfg.repetitions if repetitions is None else repetitions
    n_variants = cfg.variants if n_variants is None else n_variants
    variants = intent_variants(env.intents, env.schema, n_variants, seed, None)
    per_intent = base_items(env.intents, variants, env.paraphrases, repetitions)
    distinct = len(env.intents)
    budgets = {p: max(1, round(p / 100 * distinct)) for p in capacities}
    sweep = SweepReport(distinct, tuple(capacities), budgets)
    gold = {it.id: it.gold for it in env.intents}
    # the intents are mutually non-derivable, so derivation would only add lookups
    policy = env.config.policy.with_overrides(derivations_enabled=False)
    for ordering in orderings:
        workload = order(per_intent, ordering, seed)
        row = {}
        for p in capacities:
            rep = run_method(make_method("SigCache", env, variants, budgets[p], policy), workload, gold)
            if rep.false_hits:
                raise FalseHit(f"false hits at {ordering} {p}%")
            row[p] = rep.hit_rate
        sweep.rates[ordering] = row
    return sweep


# -- derivation drill ---------------------------------------------------------------

# (fine levels, three coarser level sets, extra filter for the filter-down, base filters, window)
DRILL_SESSIONS: tuple[dict[str, Any], ...] = (
    {
        "levels": ["dates.month", "stores.region"],
        "rollups": [["dates.quarter", "stores.region"], ["dates.year"], ["stores.region"]],
        "narrow": {"col": "stores.region", "op": "=", "val": "North"},
        "filters": [{"col": "products.category", "op": "=", "val": "electronics"}],
        "window": {"start": "2023-01-01", "end": "2024-01-01"},
    },
    {
        "levels": ["stores.store_name", "products.category"],
        "rollups": [["stores.city"], ["stores.region", "products.category"], ["products.category"]],
        "narrow": {"col": "products.category", "op": "IN", "val": ["home", "toys"]},
        "filters": [{"col": "sales.channel", "op": "=", "val": "online"}],
        "window": {"start": "2024-01-01", "end": "2024-07-01"},
    },
    {
        "levels": ["products.product_name", "sales.channel"],
        "rollups": [["products.subcategory"], ["products.category", "sales.channel"], ["sales.channel"]],
        "narrow": {"col": "sales.channel", "op": "=", "val": "store"},
        "filters": [],
        "window": {"start": "2024-07-01", "end": "2024-10-01"},
    },
    {
        "levels": ["dates.day", "stores.city"],
        "rollups": [["dates.month", "stores.city"], ["dates.quarter", "stores.region"], ["stores.region"]],
        "narrow": {"col": "stores.city", "op": "IN", "val": ["Bergen", "Malaga"]},
        "filters": [{"col": "products.brand", "op": "!=", "val": "gale"}],
        "window": {"start": "2023-10-01", "end": "2024-01-01"},
    },
)
ADDITIVE = ({"agg": "SUM", "expr": "sales.amount"}, {"agg": "COUNT", "expr": "*"}, {"agg": "MAX", "expr": "sales.net_amount"})
AVERAGES = ({"agg": "AVG", "expr": "sales.amount"},)


def drill_signatures(measures: Sequence[dict] = ADDITIVE, sessions: Sequence[dict] = DRILL_SESSIONS) -> list[IntentSignature]:
    """Per session: finest query, three roll-ups, one filter-down, then two repeats."""
    out = []
    for s in sessions:
        base = {"fact": "sales", "measures": list(measures), "filters": list(s["filters"]), "time_window": s["window"]}
        fine = from_document({**base, "levels": s["levels"]})
        ups = [from_document({**base, "levels": lv}) for lv in s["rollups"]]
        narrow = from_document({**base, "levels": s["levels"], "filters": [*s["filters"], s["narrow"]]})
        out += [fine, *ups, narrow, ups[0], narrow]
    return out


@dataclass
class DerivationReport:
    requests: int
    exact_only_hit_rate: float
    with_derivations_hit_rate: float
    derived_hits: int
    exact_hits: int
    false_hits: int
    oracle_checked: int

    @property
    def uplift(self) -> float:
        return self.with_derivations_hit_rate / self.exact_only_hit_rate if self.exact_only_hit_rate else float("inf")


def _drill(env: Env, sqls: list[str], derivations: bool) -> tuple[int, int, int, int, int]:
    policy = env.config.policy.with_overrides(derivations_enabled=derivations)
    pipe = env.pipeline(env.store(), policy=policy)
    exact = derived = false = checked = 0
    for sql in sqls:
        resp = pipe.handle(Request.sql(sql))
        kind = resp.provenance.kind
        if kind in (EXACT_HIT, DERIVED_HIT):
            checked += 1
            if not resp.result.equals(reference_execute(resp.signature, env.data)):
                false += 1
        exact += kind == EXACT_HIT
        derived += kind == DERIVED_HIT
    return exact, derived, false, checked, len(sqls)


def run_derivation_experiment(env: Env, measures: Sequence[dict] = ADDITIVE, sessions: Sequence[dict] = DRILL_SESSIONS) -> DerivationReport:
    """Same drill trace with derivations off and on; every hit is checked against the oracle."""
    sqls = [render_sql(s, env.schema) for s in drill_signatures(measures, sessions)]
    e0, d0, f0, c0, n = _drill(env, sqls, derivations=False)
    e1, d1, f1, c1, _ = _drill(env, sqls, derivations=True)
    assert d0 == 0
    return DerivationReport(
        requests=n,
        exact_only_hit_rate=100.0 * e0 / n,
        with_derivations_hit_rate=100.0 * (e1 + d1) / n,
        derived_hits=d1,
        exact_hits=e1,
        false_hits=f0 + f1,
        oracle_checked=c0 + c1,
    )


# -- NL gating ------------------------------------------------------------------------


@dataclass
class LabeledOutcome:
    id: str
    category: str | None
    confidence: float
    label: str  # correct | wrong | invalid, recomputed from document vs gold
    recorded_label: str


def label_corpus(env: Env, records=None) -> list[LabeledOutcome]:
    """Recompute each record's label from its document: invalid, or correct iff key(document) == key(gold)."""
    records = records if records is not None else load_adversarial()[0]
    canon = NlCanonicalizer(env.schema, FixtureClient([r.record for r in records]), NlMemo())
    out = []
    for r in records:
        rec = r.record
        try:
            outcome = canon.canonicalize(NlRequest(rec.question, rec.anchor_date))
            problem = validation_verdict(outcome.signature, env.schema)
        except Bypass as b:
            problem = b
        if problem is not None:
            label = "invalid"
        elif r.gold is not None and signature_key(outcome.signature) == signature_key(r.gold):
            label = "correct"
        else:
            label = "wrong"
        out.append(LabeledOutcome(r.id, rec.category, rec.confidence, label, rec.gold_label))
    return out


def gating_table(labeled: list[LabeledOutcome], thresholds: Sequence[float] = THRESHOLDS) -> list[dict[str, float]]:
    """Coverage = accepted/total, precision = correct/accepted; invalid documents are never accepted."""
    rows = []
    total = len(labeled)
    for t in thresholds:
        acc = [o for o in labeled if o.label != "invalid" and o.confidence >= t]
        correct = sum(o.label == "correct" for o in acc)
        rows.append(
            {
                "threshold": t,
                "accepted": len(acc),
                "coverage": 100.0 * len(acc) / total if total else 0.0,
                "precision": 100.0 * correct / len(acc) if acc else 100.0,
                "wrong": len(acc) - correct,
            }
        )
    return rows


def profile_table(env: Env, records=None) -> dict[str, dict[str, int]]:
    """Run the corpus through a pipeline per profile; count what got cached, by label."""
    records = records if records is not None else load_adversarial()[0]
    labels = {o.id: o.label for o in label_corpus(env, records)}
    out = {}
    for name, policy in PROFILES.items():
        canon = NlCanonicalizer(env.schema, FixtureClient([r.record for r in records]), NlMemo())
        pipe = env.pipeline(env.store(), policy=policy, nl=canon)
        counts = {"correct": 0, "wrong": 0, "invalid": 0, "bypassed": 0}
        for r in records:
            resp = pipe.handle(Request.nl(r.record.question, r.record.anchor_date))
            if resp.provenance.kind == BYPASS:
                counts["bypassed"] += 1
            else:
                counts[labels[r.id]] += 1
        counts["cached_entries"] = len(pipe.store)
        out[name] = counts
    return out


# -- overheads -------------------------------------------------------------------------


_PROBE_SQL = (
    "SELECT stores.region, SUM(sales.amount) FROM sales JOIN stores ON sales.store_id = stores.store_id "
    "WHERE sales.amount >= {k} AND sales.sale_date >= '2024-01-01' AND sales.sale_date < '2024-07-01' "
    "GROUP BY stores.region"
)


def lookup_overhead(env: Env, entries: int = 500, lookups: int = 1000, seed: int = 0) -> dict[str, float]:
    """Median and P95 of parse + canonicalize + validate + exact lookup over a populated store."""
    import random

    store = env.store()
    pipe = env.pipeline(store)
    dummy = ResultTable((Column("stores.region", "text", "level"), Column("SUM(sales.amount)", "float", "measure")), [("North", 1.0)])
    for k in range(entries):
        sig = pipe.sql_signature(_PROBE_SQL.format(k=k))
        store.put(sig, dummy, origin="SQL", snapshot_id=env.backend.snapshot_id())
    rng = random.Random(seed)
    times = []
    for _ in range(lookups):
        resp = pipe.handle(Request.sql(_PROBE_SQL.format(k=rng.randrange(entries))))
        if resp.provenance.kind != EXACT_HIT:
            raise AssertionError("probe lookup missed")
        times.append(resp.timings["total"])
    times.sort()
    return {
        "entries": len(store),
        "lookups": lookups,
        "median_ms": statistics.median(times),
        "p95_ms": times[int(0.95 * (len(times) - 1))],
    }


def memo_overhead(env: Env, repeats: int = 200) -> dict[str, float]:
    """Client calls and canonicalization time for a repeated identical NL request."""
    recs = env.paraphrases[env.intents[0].id]
    client = FixtureClient(recs)
    canon = NlCanonicalizer(env.schema, client, NlMemo())
    req = NlRequest(recs[0].question)
    canon.canonicalize(req)
    calls = client.calls
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        canon.canonicalize(req)
        times.append((time.perf_counter() - t) * 1000)
    return {"first_calls": calls, "repeat_calls": client.calls - calls, "median_ms": statistics.median(times)}

