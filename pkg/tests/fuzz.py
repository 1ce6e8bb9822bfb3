"""(request, cached entry) pair generator for the derivation fuzz tests.

Each pair is built around a cached signature; the request is a roll-up or a
filter-down of it, sometimes perturbed into something no plan may answer.
The oracle decides independently which pairs must be rejected.
"""

import random
from dataclasses import dataclass

from intentcache.derivation import Reject, apply_filterdown, apply_rollup, can_filterdown, can_rollup
from intentcache.executor.reference import ReferenceBackend, reference_execute
from intentcache.executor.star import StarData
from intentcache.signature import make_signature, signature_key
from intentcache.store import CacheStore

from sigs import random_filter, random_window

# fine level -> coarser levels on the same dimension
ANCESTORS = {
    "dates.day": ["dates.month", "dates.quarter", "dates.year"],
    "dates.month": ["dates.quarter", "dates.year"],
    "dates.quarter": ["dates.year"],
    "stores.store_name": ["stores.city", "stores.region"],
    "stores.city": ["stores.region"],
    "products.product_name": ["products.subcategory", "products.category"],
    "products.subcategory": ["products.category"],
    "sales.channel": [],
}
COMPOSABLE = [("SUM", "sales.amount"), ("COUNT", "*"), ("MIN", "sales.cost"), ("MAX", "sales.net_amount"), ("SUM", "sales.quantity")]
OTHER = [("AVG", "sales.amount"), ("COUNT_DISTINCT", "stores.city")]


def broken_hierarchy(data: StarData, city: str = "Bergen", region: str = "South") -> StarData:
    """Copy of ``data`` where one store of ``city`` sits in a different region."""
    tables = {t: {c: col.to_list() for c, col in td.columns.items()} for t, td in data.tables.items()}
    stores = tables["stores"]
    idx = stores["city"].index(city)
    stores["region"][idx] = region
    return StarData.from_columns(data.schema, tables)


def filter_on(rng: random.Random, col: str) -> dict:
    if col == "stores.store_name":
        return {"col": col, "op": rng.choice(["LIKE", "!="]), "val": rng.choice(["Bergen%", "%#0%", "Malaga #10"])}
    if col == "products.product_name":
        return {"col": col, "op": "IN", "val": rng.sample(["audio a", "dolls b", "snacks c", "lighting d"], 2)}
    while True:
        f = random_filter(rng)
        if f["col"] == col:
            return f


@dataclass
class Pair:
    kind: str  # RollUp | FilterDown
    request: object
    cached: object
    must_reject: str | None  # why no plan may be produced, per the oracle


def _functional(data: StarData, child: str, parent: str, present) -> bool:
    table = child.partition(".")[0]
    cols = data.tables[table].columns
    seen = {}
    for c, p in zip(cols[child.partition(".")[2]].to_list(), cols[parent.partition(".")[2]].to_list()):
        if c in present and seen.setdefault(c, p) != p:
            return False
    return True


def make_pair(rng: random.Random) -> Pair:
    fine = rng.sample(sorted(ANCESTORS), rng.randint(1, 2))
    if len({lv.partition(".")[0] for lv in fine}) < len(fine):
        fine = fine[:1]
    if rng.random() < 0.15:
        fine = ["stores.city"]  # the level the broken data set makes non-functional
    pool = COMPOSABLE + (OTHER if rng.random() < 0.3 else [])
    measures = rng.sample(pool, rng.randint(1, 3))
    filters = [random_filter(rng) for _ in range(rng.randint(0, 2))]
    window = random_window(rng)
    cached_pa = {"order_by": [{"expr": fine[0]}], "limit": 50} if rng.random() < 0.08 else None
    cached = make_signature("sales", measures, fine, filters, window, cached_pa)

    req_measures = rng.sample(measures, rng.randint(1, len(measures)))
    if rng.random() < 0.1:
        req_measures.append(rng.choice(OTHER))
    req_pa = {"order_by": [{"expr": fine[0]}]} if rng.random() < 0.08 else None
    if rng.random() < 0.5:
        kind = "RollUp"
        levels = []
        for lv in fine:
            choice = rng.random()
            if choice < 0.4 and ANCESTORS[lv]:
                levels.append(rng.choice(ANCESTORS[lv]))
            elif choice < 0.7:
                levels.append(lv)
        request = make_signature("sales", req_measures, levels, filters, window, req_pa)
    else:
        kind = "FilterDown"
        col = rng.choice(fine) if rng.random() < 0.7 else rng.choice(["products.brand", "stores.region", "sales.quantity"])
        extra = filter_on(rng, col)
        request = make_signature("sales", req_measures, fine, filters + [extra], window, req_pa)
    return Pair(kind, request, cached, None)


def classify(pair: Pair, data: StarData, cached_result) -> str | None:
    """Reasons a plan must not exist, decided from the signatures and raw dimension rows."""
    req, c = pair.request, pair.cached
    if any(m.agg in ("AVG", "COUNT_DISTINCT") for m in req.measures):
        return "non-composable"
    if req.has_order_or_limit or c.has_order_or_limit:
        return "order/limit"
    if pair.kind == "FilterDown":
        extra = set(req.filters) - set(c.filters)
        if any(p.col not in c.levels for p in extra):
            return "missing filter attribute"
    else:
        for lv in req.levels:
            if lv in c.levels:
                continue
            child = next((f for f in c.levels if lv in ANCESTORS.get(f, [])), None)
            if child is None:
                continue
            present = set(cached_result.column_values(child))
            if not _functional(data, child, lv, present):
                return "non-summarizable"
    return None


@dataclass
class FuzzStats:
    pairs: int = 0
    plans: int = 0
    rejected: int = 0
    must_reject: int = 0
    violations: int = 0  # plan produced where the oracle forbids one
    mismatches: int = 0  # plan produced whose result differs from execution
    by_reason: dict | None = None


def run_fuzz(datasets, n: int, seed: int = 0) -> FuzzStats:
    """Spread ``n`` pairs over ``datasets`` (StarData list); every plan is executed against the oracle."""
    rng = random.Random(seed)
    stats = FuzzStats(by_reason={})
    backends = [(d, ReferenceBackend(d)) for d in datasets]
    for i in range(n):
        data, backend = backends[i % len(backends)]
        pair = make_pair(rng)
        store = CacheStore()
        cached_result = reference_execute(pair.cached, data)
        store.put(pair.cached, cached_result)
        entry = store.load_entry(signature_key(pair.cached))
        pair.must_reject = classify(pair, data, cached_result)
        if pair.kind == "RollUp":
            plan = can_rollup(pair.request, entry, data.schema, backend.level_pairs)
        else:
            plan = can_filterdown(pair.request, entry)
        stats.pairs += 1
        if pair.must_reject:
            stats.must_reject += 1
            stats.by_reason[pair.must_reject] = stats.by_reason.get(pair.must_reject, 0) + 1
        if isinstance(plan, Reject):
            stats.rejected += 1
            continue
        stats.plans += 1
        if pair.must_reject:
            stats.violations += 1
            continue
        got = apply_rollup(plan) if plan.kind == "RollUp" else apply_filterdown(plan)
        if not got.equals(reference_execute(pair.request, data)):
            stats.mismatches += 1
    return stats
