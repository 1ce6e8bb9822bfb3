"""Seeded generator of valid retail signatures, shared by property and acceptance tests."""

import datetime as dt
import random
from decimal import Decimal

from intentcache.harness.synth import BRANDS, CATALOG, CHANNELS, GEOGRAPHY
from intentcache.signature import make_signature

MEASURE_COLS = ["sales.amount", "sales.net_amount", "sales.cost", "sales.quantity"]
LEVELS = [
    "dates.year", "dates.quarter", "dates.month", "dates.day",
    "stores.region", "stores.city", "stores.store_name",
    "products.category", "products.subcategory", "products.product_name", "products.brand",
    "sales.channel",
]

_TEXT_VALUES = {
    "stores.region": list(GEOGRAPHY),
    "stores.city": [c for cs in GEOGRAPHY.values() for c in cs],
    "products.category": list(CATALOG),
    "products.subcategory": [s for ss in CATALOG.values() for s in ss],
    "products.brand": BRANDS,
    "sales.channel": CHANNELS,
    "dates.quarter": ["2023-Q1", "2023-Q4", "2024-Q2", "2024-Q3"],
    "dates.month": ["2023-02", "2023-11", "2024-05", "2024-09"],
}
_NUMERIC = {
    "sales.amount": "float", "sales.net_amount": "float", "sales.cost": "float",
    "sales.quantity": "int", "dates.year": "int",
}


def _number(rng, ctype, col):
    if col == "dates.year":
        return rng.choice([2023, 2024])
    if ctype == "int":
        return rng.randint(1, 5)
    return Decimal(rng.randint(100, 99999)) / 100


def random_filter(rng: random.Random) -> dict:
    kind = rng.random()
    if kind < 0.55:
        col = rng.choice(sorted(_TEXT_VALUES))
        vals = _TEXT_VALUES[col]
        op = rng.choice(["=", "!=", "IN", "NOT_IN", "LIKE", "IS_NOT_NULL"])
        if op in ("IN", "NOT_IN"):
            return {"col": col, "op": op, "val": rng.sample(vals, min(len(vals), rng.randint(2, 3)))}
        if op == "LIKE":
            v = rng.choice(vals)
            return {"col": col, "op": op, "val": v[: rng.randint(1, 3)] + "%"}
        if op == "IS_NOT_NULL":
            return {"col": col, "op": op}
        return {"col": col, "op": op, "val": rng.choice(vals)}
    if kind < 0.9:
        col = rng.choice(sorted(_NUMERIC))
        op = rng.choice(["=", "!=", "<", "<=", ">", ">="])
        return {"col": col, "op": op, "val": _number(rng, _NUMERIC[col], col)}
    day = dt.date(2023, 1, 1) + dt.timedelta(days=rng.randrange(700))
    return {"col": "dates.day", "op": rng.choice([">=", "<", "!="]), "val": day.isoformat()}


def random_window(rng: random.Random):
    if rng.random() < 0.25:
        return None
    start = dt.date(2023, 1, 1) + dt.timedelta(days=rng.randrange(700))
    return {"start": start.isoformat(), "end": (start + dt.timedelta(days=rng.randint(1, 200))).isoformat()}


def random_signature(rng: random.Random, post_agg: bool = True):
    measures = []
    for _ in range(rng.randint(1, 3)):
        agg = rng.choice(["SUM", "COUNT", "MIN", "MAX", "AVG", "COUNT_DISTINCT"])
        if agg == "COUNT" and rng.random() < 0.5:
            measures.append({"agg": "COUNT", "expr": "*"})
        elif agg == "COUNT_DISTINCT":
            measures.append({"agg": agg, "expr": rng.choice(["stores.city", "products.brand", "sales.store_id"])})
        else:
            measures.append({"agg": agg, "expr": rng.choice(MEASURE_COLS)})
    levels = rng.sample(LEVELS, rng.randint(0, 3))
    filters = [random_filter(rng) for _ in range(rng.randint(0, 3))]
    pa = None
    if post_agg and rng.random() < 0.3:
        names = [make_signature("sales", [m]).measures[0].name for m in measures]
        pa = {}
        if rng.random() < 0.5:
            pa["having"] = [{"col": rng.choice(names), "op": rng.choice([">", "<=", "!="]), "val": rng.randint(0, 5000)}]
        if rng.random() < 0.6:
            outputs = levels + names
            pa["order_by"] = [{"expr": e, "dir": rng.choice(["ASC", "DESC"])} for e in rng.sample(outputs, min(2, len(outputs)))]
            if rng.random() < 0.5:
                pa["limit"] = rng.randint(1, 20)
    return make_signature("sales", measures, levels, filters, random_window(rng), pa)


def random_signatures(n: int, seed: int = 0, post_agg: bool = True) -> list:
    rng = random.Random(seed)
    return [random_signature(rng, post_agg) for _ in range(n)]
